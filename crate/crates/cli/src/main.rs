use clap::Parser;

fn main() {
    let cli = tetreg_cli::Cli::parse();
    if let Err(e) = tetreg_cli::run(cli) {
        eprintln!("{}", e.to_json());
        std::process::exit(1);
    }
}
