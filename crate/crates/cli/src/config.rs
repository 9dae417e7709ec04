use std::path::Path;

use serde::{Deserialize, Serialize};
use tetreg::pbm::PipelineConfig;
use tetreg_service::ServiceConfig;

use crate::error::CliError;

/// Every tunable of the command line, resolved in this order: built-in
/// defaults, then the `--config` TOML file, then environment variables and
/// flags.
///
/// Built-in defaults:
///
/// | key | default | meaning |
/// |---|---|---|
/// | `seed` | 0 | base seed for synthesis and network initialization; overrides `pipeline.pyramid.seed` |
/// | `threads` | 1 | runtime worker threads for `serve` |
/// | `log_level` | `info` | `error`, `warn`, `info`, `debug` or `trace` |
/// | `pipeline.pyramid.levels` | 4 | pyramid levels |
/// | `pipeline.pyramid.mlp_depth` | 3 | hidden layers per level |
/// | `pipeline.pyramid.mlp_width` | 64 | hidden width |
/// | `pipeline.pyramid.lr` | 1e-3 | Adam learning rate |
/// | `pipeline.pyramid.steps_per_level` | 100 | optimizer steps per level |
/// | `pipeline.pyramid.lambda1` | 1e-4 | confidence term weight |
/// | `pipeline.pyramid.lambda2` | 1e-4 | strain-energy term weight |
/// | `pipeline.pbm.beta` | 5e-2 | Tikhonov weight of the regularized solve |
/// | `pipeline.pbm.cg_tol` | 1e-5 | CG relative residual tolerance |
/// | `pipeline.pbm.cg_max_iter` | 10 x node count | CG iteration cap |
/// | `pipeline.rigid_prealign` | true | Kabsch fit before the pyramid |
/// | `service.session_ttl_secs` | 1800 | idle session lifetime |
/// | `service.max_sessions` | 16 | concurrent session cap |
/// | `service.busy_policy` | `reject` | `reject` (409) or `queue` |
///
/// The service runs sessions with `pipeline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: u64,
    pub threads: usize,
    pub log_level: String,
    pub pipeline: PipelineConfig,
    pub service: ServiceConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            seed: 0,
            threads: 1,
            log_level: "info".into(),
            pipeline: PipelineConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

impl CliConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| CliError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Applies global overrides and propagates the seed into the pipeline.
    pub fn resolve(mut self, seed: Option<u64>, threads: Option<usize>, log_level: Option<String>) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(t) = threads {
            self.threads = t;
        }
        if let Some(l) = log_level {
            self.log_level = l;
        }
        if self.threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        if !["error", "warn", "info", "debug", "trace", "off"].contains(&self.log_level.as_str()) {
            return Err(CliError::Usage(format!("unknown log level '{}'", self.log_level)));
        }
        self.pipeline.pyramid.seed = self.seed;
        self.service.pipeline = self.pipeline.clone();
        self.pipeline.pyramid.validate()?;
        self.pipeline.pbm.validate()?;
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}
