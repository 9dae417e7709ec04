//! Scorecard for the acceptance run: one line per criterion.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Outside the soft target but inside the hard limit; does not fail the run.
    Warn,
    /// Not evaluated (missing optional input).
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Warn => "WARN",
            Status::Skip => "SKIP",
        })
    }
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} :: {}", self.status, self.name, self.detail)
    }
}

#[derive(Debug, Default)]
pub struct Scorecard {
    verdicts: Vec<Verdict>,
}

impl Scorecard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records and immediately prints a verdict.
    pub fn record(&mut self, name: &str, status: Status, detail: impl Into<String>) {
        let v = Verdict {
            name: name.into(),
            status,
            detail: detail.into(),
        };
        println!("{v}");
        self.verdicts.push(v);
    }

    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    pub fn failures(&self) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| v.status == Status::Fail).collect()
    }

    pub fn summary(&self) -> String {
        let count = |s| self.verdicts.iter().filter(|v| v.status == s).count();
        format!(
            "{} criteria: {} pass, {} fail, {} warn, {} skip",
            self.verdicts.len(),
            count(Status::Pass),
            count(Status::Fail),
            count(Status::Warn),
            count(Status::Skip)
        )
    }
}

/// Latency verdict: pass up to `soft`, warn up to `hard`, fail beyond.
pub fn latency_status(seconds: f64, soft: f64, hard: f64) -> Status {
    if seconds <= soft {
        Status::Pass
    } else if seconds <= hard {
        Status::Warn
    } else {
        Status::Fail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_envelope() {
        assert_eq!(latency_status(2.0, 10.0, 30.0), Status::Pass);
        assert_eq!(latency_status(10.0, 10.0, 30.0), Status::Pass);
        assert_eq!(latency_status(12.0, 10.0, 30.0), Status::Warn);
        assert_eq!(latency_status(30.5, 10.0, 30.0), Status::Fail);
    }

    #[test]
    fn summary_counts() {
        let mut s = Scorecard::new();
        s.record("a", Status::Pass, "");
        s.record("b", Status::Fail, "x");
        s.record("c", Status::Skip, "");
        assert_eq!(s.failures().len(), 1);
        assert_eq!(s.summary(), "3 criteria: 1 pass, 1 fail, 0 warn, 1 skip");
        assert_eq!(s.verdicts()[1].to_string(), "FAIL b :: x");
    }
}
