use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::io::{data_lines, num, read, write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PyramidConfig {
    pub levels: usize,
    /// Hidden layers per MLP.
    pub mlp_depth: usize,
    pub mlp_width: usize,
    pub lr: f64,
    pub steps_per_level: usize,
    /// Weight of the confidence (local rigidity) term.
    pub lambda1: f64,
    /// Weight of the strain-energy term.
    pub lambda2: f64,
    pub seed: u64,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            levels: 4,
            mlp_depth: 3,
            mlp_width: 64,
            lr: 1e-3,
            steps_per_level: 100,
            lambda1: 1e-4,
            lambda2: 1e-4,
            seed: 0,
        }
    }
}

const KEYS: [&str; 8] = ["levels", "mlp_depth", "mlp_width", "lr", "steps_per_level", "lambda1", "lambda2", "seed"];

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if self.levels == 0 {
            return bad("levels must be at least 1");
        }
        if self.mlp_depth == 0 || self.mlp_width == 0 {
            return bad("MLP depth and width must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) || !self.lambda1.is_finite() || !self.lambda2.is_finite() {
            return bad("regularizer weights must be finite and nonnegative");
        }
        Ok(())
    }

    /// Strain-energy level weight `(k − l) / (2k)` for 1-based `level`.
    pub fn alpha(&self, level: usize) -> f64 {
        (self.levels - level) as f64 / (2 * self.levels) as f64
    }

    /// Parses `key = value` lines; unspecified keys keep their defaults.
    pub fn from_kv_str(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = PyramidConfig::default();
        for (ln, fields) in data_lines(text) {
            let joined = fields.join(" ");
            let (k, v) = joined.split_once('=').ok_or_else(|| Error::parse(origin, ln, "expected 'key = value'"))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "levels" => cfg.levels = num(origin, ln, v)?,
                "mlp_depth" => cfg.mlp_depth = num(origin, ln, v)?,
                "mlp_width" => cfg.mlp_width = num(origin, ln, v)?,
                "lr" => cfg.lr = num(origin, ln, v)?,
                "steps_per_level" => cfg.steps_per_level = num(origin, ln, v)?,
                "lambda1" => cfg.lambda1 = num(origin, ln, v)?,
                "lambda2" => cfg.lambda2 = num(origin, ln, v)?,
                "seed" => cfg.seed = num(origin, ln, v)?,
                _ => return Err(Error::parse(origin, ln, format!("unknown key '{k}', expected one of {KEYS:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let vals = [
            self.levels.to_string(),
            self.mlp_depth.to_string(),
            self.mlp_width.to_string(),
            self.lr.to_string(),
            self.steps_per_level.to_string(),
            self.lambda1.to_string(),
            self.lambda2.to_string(),
            self.seed.to_string(),
        ];
        for (k, v) in KEYS.iter().zip(vals) {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv_str(&read(path)?, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write(path, &self.to_kv_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_alpha() {
        let c = PyramidConfig::default();
        assert_eq!((c.levels, c.mlp_depth, c.mlp_width, c.lr), (4, 3, 64, 1e-3));
        assert_eq!((c.alpha(1), c.alpha(2), c.alpha(4)), (0.375, 0.25, 0.0));
    }

    #[test]
    fn kv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.cfg");
        let c = PyramidConfig {
            lambda2: 3.5e-5,
            seed: 99,
            ..Default::default()
        };
        c.save(&p).unwrap();
        assert_eq!(PyramidConfig::load(&p).unwrap(), c);
        let partial = PyramidConfig::from_kv_str("# comment\nlevels = 2\n", &p).unwrap();
        assert_eq!(partial.levels, 2);
        assert!(PyramidConfig::from_kv_str("levels 2", &p).is_err());
        assert!(PyramidConfig::from_kv_str("depth = 2", &p).is_err());
        assert!(PyramidConfig::from_kv_str("levels = 0", &p).is_err());
    }
}
