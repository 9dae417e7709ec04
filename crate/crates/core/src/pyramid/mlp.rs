use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

pub const MLP_INPUT: usize = 6;
/// One confidence logit followed by three scaling components.
pub const MLP_OUTPUT: usize = 4;

/// Fully connected network `6 → width (× depth) → 4` with softplus hidden
/// activations. Stored as `[W₁, b₁, W₂, b₂, …]`, weights `in × out`, biases
/// `1 × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub mats: Vec<DMatrix<f64>>,
}

impl MlpParams {
    /// Xavier-uniform weights, zero biases, and a zero scaling head so the
    /// network starts at the identity deformation.
    pub fn init<R: Rng>(depth: usize, width: usize, rng: &mut R) -> Self {
        let mut dims = vec![MLP_INPUT];
        dims.extend(std::iter::repeat_n(width, depth));
        dims.push(MLP_OUTPUT);
        let mut mats = Vec::with_capacity(2 * (dims.len() - 1));
        for w in dims.windows(2) {
            let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
            mats.push(DMatrix::from_fn(w[0], w[1], |_, _| rng.random_range(-a..a)));
            mats.push(DMatrix::zeros(1, w[1]));
        }
        let last = mats.len() - 2;
        mats[last].columns_mut(1, 3).fill(0.0);
        MlpParams { mats }
    }

    pub fn zeros(depth: usize, width: usize) -> Self {
        let mut p = Self::init(depth, width, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        p.mats.iter_mut().for_each(|m| m.fill(0.0));
        p
    }

    pub fn parameter_count(&self) -> usize {
        self.mats.iter().map(|m| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.mats.iter().all(|m| m.iter().all(|v| v.is_finite()))
    }

    /// Records the forward pass; `params` are the tape leaves holding `mats`.
    pub fn forward_on(tape: &mut Tape, params: &[Var], gamma: Var) -> Var {
        let mut h = gamma;
        let layers = params.len() / 2;
        for l in 0..layers {
            h = tape.matmul(h, params[2 * l]);
            h = tape.add_row(h, params[2 * l + 1]);
            if l + 1 < layers {
                h = tape.softplus(h);
            }
        }
        h
    }

    /// Confidence `c ∈ (0, 1)` and scaling `a` for each encoded row.
    pub fn predict(&self, gamma: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let mut t = Tape::new();
        let params: Vec<Var> = self.mats.iter().map(|m| t.leaf(m.clone())).collect();
        let g = t.leaf(gamma.clone());
        let out = Self::forward_on(&mut t, &params, g);
        let logits = t.cols(out, 0, 1);
        let c = t.sigmoid(logits);
        let c: Vec<f64> = t.value(c).iter().copied().collect();
        let a = t.value(out).columns(1, 3).into_owned();
        if c.iter().chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MLP output".into()));
        }
        Ok((c, a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_identity_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = MlpParams::init(3, 64, &mut rng);
        assert_eq!(p.mats.len(), 8);
        assert_eq!(p.parameter_count(), 6 * 64 + 64 + 2 * (64 * 64 + 64) + 64 * 4 + 4);
        let gamma = DMatrix::from_fn(10, 6, |i, j| ((i * 6 + j) as f64).sin());
        let (c, a) = p.predict(&gamma).unwrap();
        assert!(c.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(a.iter().all(|&v| v == 0.0));
        assert_eq!(p.predict(&gamma).unwrap(), (c, a));
    }

    #[test]
    fn zero_network() {
        let p = MlpParams::zeros(2, 8);
        let (c, a) = p.predict(&DMatrix::from_element(3, 6, 0.4)).unwrap();
        assert_eq!(c, vec![0.5; 3]);
        assert!(a.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_rejected() {
        let mut p = MlpParams::zeros(1, 4);
        p.mats[0][(0, 0)] = f64::NAN;
        assert!(p.predict(&DMatrix::from_element(1, 6, 1.0)).is_err());
    }
}
