use crate::error::{Error, Result};

/// Selector between volumetric and boundary displacement vectors.
///
/// Forward application keeps the first `3n` entries of a `3n_v` vector; the
/// transpose embeds a boundary vector and zeroes the interior block. Never
/// stored as a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterpolationOp {
    boundary_count: usize,
    node_count: usize,
}

impl InterpolationOp {
    pub fn new(boundary_count: usize, node_count: usize) -> Result<Self> {
        if boundary_count > node_count {
            return Err(Error::InvalidInput(format!(
                "boundary count {boundary_count} exceeds node count {node_count}"
            )));
        }
        Ok(InterpolationOp { boundary_count, node_count })
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary_count
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// `u = Φ u_Ω`
    pub fn apply(&self, u_vol: &[f64]) -> Result<Vec<f64>> {
        if u_vol.len() != 3 * self.node_count {
            return Err(Error::LengthMismatch {
                expected: 3 * self.node_count,
                actual: u_vol.len(),
            });
        }
        Ok(u_vol[..3 * self.boundary_count].to_vec())
    }

    /// `u_Ω = Φᵀ u`
    pub fn apply_transpose(&self, u_surf: &[f64]) -> Result<Vec<f64>> {
        if u_surf.len() != 3 * self.boundary_count {
            return Err(Error::LengthMismatch {
                expected: 3 * self.boundary_count,
                actual: u_surf.len(),
            });
        }
        let mut out = vec![0.0; 3 * self.node_count];
        out[..u_surf.len()].copy_from_slice(u_surf);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_examples() {
        let op = InterpolationOp::new(2, 3).unwrap();
        let v: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(op.apply(&v).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s: Vec<f64> = (1..=6).map(f64::from).collect();
        assert_eq!(op.apply_transpose(&s).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.0, 0.0, 0.0]);
        assert_eq!(op.apply(&[0.0; 9]).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn identity_when_no_interior() {
        let op = InterpolationOp::new(3, 3).unwrap();
        let v: Vec<f64> = (0..9).map(|i| i as f64 * 0.5).collect();
        assert_eq!(op.apply(&v).unwrap(), v);
        assert_eq!(op.apply_transpose(&v).unwrap(), v);
    }

    #[test]
    fn length_mismatch() {
        let op = InterpolationOp::new(2, 3).unwrap();
        assert!(matches!(op.apply(&[0.0; 6]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(op.apply_transpose(&[0.0; 9]), Err(Error::LengthMismatch { .. })));
        assert!(InterpolationOp::new(4, 3).is_err());
    }

    proptest! {
        #[test]
        fn phi_phi_t_is_identity(n in 1usize..8, extra in 0usize..5, seed in prop::collection::vec(-1e3f64..1e3, 24)) {
            let op = InterpolationOp::new(n, n + extra).unwrap();
            let s: Vec<f64> = (0..3 * n).map(|i| seed[i % seed.len()]).collect();
            prop_assert_eq!(op.apply(&op.apply_transpose(&s).unwrap()).unwrap(), s);
        }

        #[test]
        fn phi_t_phi_is_idempotent(n in 1usize..8, extra in 0usize..5, seed in prop::collection::vec(-1e3f64..1e3, 24)) {
            let op = InterpolationOp::new(n, n + extra).unwrap();
            let v: Vec<f64> = (0..3 * (n + extra)).map(|i| seed[i % seed.len()]).collect();
            let once = op.apply_transpose(&op.apply(&v).unwrap()).unwrap();
            let twice = op.apply_transpose(&op.apply(&once).unwrap()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
