use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub coordinates: usize,
    /// Largest per-coordinate `|g − g_fd| / max(|g|, |g_fd|, floor)`.
    pub max_rel_error: f64,
    /// `‖g − g_fd‖ / ‖g_fd‖` over the sampled coordinates.
    pub aggregate_rel_error: f64,
    /// `‖g − g_fd‖` over the sampled coordinates.
    pub error_norm: f64,
}

/// Compares `analytic` gradients with central differences of `loss` on
/// `coords` randomly chosen parameter entries. `floor` keeps relative errors
/// meaningful for entries whose true gradient is (near) zero.
pub fn grad_check(
    params: &[DMatrix<f64>],
    analytic: &[DMatrix<f64>],
    mut loss: impl FnMut(&[DMatrix<f64>]) -> f64,
    eps: f64,
    coords: usize,
    seed: u64,
    floor: f64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("finite-difference step must be positive".into()));
    }
    let total: usize = params.iter().map(|m| m.len()).sum();
    if coords == 0 || coords > total {
        return Err(Error::InvalidInput(format!("cannot sample {coords} of {total} coordinates")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, total, coords).into_vec();
    picks.sort_unstable();
    let mut work = params.to_vec();
    let (mut max_rel, mut err2, mut ref2) = (0.0f64, 0.0, 0.0);
    for flat in picks {
        let (mut b, mut k) = (0, flat);
        while k >= work[b].len() {
            k -= work[b].len();
            b += 1;
        }
        let orig = work[b][k];
        work[b][k] = orig + eps;
        let fp = loss(&work);
        work[b][k] = orig - eps;
        let fm = loss(&work);
        work[b][k] = orig;
        let fd = (fp - fm) / (2.0 * eps);
        let g = analytic[b][k];
        let diff = (g - fd).abs();
        max_rel = max_rel.max(diff / g.abs().max(fd.abs()).max(floor));
        err2 += diff * diff;
        ref2 += fd * fd;
    }
    Ok(GradCheckReport {
        coordinates: coords,
        max_rel_error: max_rel,
        aggregate_rel_error: err2.sqrt() / ref2.sqrt().max(f64::MIN_POSITIVE),
        error_norm: err2.sqrt(),
    })
}
