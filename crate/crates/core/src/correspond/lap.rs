use nalgebra::DMatrix;

use super::set::CorrespondenceSet;
use crate::error::{Error, Result};

/// Maximum-score one-to-one assignment on a nonnegative `n × m` score
/// matrix. Rectangular inputs yield `min(n, m)` pairs.
pub fn lap_binarize(soft: &DMatrix<f64>) -> Result<CorrespondenceSet> {
    let (n, m) = soft.shape();
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("empty score matrix".into()));
    }
    if soft.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("scores must be finite and nonnegative".into()));
    }
    let max = soft.max();
    if max == 0.0 {
        return Err(Error::InvalidInput("all-zero score matrix carries no information".into()));
    }
    // Rows are the smaller side so every row gets a column.
    let transposed = n > m;
    let cost = if transposed { soft.transpose() } else { soft.clone() }.map(|s| max - s);
    let assign = hungarian(&cost);
    let pairs = assign
        .into_iter()
        .enumerate()
        .map(|(r, c)| if transposed { (c, r) } else { (r, c) })
        .collect();
    CorrespondenceSet::new(n, m, pairs)
}

/// Shortest augmenting path Hungarian method for `rows ≤ cols`; returns the
/// column assigned to each row.
fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let (n, m) = cost.shape();
    debug_assert!(n <= m);
    // 1-based potentials with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Total score of a matching.
pub fn assignment_score(soft: &DMatrix<f64>, corr: &CorrespondenceSet) -> f64 {
    corr.pairs().iter().map(|&(i, j)| soft[(i, j)]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matrix() {
        let c = lap_binarize(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(c, CorrespondenceSet::identity(4));
    }

    #[test]
    fn two_by_two_hand_case() {
        let s = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.8, 0.2]);
        let c = lap_binarize(&s).unwrap();
        assert_eq!(c.pairs(), &[(0, 0), (1, 1)]);
        assert!((assignment_score(&s, &c) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn rectangular_both_ways() {
        let s = DMatrix::from_row_slice(2, 3, &[0.1, 0.9, 0.3, 0.8, 0.85, 0.0]);
        assert_eq!(lap_binarize(&s).unwrap().pairs(), &[(0, 1), (1, 0)]);
        let t = lap_binarize(&s.transpose()).unwrap();
        assert_eq!(t.pairs(), &[(0, 1), (1, 0)]);
        assert_eq!(t.source_count(), 3);
    }

    #[test]
    fn rejects_uninformative() {
        assert!(lap_binarize(&DMatrix::zeros(3, 3)).is_err());
        assert!(lap_binarize(&DMatrix::from_element(2, 2, -1.0)).is_err());
        assert!(lap_binarize(&DMatrix::zeros(0, 3)).is_err());
    }
}
