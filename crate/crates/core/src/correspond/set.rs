use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::geom::{Point3, Vec3};

/// Sparse binary one-to-one matching between `n` source points and `m`
/// target points. Pairs are kept sorted by source index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    n: usize,
    m: usize,
    pairs: Vec<(usize, usize)>,
}

impl CorrespondenceSet {
    pub fn new(n: usize, m: usize, mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen_i = HashSet::with_capacity(pairs.len());
        let mut seen_j = HashSet::with_capacity(pairs.len());
        for &(i, j) in &pairs {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, count: n });
            }
            if j >= m {
                return Err(Error::IndexOutOfRange { index: j, count: m });
            }
            if !seen_i.insert(i) {
                return Err(Error::InvalidInput(format!("source {i} matched twice")));
            }
            if !seen_j.insert(j) {
                return Err(Error::InvalidInput(format!("target {j} matched twice")));
            }
        }
        pairs.sort_unstable();
        Ok(CorrespondenceSet { n, m, pairs })
    }

    pub fn empty(n: usize, m: usize) -> Self {
        CorrespondenceSet { n, m, pairs: Vec::new() }
    }

    /// `(i, i)` for every `i < n`.
    pub fn identity(n: usize) -> Self {
        CorrespondenceSet {
            n,
            m: n,
            pairs: (0..n).map(|i| (i, i)).collect(),
        }
    }

    pub fn source_count(&self) -> usize {
        self.n
    }

    pub fn target_count(&self) -> usize {
        self.m
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn target_of(&self, i: usize) -> Option<usize> {
        self.pairs.binary_search_by_key(&i, |p| p.0).ok().map(|k| self.pairs[k].1)
    }

    /// Replaces every row in `rows` with the matches in `new_pairs`. A kept
    /// pair whose target is claimed by a new pair is dropped, so the result
    /// stays one-to-one.
    pub fn override_rows(&self, rows: &[usize], new_pairs: &[(usize, usize)]) -> Result<Self> {
        let rows: HashSet<usize> = rows.iter().copied().collect();
        if let Some(&(i, _)) = new_pairs.iter().find(|(i, _)| !rows.contains(i)) {
            return Err(Error::InvalidInput(format!("override pair for source {i} outside the overridden rows")));
        }
        let claimed: HashSet<usize> = new_pairs.iter().map(|p| p.1).collect();
        let mut pairs: Vec<(usize, usize)> = self
            .pairs
            .iter()
            .copied()
            .filter(|(i, j)| !rows.contains(i) && !claimed.contains(j))
            .collect();
        pairs.extend_from_slice(new_pairs);
        Self::new(self.n, self.m, pairs)
    }

    pub fn retain(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        CorrespondenceSet {
            n: self.n,
            m: self.m,
            pairs: self.pairs.iter().copied().filter(|&(i, j)| keep(i, j)).collect(),
        }
    }

    pub(crate) fn check_clouds(&self, x: &[Point3], y: &[Point3]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                actual: x.len(),
            });
        }
        if y.len() != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                actual: y.len(),
            });
        }
        Ok(())
    }
}

/// `y_j(i) − x_i` for matched sources, `None` for unmatched ones.
pub fn residuals(corr: &CorrespondenceSet, x: &[Point3], y: &[Point3]) -> Result<Vec<Option<Vec3>>> {
    corr.check_clouds(x, y)?;
    let mut r = vec![None; x.len()];
    for &(i, j) in corr.pairs() {
        r[i] = Some(y[j] - x[i]);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_injective() {
        assert!(CorrespondenceSet::new(3, 3, vec![(0, 1), (0, 2)]).is_err());
        assert!(CorrespondenceSet::new(3, 3, vec![(0, 1), (2, 1)]).is_err());
        assert!(CorrespondenceSet::new(3, 3, vec![(3, 1)]).is_err());
        let c = CorrespondenceSet::new(3, 4, vec![(2, 0), (0, 3)]).unwrap();
        assert_eq!(c.pairs(), &[(0, 3), (2, 0)]);
        assert_eq!((c.target_of(2), c.target_of(1)), (Some(0), None));
    }

    #[test]
    fn residual_definition() {
        let x = [Point3::origin(), Point3::new(5.0, 5.0, 5.0)];
        let y = [Point3::new(1.0, 2.0, 3.0)];
        let c = CorrespondenceSet::new(2, 1, vec![(0, 0)]).unwrap();
        assert_eq!(residuals(&c, &x, &y).unwrap(), vec![Some(Vec3::new(1.0, 2.0, 3.0)), None]);
        let id = CorrespondenceSet::identity(2);
        assert!(residuals(&id, &x, &x).unwrap().iter().all(|r| r.unwrap() == Vec3::zeros()));
    }

    #[test]
    fn translation_residual_mean() {
        let x: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, (i * i) as f64, 1.0)).collect();
        let t = Vec3::new(0.5, -2.0, 3.0);
        let y: Vec<Point3> = x.iter().map(|p| p + t).collect();
        let r = residuals(&CorrespondenceSet::identity(10), &x, &y).unwrap();
        let mean = r.iter().map(|v| v.unwrap()).sum::<Vec3>() / 10.0;
        assert!((mean - t).amax() < 1e-12);
    }

    #[test]
    fn override_keeps_other_rows_and_stays_injective() {
        let c = CorrespondenceSet::new(4, 4, vec![(0, 0), (1, 1), (2, 2), (3, 3)]).unwrap();
        let o = c.override_rows(&[1, 2], &[(1, 3)]).unwrap();
        assert_eq!(o.pairs(), &[(0, 0), (1, 3)]);
        assert!(c.override_rows(&[1], &[(2, 0)]).is_err());
    }
}
