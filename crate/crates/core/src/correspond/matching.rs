use super::rigid::RigidTransform;
use super::set::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geom::{median_nn_spacing, KdTree, Point3};

/// Default mutual-NN acceptance radius: 2.5 × median NN spacing of `y`.
pub fn default_radius(y: &[Point3]) -> f64 {
    2.5 * median_nn_spacing(y)
}

/// Pairs `(i, j)` where `R(x_i)` and `y_j` are each other's nearest
/// neighbour and lie closer than `r`.
pub fn mutual_nn(x: &[Point3], y: &[Point3], rigid: &RigidTransform, r: f64) -> Result<CorrespondenceSet> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidInput("mutual NN needs non-empty clouds".into()));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
    }
    let xt = rigid.apply_all(x);
    let ty = KdTree::new(y);
    let tx = KdTree::new(&xt);
    let pairs = xt
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let (j, d2) = ty.nearest(p)?;
            // Querying R⁻¹(y_j) in X equals querying y_j in R(X).
            let (back, _) = tx.nearest(&y[j])?;
            (back == i && d2.sqrt() < r).then_some((i, j))
        })
        .collect();
    CorrespondenceSet::new(x.len(), y.len(), pairs)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Drops pairs whose aligned distance exceeds median + 3·MAD. The closest
/// pair always survives.
pub fn prune_outliers(corr: &CorrespondenceSet, x: &[Point3], y: &[Point3], rigid: &RigidTransform) -> Result<CorrespondenceSet> {
    corr.check_clouds(x, y)?;
    if corr.len() <= 1 {
        return Ok(corr.clone());
    }
    let d: Vec<f64> = corr.pairs().iter().map(|&(i, j)| (rigid.apply(&x[i]) - y[j]).norm()).collect();
    let mut s = d.clone();
    s.sort_unstable_by(f64::total_cmp);
    let med = median(&s);
    let mut dev: Vec<f64> = s.iter().map(|v| (v - med).abs()).collect();
    dev.sort_unstable_by(f64::total_cmp);
    let threshold = med + 3.0 * median(&dev);
    let closest = d.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap();
    let mut k = 0;
    Ok(corr.retain(|_, _| {
        let keep = d[k] <= threshold || k == closest;
        k += 1;
        keep
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use nalgebra::Rotation3;

    #[test]
    fn identity_pairing() {
        let x: Vec<Point3> = (0..20).map(|i| Point3::new(i as f64, (i % 3) as f64, 0.5 * i as f64)).collect();
        let c = mutual_nn(&x, &x, &RigidTransform::identity(), f64::INFINITY).unwrap();
        assert_eq!(c, CorrespondenceSet::identity(20));
    }

    #[test]
    fn radius_filter() {
        let x = [Point3::origin(), Point3::new(10.0, 0.0, 0.0)];
        let y = [Point3::new(0.4, 0.0, 0.0)];
        let id = RigidTransform::identity();
        assert_eq!(mutual_nn(&x, &y, &id, 1.0).unwrap().pairs(), &[(0, 0)]);
        assert!(mutual_nn(&x, &y, &id, 0.3).unwrap().is_empty());
        assert!(mutual_nn(&[], &y, &id, 1.0).is_err());
    }

    #[test]
    fn invariant_under_common_isometry() {
        let x: Vec<Point3> = (0..30)
            .map(|i| Point3::new((i as f64).sin() * 9.0, (i as f64 * 0.7).cos() * 7.0, i as f64))
            .collect();
        let y: Vec<Point3> = x.iter().step_by(2).map(|p| p + Vec3::new(0.3, -0.2, 0.1)).collect();
        let t = RigidTransform::new(Rotation3::from_euler_angles(0.4, 0.1, -0.9), Vec3::new(3.0, 4.0, 5.0));
        let id = RigidTransform::identity();
        let a = mutual_nn(&x, &y, &id, 2.0).unwrap();
        let b = mutual_nn(&t.apply_all(&x), &t.apply_all(&y), &id, 2.0).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
        // Re-check the mutual property directly.
        for &(i, j) in a.pairs() {
            let nn_y = (0..y.len())
                .min_by(|&p, &q| (x[i] - y[p]).norm().total_cmp(&(x[i] - y[q]).norm()))
                .unwrap();
            let nn_x = (0..x.len())
                .min_by(|&p, &q| (y[j] - x[p]).norm().total_cmp(&(y[j] - x[q]).norm()))
                .unwrap();
            assert_eq!((nn_y, nn_x), (j, i));
        }
    }

    #[test]
    fn pruning_rules() {
        let x: Vec<Point3> = (0..10).map(|i| Point3::new(10.0 * i as f64, 0.0, 0.0)).collect();
        let mut y: Vec<Point3> = x.iter().map(|p| p + Vec3::new(0.0, 1.0, 0.0)).collect();
        let id = RigidTransform::identity();
        let all = CorrespondenceSet::identity(10);
        assert_eq!(prune_outliers(&all, &x, &y, &id).unwrap(), all);
        y[4] = x[4] + Vec3::new(0.0, 50.0, 0.0);
        let p = prune_outliers(&all, &x, &y, &id).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!(p.target_of(4), None);
        let one = CorrespondenceSet::new(10, 10, vec![(4, 4)]).unwrap();
        assert_eq!(prune_outliers(&one, &x, &y, &id).unwrap(), one);
    }
}
