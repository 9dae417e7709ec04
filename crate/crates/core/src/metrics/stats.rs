use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{KdTree, Point3};

/// Paired ground-truth and estimated target positions (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    truth: Vec<Point3>,
    estimate: Vec<Point3>,
}

impl TargetSet {
    pub fn new(truth: Vec<Point3>, estimate: Vec<Point3>) -> Result<Self> {
        if truth.len() != estimate.len() {
            return Err(Error::LengthMismatch {
                expected: truth.len(),
                actual: estimate.len(),
            });
        }
        if truth.iter().chain(&estimate).any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("target position".into()));
        }
        Ok(TargetSet { truth, estimate })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    /// Per-target Euclidean error.
    pub fn errors(&self) -> Vec<f64> {
        self.truth.iter().zip(&self.estimate).map(|(a, b)| (a - b).norm()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(MeanStd { mean, std: var.sqrt() })
}

/// Target registration error: mean and population std of ‖t_gt − t_est‖.
pub fn tre(targets: &TargetSet) -> Result<MeanStd> {
    if targets.is_empty() {
        return Err(Error::InvalidInput("empty target set".into()));
    }
    mean_std(&targets.errors())
}

/// Squared distance from each `y` to its closest deformed source point.
pub fn chamfer_terms(y: &[Point3], x_def: &[Point3]) -> Result<Vec<f64>> {
    if y.is_empty() || x_def.is_empty() {
        return Err(Error::InvalidInput("chamfer distance needs two nonempty clouds".into()));
    }
    let tree = KdTree::new(x_def);
    Ok(y.iter().map(|p| tree.nearest(p).expect("nonempty tree").1.powi(2)).collect())
}

/// Mean over `y` of the squared distance to the closest deformed source
/// point (mm²). Not symmetric in its arguments.
pub fn chamfer_one_sided(y: &[Point3], x_def: &[Point3]) -> Result<f64> {
    let t = chamfer_terms(y, x_def)?;
    Ok(t.iter().sum::<f64>() / t.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicBin {
    pub index: usize,
    /// Normalized distance interval `(lower, upper]`; bin 0 holds distance 0.
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean: Option<f64>,
    pub empty: bool,
}

/// Buckets error samples by normalized geodesic distance. Bin 0 holds the
/// observed region (distance exactly 0); bin `k ≥ 1` holds `((k−1)w, kw]`.
pub fn tre_by_geodesic(errors: &[f64], distances: &[f64], bin_width: f64) -> Result<Vec<GeodesicBin>> {
    if errors.len() != distances.len() {
        return Err(Error::LengthMismatch {
            expected: errors.len(),
            actual: distances.len(),
        });
    }
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidInput(format!("bin width {bin_width} must be positive")));
    }
    if let Some(d) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::InvalidInput(format!("geodesic distance {d} is not a finite nonnegative value")));
    }
    let bin_of = |d: f64| if d == 0.0 { 0 } else { ((d / bin_width).ceil() as usize).max(1) };
    let nbins = distances.iter().map(|&d| bin_of(d)).max().map_or(0, |b| b + 1);
    let mut sums = vec![(0.0, 0usize); nbins];
    for (&e, &d) in errors.iter().zip(distances) {
        let s = &mut sums[bin_of(d)];
        s.0 += e;
        s.1 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(k, (sum, count))| GeodesicBin {
            index: k,
            lower: if k == 0 { 0.0 } else { (k - 1) as f64 * bin_width },
            upper: k as f64 * bin_width,
            count,
            mean: (count > 0).then(|| sum / count as f64),
            empty: count == 0,
        })
        .collect())
}

pub const JACOBIAN_BAND: (f64, f64) = (0.8, 1.2);
pub const HISTOGRAM_RANGE: (f64, f64) = (0.5, 1.5);
pub const HISTOGRAM_BINS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lower: f64,
    pub upper: f64,
    /// Equal-width bins over `[lower, upper]`; the last bin is closed.
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
}

impl Histogram {
    pub fn build(values: &[f64], (lower, upper): (f64, f64), bins: usize) -> Self {
        let mut counts = vec![0; bins];
        let (mut underflow, mut overflow) = (0, 0);
        let w = (upper - lower) / bins as f64;
        for &v in values {
            if v < lower || v.is_nan() {
                underflow += 1;
            } else if v > upper {
                overflow += 1;
            } else {
                counts[(((v - lower) / w) as usize).min(bins - 1)] += 1;
            }
        }
        Histogram {
            lower,
            upper,
            counts,
            underflow,
            overflow,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.underflow + self.overflow
    }

    pub fn to_csv(&self) -> String {
        let w = (self.upper - self.lower) / self.counts.len() as f64;
        let mut s = String::from("lower,upper,count\n");
        s += &format!("-inf,{},{}\n", self.lower, self.underflow);
        for (k, c) in self.counts.iter().enumerate() {
            s += &format!("{},{},{c}\n", self.lower + k as f64 * w, self.lower + (k + 1) as f64 * w);
        }
        s += &format!("{},inf,{}\n", self.upper, self.overflow);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub iqr: f64,
    /// Share of tets with |J| in [0.8, 1.2].
    pub fraction_in_band: f64,
    pub histogram: Histogram,
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn jacobian_report(dets: &[f64]) -> Result<JacobianReport> {
    if dets.is_empty() {
        return Err(Error::InvalidInput("no Jacobian determinants".into()));
    }
    if dets.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("Jacobian determinant".into()));
    }
    let mut s = dets.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    let (lo, hi) = JACOBIAN_BAND;
    let inside = s.iter().filter(|&&d| (lo..=hi).contains(&d)).count();
    let q25 = quantile(&s, 0.25);
    let q75 = quantile(&s, 0.75);
    Ok(JacobianReport {
        count: s.len(),
        min: s[0],
        max: s[s.len() - 1],
        q05: quantile(&s, 0.05),
        q25,
        median: quantile(&s, 0.5),
        q75,
        q95: quantile(&s, 0.95),
        iqr: q75 - q25,
        fraction_in_band: inside as f64 / s.len() as f64,
        histogram: Histogram::build(dets, HISTOGRAM_RANGE, HISTOGRAM_BINS),
    })
}
