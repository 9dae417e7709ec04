use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{KdTree, Point3};

/// Neighbours gathered per prompt sample.
pub const PROMPT_NEIGHBOURS: usize = 5;
/// Samples farther than this many spacings from any geometry contribute nothing.
pub const PROMPT_REACH: f64 = 10.0;

/// A pair of line annotations: one on the deformed model, one on the cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: u64,
    /// Client time in milliseconds; recorded, never interpreted.
    pub timestamp: u64,
    pub line_on_model: Vec<Point3>,
    pub line_on_cloud: Vec<Point3>,
}

impl Prompt {
    pub fn new(id: u64, line_on_model: Vec<Point3>, line_on_cloud: Vec<Point3>) -> Self {
        Prompt {
            id,
            timestamp: 0,
            line_on_model,
            line_on_cloud,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, line) in [("line_on_model", &self.line_on_model), ("line_on_cloud", &self.line_on_cloud)] {
            if line.len() < 2 {
                return Err(Error::InvalidInput(format!("{name} needs at least 2 vertices, got {}", line.len())));
            }
            if line.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
                return Err(Error::NonFinite(format!("{name} vertex")));
            }
        }
        Ok(())
    }
}

/// Resamples a polyline at uniform arc length. Both endpoints are kept, so
/// the result has at least 2 samples even for a zero-length line.
pub fn resample_polyline(line: &[Point3], spacing: f64) -> Result<Vec<Point3>> {
    if line.len() < 2 {
        return Err(Error::InvalidInput("polyline needs at least 2 vertices".into()));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidInput(format!("resampling spacing must be positive, got {spacing}")));
    }
    let mut cum = Vec::with_capacity(line.len());
    cum.push(0.0);
    for w in line.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    let segments = ((total / spacing).ceil() as usize).max(1);
    let mut out = Vec::with_capacity(segments + 1);
    let mut seg = 0;
    for k in 0..=segments {
        if k == segments {
            out.push(*line.last().unwrap());
            break;
        }
        let s = total * k as f64 / segments as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        out.push(line[seg] + (line[seg + 1] - line[seg]) * t);
    }
    Ok(out)
}

/// Union of the `PROMPT_NEIGHBOURS` nearest points of every sample, keeping
/// only points within `reach`. Sorted, duplicates removed.
pub fn gather_neighbours(tree: &KdTree, samples: &[Point3], reach: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = samples
        .iter()
        .flat_map(|s| tree.k_nearest(s, PROMPT_NEIGHBOURS))
        .filter(|&(_, d2)| d2.sqrt() <= reach)
        .map(|(i, _)| i)
        .collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

/// Index sets selected by a prompt together with the resampled polylines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRegion {
    /// Indices into the deformed surface.
    pub x_m: Vec<usize>,
    /// Indices into the cloud.
    pub y_m: Vec<usize>,
    pub model_samples: Vec<Point3>,
    pub cloud_samples: Vec<Point3>,
    pub spacing: f64,
}

/// Expands a prompt into local index sets on `surface` and `cloud`.
pub fn expand_prompt(prompt: &Prompt, surface: &[Point3], cloud: &[Point3], spacing: f64) -> Result<PromptRegion> {
    prompt.validate()?;
    if surface.is_empty() || cloud.is_empty() {
        return Err(Error::InvalidInput("prompt expansion needs a surface and a cloud".into()));
    }
    let model_samples = resample_polyline(&prompt.line_on_model, spacing)?;
    let cloud_samples = resample_polyline(&prompt.line_on_cloud, spacing)?;
    let reach = PROMPT_REACH * spacing;
    let x_m = gather_neighbours(&KdTree::new(surface), &model_samples, reach);
    if x_m.is_empty() {
        return Err(Error::InvalidInput(format!(
            "model line lies farther than {reach:.3} mm from the surface"
        )));
    }
    let y_m = gather_neighbours(&KdTree::new(cloud), &cloud_samples, reach);
    if y_m.is_empty() {
        return Err(Error::InvalidInput(format!("cloud line lies farther than {reach:.3} mm from the cloud")));
    }
    Ok(PromptRegion {
        x_m,
        y_m,
        model_samples,
        cloud_samples,
        spacing,
    })
}
