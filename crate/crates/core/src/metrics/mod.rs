//! Registration accuracy and field-consistency metrics.

mod report;
mod stats;

pub use report::{evaluate_case, evaluate_field, EvalReport, RawEval, Runtimes, DEFAULT_BIN_WIDTH};
pub use stats::{
    chamfer_one_sided, chamfer_terms, jacobian_report, mean_std, quantile, tre, tre_by_geodesic, GeodesicBin, Histogram, JacobianReport, MeanStd,
    TargetSet, HISTOGRAM_BINS, HISTOGRAM_RANGE, JACOBIAN_BAND,
};
