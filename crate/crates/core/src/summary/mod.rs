//! Posterior summaries and diagnostics.

pub mod flatten;
pub mod report;
pub mod stats;

pub use flatten::{flat_regions, flattening_points, slope, FlatRegion};
pub use report::{
    summarize_dir, summarize_traces, trace_paths, write_summary, Band, CovariateCurve, CurvePoint, GridLayout,
    IntervalSummary, ParamSummary, RunSummary, SummaryOptions, MIN_RETAINED,
};
pub use stats::{ess, gelman_rubin, hpd, mean, median, quantile};
