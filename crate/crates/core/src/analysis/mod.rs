//! Numerical checks of the BMO, Girsanov, stability and approximation
//! machinery. Every operation returns a serializable report.

pub mod approx;
pub mod martingale;
pub mod report;
pub mod stability;

pub use approx::{approximation_pipeline, embedding_error, path_embedding_gap, ApproxReport, EmbeddingEstimate, LevelReport, PipelineConfig};
pub use martingale::{
    bmo_norm, decreasing_martingale_under_tilt, doleans_check, doleans_exponential, doleans_series, girsanov_check,
    girsanov_shift, BmoControl, BmoEstimate, DoleansReport, GirsanovReport, TiltReport, ZFn, ZPath,
};
pub use report::{decreasing, nonincreasing, Check, Section};
pub use stability::{
    apriori_agreement, apriori_report, linearization_check, linearization_coefficients, stability_gap, stability_sweep,
    tent_cutoff, AprioriReport, KMoment, LinearizationReport, LinearizationSeries, StabilityReport, StabilitySweep,
};
