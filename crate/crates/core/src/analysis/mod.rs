//! Evaluation studies: clearance oracle, policy approximation error, worst-case
//! visit counts and the randomized navigation benchmark.

mod approx;
mod benchmark;
mod edf;
mod scenes;

pub use approx::{
    angular_error_degrees, approx_error_study, hierarchical_switch_study, scenario_voxels, summarize,
    ApproxErrorSample, ApproxErrorSummary, Scenario, StudyConfig, SwitchCurve, SwitchPoint,
};
pub use benchmark::{
    run_benchmark, sample_endpoints, BenchmarkConfig, BenchmarkError, BenchmarkReport, ClearanceHistogram, Parallelism,
    TimingSummary, TrialRecord, VariantStats, VariantTimings,
};
pub use edf::edf_distance;
pub use scenes::{ProceduralScene, Scene};
