//! Error metrics, scenario presets, the multi-trial runner and the
//! covariance-perturbation protocol.

mod metrics;
mod perturb;
pub mod report;
mod runner;
mod scenario;
pub mod suites;

pub use suites::{evaluate, CheckResult, Quantity, Reference, Suite, SuiteName, SuiteOutcome};

pub use metrics::{hungarian, mse, omat, target_positions};
pub use perturb::perturb_covariance;
pub use runner::{
    aggregate, apply_sweep_value, run_experiment, run_sweep, simulate_trial, stream, stream_seed, ExperimentResult,
    ExperimentSpec, FilterSummary, RunRecord, StepRow, Sweep, SweepParameter,
};
pub use scenario::{
    LinearGaussianParams, MetricKind, Scenario, ScenarioConfig, SkewtPoissonParams, Trajectory, MAX_REJECTIONS,
};
