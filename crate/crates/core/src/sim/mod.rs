//! Ground-truth scenarios, the end-to-end experiment loop and tracking
//! metrics.

pub mod experiment;
pub mod metrics;
pub mod scenario;

pub use experiment::{
    run_experiment, ExperimentConfig, FilterChoice, GpfParams, InitParams, PfParams, SensorChoice,
    SensorConfig, StepRecord, TrackingLog,
};
pub use metrics::{
    assignment_rmse, evaluate_metrics, evaluate_step, hungarian, ospa, MetricReport, MetricsConfig,
    StepMetrics,
};
pub use scenario::{constant_velocity, generate_truth, ScenarioConfig, Truth};
