//! Synthetic data, experiment orchestration, metrics and reports.

pub mod config;
pub mod experiment;
pub mod report;
pub mod scene;

pub use config::{Arm, ExperimentConfig, OdlSettings};
pub use experiment::{
    make_dataset, noise_sweep, noise_sweep_timed, run_experiment, run_experiment_timed, train_arm,
    AccuracySummary, ArmMetrics, Dataset, LabeledImage, Metrics, Sample, Timings,
};
pub use report::{emit_report, emit_sweep_report, ReportFormat};
pub use scene::{generate_scene, Pose, SceneSpec};
