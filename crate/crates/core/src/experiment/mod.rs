//! Experiment configuration and runner.

mod config;
mod methods;
mod runner;

pub use config::{DataSource, ExperimentConfig, MethodConfig, MethodKind, Task};
pub use methods::{
    evaluate_fitted, fit_method, fit_one_step, run_method, Fitted, FittedModel, MethodOutcome,
    TrialContext,
};
pub use runner::{
    run_experiment, trial_dataset, write_results, ExperimentResult, TrialRow, TrialStatus,
};
