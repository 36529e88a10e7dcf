//! Workload generation, experiment orchestration and report files.

mod config;
mod experiment;
mod plans;
mod workload;

pub use config::{DatabaseConfig, RelationSource};
pub use experiment::{
    baseline_errors, evaluate_model, run_and_write, run_experiment, run_experiment_on, scatter_pairs, DerivedSeeds,
    ExperimentConfig, ExperimentOutput, MetricsReport, PlannerEvalSpec, PlannerRow, EXPERIMENTS,
};
pub use plans::{gen_plan_queries, random_plan};
pub use workload::{gen_workload, Workload, WorkloadKind, WorkloadSpec};
