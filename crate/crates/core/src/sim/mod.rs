//! Federated round protocol over synthetic data: Dirichlet partitioning,
//! local SGD producing pseudo-gradients, Byzantine injection, server-side
//! aggregation and the model update.

pub mod data;
mod federation;
pub mod model;
pub mod partition;
pub mod train;

pub use data::{generate_split, generate_synthetic_dataset, Dataset, SyntheticGenerator, SyntheticSpec};
pub use federation::{
    run_experiment, run_single, ExperimentOutcome, FederationSpec, RoundDiagnostics, RoundRecord,
    RunOutcome, Simulation, SimulationConfig,
};
pub use model::{evaluate_accuracy, Model, ModelKind, Shard};
pub use partition::{dirichlet_partition, write_partition_csv, PartitionSpec};
pub use train::{local_update, local_update_traced, LocalOutcome, TrainSpec};
