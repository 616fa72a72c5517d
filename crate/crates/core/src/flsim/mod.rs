//! Deterministic in-process federated learning simulator.
//!
//! A round selects `n = C·N` clients, runs key generation, lets every
//! qualified client train locally and upload its update, aggregates on the
//! server and has `T` qualified clients decrypt the aggregate. All traffic
//! goes through a [`Bus`](crate::bus::Bus) so message sizes can be audited.

mod config;
mod data;
mod model;
mod report;
mod sim;

use thiserror::Error;

use crate::ahe::AheError;
use crate::codec::CodecError;
use crate::fkg::FkgError;
use crate::group::GroupError;
use crate::quant::QuantError;

pub use config::{
    inject_adversary, AdversaryEntry, DataConfig, ExperimentConfig, GroupConfig, GroupPreset, ModelConfig, Pipeline,
    ProtocolPhase,
};
pub use data::{partition_noniid, split_train_test, synthetic_blobs, ClientData, Dataset, ToyDataset};
pub use model::{local_train, Mlp};
pub use report::{RunReport, RunSummary, METRICS_COLUMNS};
pub use sim::{init_thread_pool, KeyLog, RoundMetrics, RoundTimings, Simulation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot deal {shards} single-class shards over {classes} classes")]
    InfeasiblePartition { classes: usize, shards: usize },
    #[error("{adversaries} adversaries exceed the n - T = {allowed} the protocol tolerates")]
    PlanViolatesHonestMajority { adversaries: usize, allowed: usize },
    #[error("key generation failed after {attempts} attempts: {last}")]
    FkgRetriesExhausted { attempts: usize, last: FkgError },
    #[error("only {responsive} responsive qualified clients, threshold is {threshold}")]
    DecryptionUnavailable { responsive: usize, threshold: usize },
    #[error(transparent)]
    Fkg(#[from] FkgError),
    #[error(transparent)]
    Ahe(#[from] AheError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

impl FlError {
    /// Errors raised before any protocol step runs.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            FlError::Config(_)
                | FlError::InfeasiblePartition { .. }
                | FlError::PlanViolatesHonestMajority { .. }
                | FlError::Group(_)
        )
    }
}
