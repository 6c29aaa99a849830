//! Risk-aware accelerated federated learning over a simulated cellular uplink.
//!
//! Modules follow the data flow of one experiment: [`geometry`] lays out base
//! stations and users, [`channel`] draws SINR and computes decoding
//! probabilities, [`trust`] scores and partitions clients, [`learning`] trains
//! local models, [`orchestrator`] runs the rounds and [`harness`] handles
//! configuration and logs.

pub mod channel;
pub mod geometry;
pub mod harness;
pub mod learning;
pub mod orchestrator;
pub mod rng;
pub mod trust;

pub use channel::{ChannelError, ChannelParams, SinrRealization};
pub use geometry::{GeometryConfig, NetworkTopology};
pub use harness::{ExperimentConfig, HarnessError};
pub use learning::{Dataset, DatasetShard, Model, ModelWeights, TrainConfig};
pub use orchestrator::{
    ExperimentCase, Mode, OrchestratorError, RoundRecord, RunHeader, RunOutput, Simulation,
    SinrSchedule,
};
pub use trust::{TrustCategory, TrustConfig, TrustPartition, TrustProfile};
