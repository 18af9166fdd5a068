//! Simulation and optimisation library for a multi-user mmWave downlink
//! assisted by an intelligent reflector carried on a UAV.
//!
//! - [`channel`]: geometric channel draws, blockage and effective CSI.
//! - [`optimizer`]: per-slot precoding / reflection sum-rate maximisation.
//! - [`agent`]: tabular quantile-regression return model used for placement.
//! - [`sim`]: the communication / movement episode loop and baseline policies.
//! - [`experiment`]: configuration, experiment recipes and result files.

pub mod agent;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod optimizer;
pub mod rng;
pub mod sim;

pub use agent::{ActionId, QuantileTable, StateCode, TransitionSample};
pub use channel::{
    ArrayGeometry, ChannelModel, ChannelRealization, EffectiveCsi, PathLossModel, Point3,
    SceneGeometry, C64,
};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, MetricsReport};
pub use optimizer::{BeamformingSolution, OptimizerConfig};
pub use sim::{EpisodeLog, Policy, SimConfig, UavState};
