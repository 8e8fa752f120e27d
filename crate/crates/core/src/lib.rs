//! Simulator of entropy-gated vehicle-to-vehicle intent consensus at an
//! occluded intersection.
//!
//! Each vehicle runs a local proxy model that turns its view of the scene
//! into a distribution over meta-actions. When the ego's distribution is too
//! uncertain it asks nearby vehicles for theirs over a lossy channel, fuses
//! whatever arrives inside the decision window and acts on the result.

pub mod campaign;
pub mod channel;
pub mod config;
pub mod consensus;
pub mod error;
pub mod export;
pub mod intent;
pub mod proxy;
pub mod rng;
pub mod run;
pub mod scenario;

pub use campaign::{
    run_condition, run_episode, run_sweep, Condition, ConditionRun, ConditionSpec,
    ConditionSummary, EpisodeRecord, RunPlan, SweepKind,
};
pub use channel::{ChannelProfile, DensityLossTable};
pub use consensus::{run_decision_cycle, ConsensusConfig, DecisionCycleResult};
pub use error::{Error, Result};
pub use intent::{IntentDistribution, MetaAction, MetaActionSet};
pub use proxy::ProxyCalibration;
pub use scenario::{OutcomeKind, ScenarioConfig, WorldState};
pub use config::{CampaignConfig, Overrides};
