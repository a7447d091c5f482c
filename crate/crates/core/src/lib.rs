//! Learning-to-bid agents for repeated first-price auctions where the value
//! of winning is a latent uplift `θ⋆ᵀx` observed only through IPW
//! pseudo-outcomes, with optional budget or return-on-spend constraints.
//!
//! The learning core is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the precision. The environment, comparators and
//! the harness always work in `f64`.

pub mod budget;
pub mod cdf;
pub mod env;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod log;
pub mod params;
pub mod policy;
pub mod ros;
pub mod scalar;
pub mod uplift;

pub use budget::{run_budget_episode, BudgetAgent, Step};
pub use cdf::{AuctionHistory, SplitCdfEstimate, SplitSampleEstimator};
pub use env::{
    BenchmarkMode, BenchmarkPolicy, ContextLaw, EnvironmentSpec, Feedback, NoiseFamily, NoiseModel,
};
pub use error::{Error, Result};
pub use harness::{run, sweep, SimulationConfig, SummaryMetrics};
pub use log::{FallbackReason, Phase, RoundLog};
pub use params::{AgentConfig, AgentParams};
pub use policy::Mode;
pub use ros::{run_ros_episode, RosAgent, SlaterEstimate};
pub use scalar::Scalar;
pub use uplift::WlsState;

pub type BudgetAgentF64 = BudgetAgent<f64>;
pub type BudgetAgentF32 = BudgetAgent<f32>;
pub type RosAgentF64 = RosAgent<f64>;
pub type RosAgentF32 = RosAgent<f32>;
pub type WlsStateF64 = WlsState<f64>;
pub type WlsStateF32 = WlsState<f32>;
pub type CdfEstimatorF64 = SplitSampleEstimator<f64>;
pub type CdfEstimatorF32 = SplitSampleEstimator<f32>;
