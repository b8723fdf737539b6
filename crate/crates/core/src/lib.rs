//! Neural contextual bandits driven by reward-biased maximum likelihood.
//!
//! The crate provides the ReLU network and its gradients, the surrogate
//! likelihood families, two reward-biased agents (per-arm gradient ascent
//! and parameter correction), comparison baselines, bandit environments,
//! the neural tangent kernel tools and an experiment harness.

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod baselines;
pub mod env;
pub mod error;
pub mod fit;
pub mod harness;
mod kernel;
pub mod net;
pub mod ntk;
pub mod par;
pub mod rbmle_ga;
pub mod rbmle_pc;
pub mod rng;
pub mod surrogate;

pub use bandit::{Agent, ContextVector, History, RegretTrace, Round, TraceRecord};
pub use error::{Error, Result};
pub use net::{GradientVector, NetworkConfig, NetworkParams};
pub use par::Execution;
pub use rbmle_ga::{GaAgent, GaConfig, Zeta};
pub use rbmle_pc::{PcAgent, PcConfig, PrecisionMatrix, PrecisionMode};
pub use surrogate::{FamilyName, SurrogateFamily};
