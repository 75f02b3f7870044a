//! Neural dynamic policies: a dynamic movement primitive embedded as a
//! differentiable layer between a network and the actions it emits.
//!
//! The crate is organised bottom up:
//!
//! - [`dmp`]: the second-order system, its basis functions and the Euler rollout.
//! - [`autograd`]: exact sensitivities of a rollout with respect to `w` and `g`.
//! - [`nn`]: a small dense network with manual backprop, Adam and checkpoints.
//! - [`policy`]: the actor that maps observations onto DMP parameters, and the multi-head critic.
//! - [`imitation`]: synthetic stroke demonstrations and behaviour cloning.
//! - [`envs`]: planar point-mass tasks with stale world observations.
//! - [`ppo`]: PPO with a multi-action critic, for DMP and raw-action policies.

pub mod autograd;
pub mod dmp;
pub mod envs;
pub mod error;
pub mod imitation;
pub mod nn;
pub mod policy;
pub mod ppo;

pub use error::{NdpError, Result};
