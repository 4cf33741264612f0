//! Pointer Q-Network for the symmetric travelling salesman problem.
//!
//! A pointer network (LSTM encoder/decoder with additive attention) scores
//! the unvisited cities; a Q-network evaluated on the same attention context
//! turns each score into `u * Q` before the softmax, so learned long-term
//! value acts as a per-action inverse temperature.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which the training and I/O paths use.

pub mod baselines;
pub mod env;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model;
pub mod nn;
pub mod pointer;
pub mod policy;
pub mod qnet;
pub mod scalar;
pub mod train;
pub mod tsp;

pub use error::{PqnError, Result};
pub use scalar::Scalar;

pub type Instance = tsp::TspInstance<f64>;
pub type Model = model::PqnModel<f64>;
pub type Distribution = policy::ActionDistribution<f64>;
pub type Transition = qnet::Transition<f64>;
