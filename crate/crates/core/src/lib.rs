//! Ensemble control of thermostatically controlled loads as a linearly
//! solvable MDP, with distributionally robust variants of the transition
//! model.

pub mod bellman;
pub mod dispatch;
pub mod error;
pub mod io;
pub mod lp;
pub mod markov;
pub mod matrix;
pub mod moment;
pub mod quantiles;
pub mod scenario;
pub mod thermal;
pub mod wasserstein;

pub use error::{Error, Result};
