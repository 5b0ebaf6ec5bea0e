//! Reward machine inference from demonstrations, and tabular Q-learning
//! decomposed over the inferred machine's states.
//!
//! The pipeline: expert demonstrations in a discrete block world are
//! featurized, clustered into sub-goal prototypes, abstracted through a
//! distance-threshold labeling function, and compiled into a reward
//! machine with potential-based shaped rewards. A per-RM-state Q-learning
//! agent then trains against the machine.

pub mod blockworld;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod error;
pub mod featurize;
pub mod pipeline;
pub mod qrm;
pub mod rmcore;
pub mod trajectories;

mod util;

pub use error::{Error, Result};
