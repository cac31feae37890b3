//! Planning for minimum expected cover time on finite Markov decision processes.
//!
//! A single agent must visit every state of a target set as fast as possible in
//! expectation. The crate provides an exact solver over the product space of
//! states and remaining-target subsets, a per-phase discounted value-iteration
//! heuristic that replans each time a target is reached, the model graph of
//! optimal expected hitting times, and a transfer/swap local search that splits
//! targets among several agents. Baselines, brute-force oracles, seeded instance
//! generators and a Monte-Carlo harness round it out.

pub mod baselines;
pub mod environments;
pub mod error;
pub mod heuristic;
mod linalg;
pub mod mdp;
pub mod model_graph;
pub mod partition;
pub mod product;
pub mod sim;

pub use error::{Error, Result};
pub use mdp::{GridShape, Mdp, StationaryPolicy, TargetSet};
