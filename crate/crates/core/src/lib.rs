//! Phenomenological causality: causal structure induced by declared
//! elementary actions.
//!
//! The crate classifies actions against candidate DAGs, enumerates the graphs
//! a set of actions supports, simulates action-controlled systems, recovers
//! linear non-Gaussian structure from data and checks the consistency results
//! of the framework on exact small instances.

pub mod error;
pub mod graph;
pub mod linalg;
pub mod discrete;
pub mod data;
pub mod rng;
pub mod scm;
pub mod actions;
pub mod registry;
pub mod exemplars;
pub mod discovery;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{Dag, NodeSet};
