//! Multi-shot conversational recommendation with uncertainty-driven
//! attribute elicitation.
//!
//! A belief network turns a user's history into a symmetric attribute
//! relation matrix, which propagates yes/no feedback into per-attribute
//! beliefs. A single confidence rule chooses between asking the most
//! uncertain attribute and recommending the top-K candidates scored by a
//! residual recommendation network. A truthful simulated user drives
//! offline evaluation.

pub mod belief;
pub mod config;
pub mod datasets;
pub mod dialogue;
pub mod error;
pub mod model;
pub mod nnkit;
pub mod pipeline;
pub mod recommender;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
