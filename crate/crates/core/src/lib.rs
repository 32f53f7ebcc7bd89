//! Object-goal navigation with a zone-level knowledge graph.

pub mod categories;
pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod nn;
pub mod oracle;
pub mod planner;
pub mod seed;
pub mod selfcheck;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
