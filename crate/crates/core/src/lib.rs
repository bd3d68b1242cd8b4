//! Asynchronous Byzantine approximate consensus on directed graphs.
//!
//! `graph` holds the combinatorial primitives, `conditions` decides the
//! k-reach and partition conditions, `messaging` and `protocol` implement the
//! BW algorithm, `adversary` and `simnet` drive it under faults and
//! asynchrony, and `harness` backs the `reachcons` command line tool.

pub mod adversary;
pub mod conditions;
pub mod error;
pub mod graph;
pub mod harness;
mod mem;
pub mod messaging;
pub mod protocol;
pub mod simnet;

pub use error::{Error, Result};
