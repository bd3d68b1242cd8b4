//! The BW state machine: one reactor per node with a logical thread per
//! candidate fault set, plus Completeness and Filter-and-Average.

mod completeness;
mod filter;
mod runtime;
mod topology;

pub use completeness::completeness;
pub(crate) use completeness::CoverTracker;
pub use filter::{fast_filter, filter_and_average, FilterOutcome};
pub use runtime::{FaRecord, McLatch, NodeRuntime, Outbox};
pub use topology::{Candidate, NodeView, Topology, TopologyLimits, Walk, WalkIndex};

/// Number of rounds before output: the first `r` with `r > log2(K/eps)`.
pub fn rounds_for(k: f64, eps: f64) -> u32 {
    (k / eps).log2().floor() as u32 + 1
}
