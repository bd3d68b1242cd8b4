use crate::error::{Error, Result};
use crate::graph::{has_f_cover, source_component, subsets_up_to, DiGraph, NodeId, NodeSet};
use crate::messaging::{Digest, MessageSet};

/// The Completeness check as written, by brute force.
///
/// For every `F_w ≠ F_u` with `|F_w| ≤ f` and every `q ∈ S_{F_u,F_w}`, the
/// messages of `m_v` from `q` carrying `value_q(m_c)` must have no f-cover
/// inside `(V ∖ S_{F_u,F_w}) ∖ {me}`. A `q` missing from `m_c` fails.
pub fn completeness(
    m_v: &MessageSet,
    m_c: &Digest,
    f_u: NodeSet,
    g: &DiGraph,
    f: usize,
    me: NodeId,
) -> Result<bool> {
    if !m_c.is_consistent() {
        return Err(Error::Integrity(
            "completeness called with an inconsistent payload".into(),
        ));
    }
    for f_w in subsets_up_to(g.nodes(), f) {
        if f_w == f_u {
            continue;
        }
        let s = source_component(g, f_u, f_w, f)?;
        let universe = g.nodes().minus(s).without(me);
        for q in s.iter() {
            let Some(x) = m_c.value_of(q) else {
                return Ok(false);
            };
            let paths = m_v
                .iter()
                .filter(|r| r.path.init() == q && r.value.to_bits() == x.to_bits())
                .map(|r| r.path.node_set());
            if has_f_cover(paths, universe, f).is_some() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Incremental "no f-cover of P(M′) inside `universe`" for one
/// `(q, value, universe)`. Monotone: once satisfied it stays satisfied,
/// because M′ only grows.
#[derive(Clone, Debug)]
pub(crate) struct CoverTracker {
    /// Candidate covers not yet escaped by some observed path.
    open: Vec<NodeSet>,
}

impl CoverTracker {
    pub(crate) fn new(universe: NodeSet, f: usize) -> Self {
        CoverTracker {
            open: subsets_up_to(universe, f),
        }
    }

    /// Returns true when this path is the one that satisfies the tracker.
    pub(crate) fn observe(&mut self, path: NodeSet) -> bool {
        if self.open.is_empty() {
            return false;
        }
        self.open.retain(|h| !h.is_disjoint(path));
        self.open.is_empty()
    }

    pub(crate) fn satisfied(&self) -> bool {
        self.open.is_empty()
    }
}
