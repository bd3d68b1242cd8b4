//! Simple and redundant paths.
//!
//! A redundant path is a walk `p1 || p2` where both pieces are simple and the
//! pieces share the split node: `walk[..=i]` and `walk[i..]` are both simple
//! for some `i`. Simple paths (including the single node `⟨v⟩`) qualify.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{DiGraph, NodeId, NodeSet};
use crate::error::{invalid, Error, Result};

/// Explicit enumeration refuses larger graphs.
pub const MAX_REDUNDANT_ENUM_NODES: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SimplePath(pub Vec<NodeId>);

impl SimplePath {
    pub fn init(&self) -> NodeId {
        self.0[0]
    }

    pub fn ter(&self) -> NodeId {
        *self.0.last().expect("paths are nonempty")
    }

    pub fn nodes(&self) -> NodeSet {
        self.0.iter().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RedundantPath {
    nodes: Vec<NodeId>,
    /// Index of the node where the first simple segment ends.
    split: usize,
}

impl RedundantPath {
    /// Validates the node sequence as a redundant walk of `g`.
    pub fn new(g: &DiGraph, nodes: Vec<NodeId>) -> Result<Self> {
        if !is_walk(g, &nodes) {
            return invalid(format!("{nodes:?} is not a walk"));
        }
        match redundant_split(&nodes) {
            Some(split) => Ok(RedundantPath { nodes, split }),
            None => invalid(format!("{nodes:?} is not a redundant path")),
        }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn init(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn ter(&self) -> NodeId {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn node_set(&self) -> NodeSet {
        self.nodes.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Nonempty, in range, and every consecutive pair is an edge.
pub fn is_walk(g: &DiGraph, nodes: &[NodeId]) -> bool {
    !nodes.is_empty()
        && nodes.iter().all(|&v| v < g.n())
        && nodes.windows(2).all(|w| g.has_edge(w[0], w[1]))
}

pub fn is_simple_path(g: &DiGraph, nodes: &[NodeId]) -> bool {
    is_walk(g, nodes) && nodes.iter().copied().collect::<NodeSet>().len() == nodes.len()
}

/// Split index of a redundant node sequence, or `None` if it is not one.
///
/// Taking the longest simple prefix is enough: any valid split `i` is at most
/// that prefix's end, and moving the split right only shortens the suffix.
pub fn redundant_split(nodes: &[NodeId]) -> Option<usize> {
    if nodes.is_empty() {
        return None;
    }
    let mut seen = NodeSet::EMPTY;
    let mut end = nodes.len() - 1;
    for (i, &v) in nodes.iter().enumerate() {
        if seen.contains(v) {
            end = i - 1;
            break;
        }
        seen.insert(v);
    }
    let mut tail = NodeSet::EMPTY;
    for &v in &nodes[end..] {
        if tail.contains(v) {
            return None;
        }
        tail.insert(v);
    }
    Some(end)
}

pub fn is_redundant_walk(g: &DiGraph, nodes: &[NodeId]) -> bool {
    is_walk(g, nodes) && redundant_split(nodes).is_some()
}

/// Every simple path ending at `v` whose nodes all lie in `allowed`,
/// sorted by node sequence.
pub fn enumerate_simple_paths_to(g: &DiGraph, allowed: NodeSet, v: NodeId) -> Vec<SimplePath> {
    let mut out = Vec::new();
    if !allowed.contains(v) {
        return out;
    }
    // Walk backwards over in-edges, then reverse.
    let mut rev = vec![v];
    fn rec(
        g: &DiGraph,
        allowed: NodeSet,
        rev: &mut Vec<NodeId>,
        used: NodeSet,
        out: &mut Vec<SimplePath>,
    ) {
        out.push(SimplePath(rev.iter().rev().copied().collect()));
        let head = *rev.last().unwrap();
        for u in g.in_neighbors(head).intersect(allowed).minus(used).iter() {
            rev.push(u);
            rec(g, allowed, rev, used.with(u), out);
            rev.pop();
        }
    }
    rec(g, allowed, &mut rev, NodeSet::singleton(v), &mut out);
    out.sort();
    out
}

/// Every redundant path ending at `v` inside the subgraph induced by
/// `V ∖ excluded`, deduplicated and sorted by node sequence.
pub fn enumerate_redundant_paths(
    g: &DiGraph,
    excluded: NodeSet,
    v: NodeId,
) -> Result<Vec<RedundantPath>> {
    if excluded.contains(v) {
        return invalid(format!("target {v} is excluded"));
    }
    if g.n() > MAX_REDUNDANT_ENUM_NODES {
        return Err(Error::Budget(format!(
            "redundant-path enumeration capped at n <= {MAX_REDUNDANT_ENUM_NODES}, graph has {}",
            g.n()
        )));
    }
    let allowed = g.nodes().minus(excluded);
    let mut tails: Vec<Vec<SimplePath>> = vec![Vec::new(); g.n()];
    for p in enumerate_simple_paths_to(g, allowed, v) {
        tails[p.init()].push(p);
    }

    // Each walk decomposes uniquely as A || P where A is its longest simple
    // prefix (ending at x) and P is a simple path to v that starts at a node
    // already on A and avoids x.
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    fn rec(
        g: &DiGraph,
        allowed: NodeSet,
        v: NodeId,
        tails: &[Vec<SimplePath>],
        prefix: &mut Vec<NodeId>,
        used: NodeSet,
        out: &mut Vec<RedundantPath>,
    ) {
        let x = *prefix.last().unwrap();
        if x == v {
            out.push(RedundantPath {
                nodes: prefix.clone(),
                split: prefix.len() - 1,
            });
        }
        for b in g.out_neighbors(x).intersect(used).iter() {
            for tail in &tails[b] {
                if tail.0.contains(&x) {
                    continue;
                }
                let mut nodes = prefix.clone();
                nodes.extend_from_slice(&tail.0);
                out.push(RedundantPath {
                    nodes,
                    split: prefix.len() - 1,
                });
            }
        }
        for w in g.out_neighbors(x).intersect(allowed).minus(used).iter() {
            prefix.push(w);
            rec(g, allowed, v, tails, prefix, used.with(w), out);
            prefix.pop();
        }
    }
    for s in allowed.iter() {
        prefix.push(s);
        rec(
            g,
            allowed,
            v,
            &tails,
            &mut prefix,
            NodeSet::singleton(s),
            &mut out,
        );
        prefix.pop();
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Number of redundant paths ending at `v` inside `V ∖ excluded`, bucketed by
/// the set of nodes each path visits.
///
/// Counts without listing: simple-path counts per (node set, endpoint) come
/// from subset dynamic programming, then the prefix/tail decomposition used
/// by [`enumerate_redundant_paths`] combines them.
pub fn redundant_mask_counts(
    g: &DiGraph,
    excluded: NodeSet,
    v: NodeId,
) -> Result<HashMap<NodeSet, u64>> {
    if excluded.contains(v) {
        return invalid(format!("target {v} is excluded"));
    }
    let n = g.n();
    if n > 16 {
        return Err(Error::Budget(format!(
            "mask counting capped at n <= 16, graph has {n}"
        )));
    }
    let allowed = g.nodes().minus(excluded);
    let size = 1usize << n;
    let idx = |mask: u64, node: NodeId| mask as usize * n + node;

    // fwd[mask][x]: simple paths with node set `mask` ending at x.
    // bwd[mask][b]: simple paths with node set `mask` starting at b, ending at v.
    let mut fwd = vec![0u64; size * n];
    let mut bwd = vec![0u64; size * n];
    for x in allowed.iter() {
        fwd[idx(1 << x, x)] = 1;
    }
    bwd[idx(1 << v, v)] = 1;
    for mask in 1..size as u64 {
        if mask & !allowed.bits() != 0 {
            continue;
        }
        let m = NodeSet(mask);
        for x in m.iter() {
            let c = fwd[idx(mask, x)];
            if c != 0 {
                for w in g.out_neighbors(x).intersect(allowed).minus(m).iter() {
                    fwd[idx(mask | 1 << w, w)] += c;
                }
            }
            let c = bwd[idx(mask, x)];
            if c != 0 {
                for u in g.in_neighbors(x).intersect(allowed).minus(m).iter() {
                    bwd[idx(mask | 1 << u, u)] += c;
                }
            }
        }
    }

    let mut tails_from: Vec<Vec<(u64, u64)>> = vec![Vec::new(); n];
    for mask in 1..size as u64 {
        for b in NodeSet(mask).iter() {
            let c = bwd[idx(mask, b)];
            if c != 0 {
                tails_from[b].push((mask, c));
            }
        }
    }

    let mut counts: HashMap<NodeSet, u64> = HashMap::new();
    for mask in 1..size as u64 {
        if mask & !allowed.bits() != 0 {
            continue;
        }
        let m = NodeSet(mask);
        for x in m.iter() {
            let ca = fwd[idx(mask, x)];
            if ca == 0 {
                continue;
            }
            if x == v {
                *counts.entry(m).or_default() += ca;
            }
            for b in g.out_neighbors(x).intersect(m).iter() {
                for &(tm, cb) in &tails_from[b] {
                    if tm >> x & 1 == 0 {
                        *counts.entry(NodeSet(mask | tm)).or_default() += ca * cb;
                    }
                }
            }
        }
    }
    Ok(counts)
}

/// Memoized redundant-path enumeration for one graph, keyed by
/// `(excluded, v)`. Safe to share across threads.
pub struct PathCatalog {
    graph: DiGraph,
    memo: Mutex<HashMap<(NodeSet, NodeId), Arc<Vec<RedundantPath>>>>,
}

impl PathCatalog {
    pub fn new(graph: DiGraph) -> Self {
        PathCatalog {
            graph,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn graph(&self) -> &DiGraph {
        &self.graph
    }

    pub fn redundant_paths(&self, excluded: NodeSet, v: NodeId) -> Result<Arc<Vec<RedundantPath>>> {
        if let Some(hit) = self.memo.lock().unwrap().get(&(excluded, v)) {
            return Ok(hit.clone());
        }
        // Computed outside the lock; a racing insert stores an equal value.
        let paths = Arc::new(enumerate_redundant_paths(&self.graph, excluded, v)?);
        self.memo
            .lock()
            .unwrap()
            .entry((excluded, v))
            .or_insert(paths.clone());
        Ok(paths)
    }
}
