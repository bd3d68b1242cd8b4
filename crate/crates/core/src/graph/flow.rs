use super::{DiGraph, NodeId, NodeSet};
use crate::error::{invalid, Result};

const INF: u32 = u32::MAX / 2;

struct Network {
    // (to, rev index, residual capacity)
    adj: Vec<Vec<(usize, usize, u32)>>,
}

impl Network {
    fn new(size: usize) -> Self {
        Network {
            adj: vec![Vec::new(); size],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: u32) {
        let (fl, tl) = (self.adj[from].len(), self.adj[to].len());
        self.adj[from].push((to, tl, cap));
        self.adj[to].push((from, fl, 0));
    }

    fn augment(&mut self, v: usize, sink: usize, seen: &mut [bool]) -> bool {
        if v == sink {
            return true;
        }
        seen[v] = true;
        for i in 0..self.adj[v].len() {
            let (to, rev, cap) = self.adj[v][i];
            if cap == 0 || seen[to] {
                continue;
            }
            if self.augment(to, sink, seen) {
                self.adj[v][i].2 -= 1;
                self.adj[to][rev].2 += 1;
                return true;
            }
        }
        false
    }

    /// Unit augmentations; every path here carries one unit.
    fn max_flow(&mut self, source: usize, sink: usize, limit: usize) -> usize {
        let mut flow = 0;
        let mut seen = vec![false; self.adj.len()];
        while flow < limit {
            seen.fill(false);
            if !self.augment(source, sink, &mut seen) {
                break;
            }
            flow += 1;
        }
        flow
    }
}

/// Maximum number of internally node-disjoint `(A, b)`-paths inside the
/// subgraph induced by `c`. Nodes of `A` and `b` itself are uncapacitated;
/// every other node carries at most one path.
pub fn count_disjoint_paths(g: &DiGraph, c: NodeSet, a: NodeSet, b: NodeId) -> Result<usize> {
    if !c.is_subset(g.nodes()) {
        return invalid("C references nodes outside the graph");
    }
    if !a.is_subset(c) {
        return invalid(format!("A={a} is not inside C={c}"));
    }
    if !c.contains(b) || a.contains(b) {
        return invalid(format!("target {b} must be in C and outside A"));
    }
    // node x: in = 2x, out = 2x+1; super source = 2n.
    let n = g.n();
    let source = 2 * n;
    let mut net = Network::new(2 * n + 1);
    for x in c.iter() {
        let cap = if a.contains(x) || x == b { INF } else { 1 };
        net.add(2 * x, 2 * x + 1, cap);
        for y in g.out_neighbors(x).intersect(c).iter() {
            net.add(2 * x + 1, 2 * y, 1);
        }
    }
    for x in a.iter() {
        net.add(source, 2 * x, INF);
    }
    let limit = g.in_neighbors(b).intersect(c).len();
    Ok(net.max_flow(source, 2 * b, limit))
}

/// `A` propagates in `C` to `B`: `B` is empty or every `b ∈ B` has at least
/// `f+1` disjoint `(A, b)`-paths inside `C`.
pub fn propagates(g: &DiGraph, a: NodeSet, b: NodeSet, c: NodeSet, f: usize) -> Result<bool> {
    if !a.is_disjoint(b) {
        return invalid(format!("A={a} and B={b} overlap"));
    }
    if !a.is_subset(c) || !b.is_subset(c) {
        return invalid(format!("A={a} and B={b} must lie in C={c}"));
    }
    for x in b.iter() {
        if count_disjoint_paths(g, c, a, x)? < f + 1 {
            return Ok(false);
        }
    }
    Ok(true)
}
