//! Brute-force helpers shared by the integration tests. Deliberately naive:
//! adjacency matrices, closures and exhaustive search.
#![allow(dead_code)]

use proptest::prelude::*;
use reachcons::graph::{DiGraph, NodeId, NodeSet};

pub fn set(v: &[NodeId]) -> NodeSet {
    v.iter().copied().collect()
}

pub fn ordered_pairs(n: usize) -> Vec<(NodeId, NodeId)> {
    (0..n)
        .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
        .collect()
}

/// The labeled digraph on `n` nodes whose edges are the set bits of `bits`
/// over [`ordered_pairs`].
pub fn graph_from_bits(n: usize, bits: u64) -> DiGraph {
    let pairs = ordered_pairs(n);
    DiGraph::from_edges(
        n,
        pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| bits >> i & 1 == 1)
            .map(|(_, &e)| e),
    )
    .unwrap()
}

pub fn all_graphs(n: usize) -> impl Iterator<Item = DiGraph> {
    let m = n * (n - 1);
    (0..1u64 << m).map(move |b| graph_from_bits(n, b))
}

pub fn arb_graph(min_n: usize, max_n: usize) -> impl Strategy<Value = DiGraph> {
    (min_n..=max_n)
        .prop_flat_map(|n| {
            let m = n * (n - 1);
            (Just(n), proptest::collection::vec(any::<bool>(), m))
        })
        .prop_map(|(n, bits)| {
            DiGraph::from_edges(
                n,
                ordered_pairs(n)
                    .into_iter()
                    .zip(bits)
                    .filter(|(_, b)| *b)
                    .map(|(e, _)| e),
            )
            .unwrap()
        })
}

pub fn adjacency(g: &DiGraph) -> Vec<Vec<bool>> {
    let n = g.n();
    let mut a = vec![vec![false; n]; n];
    for (u, v) in g.edges() {
        a[u][v] = true;
    }
    a
}

/// Reflexive-transitive closure of the subgraph induced by `alive`.
pub fn closure(adj: &[Vec<bool>], alive: &[bool]) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut r = vec![vec![false; n]; n];
    for u in 0..n {
        for v in 0..n {
            r[u][v] = alive[u] && alive[v] && (u == v || adj[u][v]);
        }
    }
    for k in 0..n {
        for u in 0..n {
            for v in 0..n {
                if r[u][k] && r[k][v] {
                    r[u][v] = true;
                }
            }
        }
    }
    r
}

pub fn naive_reach(g: &DiGraph, v: NodeId, removed: NodeSet) -> NodeSet {
    let alive: Vec<bool> = (0..g.n()).map(|x| !removed.contains(x)).collect();
    let r = closure(&adjacency(g), &alive);
    (0..g.n()).filter(|&u| r[u][v]).collect()
}

/// Nodes reaching every node once the outgoing edges of `silenced` are cut.
pub fn naive_source_component(g: &DiGraph, silenced: NodeSet) -> NodeSet {
    let n = g.n();
    let mut adj = adjacency(g);
    for u in silenced.iter() {
        adj[u] = vec![false; n];
    }
    let r = closure(&adj, &vec![true; n]);
    (0..n).filter(|&u| (0..n).all(|v| r[u][v])).collect()
}

/// All subsets of `0..n` with at most `k` members.
pub fn small_sets(n: usize, k: usize) -> Vec<NodeSet> {
    (0..1u64 << n)
        .map(NodeSet)
        .filter(|s| s.len() <= k)
        .collect()
}

/// k-reach straight from the definition: every combination of `k` fault
/// sets of size at most f, split between the two nodes as the definition
/// prescribes, and every pair of nodes.
pub fn naive_k_reach(g: &DiGraph, f: usize, k: usize) -> bool {
    let n = g.n();
    let sets = small_sets(n, f);
    let shared: Vec<NodeSet> = if k % 2 == 1 {
        sets.clone()
    } else {
        vec![NodeSet::EMPTY]
    };
    let per_node = k / 2;
    // Unions of `per_node` fault sets.
    let mut unions = vec![NodeSet::EMPTY];
    for _ in 0..per_node {
        let mut next: Vec<NodeSet> = unions
            .iter()
            .flat_map(|u| sets.iter().map(move |s| u.union(*s)))
            .collect();
        next.sort();
        next.dedup();
        unions = next;
    }
    for &s in &shared {
        for &a in &unions {
            for &b in &unions {
                let (ra, rb) = (s.union(a), s.union(b));
                for v in (0..n).filter(|&v| !ra.contains(v)) {
                    for u in (0..n).filter(|&u| !rb.contains(u)) {
                        if naive_reach(g, v, ra).is_disjoint(naive_reach(g, u, rb)) {
                            return false;
                        }
                    }
                }
            }
        }
    }
    true
}
