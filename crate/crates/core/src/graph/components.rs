use std::collections::HashMap;
use std::sync::RwLock;

use super::{DiGraph, NodeId, NodeSet};
use crate::error::{invalid, Result};

/// Nodes outside `f` that reach `v` in the subgraph induced by `V ∖ f`.
/// Always contains `v`.
pub fn reach_set(g: &DiGraph, v: NodeId, f: NodeSet) -> Result<NodeSet> {
    if v >= g.n() {
        return invalid(format!("node {v} out of range"));
    }
    if f.contains(v) {
        return invalid(format!("node {v} lies in the removed set {f}"));
    }
    let allowed = g.nodes().minus(f);
    let mut seen = NodeSet::singleton(v);
    let mut frontier = seen;
    while !frontier.is_empty() {
        let mut next = NodeSet::EMPTY;
        for x in frontier.iter() {
            next = next.union(g.in_neighbors(x));
        }
        frontier = next.intersect(allowed).minus(seen);
        seen = seen.union(frontier);
    }
    Ok(seen)
}

/// `G` with every outgoing edge of `F1 ∪ F2` removed; the vertex set is kept.
#[derive(Clone, Debug)]
pub struct ReducedGraph {
    pub graph: DiGraph,
    pub f1: NodeSet,
    pub f2: NodeSet,
}

pub fn reduced_graph(g: &DiGraph, f1: NodeSet, f2: NodeSet, f: usize) -> Result<ReducedGraph> {
    if f1.len() > f || f2.len() > f {
        return invalid(format!(
            "|F1|={} or |F2|={} exceeds f={f}",
            f1.len(),
            f2.len()
        ));
    }
    if !f1.union(f2).is_subset(g.nodes()) {
        return invalid("fault sets reference nodes outside the graph");
    }
    Ok(ReducedGraph {
        graph: g.without_out_edges(f1.union(f2)),
        f1,
        f2,
    })
}

/// Tarjan's algorithm, iterative. Components come out in reverse
/// topological order of the condensation (sinks first).
pub fn strongly_connected_components(g: &DiGraph) -> Vec<NodeSet> {
    let n = g.n();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next_index = 0;

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // (node, remaining successors)
        let mut work: Vec<(NodeId, NodeSet)> = vec![(root, g.out_neighbors(root))];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut rest)) = work.last_mut() {
            if let Some(w) = rest.first() {
                rest.remove(w);
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, g.out_neighbors(w)));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = NodeSet::EMPTY;
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w] = false;
                    comp.insert(w);
                    if w == v {
                        break;
                    }
                }
                comps.push(comp);
            }
        }
    }
    comps
}

/// Nodes that reach every node of `V` in the reduced graph `G_{F1,F2}`.
/// Empty when no such node exists.
pub fn source_component(g: &DiGraph, f1: NodeSet, f2: NodeSet, f: usize) -> Result<NodeSet> {
    let reduced = reduced_graph(g, f1, f2, f)?;
    Ok(all_reaching(&reduced.graph))
}

fn all_reaching(g: &DiGraph) -> NodeSet {
    let comps = strongly_connected_components(g);
    let mut comp_of = vec![0usize; g.n()];
    for (i, c) in comps.iter().enumerate() {
        for v in c.iter() {
            comp_of[v] = i;
        }
    }
    // Sinks come first, so every successor component is already resolved.
    let mut reach: Vec<NodeSet> = Vec::with_capacity(comps.len());
    for (i, c) in comps.iter().enumerate() {
        let mut r = *c;
        for v in c.iter() {
            for w in g.out_neighbors(v).iter() {
                let j = comp_of[w];
                if j != i {
                    r = r.union(reach[j]);
                }
            }
        }
        reach.push(r);
    }
    let all = g.nodes();
    comps
        .iter()
        .zip(&reach)
        .filter(|(_, r)| **r == all)
        .fold(NodeSet::EMPTY, |acc, (c, _)| acc.union(*c))
}

/// Memo table for source components of one graph, keyed by the unordered
/// pair `{F1, F2}`.
pub struct SourceComponentCache {
    graph: DiGraph,
    f: usize,
    memo: RwLock<HashMap<(NodeSet, NodeSet), NodeSet>>,
}

impl SourceComponentCache {
    pub fn new(graph: DiGraph, f: usize) -> Self {
        SourceComponentCache {
            graph,
            f,
            memo: RwLock::new(HashMap::new()),
        }
    }

    pub fn get(&self, f1: NodeSet, f2: NodeSet) -> Result<NodeSet> {
        let key = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        if let Some(&s) = self.memo.read().unwrap().get(&key) {
            return Ok(s);
        }
        let s = source_component(&self.graph, key.0, key.1, self.f)?;
        self.memo.write().unwrap().insert(key, s);
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[NodeId]) -> NodeSet {
        v.iter().copied().collect()
    }

    #[test]
    fn reach_examples() {
        let single = DiGraph::new(1).unwrap();
        assert_eq!(reach_set(&single, 0, NodeSet::EMPTY).unwrap(), set(&[0]));
        // a=0 → b=1 → v=2
        let chain = DiGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(reach_set(&chain, 2, set(&[1])).unwrap(), set(&[2]));
        assert_eq!(
            reach_set(&chain, 2, NodeSet::EMPTY).unwrap(),
            set(&[0, 1, 2])
        );
        assert!(reach_set(&chain, 2, set(&[2])).is_err());
    }

    #[test]
    fn reduced_examples() {
        let k4 = DiGraph::clique(4).unwrap();
        let r = reduced_graph(&k4, set(&[3]), set(&[2]), 1).unwrap();
        assert_eq!(r.graph.edge_count(), 6);
        assert!(r.graph.has_edge(0, 2) && r.graph.has_edge(1, 3));
        assert_eq!(
            reduced_graph(&k4, NodeSet::EMPTY, NodeSet::EMPTY, 1)
                .unwrap()
                .graph,
            k4
        );
        assert_eq!(
            reduced_graph(&k4, set(&[0]), set(&[0]), 1)
                .unwrap()
                .graph
                .edge_count(),
            9
        );
        assert!(reduced_graph(&k4, set(&[0, 1]), NodeSet::EMPTY, 1).is_err());
    }

    #[test]
    fn source_component_examples() {
        let k4 = DiGraph::clique(4).unwrap();
        assert_eq!(
            source_component(&k4, set(&[3]), set(&[2]), 1).unwrap(),
            set(&[0, 1])
        );
        assert_eq!(
            source_component(&k4, NodeSet::EMPTY, NodeSet::EMPTY, 1).unwrap(),
            set(&[0, 1, 2, 3])
        );
        // Two sinks: nobody reaches everything.
        let g = DiGraph::from_edges(3, [(0, 1), (0, 2)]).unwrap();
        assert_eq!(
            source_component(&g, NodeSet::EMPTY, NodeSet::EMPTY, 0).unwrap(),
            set(&[0])
        );
        let g = DiGraph::from_edges(3, [(0, 1)]).unwrap();
        assert_eq!(
            source_component(&g, NodeSet::EMPTY, NodeSet::EMPTY, 0).unwrap(),
            NodeSet::EMPTY
        );
    }

    #[test]
    fn scc_on_cycle_with_tail() {
        let g = DiGraph::from_edges(4, [(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap();
        let comps = strongly_connected_components(&g);
        assert_eq!(comps, vec![set(&[3]), set(&[0, 1, 2])]);
    }

    #[test]
    fn cache_is_symmetric() {
        let k4 = DiGraph::clique(4).unwrap();
        let cache = SourceComponentCache::new(k4, 1);
        assert_eq!(
            cache.get(set(&[3]), set(&[2])).unwrap(),
            cache.get(set(&[2]), set(&[3])).unwrap()
        );
    }
}
