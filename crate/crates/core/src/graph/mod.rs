//! Directed graphs and the combinatorial primitives the protocol is built on:
//! reach sets, redundant paths, f-covers, reduced graphs, source components
//! and node-disjoint path counting.

mod components;
mod cover;
mod flow;
mod nodeset;
mod paths;

use std::fmt::Write as _;

pub use components::{
    reach_set, reduced_graph, source_component, strongly_connected_components, ReducedGraph,
    SourceComponentCache,
};
pub use cover::has_f_cover;
pub use flow::{count_disjoint_paths, propagates};
pub use nodeset::{
    count_subsets_up_to, subsets_of_size, subsets_up_to, NodeId, NodeSet, MAX_NODES,
};
pub use paths::{
    enumerate_redundant_paths, enumerate_simple_paths_to, is_redundant_walk, is_simple_path,
    is_walk, redundant_mask_counts, redundant_split, PathCatalog, RedundantPath, SimplePath,
    MAX_REDUNDANT_ENUM_NODES,
};

use crate::error::{invalid, Error, Result};

/// A simple directed graph without self-loops, stored as in/out bitmasks.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DiGraph {
    n: usize,
    out: Vec<NodeSet>,
    inc: Vec<NodeSet>,
}

impl DiGraph {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_NODES {
            return invalid(format!("node count {n} outside 1..={MAX_NODES}"));
        }
        Ok(DiGraph {
            n,
            out: vec![NodeSet::EMPTY; n],
            inc: vec![NodeSet::EMPTY; n],
        })
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        let mut g = DiGraph::new(n)?;
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    /// Complete digraph on `n` nodes.
    pub fn clique(n: usize) -> Result<Self> {
        let mut g = DiGraph::new(n)?;
        for u in 0..n {
            g.out[u] = NodeSet::full(n).without(u);
            g.inc[u] = NodeSet::full(n).without(u);
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId) -> Result<()> {
        if u >= self.n || v >= self.n {
            return invalid(format!("edge ({u},{v}) out of range for n={}", self.n));
        }
        if u == v {
            return invalid(format!("self-loop at {u}"));
        }
        self.out[u].insert(v);
        self.inc[v].insert(u);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> NodeSet {
        NodeSet::full(self.n)
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.n && self.out[u].contains(v)
    }

    pub fn out_neighbors(&self, u: NodeId) -> NodeSet {
        self.out[u]
    }

    pub fn in_neighbors(&self, v: NodeId) -> NodeSet {
        self.inc[v]
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(|s| s.len()).sum()
    }

    /// Edges in (source, target) lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.n).flat_map(move |u| self.out[u].iter().map(move |v| (u, v)))
    }

    /// Copy with every outgoing edge of `silenced` removed.
    pub fn without_out_edges(&self, silenced: NodeSet) -> DiGraph {
        let mut g = self.clone();
        for u in silenced.iter().filter(|&u| u < self.n) {
            for v in g.out[u].iter() {
                g.inc[v].remove(u);
            }
            g.out[u] = NodeSet::EMPTY;
        }
        g
    }

    /// Parse the edge-list format: `n <count>` then one `u v` pair per line.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut graph: Option<DiGraph> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match graph.as_mut() {
                None => {
                    if fields.len() != 2 || fields[0] != "n" {
                        return Err(perr(format!("expected `n <count>`, found `{line}`")));
                    }
                    let n: usize = fields[1]
                        .parse()
                        .map_err(|_| perr(format!("bad node count `{}`", fields[1])))?;
                    graph = Some(DiGraph::new(n).map_err(|e| perr(e.to_string()))?);
                }
                Some(g) => {
                    if fields.len() != 2 {
                        return Err(perr(format!("expected `u v`, found `{line}`")));
                    }
                    let parse = |s: &str| {
                        s.parse::<NodeId>()
                            .map_err(|_| perr(format!("bad node id `{s}`")))
                    };
                    let (u, v) = (parse(fields[0])?, parse(fields[1])?);
                    if g.has_edge(u, v) {
                        return Err(perr(format!("duplicate edge ({u},{v})")));
                    }
                    g.add_edge(u, v).map_err(|e| perr(e.to_string()))?;
                }
            }
        }
        graph.ok_or(Error::Parse {
            line: 0,
            msg: "missing `n <count>` header".into(),
        })
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n {}\n", self.n);
        for (u, v) in self.edges() {
            let _ = writeln!(s, "{u} {v}");
        }
        s
    }
}

impl std::fmt::Debug for DiGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let edges: Vec<_> = self.edges().collect();
        f.debug_struct("DiGraph")
            .field("n", &self.n)
            .field("edges", &edges)
            .finish()
    }
}
