//! Per-graph precomputation shared by every node of a run: candidate fault
//! sets, reach sets, walk totals for fullness, in-reach simple-path counts
//! for FIFO-Receive-All, and source components for Completeness.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph::{
    count_subsets_up_to, enumerate_simple_paths_to, reach_set, redundant_mask_counts,
    subsets_up_to, DiGraph, NodeId, NodeSet, SourceComponentCache,
};
use crate::messaging::{redundant_shape, PathKey, MAX_KEYED_NODES};

/// Hard ceilings independent of the CLI budget.
#[derive(Clone, Debug)]
pub struct TopologyLimits {
    /// Largest C(n-1, ≤f).
    pub max_threads: u64,
    /// Largest number of redundant walks flooded per round, summed over
    /// receivers.
    pub max_walks_per_round: u64,
}

impl Default for TopologyLimits {
    fn default() -> Self {
        TopologyLimits {
            max_threads: 2000,
            max_walks_per_round: 60_000_000,
        }
    }
}

/// One logical thread's static data: the guessed fault set and what it
/// takes to satisfy Maximal-Consistency and FIFO-Receive-All.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub set: NodeSet,
    pub reach: NodeSet,
    /// Redundant walks inside `V ∖ set` ending at the owner.
    pub walk_total: u64,
    /// Node sets of those walks.
    pub walk_masks: u32,
    /// Simple `(c, owner)`-paths inside `reach`, indexed by `c`.
    pub simple_paths: Vec<u64>,
}

/// Every redundant walk of the graph ending at one node, ranked in
/// lexicographic path order so that rank comparisons are path comparisons.
#[derive(Debug)]
pub struct WalkIndex {
    keys: WalkKeys,
    /// Packed [`Walk`] per rank.
    info: Vec<u64>,
}

/// Walks of at most 16 nodes keep their key in the high word alone.
#[derive(Debug)]
enum WalkKeys {
    Short(SlotTable<u64>),
    Long(SlotTable<u128>),
}

trait SlotKey: Copy + Eq + Default {
    fn mix(self) -> u64;
}

impl SlotKey for u64 {
    fn mix(self) -> u64 {
        (self ^ self >> 32).wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }
}

impl SlotKey for u128 {
    fn mix(self) -> u64 {
        (self as u64 ^ (self >> 64) as u64).mix()
    }
}

/// Linear-probing table with keys and values side by side, so a hit costs
/// one cache line. The zero key marks an empty slot.
#[derive(Debug)]
struct SlotTable<K> {
    slots: Vec<(K, u64)>,
    shift: u32,
}

impl<K: SlotKey> SlotTable<K> {
    fn new(entries: impl ExactSizeIterator<Item = (K, u64)>) -> Self {
        let cap = (entries.len() + entries.len() / 2)
            .next_power_of_two()
            .max(2);
        let mut t = SlotTable {
            slots: vec![(K::default(), 0); cap],
            shift: 64 - cap.trailing_zeros(),
        };
        crate::mem::advise_huge(&t.slots);
        let mask = cap - 1;
        for (k, v) in entries {
            debug_assert!(k != K::default());
            let mut i = (k.mix() >> t.shift) as usize;
            while t.slots[i].0 != K::default() {
                i = (i + 1) & mask;
            }
            t.slots[i] = (k, v);
        }
        t
    }

    fn prefetch(&self, k: K) {
        crate::mem::prefetch(&self.slots[(k.mix() >> self.shift) as usize]);
    }

    fn get(&self, k: K) -> Option<u64> {
        if k == K::default() {
            return None;
        }
        let mask = self.slots.len() - 1;
        let mut i = (k.mix() >> self.shift) as usize;
        loop {
            let (key, v) = self.slots[i];
            if key == k {
                return Some(v);
            }
            if key == K::default() {
                return None;
            }
            i = (i + 1) & mask;
        }
    }
}

/// What a receiver needs to know about an indexed walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Walk {
    pub rank: u32,
    pub mask: NodeSet,
    pub init: NodeId,
    /// Out-neighbours `w` of the owner such that the walk followed by `w`
    /// is still redundant.
    pub extensions: NodeSet,
}

impl Walk {
    fn pack(self) -> u64 {
        self.mask.bits()
            | (self.init as u64) << 15
            | self.extensions.bits() << 19
            | (self.rank as u64) << 34
    }

    fn unpack(x: u64) -> Self {
        Walk {
            rank: (x >> 34) as u32,
            mask: NodeSet(x & 0x7fff),
            init: (x >> 15 & 0xf) as NodeId,
            extensions: NodeSet(x >> 19 & 0x7fff),
        }
    }
}

impl WalkIndex {
    pub fn build(g: &DiGraph, v: NodeId) -> Self {
        let keys = walk_keys(g, v);
        let info: Vec<u64> = keys
            .iter()
            .enumerate()
            .map(|(rank, &k)| {
                let shape = redundant_shape(g, k).expect("indexed walks are redundant");
                Walk {
                    rank: rank as u32,
                    mask: k.node_set(),
                    init: k.init(),
                    extensions: g
                        .out_neighbors(v)
                        .iter()
                        .filter(|&w| shape.can_extend(w))
                        .collect(),
                }
                .pack()
            })
            .collect();
        let keys = if 2 * g.n() - 1 <= 16 {
            WalkKeys::Short(SlotTable::new(
                keys.iter()
                    .zip(&info)
                    .map(|(k, &x)| ((k.raw() >> 64) as u64, x)),
            ))
        } else {
            WalkKeys::Long(SlotTable::new(
                keys.iter().zip(&info).map(|(k, &x)| (k.raw(), x)),
            ))
        };
        WalkIndex { keys, info }
    }

    pub fn len(&self) -> usize {
        self.info.len()
    }

    pub fn is_empty(&self) -> bool {
        self.info.is_empty()
    }

    pub fn lookup(&self, path: PathKey) -> Option<Walk> {
        let x = match &self.keys {
            WalkKeys::Short(m) => {
                let raw = path.raw();
                if raw as u64 != 0 {
                    return None;
                }
                m.get((raw >> 64) as u64)
            }
            WalkKeys::Long(m) => m.get(path.raw()),
        };
        x.map(Walk::unpack)
    }

    /// Starts loading the slot `lookup(path)` will probe first.
    pub fn prefetch(&self, path: PathKey) {
        match &self.keys {
            WalkKeys::Short(m) => m.prefetch((path.raw() >> 64) as u64),
            WalkKeys::Long(m) => m.prefetch(path.raw()),
        }
    }

    pub fn rank(&self, path: PathKey) -> Option<u32> {
        self.lookup(path).map(|w| w.rank)
    }

    pub fn walk(&self, rank: u32) -> Walk {
        Walk::unpack(self.info[rank as usize])
    }
}

/// Keys of all redundant walks ending at `v`, sorted. Same decomposition as
/// `enumerate_redundant_paths`: a longest simple prefix ending at `x`, then
/// a simple tail from an out-neighbour of `x` already on the prefix.
fn walk_keys(g: &DiGraph, v: NodeId) -> Vec<PathKey> {
    let mut tails: Vec<Vec<(Vec<NodeId>, NodeSet)>> = vec![Vec::new(); g.n()];
    for p in enumerate_simple_paths_to(g, g.nodes(), v) {
        let set = p.nodes();
        tails[p.init()].push((p.0, set));
    }
    fn rec(
        g: &DiGraph,
        v: NodeId,
        tails: &[Vec<(Vec<NodeId>, NodeSet)>],
        key: PathKey,
        x: NodeId,
        used: NodeSet,
        out: &mut Vec<PathKey>,
    ) {
        if x == v {
            out.push(key);
        }
        for b in g.out_neighbors(x).intersect(used).iter() {
            for (tail, set) in &tails[b] {
                if set.contains(x) {
                    continue;
                }
                let mut k = key;
                for &w in tail {
                    k = k.push(w).expect("walks of at most 2n-1 nodes fit a key");
                }
                out.push(k);
            }
        }
        for w in g.out_neighbors(x).minus(used).iter() {
            rec(
                g,
                v,
                tails,
                key.push(w).expect("simple prefix fits a key"),
                w,
                used.with(w),
                out,
            );
        }
    }
    let mut out = Vec::new();
    for s in g.nodes().iter() {
        rec(
            g,
            v,
            &tails,
            PathKey::single(s),
            s,
            NodeSet::singleton(s),
            &mut out,
        );
    }
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug)]
pub struct NodeView {
    pub me: NodeId,
    /// Redundant walks ending at `me`, by node set (dense over all subsets).
    pub mask_totals: Vec<u64>,
    /// Lexicographic order; position is the thread index.
    pub candidates: Vec<Candidate>,
    pub candidate_index: HashMap<NodeSet, usize>,
    /// Every `C ⊆ V ∖ {me}` with `|C| ≤ f`.
    pub covers: Vec<NodeSet>,
    pub walks: WalkIndex,
}

#[derive(Debug)]
pub struct Topology {
    pub graph: DiGraph,
    pub f: usize,
    /// Every `F ⊆ V` with `|F| ≤ f`, lexicographic.
    pub fault_sets: Vec<NodeSet>,
    /// For each fault set `F_u`: the distinct `S_{F_u,F_w}` over `F_w ≠ F_u`.
    clauses: HashMap<NodeSet, Vec<NodeSet>>,
    source: HashMap<(NodeSet, NodeSet), NodeSet>,
    pub nodes: Vec<NodeView>,
    pub walks_per_round: u64,
}

impl Topology {
    pub fn new(graph: DiGraph, f: usize, limits: &TopologyLimits) -> Result<Self> {
        let n = graph.n();
        if n > MAX_KEYED_NODES {
            return Err(Error::Budget(format!(
                "simulation supports at most {MAX_KEYED_NODES} nodes, graph has {n}"
            )));
        }
        let threads = count_subsets_up_to(n - 1, f);
        if threads > limits.max_threads {
            return Err(Error::Budget(format!(
                "{threads} candidate threads per node exceeds the limit of {}",
                limits.max_threads
            )));
        }

        let mut walk_counts = Vec::with_capacity(n);
        let mut walks_per_round = 0u64;
        for v in 0..n {
            let counts = redundant_mask_counts(&graph, NodeSet::EMPTY, v)?;
            walks_per_round = walks_per_round.saturating_add(counts.values().sum());
            if walks_per_round > limits.max_walks_per_round {
                return Err(Error::Budget(format!(
                    "more than {} redundant walks per round; the flood would not fit in memory",
                    limits.max_walks_per_round
                )));
            }
            walk_counts.push(counts);
        }

        let all = graph.nodes();
        let fault_sets = subsets_up_to(all, f);
        let cache = SourceComponentCache::new(graph.clone(), f);
        let mut source = HashMap::new();
        for (i, &a) in fault_sets.iter().enumerate() {
            for &b in &fault_sets[i..] {
                source.insert((a, b), cache.get(a, b)?);
            }
        }
        let sc = |a: NodeSet, b: NodeSet| {
            if a <= b {
                source[&(a, b)]
            } else {
                source[&(b, a)]
            }
        };
        let mut clauses = HashMap::new();
        for &fu in &fault_sets {
            let mut list: Vec<NodeSet> = fault_sets
                .iter()
                .filter(|&&fw| fw != fu)
                .map(|&fw| sc(fu, fw))
                .collect();
            list.sort();
            list.dedup();
            clauses.insert(fu, list);
        }

        let mut nodes = Vec::with_capacity(n);
        for me in 0..n {
            let others = all.without(me);
            let mut candidates = Vec::new();
            for set in subsets_up_to(others, f) {
                let reach = reach_set(&graph, me, set)?;
                let avoiding = walk_counts[me].iter().filter(|(m, _)| m.is_disjoint(set));
                let walk_total = avoiding.clone().map(|(_, c)| *c).sum();
                let walk_masks = avoiding.count() as u32;
                let mut simple_paths = vec![0u64; n];
                for p in enumerate_simple_paths_to(&graph, reach, me) {
                    simple_paths[p.init()] += 1;
                }
                candidates.push(Candidate {
                    set,
                    reach,
                    walk_total,
                    walk_masks,
                    simple_paths,
                });
            }
            let candidate_index = candidates
                .iter()
                .enumerate()
                .map(|(i, c)| (c.set, i))
                .collect();
            let mut mask_totals = vec![0u64; 1 << n];
            for (m, c) in &walk_counts[me] {
                mask_totals[m.bits() as usize] = *c;
            }
            nodes.push(NodeView {
                me,
                mask_totals,
                candidates,
                candidate_index,
                covers: subsets_up_to(others, f),
                walks: WalkIndex::build(&graph, me),
            });
        }

        Ok(Topology {
            graph,
            f,
            fault_sets,
            clauses,
            source,
            nodes,
            walks_per_round,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// `S_{a,b}` for fault sets of size at most f.
    pub fn source_component(&self, a: NodeSet, b: NodeSet) -> Option<NodeSet> {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.source.get(&key).copied()
    }

    /// Distinct source components `S_{F_u,F_w}` over all `F_w ≠ F_u`.
    pub fn clauses(&self, fu: NodeSet) -> Option<&[NodeSet]> {
        self.clauses.get(&fu).map(|v| v.as_slice())
    }
}
