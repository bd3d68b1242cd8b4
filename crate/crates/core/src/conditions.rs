//! Deciding the k-reach family and the partition conditions (CCS, CCA, BCS)
//! by exhaustive enumeration, plus a brute-force audit that the two
//! families agree.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{reach_set, subsets_up_to, DiGraph, NodeId, NodeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PartitionCondition {
    Ccs,
    Cca,
    Bcs,
}

impl PartitionCondition {
    /// The k-reach condition it is equivalent to.
    pub fn reach_k(self) -> usize {
        match self {
            PartitionCondition::Ccs => 1,
            PartitionCondition::Cca => 2,
            PartitionCondition::Bcs => 3,
        }
    }

    pub fn for_reach_k(k: usize) -> Option<Self> {
        match k {
            1 => Some(PartitionCondition::Ccs),
            2 => Some(PartitionCondition::Cca),
            3 => Some(PartitionCondition::Bcs),
            _ => None,
        }
    }

    fn threshold(self, f: usize) -> usize {
        match self {
            PartitionCondition::Ccs => 1,
            _ => f + 1,
        }
    }

    fn has_fault_part(self) -> bool {
        self != PartitionCondition::Cca
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Witness {
    /// `reach_v(shared ∪ set_v) ∩ reach_u(shared ∪ set_u) = ∅`.
    Reach {
        k: usize,
        shared: NodeSet,
        set_v: NodeSet,
        set_u: NodeSet,
        v: NodeId,
        u: NodeId,
    },
    /// Neither `L∪C → R` nor `R∪C → L` reaches the threshold.
    Partition {
        which: PartitionCondition,
        faulty: NodeSet,
        left: NodeSet,
        center: NodeSet,
        right: NodeSet,
    },
}

impl Witness {
    /// Re-evaluates the defining predicate; true iff this is a genuine
    /// violation for `(g, f)`.
    pub fn verify(&self, g: &DiGraph, f: usize) -> bool {
        match *self {
            Witness::Reach {
                k,
                shared,
                set_v,
                set_u,
                v,
                u,
            } => {
                let (shared_cap, private_cap) = reach_shape(k, f);
                if shared.len() > shared_cap
                    || set_v.len() > private_cap
                    || set_u.len() > private_cap
                {
                    return false;
                }
                let (rv, ru) = (shared.union(set_v), shared.union(set_u));
                match (reach_set(g, v, rv), reach_set(g, u, ru)) {
                    (Ok(a), Ok(b)) => a.is_disjoint(b),
                    _ => false,
                }
            }
            Witness::Partition {
                which,
                faulty,
                left,
                center,
                right,
            } => {
                let parts = [faulty, left, center, right];
                let union = parts.iter().fold(NodeSet::EMPTY, |a, s| a.union(*s));
                let total: usize = parts.iter().map(|s| s.len()).sum();
                if union != g.nodes() || total != g.n() {
                    return false;
                }
                if left.is_empty() || right.is_empty() {
                    return false;
                }
                if faulty.len() > if which.has_fault_part() { f } else { 0 } {
                    return false;
                }
                let t = which.threshold(f);
                !point(g, left.union(center), right, t) && !point(g, right.union(center), left, t)
            }
        }
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Reach {
                k,
                shared,
                set_v,
                set_u,
                v,
                u,
            } => write!(
                f,
                "{k}-reach violated: F={shared} F_v={set_v} F_u={set_u} v={v} u={u} \
                 (reach_v(F∪F_v) ∩ reach_u(F∪F_u) = ∅)"
            ),
            Witness::Partition {
                which,
                faulty,
                left,
                center,
                right,
            } => write!(
                f,
                "{which:?} violated: F={faulty} L={left} C={center} R={right}"
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionVerdict {
    pub holds: bool,
    pub witness: Option<Witness>,
}

impl ConditionVerdict {
    fn from_witness(witness: Option<Witness>) -> Self {
        ConditionVerdict {
            holds: witness.is_none(),
            witness,
        }
    }
}

/// Bounds `(|shared|, |private|)` on the removed sets for k-reach.
///
/// Odd k: one shared set plus (k-1)/2 private sets per node. Even k: k/2
/// private sets per node. A union of m sets of size ≤ f is any set of size
/// ≤ m·f, so only the totals matter.
fn reach_shape(k: usize, f: usize) -> (usize, usize) {
    if k % 2 == 1 {
        (f, (k - 1) / 2 * f)
    } else {
        (0, k / 2 * f)
    }
}

/// `reach_v(R)` for every `v ∉ R`, memoized per removed set `R`.
struct ReachTable<'g> {
    g: &'g DiGraph,
    memo: HashMap<NodeSet, Vec<NodeSet>>,
}

impl<'g> ReachTable<'g> {
    fn new(g: &'g DiGraph) -> Self {
        ReachTable {
            g,
            memo: HashMap::new(),
        }
    }

    fn get(&mut self, removed: NodeSet) -> &[NodeSet] {
        let g = self.g;
        self.memo.entry(removed).or_insert_with(|| {
            (0..g.n())
                .map(|v| {
                    if removed.contains(v) {
                        NodeSet::EMPTY
                    } else {
                        reach_set(g, v, removed).expect("v is outside the removed set")
                    }
                })
                .collect()
        })
    }
}

/// Decides k-reach by enumerating every admissible combination of removed
/// sets and node pairs. Enumeration is lexicographic, so the witness is
/// deterministic.
pub fn check_k_reach(g: &DiGraph, f: usize, k: usize) -> Result<ConditionVerdict> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    let (shared_cap, private_cap) = reach_shape(k, f);
    let all = g.nodes();
    let shared_sets = subsets_up_to(all, shared_cap);
    let private_sets = subsets_up_to(all, private_cap);
    let mut table = ReachTable::new(g);

    for &shared in &shared_sets {
        // Distinct reach sets under this shared set, first occurrence kept.
        let mut seen: HashMap<NodeSet, usize> = HashMap::new();
        let mut entries: Vec<(NodeSet, NodeSet, NodeId)> = Vec::new();
        for &private in &private_sets {
            let removed = shared.union(private);
            let row = table.get(removed).to_vec();
            for v in all.minus(removed).iter() {
                let r = row[v];
                if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(r) {
                    e.insert(entries.len());
                    entries.push((r, private, v));
                }
            }
        }
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                if entries[i].0.is_disjoint(entries[j].0) {
                    let (_, set_v, v) = entries[i];
                    let (_, set_u, u) = entries[j];
                    return Ok(ConditionVerdict::from_witness(Some(Witness::Reach {
                        k,
                        shared,
                        set_v,
                        set_u,
                        v,
                        u,
                    })));
                }
            }
        }
    }
    Ok(ConditionVerdict::from_witness(None))
}

/// At least `x` nodes of `a` have an edge into `b`.
pub fn check_point(g: &DiGraph, a: NodeSet, b: NodeSet, x: usize) -> Result<bool> {
    if b.is_empty() {
        return invalid("B must be nonempty");
    }
    if !a.is_disjoint(b) {
        return invalid(format!("A={a} and B={b} overlap"));
    }
    Ok(point(g, a, b, x))
}

fn point(g: &DiGraph, a: NodeSet, b: NodeSet, x: usize) -> bool {
    if x == 0 {
        return true;
    }
    let mut count = 0;
    for v in a.iter() {
        if !g.out_neighbors(v).is_disjoint(b) {
            count += 1;
            if count >= x {
                return true;
            }
        }
    }
    false
}

/// Partition enumeration refuses larger graphs (4^n assignments).
pub const MAX_PARTITION_NODES: usize = 12;

/// Enumerates partitions (F, L, C, R), or (L, C, R) for CCA, with
/// `|F| ≤ f` and L, R nonempty, and tests
/// `point(L∪C → R, t) ∨ point(R∪C → L, t)`.
pub fn check_partition_condition(
    g: &DiGraph,
    f: usize,
    which: PartitionCondition,
) -> Result<ConditionVerdict> {
    let n = g.n();
    if n > MAX_PARTITION_NODES {
        return Err(Error::Budget(format!(
            "partition enumeration capped at n <= {MAX_PARTITION_NODES}, graph has {n}"
        )));
    }
    let t = which.threshold(f);
    // Labels: 0=F, 1=L, 2=C, 3=R. CCA skips F.
    let base: u8 = if which.has_fault_part() { 4 } else { 3 };
    let offset: u8 = 4 - base;
    let mut labels = vec![0u8; n];
    loop {
        let mut parts = [NodeSet::EMPTY; 4];
        for (v, &l) in labels.iter().enumerate() {
            parts[(l + offset) as usize].insert(v);
        }
        let [faulty, left, center, right] = parts;
        if faulty.len() <= f
            && !left.is_empty()
            && !right.is_empty()
            && !point(g, left.union(center), right, t)
            && !point(g, right.union(center), left, t)
        {
            return Ok(ConditionVerdict::from_witness(Some(Witness::Partition {
                which,
                faulty,
                left,
                center,
                right,
            })));
        }
        // Next assignment; node 0 is the most significant digit.
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(ConditionVerdict::from_witness(None));
            }
            i -= 1;
            labels[i] += 1;
            if labels[i] < base {
                break;
            }
            labels[i] = 0;
        }
    }
}

#[derive(Clone, Debug)]
pub struct AuditOptions {
    /// Graphs per node count once exhaustive enumeration is over budget.
    pub samples: usize,
    pub seed: u64,
    /// Largest labeled-graph count enumerated exhaustively for one n.
    pub exhaustive_limit: u64,
    /// Self-test: answer 3-reach with the 2-reach checker.
    pub inject_bug: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            samples: 1000,
            seed: 1,
            exhaustive_limit: 1 << 12,
            inject_bug: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AuditMode {
    Exhaustive,
    Sampled,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditSlice {
    pub n: usize,
    pub mode: AuditMode,
    pub graphs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditMismatch {
    pub n: usize,
    pub edges: Vec<(NodeId, NodeId)>,
    pub k: usize,
    pub reach_holds: bool,
    pub partition_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub f: usize,
    pub seed: u64,
    pub sampled: bool,
    pub slices: Vec<AuditSlice>,
    pub mismatches: Vec<AuditMismatch>,
}

impl AuditReport {
    pub fn graphs_checked(&self) -> usize {
        self.slices.iter().map(|s| s.graphs).sum()
    }
}

/// Compares k-reach against the matching partition condition for k = 1, 2, 3
/// on every labeled digraph with up to `n_max` nodes, or on a seeded sample
/// where exhaustive enumeration exceeds `opts.exhaustive_limit`.
pub fn equivalence_audit(f: usize, n_max: usize, opts: &AuditOptions) -> Result<AuditReport> {
    if n_max > 6 {
        return Err(Error::Budget(format!(
            "audit supports n_max <= 6, got {n_max}"
        )));
    }
    let mut report = AuditReport {
        f,
        seed: opts.seed,
        sampled: false,
        slices: Vec::new(),
        mismatches: Vec::new(),
    };
    for n in 1..=n_max {
        let pairs: Vec<(NodeId, NodeId)> = (0..n)
            .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
            .collect();
        let space = 1u64.checked_shl(pairs.len() as u32).unwrap_or(u64::MAX);
        let mut graphs = 0usize;
        let mode = if space <= opts.exhaustive_limit {
            for bits in 0..space {
                let g = DiGraph::from_edges(
                    n,
                    pairs
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| bits >> i & 1 == 1)
                        .map(|(_, &e)| e),
                )?;
                audit_one(&g, f, opts.inject_bug, &mut report.mismatches)?;
                graphs += 1;
            }
            AuditMode::Exhaustive
        } else {
            report.sampled = true;
            let mut rng = ChaCha8Rng::seed_from_u64(
                opts.seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            for _ in 0..opts.samples {
                let p: f64 = rng.gen_range(0.15..=1.0);
                let edges: Vec<_> = pairs.iter().copied().filter(|_| rng.gen_bool(p)).collect();
                let g = DiGraph::from_edges(n, edges)?;
                audit_one(&g, f, opts.inject_bug, &mut report.mismatches)?;
                graphs += 1;
            }
            AuditMode::Sampled
        };
        report.slices.push(AuditSlice { n, mode, graphs });
    }
    Ok(report)
}

fn audit_one(g: &DiGraph, f: usize, inject_bug: bool, out: &mut Vec<AuditMismatch>) -> Result<()> {
    for k in 1..=3 {
        let asked = if inject_bug && k == 3 { 2 } else { k };
        let reach = check_k_reach(g, f, asked)?.holds;
        let which = PartitionCondition::for_reach_k(k).expect("k in 1..=3");
        let part = check_partition_condition(g, f, which)?.holds;
        if reach != part {
            out.push(AuditMismatch {
                n: g.n(),
                edges: g.edges().collect(),
                k,
                reach_holds: reach,
                partition_holds: part,
            });
        }
    }
    Ok(())
}
