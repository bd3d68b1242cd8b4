//! Deterministic discrete-event network: reliable links, random finite
//! delays, total order on `(deliver_at, seq)`.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::FaultPlan;
use crate::conditions::check_k_reach;
use crate::error::{invalid, Result};
use crate::graph::{NodeId, NodeSet};
use crate::messaging::{Digest, Message, MessageRecord};
use crate::protocol::{rounds_for, FaRecord, McLatch, NodeRuntime, Topology};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelayPolicy {
    /// Every delay uniform in `[lo, hi]`.
    Uniform { seed: u64, lo: u64, hi: u64 },
    /// Uniform in `[1, 10]`, multiplied by `factor` on the listed edges.
    TargetedSlow {
        seed: u64,
        victims: Vec<(NodeId, NodeId)>,
        factor: u64,
    },
    /// Uniform in `[1, 10]` plus `offsets[sender] * (round + 1)`.
    RoundSkew { seed: u64, offsets: Vec<u64> },
}

impl DelayPolicy {
    pub fn seed(&self) -> u64 {
        match self {
            DelayPolicy::Uniform { seed, .. }
            | DelayPolicy::TargetedSlow { seed, .. }
            | DelayPolicy::RoundSkew { seed, .. } => *seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut p = self.clone();
        match &mut p {
            DelayPolicy::Uniform { seed: s, .. }
            | DelayPolicy::TargetedSlow { seed: s, .. }
            | DelayPolicy::RoundSkew { seed: s, .. } => *s = seed,
        }
        p
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            DelayPolicy::Uniform { lo, hi, .. } if *lo == 0 || lo > hi => invalid(format!(
                "uniform delays need 1 <= lo <= hi, got [{lo}, {hi}]"
            )),
            DelayPolicy::TargetedSlow { factor: 0, .. } => {
                invalid("slowdown factor must be positive")
            }
            DelayPolicy::TargetedSlow { victims, .. }
                if victims.iter().any(|&(u, v)| u >= n || v >= n) =>
            {
                invalid("slowed edge outside the graph")
            }
            DelayPolicy::RoundSkew { offsets, .. } if offsets.len() != n => invalid(format!(
                "round skew needs {n} offsets, got {}",
                offsets.len()
            )),
            _ => Ok(()),
        }
    }

    fn delay(&self, rng: &mut ChaCha8Rng, from: NodeId, to: NodeId, round: u32) -> u64 {
        match self {
            DelayPolicy::Uniform { lo, hi, .. } => rng.gen_range(*lo..=*hi),
            DelayPolicy::TargetedSlow {
                victims, factor, ..
            } => {
                let d = rng.gen_range(1..=10);
                if victims.contains(&(from, to)) {
                    d * factor
                } else {
                    d
                }
            }
            DelayPolicy::RoundSkew { offsets, .. } => {
                rng.gen_range(1..=10) + offsets[from] * (round as u64 + 1)
            }
        }
    }
}

/// Five policies of different shapes derived from one seed.
pub fn standard_policies(n: usize, seed: u64) -> Vec<DelayPolicy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let victims: Vec<(NodeId, NodeId)> = (0..n)
        .map(|u| (u, (u + 1) % n))
        .filter(|(u, v)| u != v)
        .collect();
    vec![
        DelayPolicy::Uniform {
            seed: rng.gen(),
            lo: 1,
            hi: 1,
        },
        DelayPolicy::Uniform {
            seed: rng.gen(),
            lo: 1,
            hi: 10,
        },
        DelayPolicy::Uniform {
            seed: rng.gen(),
            lo: 1,
            hi: 100,
        },
        DelayPolicy::TargetedSlow {
            seed: rng.gen(),
            victims,
            factor: 25,
        },
        DelayPolicy::RoundSkew {
            seed: rng.gen(),
            offsets: (0..n).map(|v| (v as u64 * 7) % 13).collect(),
        },
    ]
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub inputs: Vec<f64>,
    pub k: f64,
    pub eps: f64,
    pub plan: FaultPlan,
    pub delay: DelayPolicy,
    /// Keep a record of every delivery.
    pub trace: bool,
    /// Keep delivering after every nonfaulty node has output.
    pub drain: bool,
    /// Safety valve on deliveries; hitting it counts as a stall.
    pub max_deliveries: u64,
}

impl SimConfig {
    pub fn new(inputs: Vec<f64>, k: f64, eps: f64, plan: FaultPlan, delay: DelayPolicy) -> Self {
        SimConfig {
            inputs,
            k,
            eps,
            plan,
            delay,
            trace: false,
            drain: false,
            max_deliveries: 500_000_000,
        }
    }
}

/// Everything observed in one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunMetrics {
    pub n: usize,
    pub f: usize,
    pub rounds: u32,
    pub faulty: NodeSet,
    /// The graph fails 3-reach or the plan exceeds `f`.
    pub guarantees_void: bool,
    /// `U[r]` and `mu[r]` for `r = 0..=rounds`, over nonfaulty nodes that
    /// reached round `r`. `None` if none did.
    pub upper: Vec<Option<f64>>,
    pub lower: Vec<Option<f64>>,
    /// `x_v[0..]` per node as far as it got.
    pub values: Vec<Vec<f64>>,
    pub outputs: Vec<Option<f64>>,
    pub fa: Vec<FaRecord>,
    pub latches: Vec<McLatch>,
    /// Nonfaulty nodes whose Filter-and-Average failed.
    pub failures: Vec<(NodeId, String)>,
    pub deliveries: u64,
    pub end_time: u64,
    pub rejected: u64,
    /// Intercepted sends whose path did not end at the sender.
    pub last_hop_violations: u64,
    pub hit_delivery_cap: bool,
    #[serde(skip)]
    pub trace: Option<Vec<MessageRecord>>,
}

impl RunMetrics {
    pub fn is_nonfaulty(&self, v: NodeId) -> bool {
        !self.faulty.contains(v)
    }

    pub fn nonfaulty(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n).filter(|&v| self.is_nonfaulty(v))
    }

    /// Header `round,U,mu,spread`, one row per round with a value.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("round,U,mu,spread\n");
        for r in 0..self.upper.len() {
            if let (Some(u), Some(m)) = (self.upper[r], self.lower[r]) {
                let _ = writeln!(s, "{r},{u},{m},{}", u - m);
            }
        }
        s
    }
}

struct Event {
    from: NodeId,
    to: NodeId,
    sent_at: u64,
    msg: Message,
}

/// Events bucketed by delivery time. Delays are at least 1, so a bucket is
/// complete once time reaches it, and pushes arrive in sequence order: the
/// pop order is exactly `(deliver_at, seq)`.
struct TimeWheel {
    base: u64,
    buckets: VecDeque<VecDeque<Event>>,
    /// Bucket for time `base - 1`.
    current: VecDeque<Event>,
    spare: Vec<VecDeque<Event>>,
}

impl TimeWheel {
    fn new() -> Self {
        TimeWheel {
            base: 0,
            buckets: VecDeque::new(),
            current: VecDeque::new(),
            spare: Vec::new(),
        }
    }

    fn push(&mut self, at: u64, ev: Event) {
        debug_assert!(at >= self.base);
        let i = (at - self.base) as usize;
        while i >= self.buckets.len() {
            let b = self.spare.pop().unwrap_or_default();
            self.buckets.push_back(b);
        }
        self.buckets[i].push_back(ev);
    }

    /// The `i`-th next event of the current time step.
    fn peek(&self, i: usize) -> Option<&Event> {
        self.current.get(i)
    }

    /// Next event and its delivery time.
    fn pop(&mut self) -> Option<(u64, Event)> {
        loop {
            if let Some(ev) = self.current.pop_front() {
                return Some((self.base - 1, ev));
            }
            let bucket = self.buckets.pop_front()?;
            self.base += 1;
            let used = std::mem::replace(&mut self.current, bucket);
            self.spare.push(used);
        }
    }
}

struct Net<'a> {
    topo: &'a Topology,
    plan: &'a FaultPlan,
    policy: &'a DelayPolicy,
    rng: ChaCha8Rng,
    queue: TimeWheel,
    now: u64,
    last_hop_violations: u64,
}

impl Net<'_> {
    fn send_all(&mut self, from: NodeId, event: u64, out: &mut Vec<(NodeId, Message)>) {
        for (to, msg) in out.drain(..) {
            let sent = if self.plan.behavior(from).is_some() {
                self.plan.intercept_send(self.topo, from, to, event, msg)
            } else {
                Some(msg)
            };
            if let Some(msg) = sent {
                if msg.path().is_empty()
                    || msg.path().ter() != from
                    || !self.topo.graph.has_edge(from, to)
                {
                    self.last_hop_violations += 1;
                    continue;
                }
                let d = self.policy.delay(&mut self.rng, from, to, msg.round());
                self.queue.push(
                    self.now + d,
                    Event {
                        from,
                        to,
                        sent_at: self.now,
                        msg,
                    },
                );
            }
        }
    }
}

/// Drives every node through `R = floor(log2(K/eps)) + 1` rounds.
pub fn run(topo: Arc<Topology>, cfg: &SimConfig) -> Result<RunMetrics> {
    let n = topo.n();
    if cfg.inputs.len() != n {
        return invalid(format!("{} inputs for {n} nodes", cfg.inputs.len()));
    }
    if !(cfg.eps > 0.0 && cfg.k.is_finite() && cfg.k >= cfg.eps) {
        return invalid(format!(
            "need 0 < eps <= K, got K={} eps={}",
            cfg.k, cfg.eps
        ));
    }
    if let Some(x) = cfg.inputs.iter().find(|x| !(0.0..=cfg.k).contains(*x)) {
        return invalid(format!("input {x} outside [0, {}]", cfg.k));
    }
    cfg.plan.validate(n)?;
    cfg.delay.validate(n)?;
    let rounds = rounds_for(cfg.k, cfg.eps);
    let faulty = cfg.plan.faulty_set();
    let three_reach = check_k_reach(&topo.graph, topo.f, 3)?.holds;
    let guarantees_void = !three_reach || faulty.len() > topo.f;
    if guarantees_void {
        warn!(
            "run outside the fault model: 3-reach={three_reach}, |faulty|={}",
            faulty.len()
        );
    }

    let mut nodes = Vec::with_capacity(n);
    for v in 0..n {
        nodes.push(NodeRuntime::new(v, topo.clone(), cfg.inputs[v], rounds)?);
    }
    let mut events = vec![0u64; n];
    let mut net = Net {
        topo: &topo,
        plan: &cfg.plan,
        policy: &cfg.delay,
        rng: ChaCha8Rng::seed_from_u64(cfg.delay.seed()),
        queue: TimeWheel::new(),
        now: 0,
        last_hop_violations: 0,
    };
    let mut trace = cfg.trace.then(Vec::new);
    let mut out = Vec::new();
    for v in 0..n {
        if cfg.plan.is_active(v, 0) {
            nodes[v].start(&mut out);
            net.send_all(v, 0, &mut out);
        }
        events[v] = 1;
    }

    let done = |nodes: &[NodeRuntime]| {
        nodes
            .iter()
            .filter(|r| !faulty.contains(r.me()))
            .all(|r| r.output().is_some() || r.failure().is_some())
    };
    let mut deliveries = 0u64;
    let mut hit_cap = false;
    while let Some((at, ev)) = net.queue.pop() {
        if !cfg.drain && done(&nodes) {
            break;
        }
        if deliveries >= cfg.max_deliveries {
            hit_cap = true;
            break;
        }
        deliveries += 1;
        net.now = at;
        if let Some(t) = trace.as_mut() {
            t.push(MessageRecord::new(&ev.msg, ev.from, ev.to, ev.sent_at, at));
        }
        let v = ev.to;
        let idx = events[v];
        events[v] += 1;
        if !cfg.plan.is_active(v, idx) {
            continue;
        }
        // Deliveries hit large tables at random; load them a few events early.
        for (i, resolve) in [(1, true), (3, false)] {
            if let Some(next) = net.queue.peek(i) {
                nodes[next.to].prefetch(&next.msg, resolve);
            }
        }
        nodes[v].handle(ev.from, ev.msg, &mut out);
        net.send_all(v, idx, &mut out);
    }

    let values: Vec<Vec<f64>> = nodes.iter().map(|r| r.values().to_vec()).collect();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for r in 0..=rounds as usize {
        let xs: Vec<f64> = (0..n)
            .filter(|&v| !faulty.contains(v))
            .filter_map(|v| values[v].get(r).copied())
            .collect();
        upper.push(xs.iter().copied().reduce(f64::max));
        lower.push(xs.iter().copied().reduce(f64::min));
    }
    let metrics = RunMetrics {
        n,
        f: topo.f,
        rounds,
        faulty,
        guarantees_void,
        upper,
        lower,
        outputs: nodes.iter().map(|r| r.output()).collect(),
        values,
        fa: nodes
            .iter()
            .flat_map(|r| r.fa_records().iter().cloned())
            .collect(),
        latches: nodes
            .iter()
            .flat_map(|r| r.mc_latches().iter().cloned())
            .collect(),
        failures: nodes
            .iter()
            .filter(|r| !faulty.contains(r.me()))
            .filter_map(|r| r.failure().map(|e| (r.me(), e.to_string())))
            .collect(),
        deliveries,
        end_time: net.now,
        rejected: nodes.iter().map(|r| r.rejected()).sum(),
        last_hop_violations: net.last_hop_violations,
        hit_delivery_cap: hit_cap,
        trace,
    };
    info!(
        "run finished: {deliveries} deliveries, t={}, plan {}, outputs {:?}",
        metrics.end_time, cfg.plan.name, metrics.outputs
    );
    Ok(metrics)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Halving,
    Validity,
    Liveness,
    Overlap,
    CommonValues,
    Termination,
    Integrity,
    LastHop,
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub round: Option<u32>,
    pub nodes: Vec<NodeId>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct InvariantReport {
    pub violations: Vec<Violation>,
}

impl InvariantReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(
        &mut self,
        kind: ViolationKind,
        round: Option<u32>,
        nodes: Vec<NodeId>,
        detail: String,
    ) {
        self.violations.push(Violation {
            kind,
            round,
            nodes,
            detail,
        });
    }
}

pub const HALVING_TOL: f64 = 1e-12;
pub const VALIDITY_TOL: f64 = 1e-12;

/// Checks halving, validity, one Filter-and-Average per round per nonfaulty
/// node, pairwise overlap of trimmed vectors, common values of matching
/// Maximal-Consistency latches, and the output round and spread.
pub fn assert_round_invariants(m: &RunMetrics, topo: &Topology, eps: f64) -> InvariantReport {
    let mut rep = InvariantReport::default();
    let honest: Vec<NodeId> = m.nonfaulty().collect();

    for (v, e) in &m.failures {
        rep.push(ViolationKind::Integrity, None, vec![*v], e.clone());
    }
    if m.last_hop_violations > 0 {
        rep.push(
            ViolationKind::LastHop,
            None,
            vec![],
            format!("{} sends misattributed their sender", m.last_hop_violations),
        );
    }

    // Liveness: exactly one FA per round per nonfaulty node.
    for &v in &honest {
        for r in 0..m.rounds {
            let c = m.fa.iter().filter(|a| a.node == v && a.round == r).count();
            if c != 1 {
                rep.push(
                    ViolationKind::Liveness,
                    Some(r),
                    vec![v],
                    format!("{c} Filter-and-Average executions"),
                );
            }
        }
    }

    // Halving and validity over rounds every nonfaulty node reached.
    let full = |r: usize| honest.iter().all(|&v| m.values[v].len() > r);
    let spread = |r: usize| m.upper[r].zip(m.lower[r]).map(|(u, l)| u - l);
    for r in 0..m.rounds as usize {
        if !(full(r) && full(r + 1)) {
            break;
        }
        let (Some(a), Some(b)) = (spread(r), spread(r + 1)) else {
            break;
        };
        if b > a / 2.0 + HALVING_TOL {
            rep.push(
                ViolationKind::Halving,
                Some(r as u32 + 1),
                vec![],
                format!("spread {b} exceeds half of {a}"),
            );
        }
    }
    if let (Some(u0), Some(l0)) = (m.upper[0], m.lower[0]) {
        for r in 1..=m.rounds as usize {
            if let (Some(u), Some(l)) = (m.upper[r], m.lower[r]) {
                if u > u0 + VALIDITY_TOL || l < l0 - VALIDITY_TOL {
                    rep.push(
                        ViolationKind::Validity,
                        Some(r as u32),
                        vec![],
                        format!("[{l}, {u}] leaves [{l0}, {u0}]"),
                    );
                }
            }
        }
    }

    // Overlap of trimmed vectors by (initiator, value).
    for r in 0..m.rounds {
        let kept: Vec<&FaRecord> =
            m.fa.iter()
                .filter(|a| a.round == r && m.is_nonfaulty(a.node))
                .collect();
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                let meet = a.outcome.kept.iter().any(|x| {
                    b.outcome
                        .kept
                        .iter()
                        .any(|y| x.0 == y.0 && x.1.to_bits() == y.1.to_bits())
                });
                if !meet {
                    rep.push(
                        ViolationKind::Overlap,
                        Some(r),
                        vec![a.node, b.node],
                        "trimmed vectors share no message".into(),
                    );
                }
            }
        }
    }

    // Latches on the same candidate agree on every source component.
    for r in 0..m.rounds {
        let ls: Vec<&McLatch> = m
            .latches
            .iter()
            .filter(|l| l.round == r && m.is_nonfaulty(l.node))
            .collect();
        for (i, a) in ls.iter().enumerate() {
            for b in &ls[i + 1..] {
                if a.candidate != b.candidate {
                    continue;
                }
                if let Some(w) = disagreement(topo, a.candidate, &a.digest, &b.digest) {
                    rep.push(
                        ViolationKind::CommonValues,
                        Some(r),
                        vec![a.node, b.node],
                        format!("latches on {} differ at node {w}", a.candidate),
                    );
                }
            }
        }
    }

    // Termination: output after exactly R rounds, spread below eps.
    for &v in &honest {
        if m.outputs[v].is_none() {
            rep.push(
                ViolationKind::Termination,
                Some(m.rounds),
                vec![v],
                format!("no output after {} rounds", m.rounds),
            );
        }
    }
    if let Some(s) = spread(m.rounds as usize) {
        if full(m.rounds as usize) && s >= eps {
            rep.push(
                ViolationKind::Termination,
                Some(m.rounds),
                vec![],
                format!("final spread {s} not below {eps}"),
            );
        }
    }
    rep
}

fn disagreement(topo: &Topology, fp: NodeSet, a: &Digest, b: &Digest) -> Option<NodeId> {
    for &s in topo.clauses(fp)? {
        for w in s.iter() {
            match (a.value_of(w), b.value_of(w)) {
                (Some(x), Some(y)) if x.to_bits() == y.to_bits() => {}
                _ => return Some(w),
            }
        }
    }
    None
}
