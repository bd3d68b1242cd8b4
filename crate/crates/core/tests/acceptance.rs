//! Acceptance criteria 1–10. Each test prints one `criterion N: PASS|FAIL`
//! line and fails if the criterion does.
//!
//! Tests take a global lock so that wall-clock limits measure one criterion
//! at a time and the large simulations never overlap in memory.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use common::{all_graphs, ordered_pairs, small_sets};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reachcons::adversary::{builtin_plan, Behavior, FaultPlan};
use reachcons::conditions::{check_k_reach, equivalence_audit, AuditOptions};
use reachcons::graph::{propagates, source_component, DiGraph, NodeSet};
use reachcons::harness::two_cliques;
use reachcons::protocol::{Topology, TopologyLimits};
use reachcons::simnet::{
    assert_round_invariants, run, standard_policies, InvariantReport, RunMetrics, SimConfig,
    ViolationKind,
};

const K: f64 = 1.0;
const EPS: f64 = 0.25;
const SUITE_SEED: u64 = 0x5EED_2024;
/// The built-in plans, each with at most f faulty nodes.
const PLANS: [&str; 5] = [
    "crash-min",
    "crash-max",
    "equivocator",
    "forger",
    "split-brain",
];
const POLICIES: usize = 5;
const SUITE_LIMIT: Duration = Duration::from_secs(600);

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Writes to the process stdout directly so the line shows up even when the
/// test harness captures output.
fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {n} failed: {detail}");
}

fn spread_inputs(n: usize) -> Vec<f64> {
    (0..n).map(|v| v as f64 * K / (n - 1) as f64).collect()
}

struct RunResult {
    plan: &'static str,
    policy: usize,
    csv: String,
    rounds: u32,
    outputs: Vec<Option<f64>>,
    values: Vec<Vec<f64>>,
    nonfaulty: Vec<usize>,
    fa_per_node: BTreeMap<usize, usize>,
    hit_cap: bool,
    report: InvariantReport,
}

struct Suite {
    label: &'static str,
    graph: DiGraph,
    f: usize,
    /// Why the graph could not be run at all.
    unrunnable: Option<String>,
    runs: Vec<RunResult>,
    elapsed: Duration,
}

impl Suite {
    fn count(&self, kind: ViolationKind) -> usize {
        self.runs.iter().map(|r| r.report.count(kind)).sum()
    }

    fn summary(&self, kind: ViolationKind) -> String {
        match &self.unrunnable {
            Some(why) => format!("{}: not runnable: {why}", self.label),
            None => format!(
                "{}: {} runs, {} {kind:?} violations, {:.0?}",
                self.label,
                self.runs.len(),
                self.count(kind),
                self.elapsed
            ),
        }
    }
}

fn simulate(
    topo: &Arc<Topology>,
    plan: &'static str,
    policy: usize,
) -> (RunMetrics, InvariantReport) {
    let n = topo.n();
    let plan_v = builtin_plan(plan, topo, K).unwrap();
    assert!(plan_v.faulty.len() <= topo.f);
    let delay = standard_policies(n, SUITE_SEED)[policy].clone();
    let cfg = SimConfig::new(spread_inputs(n), K, EPS, plan_v, delay);
    let m = run(topo.clone(), &cfg).unwrap();
    let rep = assert_round_invariants(&m, topo, EPS);
    (m, rep)
}

fn run_suite(label: &'static str, graph: DiGraph, f: usize) -> Suite {
    let start = Instant::now();
    let holds = check_k_reach(&graph, f, 3).unwrap().holds;
    assert!(holds, "{label} must satisfy 3-reach");
    let topo = match Topology::new(graph.clone(), f, &TopologyLimits::default()) {
        Ok(t) => Arc::new(t),
        Err(e) => {
            return Suite {
                label,
                graph,
                f,
                unrunnable: Some(e.to_string()),
                runs: Vec::new(),
                elapsed: start.elapsed(),
            }
        }
    };
    let mut runs = Vec::new();
    for plan in PLANS {
        for policy in 0..POLICIES {
            let (m, report) = simulate(&topo, plan, policy);
            let mut fa_per_node = BTreeMap::new();
            for a in &m.fa {
                *fa_per_node.entry(a.node).or_insert(0) += 1;
            }
            runs.push(RunResult {
                plan,
                policy,
                csv: m.to_csv(),
                rounds: m.rounds,
                outputs: m.outputs.clone(),
                values: m.values.clone(),
                nonfaulty: m.nonfaulty().collect(),
                fa_per_node,
                hit_cap: m.hit_delivery_cap,
                report,
            });
        }
    }
    Suite {
        label,
        graph,
        f,
        unrunnable: None,
        runs,
        elapsed: start.elapsed(),
    }
}

fn suites() -> [&'static Suite; 3] {
    static K4: OnceLock<Suite> = OnceLock::new();
    static K7: OnceLock<Suite> = OnceLock::new();
    static TWO: OnceLock<Suite> = OnceLock::new();
    [
        K4.get_or_init(|| run_suite("K4/f=1", DiGraph::clique(4).unwrap(), 1)),
        K7.get_or_init(|| run_suite("K7/f=2", DiGraph::clique(7).unwrap(), 2)),
        TWO.get_or_init(|| {
            run_suite(
                "two-cliques(7,8)/f=2",
                two_cliques(7, 8, SUITE_SEED).unwrap(),
                2,
            )
        }),
    ]
}

/// Criteria 4, 5, 7 and 8 share the suite and differ in the violation kind
/// they look at.
fn suite_criterion(n: u32, kinds: &[ViolationKind], extra: impl Fn(&RunResult) -> bool) {
    let _g = serial();
    let mut pass = true;
    let mut parts = Vec::new();
    for s in suites() {
        let bad: usize = kinds.iter().map(|&k| s.count(k)).sum::<usize>()
            + s.runs.iter().filter(|r| !extra(r)).count();
        pass &= s.unrunnable.is_none() && bad == 0 && s.elapsed <= SUITE_LIMIT;
        parts.push(s.summary(kinds[0]));
        for r in s
            .runs
            .iter()
            .filter(|r| kinds.iter().any(|&k| r.report.count(k) > 0))
            .take(2)
        {
            let v = r
                .report
                .violations
                .iter()
                .find(|v| kinds.contains(&v.kind))
                .unwrap();
            parts.push(format!(
                "  {} plan={} policy={}: {}",
                s.label, r.plan, r.policy, v.detail
            ));
        }
    }
    report(n, pass, &parts.join("; "));
}

#[test]
fn criterion_01_clique_characterization() {
    let _g = serial();
    let start = Instant::now();
    let mut wrong = Vec::new();
    let mut cases = 0;
    for n in 2..=8 {
        let g = DiGraph::clique(n).unwrap();
        for f in 0..=2 {
            for k in 1..=3 {
                cases += 1;
                if check_k_reach(&g, f, k).unwrap().holds != (n > k * f) {
                    wrong.push((n, f, k));
                }
            }
        }
    }
    let t = start.elapsed();
    report(
        1,
        wrong.is_empty() && t < Duration::from_secs(60),
        &format!("{cases} cases, mismatches {wrong:?}, {t:.1?}"),
    );
}

#[test]
fn criterion_02_equivalence_audit() {
    let _g = serial();
    let start = Instant::now();
    let mut exhaustive = 0;
    let mut sampled = 0;
    let mut mismatches = 0;
    for f in 1..=2 {
        let opts = AuditOptions {
            samples: 1000,
            seed: SUITE_SEED + f as u64,
            ..AuditOptions::default()
        };
        let rep = equivalence_audit(f, 6, &opts).unwrap();
        for s in &rep.slices {
            match s.n {
                1..=4 => assert_eq!(s.mode, reachcons::conditions::AuditMode::Exhaustive),
                _ => assert!(s.graphs >= 1000),
            }
            if s.n <= 4 && f == 1 {
                exhaustive += s.graphs;
            }
            if s.n >= 5 {
                sampled += s.graphs;
            }
        }
        mismatches += rep.mismatches.len();
    }
    let t = start.elapsed();
    report(
        2,
        mismatches == 0 && exhaustive > 0 && t < Duration::from_secs(600),
        &format!("{exhaustive} exhaustive (n<=4, f=1) + {sampled} sampled (n=5,6, f=1,2) graphs, {mismatches} mismatches, {t:.1?}"),
    );
}

/// With f = 1, 3-reach forces in-degree at least 3 at every node once
/// n ≥ 4: otherwise F and F_v can cover the in-neighbours of v while
/// F_u = {v} hides v from some other u.
fn indegree_prefilter(g: &DiGraph, f: usize) -> bool {
    (0..g.n()).all(|v| g.in_neighbors(v).len() > 2 * f)
}

/// Propagation and overlap checks on one 3-reach graph; returns violation count.
fn structural_violations(g: &DiGraph, f: usize) -> usize {
    let sets = small_sets(g.n(), f);
    let all = g.nodes();
    let mut bad = 0;
    let mut sc = BTreeMap::new();
    for &a in &sets {
        for &b in &sets {
            sc.insert((a, b), source_component(g, a, b, f).unwrap());
        }
    }
    for &f1 in &sets {
        for &f2 in &sets {
            let s = sc[&(f1, f2)];
            for fx in [f1, f2] {
                let c = all.minus(fx);
                let ok = s.is_subset(c) && propagates(g, s, c.minus(s), c, f).unwrap_or(false);
                bad += usize::from(!ok);
            }
        }
    }
    for &fv in &sets {
        for &fu in &sets {
            for &fw in &sets {
                bad += usize::from(sc[&(fv, fu)].is_disjoint(sc[&(fv, fw)]));
            }
        }
    }
    bad
}

#[test]
fn criterion_03_structural_theorems() {
    let _g = serial();
    let start = Instant::now();
    let f = 1;
    // The prefilter only discards graphs that fail 3-reach.
    for n in 3..=4 {
        for g in all_graphs(n) {
            if !indegree_prefilter(&g, f) {
                assert!(!check_k_reach(&g, f, 3).unwrap().holds, "{g:?}");
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    for _ in 0..2000 {
        let g = DiGraph::from_edges(
            5,
            ordered_pairs(5).into_iter().filter(|_| rng.gen_bool(0.7)),
        )
        .unwrap();
        if !indegree_prefilter(&g, f) {
            assert!(!check_k_reach(&g, f, 3).unwrap().holds, "{g:?}");
        }
    }
    let mut graphs = 0;
    let mut violations = 0;
    // Both statements are about executions with a nonfaulty node, so n > f.
    for n in f + 1..=4 {
        for g in all_graphs(n) {
            if check_k_reach(&g, f, 3).unwrap().holds {
                graphs += 1;
                violations += structural_violations(&g, f);
            }
        }
    }
    // n = 5: every graph with in-degree ≥ 3 everywhere, choosing each
    // node's in-neighbourhood independently.
    let n = 5;
    let choices: Vec<Vec<NodeSet>> = (0..n)
        .map(|v| {
            let others = NodeSet::full(n).without(v);
            (0..1u64 << n)
                .map(NodeSet)
                .filter(|s| s.is_subset(others) && s.len() >= 3)
                .collect()
        })
        .collect();
    let mut idx = vec![0usize; n];
    loop {
        let mut g = DiGraph::new(n).unwrap();
        for v in 0..n {
            for u in choices[v][idx[v]].iter() {
                g.add_edge(u, v).unwrap();
            }
        }
        if check_k_reach(&g, f, 3).unwrap().holds {
            graphs += 1;
            violations += structural_violations(&g, f);
        }
        let mut i = 0;
        while i < n {
            idx[i] += 1;
            if idx[i] < choices[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
    }
    // n = 6: seeded sample of dense graphs.
    let pairs = ordered_pairs(6);
    let mut sampled = 0;
    while sampled < 300 {
        let p = rng.gen_range(0.6..=1.0);
        let g = DiGraph::from_edges(6, pairs.iter().copied().filter(|_| rng.gen_bool(p))).unwrap();
        if indegree_prefilter(&g, f) && check_k_reach(&g, f, 3).unwrap().holds {
            sampled += 1;
            violations += structural_violations(&g, f);
        }
    }
    report(
        3,
        violations == 0,
        &format!(
            "{graphs} exhaustive 3-reach graphs (n<=5) + {sampled} sampled (n=6), {violations} violations, {:.1?}",
            start.elapsed()
        ),
    );
}

#[test]
fn criterion_04_halving() {
    suite_criterion(4, &[ViolationKind::Halving], |_| true);
}

#[test]
fn criterion_05_validity() {
    suite_criterion(5, &[ViolationKind::Validity], |_| true);
}

#[test]
fn criterion_06_termination() {
    let _g = serial();
    let rounds = reachcons::protocol::rounds_for(K, EPS);
    let mut pass = rounds == 3;
    let mut parts = vec![format!("R={rounds}")];
    for s in suites() {
        if let Some(why) = &s.unrunnable {
            pass = false;
            parts.push(format!("{}: not runnable: {why}", s.label));
            continue;
        }
        let mut bad = 0;
        for r in &s.runs {
            let outs: Vec<f64> = r.nonfaulty.iter().filter_map(|&v| r.outputs[v]).collect();
            let exact = r.rounds == 3
                && outs.len() == r.nonfaulty.len()
                && r.nonfaulty
                    .iter()
                    .all(|&v| r.values[v].len() == 4 && r.outputs[v] == Some(r.values[v][3]));
            let spread = outs.iter().copied().fold(f64::MIN, f64::max)
                - outs.iter().copied().fold(f64::MAX, f64::min);
            if !exact || spread >= EPS || r.report.count(ViolationKind::Termination) > 0 {
                bad += 1;
            }
        }
        pass &= bad == 0;
        parts.push(format!("{}: {} runs, {bad} bad", s.label, s.runs.len()));
    }
    report(6, pass, &parts.join("; "));
}

#[test]
fn criterion_07_liveness() {
    suite_criterion(
        7,
        &[ViolationKind::Liveness, ViolationKind::Integrity],
        |r| {
            !r.hit_cap
                && r.nonfaulty
                    .iter()
                    .all(|v| r.fa_per_node.get(v) == Some(&(r.rounds as usize)))
        },
    );
}

#[test]
fn criterion_08_overlap() {
    suite_criterion(
        8,
        &[ViolationKind::Overlap, ViolationKind::CommonValues],
        |_| true,
    );
}

#[test]
fn criterion_09_negative_control() {
    let _g = serial();
    let topo = Arc::new(
        Topology::new(DiGraph::clique(4).unwrap(), 1, &TopologyLimits::default()).unwrap(),
    );
    let plan = FaultPlan::new(
        "crash-two",
        [
            (2, Behavior::Crash { after: 0 }),
            (3, Behavior::Crash { after: 0 }),
        ],
    );
    let cfg = SimConfig::new(
        vec![0.0, 1.0, 0.5, 0.5],
        K,
        EPS,
        plan,
        standard_policies(4, SUITE_SEED)[1].clone(),
    );
    let m = run(topo.clone(), &cfg).unwrap();
    let rep = assert_round_invariants(&m, &topo, EPS);
    let flagged: Vec<ViolationKind> = [
        ViolationKind::Halving,
        ViolationKind::Validity,
        ViolationKind::Termination,
        ViolationKind::Liveness,
    ]
    .into_iter()
    .filter(|&k| rep.count(k) > 0)
    .collect();
    report(
        9,
        m.guarantees_void && !flagged.is_empty(),
        &format!(
            "2 crashes with f=1: flagged {flagged:?}, guarantees_void={}",
            m.guarantees_void
        ),
    );
}

#[test]
fn criterion_10_determinism() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let mut differ = Vec::new();
    for s in suites() {
        if s.runs.is_empty() {
            continue;
        }
        let topo =
            Arc::new(Topology::new(s.graph.clone(), s.f, &TopologyLimits::default()).unwrap());
        // Every run on small graphs; on larger ones the cheap crash plans
        // plus one adversarial run.
        let picks: Vec<&RunResult> = if s.graph.n() <= 4 {
            s.runs.iter().collect()
        } else {
            s.runs
                .iter()
                .filter(|r| {
                    r.plan.starts_with("crash") || (r.plan == "equivocator" && r.policy == 0)
                })
                .collect()
        };
        for r in picks {
            let (m, _) = simulate(&topo, r.plan, r.policy);
            let path = dir.path().join(format!(
                "{}-{}-{}.csv",
                s.label.replace('/', "_"),
                r.plan,
                r.policy
            ));
            std::fs::write(&path, m.to_csv()).unwrap();
            compared += 1;
            if std::fs::read(&path).unwrap() != r.csv.as_bytes() {
                differ.push(format!("{} {} {}", s.label, r.plan, r.policy));
            }
        }
    }
    report(
        10,
        differ.is_empty() && compared > 0,
        &format!("{compared} reruns, differing: {differ:?}"),
    );
}
