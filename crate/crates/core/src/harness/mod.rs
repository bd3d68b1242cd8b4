//! The `reachcons` command line: condition checks, scenario runs, sweeps,
//! graph generation and the equivalence audit.
//!
//! Exit codes: 0 ok, 1 violation, 2 input error, 3 budget exceeded.

mod config;
mod generate;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

pub use config::{GraphSpec, InputSpec, OutputSpec, PlanSpec, ScenarioConfig};
pub use generate::{clique, random, two_cliques};

use crate::adversary::BUILTIN_PLANS;
use crate::conditions::{
    check_k_reach, check_partition_condition, equivalence_audit, AuditOptions, PartitionCondition,
};
use crate::error::{Error, Result};
use crate::graph::{count_subsets_up_to, DiGraph};
use crate::protocol::{Topology, TopologyLimits};
use crate::simnet::{
    assert_round_invariants, run, standard_policies, InvariantReport, RunMetrics, SimConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

pub const SEED_ENV: &str = "REACHCONS_SEED";

/// Scenario files shipped with the binary.
pub const BUNDLED: [(&str, &str); 2] = [
    ("k4-crash", include_str!("scenarios/k4-crash.toml")),
    (
        "two-cliques-f2",
        include_str!("scenarios/two-cliques-f2.toml"),
    ),
];

pub fn bundled_scenario(name: &str) -> Result<ScenarioConfig> {
    let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == name) else {
        let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        return Err(Error::Config(format!(
            "no bundled scenario {name:?}; available: {names:?}"
        )));
    };
    ScenarioConfig::from_toml(text)
}

#[derive(Parser, Debug)]
#[command(
    name = "reachcons",
    version,
    about = "Byzantine approximate consensus on directed graphs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide a reach or partition condition for a graph file.
    Check {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        f: usize,
        #[arg(long, value_enum)]
        condition: Condition,
    },
    /// Simulate one scenario and check the round invariants.
    Run {
        #[command(flatten)]
        source: Source,
        /// Run even if the graph fails 3-reach.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        rounds: Option<PathBuf>,
        #[command(flatten)]
        budget: Budget,
    },
    /// Write a generated graph in edge-list format.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Compare k-reach with CCS, CCA and BCS on small digraphs.
    Audit {
        #[arg(long)]
        f: usize,
        #[arg(long)]
        n_max: usize,
        /// Self-test: answer 3-reach with the 2-reach checker.
        #[arg(long)]
        inject_bug: bool,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run a scenario under several fault plans and delay policies.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// Comma-separated built-in plans; all of them by default.
        #[arg(long, value_delimiter = ',')]
        plans: Vec<String>,
        /// How many of the standard delay policies to use.
        #[arg(long, default_value_t = 5)]
        policies: usize,
        #[arg(long)]
        workers: Option<usize>,
        /// Directory for one metrics file per run.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        budget: Budget,
    },
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Name of a bundled scenario.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct Budget {
    #[arg(long, default_value_t = 10)]
    pub max_n: usize,
    #[arg(long, default_value_t = 2)]
    pub max_f: usize,
    /// Candidate threads per node.
    #[arg(long, default_value_t = 2000)]
    pub max_threads: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_n: 10,
            max_f: 2,
            max_threads: 2000,
        }
    }
}

impl Budget {
    pub fn check(&self, n: usize, f: usize) -> Result<()> {
        if n > self.max_n {
            return Err(Error::Budget(format!(
                "{n} nodes exceeds --max-n {}",
                self.max_n
            )));
        }
        if f > self.max_f {
            return Err(Error::Budget(format!(
                "f={f} exceeds --max-f {}",
                self.max_f
            )));
        }
        let threads = count_subsets_up_to(n.saturating_sub(1), f);
        if threads > self.max_threads {
            return Err(Error::Budget(format!(
                "{threads} candidate threads per node exceeds --max-threads {}",
                self.max_threads
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Condition {
    #[value(name = "1reach")]
    Reach1,
    #[value(name = "2reach")]
    Reach2,
    #[value(name = "3reach")]
    Reach3,
    Ccs,
    Cca,
    Bcs,
    /// All three reach/partition pairs must agree.
    Audit,
}

#[derive(Subcommand, Debug)]
enum GenKind {
    Clique {
        #[arg(long)]
        n: usize,
    },
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        seed: u64,
    },
    TwoCliques {
        #[arg(long)]
        size: usize,
        #[arg(long)]
        bridges: usize,
        #[arg(long)]
        seed: u64,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Budget(_) => EXIT_BUDGET,
        Error::Integrity(_) => EXIT_VIOLATION,
        _ => EXIT_INPUT,
    }
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let mut out = std::io::stdout().lock();
    match dispatch(cli.cmd, &mut out) {
        Ok(code) => code,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn std::io::Write) -> Result<i32> {
    match cmd {
        Command::Check {
            graph,
            f,
            condition,
        } => cmd_check(&read_graph(&graph)?, f, condition, out),
        Command::Run {
            source,
            force,
            metrics,
            trace,
            rounds,
            budget,
        } => {
            let mut cfg = load_source(&source)?;
            cfg.output.metrics = metrics.or(cfg.output.metrics);
            cfg.output.trace = trace.or(cfg.output.trace);
            cfg.output.rounds = rounds.or(cfg.output.rounds);
            cmd_run(&cfg, force, &budget, out)
        }
        Command::Gen { kind, out: path } => {
            let g = match kind {
                GenKind::Clique { n } => clique(n)?,
                GenKind::Random { n, p, seed } => random(n, p, seed)?,
                GenKind::TwoCliques {
                    size,
                    bridges,
                    seed,
                } => two_cliques(size, bridges, seed)?,
            };
            match path {
                Some(p) => write_file(&p, &g.to_edge_list())?,
                None => out.write_all(g.to_edge_list().as_bytes())?,
            }
            Ok(EXIT_OK)
        }
        Command::Audit {
            f,
            n_max,
            inject_bug,
            samples,
            seed,
        } => {
            let opts = AuditOptions {
                samples,
                seed,
                inject_bug,
                ..AuditOptions::default()
            };
            cmd_audit(f, n_max, &opts, out)
        }
        Command::Sweep {
            source,
            plans,
            policies,
            workers,
            out_dir,
            force,
            budget,
        } => {
            let cfg = load_source(&source)?;
            let plans = if plans.is_empty() {
                BUILTIN_PLANS.iter().map(|s| s.to_string()).collect()
            } else {
                plans
            };
            let workers = workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let opts = SweepOptions {
                plans,
                policies,
                workers,
                out_dir,
                force,
                budget,
            };
            cmd_sweep(&cfg, &opts, out)
        }
    }
}

fn read_graph(path: &Path) -> Result<DiGraph> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read graph {}: {e}", path.display())))?;
    DiGraph::parse_edge_list(&text)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// Loads the config and applies `REACHCONS_SEED`.
fn load_source(src: &Source) -> Result<ScenarioConfig> {
    let mut cfg = match (&src.config, &src.scenario) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(name)) => bundled_scenario(name)?,
        (None, None) => return Err(Error::Config("need --config or --scenario".into())),
    };
    if let Ok(s) = std::env::var(SEED_ENV) {
        cfg.seed = s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
    }
    Ok(cfg)
}

fn cmd_check(g: &DiGraph, f: usize, cond: Condition, out: &mut dyn std::io::Write) -> Result<i32> {
    writeln!(out, "graph: n={} edges={} f={f}", g.n(), g.edge_count())?;
    let single = |k: Option<usize>, p: Option<PartitionCondition>| match (k, p) {
        (Some(k), _) => check_k_reach(g, f, k),
        (_, Some(p)) => check_partition_condition(g, f, p),
        _ => unreachable!(),
    };
    let (label, verdict) = match cond {
        Condition::Reach1 => ("1reach", single(Some(1), None)?),
        Condition::Reach2 => ("2reach", single(Some(2), None)?),
        Condition::Reach3 => ("3reach", single(Some(3), None)?),
        Condition::Ccs => ("ccs", single(None, Some(PartitionCondition::Ccs))?),
        Condition::Cca => ("cca", single(None, Some(PartitionCondition::Cca))?),
        Condition::Bcs => ("bcs", single(None, Some(PartitionCondition::Bcs))?),
        Condition::Audit => {
            let mut agree = true;
            for k in 1..=3 {
                let which = PartitionCondition::for_reach_k(k).expect("k in 1..=3");
                let r = check_k_reach(g, f, k)?.holds;
                let p = check_partition_condition(g, f, which)?.holds;
                writeln!(
                    out,
                    "{k}reach={r} {which:?}={p} {}",
                    if r == p { "agree" } else { "MISMATCH" }
                )?;
                agree &= r == p;
            }
            return Ok(if agree { EXIT_OK } else { EXIT_VIOLATION });
        }
    };
    writeln!(
        out,
        "{label}: {}",
        if verdict.holds { "holds" } else { "fails" }
    )?;
    if let Some(w) = &verdict.witness {
        writeln!(out, "witness: {w}")?;
    }
    Ok(if verdict.holds {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    })
}

fn cmd_audit(
    f: usize,
    n_max: usize,
    opts: &AuditOptions,
    out: &mut dyn std::io::Write,
) -> Result<i32> {
    let rep = equivalence_audit(f, n_max, opts)?;
    for s in &rep.slices {
        writeln!(out, "n={} {:?} graphs={}", s.n, s.mode, s.graphs)?;
    }
    writeln!(
        out,
        "f={f} seed={} sampled={} graphs={} mismatches={}",
        rep.seed,
        rep.sampled,
        rep.graphs_checked(),
        rep.mismatches.len()
    )?;
    for m in rep.mismatches.iter().take(5) {
        writeln!(
            out,
            "mismatch: n={} k={} reach={} partition={} edges={:?}",
            m.n, m.k, m.reach_holds, m.partition_holds, m.edges
        )?;
    }
    Ok(if rep.mismatches.is_empty() {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    })
}

/// Graph, topology and the 3-reach verdict for a scenario, after the budget
/// check.
pub struct Prepared {
    pub topo: Arc<Topology>,
    pub three_reach: bool,
}

pub fn prepare(cfg: &ScenarioConfig, budget: &Budget, force: bool) -> Result<Prepared> {
    let g = cfg.graph.build()?;
    budget.check(g.n(), cfg.f)?;
    let three_reach = check_k_reach(&g, cfg.f, 3)?.holds;
    if !three_reach {
        if !force {
            return Err(Error::Config(format!(
                "graph fails 3-reach for f={}; pass --force to run anyway",
                cfg.f
            )));
        }
        warn!("graph fails 3-reach for f={}; guarantees are void", cfg.f);
    }
    let limits = TopologyLimits {
        max_threads: budget.max_threads,
        ..TopologyLimits::default()
    };
    let t0 = std::time::Instant::now();
    let topo = Arc::new(Topology::new(g, cfg.f, &limits)?);
    info!("topology built in {:.2?}", t0.elapsed());
    Ok(Prepared { topo, three_reach })
}

/// One simulated run of `cfg` on a prepared topology.
pub fn simulate(
    cfg: &ScenarioConfig,
    topo: &Arc<Topology>,
    trace: bool,
) -> Result<(RunMetrics, InvariantReport)> {
    let mut sim = SimConfig::new(
        cfg.inputs_for(topo.n())?,
        cfg.k,
        cfg.eps,
        cfg.plan_for(topo)?,
        cfg.delay_policy(),
    );
    sim.trace = trace;
    let t0 = std::time::Instant::now();
    let m = run(topo.clone(), &sim)?;
    let t1 = std::time::Instant::now();
    let rep = assert_round_invariants(&m, topo, cfg.eps);
    info!(
        "simulated in {:.2?}, invariants checked in {:.2?}",
        t1 - t0,
        t1.elapsed()
    );
    Ok((m, rep))
}

fn jsonl<T: serde::Serialize>(items: impl IntoIterator<Item = T>) -> Result<String> {
    let mut s = String::new();
    for x in items {
        s += &serde_json::to_string(&x).map_err(|e| Error::Config(e.to_string()))?;
        s.push('\n');
    }
    Ok(s)
}

fn summarize(m: &RunMetrics, rep: &InvariantReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "n={} f={} rounds={} faulty={} deliveries={} end_time={} guarantees_void={}",
        m.n, m.f, m.rounds, m.faulty, m.deliveries, m.end_time, m.guarantees_void
    );
    let outs: Vec<String> = m
        .nonfaulty()
        .map(|v| m.outputs[v].map_or("-".into(), |x| format!("{x}")))
        .collect();
    let _ = writeln!(s, "outputs: {}", outs.join(" "));
    if rep.ok() {
        let _ = writeln!(s, "invariants: ok");
    } else {
        let _ = writeln!(s, "invariants: {} violations", rep.violations.len());
        for v in rep.violations.iter().take(10) {
            let _ = writeln!(
                s,
                "  {:?} round={:?} nodes={:?}: {}",
                v.kind, v.round, v.nodes, v.detail
            );
        }
    }
    s
}

fn cmd_run(
    cfg: &ScenarioConfig,
    force: bool,
    budget: &Budget,
    out: &mut dyn std::io::Write,
) -> Result<i32> {
    let prep = prepare(cfg, budget, force)?;
    let (m, rep) = simulate(cfg, &prep.topo, cfg.output.trace.is_some())?;
    writeln!(out, "scenario: {} seed={}", cfg.name, cfg.seed)?;
    out.write_all(summarize(&m, &rep).as_bytes())?;
    match &cfg.output.metrics {
        Some(p) => write_file(p, &m.to_csv())?,
        None => out.write_all(m.to_csv().as_bytes())?,
    }
    if let Some(p) = &cfg.output.trace {
        write_file(p, &jsonl(m.trace.iter().flatten())?)?;
    }
    if let Some(p) = &cfg.output.rounds {
        write_file(p, &jsonl(&m.fa)?)?;
    }
    Ok(if rep.ok() { EXIT_OK } else { EXIT_VIOLATION })
}

pub struct SweepOptions {
    pub plans: Vec<String>,
    pub policies: usize,
    pub workers: usize,
    pub out_dir: Option<PathBuf>,
    pub force: bool,
    pub budget: Budget,
}

fn cmd_sweep(
    base: &ScenarioConfig,
    opts: &SweepOptions,
    out: &mut dyn std::io::Write,
) -> Result<i32> {
    let prep = prepare(base, &opts.budget, opts.force)?;
    let n = prep.topo.n();
    let policies = standard_policies(n, base.seed);
    if opts.policies == 0 || opts.policies > policies.len() {
        return Err(Error::Config(format!(
            "--policies must be in 1..={}",
            policies.len()
        )));
    }
    if let Some(d) = &opts.out_dir {
        std::fs::create_dir_all(d)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", d.display())))?;
    }
    let jobs: Vec<(String, usize)> = opts
        .plans
        .iter()
        .flat_map(|p| (0..opts.policies).map(move |i| (p.clone(), i)))
        .collect();
    let results: Mutex<Vec<Option<Result<(RunMetrics, InvariantReport)>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..opts.workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some((plan, i)) = jobs.get(j) else { break };
                let mut cfg = base.clone();
                cfg.plan = PlanSpec::Builtin(plan.clone());
                cfg.delay = policies[*i].clone();
                cfg.seed = policies[*i].seed();
                let r = simulate(&cfg, &prep.topo, false);
                results
                    .lock()
                    .expect("no worker panics while holding the lock")[j] = Some(r);
            });
        }
    });
    let mut failed = false;
    for ((plan, i), r) in jobs
        .iter()
        .zip(results.into_inner().expect("workers joined"))
    {
        let (m, rep) = r.expect("every job ran")?;
        let status = if rep.ok() { "ok" } else { "VIOLATED" };
        failed |= !rep.ok();
        let spread = m.upper[m.rounds as usize]
            .zip(m.lower[m.rounds as usize])
            .map(|(u, l)| u - l);
        writeln!(
            out,
            "{} plan={plan} policy={i} deliveries={} final_spread={} {status}",
            base.name,
            m.deliveries,
            spread.map_or("-".into(), |s| format!("{s}"))
        )?;
        for v in rep.violations.iter().take(3) {
            writeln!(
                out,
                "  {:?} round={:?} nodes={:?}: {}",
                v.kind, v.round, v.nodes, v.detail
            )?;
        }
        if let Some(d) = &opts.out_dir {
            write_file(
                &d.join(format!("{}-{plan}-p{i}.csv", base.name)),
                &m.to_csv(),
            )?;
        }
    }
    Ok(if failed { EXIT_VIOLATION } else { EXIT_OK })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for (name, _) in BUNDLED {
            let cfg = bundled_scenario(name).unwrap();
            assert_eq!(cfg.name, name);
            let again = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(again, cfg);
        }
        assert!(bundled_scenario("nope").is_err());
    }

    #[test]
    fn budget_limits() {
        let b = Budget::default();
        b.check(10, 2).unwrap();
        assert!(matches!(b.check(11, 1), Err(Error::Budget(_))));
        assert!(matches!(b.check(4, 3), Err(Error::Budget(_))));
        let tight = Budget {
            max_threads: 10,
            ..Budget::default()
        };
        assert!(tight.check(7, 2).is_err());
    }

    #[test]
    fn k4_crash_runs_clean() {
        let cfg = bundled_scenario("k4-crash").unwrap();
        let prep = prepare(&cfg, &Budget::default(), false).unwrap();
        assert!(prep.three_reach);
        let (m, rep) = simulate(&cfg, &prep.topo, false).unwrap();
        assert!(rep.ok(), "{:?}", rep.violations);
        assert_eq!(m.rounds, 3);
    }
}
