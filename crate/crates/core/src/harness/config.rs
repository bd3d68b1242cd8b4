//! Scenario files: a TOML description of one simulated run.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generate;
use crate::adversary::{builtin_plan, FaultPlan};
use crate::error::{Error, Result};
use crate::graph::DiGraph;
use crate::protocol::Topology;
use crate::simnet::DelayPolicy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSpec {
    /// Edge-list file, relative to the scenario file.
    File {
        path: PathBuf,
    },
    Clique {
        n: usize,
    },
    Random {
        n: usize,
        p: f64,
        seed: u64,
    },
    TwoCliques {
        size: usize,
        bridges: usize,
        seed: u64,
    },
}

impl GraphSpec {
    pub fn build(&self) -> Result<DiGraph> {
        match self {
            GraphSpec::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("cannot read graph {}: {e}", path.display()))
                })?;
                DiGraph::parse_edge_list(&text)
            }
            GraphSpec::Clique { n } => generate::clique(*n),
            GraphSpec::Random { n, p, seed } => generate::random(*n, *p, *seed),
            GraphSpec::TwoCliques {
                size,
                bridges,
                seed,
            } => generate::two_cliques(*size, *bridges, *seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSpec {
    Values {
        values: Vec<f64>,
    },
    /// Uniform in `[0, K]`, drawn from the scenario seed.
    Random,
    /// `v · K / (n - 1)`.
    Spread,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanSpec {
    Builtin(String),
    Custom(FaultPlan),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// CSV with `round,U,mu,spread`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PathBuf>,
    /// JSON lines, one per delivery.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    /// JSON lines, one per Filter-and-Average execution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub f: usize,
    pub k: f64,
    pub eps: f64,
    /// Replaces the seed of `delay` and drives random inputs.
    pub seed: u64,
    pub plan: PlanSpec,
    pub graph: GraphSpec,
    pub inputs: InputSpec,
    pub delay: DelayPolicy,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a scenario file, resolves relative paths against its directory
    /// and checks that the graph file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let GraphSpec::File { path } = &mut self.graph {
            fix(path);
        }
        for p in [
            &mut self.output.metrics,
            &mut self.output.trace,
            &mut self.output.rounds,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn check_files(&self) -> Result<()> {
        match &self.graph {
            GraphSpec::File { path } if !path.is_file() => Err(Error::Config(format!(
                "graph file {} does not exist",
                path.display()
            ))),
            _ => Ok(()),
        }
    }

    pub fn delay_policy(&self) -> DelayPolicy {
        self.delay.with_seed(self.seed)
    }

    pub fn inputs_for(&self, n: usize) -> Result<Vec<f64>> {
        Ok(match &self.inputs {
            InputSpec::Values { values } => {
                if values.len() != n {
                    return Err(Error::Config(format!(
                        "{} inputs for {n} nodes",
                        values.len()
                    )));
                }
                values.clone()
            }
            InputSpec::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5EED_1A7E);
                (0..n).map(|_| rng.gen_range(0.0..=self.k)).collect()
            }
            InputSpec::Spread if n < 2 => vec![0.0; n],
            InputSpec::Spread => (0..n).map(|v| v as f64 * self.k / (n - 1) as f64).collect(),
        })
    }

    pub fn plan_for(&self, topo: &Topology) -> Result<FaultPlan> {
        match &self.plan {
            PlanSpec::Builtin(name) => builtin_plan(name, topo, self.k),
            PlanSpec::Custom(plan) => Ok(plan.clone()),
        }
    }
}
