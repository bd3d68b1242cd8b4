//! Byzantine behaviours. A faulty node runs the honest runtime and every
//! message it sends passes through [`FaultPlan::intercept_send`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::{NodeId, NodeSet};
use crate::messaging::{CompleteBody, CompleteMsg, Message, ValueMsg};
use crate::protocol::Topology;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Behavior {
    /// Sends nothing while handling its `after`-th event or later. Starting
    /// the protocol is event 0.
    Crash {
        after: u64,
    },
    Silent,
    /// Replaces the value of its own round floods per receiver.
    Equivocate {
        values: Vec<(NodeId, f64)>,
    },
    /// Shifts the value of every VALUE message it relays.
    TamperForward {
        delta: f64,
    },
    /// Drops one source-component node from the payload of its own COMPLETE
    /// floods.
    ForgeComplete,
    /// Every VALUE it sends carries `lo` towards `group` and `hi` elsewhere.
    SplitBrain {
        lo: f64,
        hi: f64,
        group: NodeSet,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub node: NodeId,
    pub behavior: Behavior,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub name: String,
    /// Sorted by node, one entry per node.
    pub faulty: Vec<Fault>,
}

pub const BUILTIN_PLANS: [&str; 6] = [
    "none",
    "crash-min",
    "crash-max",
    "equivocator",
    "forger",
    "split-brain",
];

impl FaultPlan {
    pub fn none() -> Self {
        FaultPlan {
            name: "none".into(),
            faulty: Vec::new(),
        }
    }

    pub fn new(name: &str, faulty: impl IntoIterator<Item = (NodeId, Behavior)>) -> Self {
        let mut faulty: Vec<Fault> = faulty
            .into_iter()
            .map(|(node, behavior)| Fault { node, behavior })
            .collect();
        faulty.sort_by_key(|x| x.node);
        FaultPlan {
            name: name.into(),
            faulty,
        }
    }

    pub fn faulty_set(&self) -> NodeSet {
        self.faulty.iter().map(|x| x.node).collect()
    }

    pub fn behavior(&self, v: NodeId) -> Option<&Behavior> {
        self.faulty
            .iter()
            .find(|x| x.node == v)
            .map(|x| &x.behavior)
    }

    /// Checks node ids against `n`. Plans larger than `f` are allowed; the
    /// simulator flags their runs as outside the fault model.
    pub fn validate(&self, n: usize) -> Result<()> {
        for (i, x) in self.faulty.iter().enumerate() {
            let (v, b) = (x.node, &x.behavior);
            if self.faulty[..i].iter().any(|y| y.node == v) {
                return invalid(format!("node {v} listed twice in the fault plan"));
            }
            if v >= n {
                return invalid(format!("faulty node {v} not in a graph of {n} nodes"));
            }
            match b {
                Behavior::Equivocate { values } if values.iter().any(|&(w, _)| w >= n) => {
                    return invalid(format!(
                        "equivocation map of node {v} names a node outside the graph"
                    ));
                }
                Behavior::SplitBrain { group, .. } if !group.is_subset(NodeSet::full(n)) => {
                    return invalid(format!("split group of node {v} leaves the graph"));
                }
                Behavior::Equivocate { values } if values.iter().any(|(_, x)| !x.is_finite()) => {
                    return invalid(format!("equivocation values of node {v} must be finite"));
                }
                Behavior::TamperForward { delta } if !delta.is_finite() => {
                    return invalid(format!("tamper delta of node {v} must be finite"));
                }
                Behavior::SplitBrain { lo, hi, .. } if !lo.is_finite() || !hi.is_finite() => {
                    return invalid(format!("split values of node {v} must be finite"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Whether a faulty node handles its `event`-th event at all.
    pub fn is_active(&self, v: NodeId, event: u64) -> bool {
        match self.behavior(v) {
            Some(Behavior::Crash { after }) => event < *after,
            Some(Behavior::Silent) => false,
            _ => true,
        }
    }

    /// The message actually placed on the link `sender → receiver`, if any,
    /// when the honest runtime of `sender` wants to send `msg` while handling
    /// its `event`-th event. The output path still ends at `sender`.
    pub fn intercept_send(
        &self,
        topo: &Topology,
        sender: NodeId,
        receiver: NodeId,
        event: u64,
        msg: Message,
    ) -> Option<Message> {
        let Some(b) = self.behavior(sender) else {
            return Some(msg);
        };
        match (b, msg) {
            (Behavior::Crash { after }, msg) => {
                if event < *after {
                    Some(msg)
                } else {
                    None
                }
            }
            (Behavior::Silent, _) => None,
            (Behavior::Equivocate { values }, Message::Value(m)) if m.path.len() == 1 => {
                let value = values
                    .iter()
                    .find(|e| e.0 == receiver)
                    .map_or(m.value, |e| e.1);
                Some(Message::Value(ValueMsg { value, ..m }))
            }
            (Behavior::TamperForward { delta }, Message::Value(m)) if m.path.len() > 1 => {
                Some(Message::Value(ValueMsg {
                    value: m.value + delta,
                    ..m
                }))
            }
            (Behavior::ForgeComplete, Message::Complete(m)) if m.path.len() == 1 => {
                let body = &m.body;
                let victim = topo.clauses(body.claimed).and_then(|c| {
                    c.iter()
                        .flat_map(|s| s.iter())
                        .filter(|&w| w != sender)
                        .min()
                });
                match victim {
                    Some(w) => Some(Message::Complete(CompleteMsg {
                        body: Arc::new(CompleteBody {
                            digest: Arc::new(body.digest.without(w)),
                            ..(**body).clone()
                        }),
                        path: m.path,
                    })),
                    None => Some(Message::Complete(m)),
                }
            }
            (Behavior::SplitBrain { lo, hi, group }, Message::Value(m)) => {
                let value = if group.contains(receiver) { *lo } else { *hi };
                Some(Message::Value(ValueMsg { value, ..m }))
            }
            (_, msg) => Some(msg),
        }
    }
}

/// Built-in plans. Faulty nodes are the `f` highest ids; equivocating
/// values sit far outside `[0, k]`.
pub fn builtin_plan(name: &str, topo: &Topology, k: f64) -> Result<FaultPlan> {
    let n = topo.n();
    let f = topo.f.min(n.saturating_sub(1));
    let top: Vec<NodeId> = (0..n).rev().take(f).collect();
    let honest: Vec<NodeId> = (0..n).filter(|v| !top.contains(v)).collect();
    let (lo, hi) = (-10.0 * k, 11.0 * k);
    let each = |b: &dyn Fn(usize, NodeId) -> Behavior| {
        top.iter().enumerate().map(|(i, &v)| (v, b(i, v))).collect()
    };
    let faulty: Vec<(NodeId, Behavior)> = match name {
        "none" => Vec::new(),
        "crash-min" => top
            .iter()
            .take(1)
            .map(|&v| (v, Behavior::Crash { after: 0 }))
            .collect(),
        "crash-max" => each(&|i, _| Behavior::Crash {
            after: 40 * i as u64,
        }),
        "equivocator" => each(&|_, v| Behavior::Equivocate {
            values: topo
                .graph
                .out_neighbors(v)
                .iter()
                .map(|w| (w, if w % 2 == 0 { lo } else { hi }))
                .collect(),
        }),
        "forger" => each(&|_, _| Behavior::ForgeComplete),
        "split-brain" => {
            let group: NodeSet = honest.iter().take(honest.len() / 2).copied().collect();
            each(&|_, _| Behavior::SplitBrain { lo, hi, group })
        }
        other => {
            return invalid(format!(
                "unknown fault plan {other:?}; expected one of {BUILTIN_PLANS:?}"
            ))
        }
    };
    Ok(FaultPlan::new(name, faulty))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DiGraph;
    use crate::messaging::{Digest, PathKey};
    use crate::protocol::TopologyLimits;

    fn k4() -> Topology {
        Topology::new(DiGraph::clique(4).unwrap(), 1, &TopologyLimits::default()).unwrap()
    }

    fn value(v: f64, path: &[NodeId]) -> Message {
        Message::Value(ValueMsg {
            round: 0,
            value: v,
            path: PathKey::from_nodes(path).unwrap(),
        })
    }

    #[test]
    fn crash_min_is_silent_from_the_start() {
        let t = k4();
        let plan = builtin_plan("crash-min", &t, 1.0).unwrap();
        assert_eq!(plan.faulty_set(), NodeSet::singleton(3));
        assert!(plan.intercept_send(&t, 3, 0, 0, value(1.0, &[3])).is_none());
        assert!(!plan.is_active(3, 0));
    }

    #[test]
    fn equivocator_splits_by_parity() {
        let t = k4();
        let plan = builtin_plan("equivocator", &t, 1.0).unwrap();
        let to0 = plan.intercept_send(&t, 3, 0, 0, value(0.5, &[3]));
        let to1 = plan.intercept_send(&t, 3, 1, 0, value(0.5, &[3]));
        assert_eq!(to0, Some(value(-10.0, &[3])));
        assert_eq!(to1, Some(value(11.0, &[3])));
        // Relayed messages pass through.
        assert_eq!(
            plan.intercept_send(&t, 3, 0, 5, value(0.5, &[1, 3])),
            Some(value(0.5, &[1, 3]))
        );
    }

    #[test]
    fn tamper_keeps_last_hop() {
        let t = k4();
        let plan = FaultPlan::new("tamper", [(2, Behavior::TamperForward { delta: 100.0 })]);
        let out = plan
            .intercept_send(&t, 2, 0, 3, value(1.0, &[1, 2]))
            .unwrap();
        assert_eq!(out, value(101.0, &[1, 2]));
        assert_eq!(out.path().ter(), 2);
    }

    #[test]
    fn forger_drops_a_source_node() {
        let t = k4();
        let plan = builtin_plan("forger", &t, 1.0).unwrap();
        let digest = Arc::new(Digest::new((0..3).map(|w| (w, 1.0)).collect()));
        let msg = Message::Complete(CompleteMsg {
            body: Arc::new(CompleteBody {
                round: 0,
                origin: 3,
                counter: 1,
                claimed: NodeSet::EMPTY,
                digest: digest.clone(),
            }),
            path: PathKey::single(3),
        });
        let out = plan.intercept_send(&t, 3, 0, 1, msg);
        let Some(Message::Complete(m)) = &out else {
            panic!()
        };
        assert_eq!(*m.body.digest, digest.without(0));
        assert_eq!(m.body.counter, 1);
    }

    #[test]
    fn plan_round_trips_and_validates() {
        let t = k4();
        for name in BUILTIN_PLANS {
            let plan = builtin_plan(name, &t, 1.0).unwrap();
            assert!(plan.faulty.len() <= 1);
            plan.validate(4).unwrap();
            let text = toml::to_string(&plan).unwrap();
            assert_eq!(toml::from_str::<FaultPlan>(&text).unwrap(), plan);
        }
        assert!(builtin_plan("nope", &t, 1.0).is_err());
        assert!(FaultPlan::new("bad", [(9, Behavior::Silent)])
            .validate(4)
            .is_err());
        assert!(
            FaultPlan::new("twice", [(1, Behavior::Silent), (1, Behavior::Silent)])
                .validate(4)
                .is_err()
        );
    }
}
