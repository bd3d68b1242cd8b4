//! Messages and the message-set predicates the protocol is built from.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{DiGraph, NodeId, NodeSet, PathCatalog};

/// Largest graph whose walks fit a [`PathKey`].
pub const MAX_KEYED_NODES: usize = 15;

/// A walk of at most 32 nodes packed into 128 bits, one nibble per node
/// (`id + 1`), first node in the most significant nibble.
///
/// The derived order compares `hi` then `lo`, which is the lexicographic
/// order of node sequences (a proper prefix sorts first).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathKey {
    hi: u64,
    lo: u64,
}

impl PathKey {
    pub const CAPACITY: usize = 32;

    pub(crate) fn raw(self) -> u128 {
        (self.hi as u128) << 64 | self.lo as u128
    }

    fn from_raw(x: u128) -> Self {
        PathKey {
            hi: (x >> 64) as u64,
            lo: x as u64,
        }
    }

    pub fn single(v: NodeId) -> Self {
        debug_assert!(v < MAX_KEYED_NODES);
        PathKey::from_raw(((v as u128) + 1) << 124)
    }

    pub fn from_nodes(nodes: &[NodeId]) -> Result<Self> {
        if nodes.is_empty() || nodes.len() > Self::CAPACITY {
            return invalid(format!("path of {} nodes cannot be keyed", nodes.len()));
        }
        let mut x = 0u128;
        for (i, &v) in nodes.iter().enumerate() {
            if v >= MAX_KEYED_NODES {
                return invalid(format!("node {v} too large for a path key"));
            }
            x |= ((v as u128) + 1) << (124 - 4 * i);
        }
        Ok(PathKey::from_raw(x))
    }

    pub fn len(self) -> usize {
        let x = self.raw();
        if x == 0 {
            0
        } else {
            (128 - x.trailing_zeros() as usize).div_ceil(4)
        }
    }

    pub fn is_empty(self) -> bool {
        self.hi == 0 && self.lo == 0
    }

    pub fn node(self, i: usize) -> NodeId {
        ((self.raw() >> (124 - 4 * i)) & 0xF) as usize - 1
    }

    pub fn init(self) -> NodeId {
        self.node(0)
    }

    pub fn ter(self) -> NodeId {
        self.node(self.len() - 1)
    }

    /// `self || v`, or `None` when the key is full.
    pub fn push(self, v: NodeId) -> Option<Self> {
        let len = self.len();
        if len >= Self::CAPACITY || v >= MAX_KEYED_NODES {
            return None;
        }
        Some(PathKey::from_raw(
            self.raw() | ((v as u128) + 1) << (124 - 4 * len),
        ))
    }

    pub fn nodes(self) -> impl Iterator<Item = NodeId> {
        let x = self.raw();
        (0..self.len()).map(move |i| ((x >> (124 - 4 * i)) & 0xF) as usize - 1)
    }

    pub fn to_vec(self) -> Vec<NodeId> {
        self.nodes().collect()
    }

    pub fn node_set(self) -> NodeSet {
        self.nodes().collect()
    }
}

impl fmt::Debug for PathKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨")?;
        for (i, v) in self.nodes().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "⟩")
    }
}

impl Serialize for PathKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_vec().serialize(s)
    }
}

/// Shape of a keyed walk under the redundant-path rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WalkShape {
    pub nodes: NodeSet,
    /// Nodes of the second simple segment, or `None` while the walk is simple.
    pub tail: Option<NodeSet>,
}

impl WalkShape {
    /// Whether appending `w` keeps the walk redundant.
    pub fn can_extend(self, w: NodeId) -> bool {
        match self.tail {
            None => true,
            Some(t) => !t.contains(w),
        }
    }
}

/// Validates `path` as a redundant walk of `g` and returns its shape.
pub fn redundant_shape(g: &DiGraph, path: PathKey) -> Option<WalkShape> {
    let len = path.len();
    if len == 0 {
        return None;
    }
    let mut nodes = NodeSet::EMPTY;
    let mut tail: Option<NodeSet> = None;
    let mut prev: Option<NodeId> = None;
    for v in path.nodes() {
        if v >= g.n() {
            return None;
        }
        if let Some(p) = prev {
            if !g.has_edge(p, v) {
                return None;
            }
            match tail.as_mut() {
                None if nodes.contains(v) => tail = Some(NodeSet::singleton(p).with(v)),
                None => {}
                Some(t) if t.contains(v) => return None,
                Some(t) => t.insert(v),
            }
        }
        nodes.insert(v);
        prev = Some(v);
    }
    Some(WalkShape { nodes, tail })
}

/// Validates `path` as a simple path of `g` and returns its node set.
pub fn simple_shape(g: &DiGraph, path: PathKey) -> Option<NodeSet> {
    let mut nodes = NodeSet::EMPTY;
    let mut prev: Option<NodeId> = None;
    for v in path.nodes() {
        if v >= g.n() || nodes.contains(v) {
            return None;
        }
        if let Some(p) = prev {
            if !g.has_edge(p, v) {
                return None;
            }
        }
        nodes.insert(v);
        prev = Some(v);
    }
    if nodes.is_empty() {
        None
    } else {
        Some(nodes)
    }
}

/// The value content of a COMPLETE payload: for each initiator, every value
/// the sender saw on paths avoiding the claimed set. Genuine senders only
/// flood consistent sets, so each initiator then carries exactly one value.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Digest {
    /// Sorted by (node, value bits), no duplicates.
    entries: Vec<(NodeId, f64)>,
}

impl Digest {
    pub fn new(mut entries: Vec<(NodeId, f64)>) -> Self {
        entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.to_bits().cmp(&b.1.to_bits())));
        entries.dedup_by(|a, b| a.0 == b.0 && a.1.to_bits() == b.1.to_bits());
        Digest { entries }
    }

    pub fn entries(&self) -> &[(NodeId, f64)] {
        &self.entries
    }

    pub fn is_consistent(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].0 != w[1].0)
    }

    /// The value recorded for `w`; `None` if absent or ambiguous.
    pub fn value_of(&self, w: NodeId) -> Option<f64> {
        let mut it = self.entries.iter().filter(|e| e.0 == w);
        match (it.next(), it.next()) {
            (Some(&(_, x)), None) => Some(x),
            _ => None,
        }
    }

    pub fn without(&self, w: NodeId) -> Digest {
        Digest {
            entries: self.entries.iter().copied().filter(|e| e.0 != w).collect(),
        }
    }
}

impl PartialEq for Digest {
    fn eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.0 == b.0 && a.1.to_bits() == b.1.to_bits())
    }
}

impl Eq for Digest {}

impl Hash for Digest {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for &(v, x) in &self.entries {
            v.hash(state);
            x.to_bits().hash(state);
        }
    }
}

/// Everything about a COMPLETE(F) flood except the path it travels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CompleteBody {
    pub round: u32,
    pub origin: NodeId,
    pub counter: u64,
    pub claimed: NodeSet,
    pub digest: Arc<Digest>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueMsg {
    pub round: u32,
    pub value: f64,
    /// Ends at the node that last forwarded the message.
    pub path: PathKey,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompleteMsg {
    pub body: Arc<CompleteBody>,
    /// Ends at the node that last forwarded the message.
    pub path: PathKey,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Value(ValueMsg),
    Complete(CompleteMsg),
}

impl Message {
    pub fn round(&self) -> u32 {
        match self {
            Message::Value(m) => m.round,
            Message::Complete(m) => m.body.round,
        }
    }

    pub fn path(&self) -> PathKey {
        match self {
            Message::Value(m) => m.path,
            Message::Complete(m) => m.path,
        }
    }
}

/// One `(x, p)` pair as recorded by its receiver; `p` ends at the receiver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueRecord {
    pub value: f64,
    pub path: PathKey,
}

impl ValueRecord {
    fn key(&self) -> (u64, PathKey) {
        (order_bits(self.value), self.path)
    }
}

/// Maps an f64 to bits whose unsigned order matches the numeric order.
pub fn order_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | 1 << 63
    }
}

/// A set of value messages of one round, ordered by (value, path).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MessageSet {
    items: Vec<ValueRecord>,
}

impl MessageSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, value: f64, path: PathKey) -> bool {
        let rec = ValueRecord { value, path };
        match self.items.binary_search_by_key(&rec.key(), |r| r.key()) {
            Ok(_) => false,
            Err(i) => {
                self.items.insert(i, rec);
                true
            }
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ValueRecord> {
        self.items.iter()
    }

    /// Messages whose path avoids every node of `a`.
    pub fn exclude(&self, a: NodeSet) -> MessageSet {
        MessageSet {
            items: self
                .items
                .iter()
                .copied()
                .filter(|r| r.path.node_set().is_disjoint(a))
                .collect(),
        }
    }

    /// Messages sharing an initiator carry equal values.
    pub fn is_consistent(&self) -> bool {
        let mut first: [Option<u64>; MAX_KEYED_NODES] = [None; MAX_KEYED_NODES];
        for r in &self.items {
            let slot = &mut first[r.path.init()];
            match *slot {
                None => *slot = Some(r.value.to_bits()),
                Some(b) if b != r.value.to_bits() => return false,
                _ => {}
            }
        }
        true
    }

    /// The unique value initiated by `w`, `None` if `w` initiates nothing.
    pub fn value_of(&self, w: NodeId) -> Result<Option<f64>> {
        if !self.is_consistent() {
            return Err(Error::Integrity(
                "value_of on an inconsistent message set".into(),
            ));
        }
        Ok(self
            .items
            .iter()
            .find(|r| r.path.init() == w)
            .map(|r| r.value))
    }

    /// Every redundant path avoiding `a` and ending at `v` is present.
    pub fn is_full_for(&self, a: NodeSet, v: NodeId, catalog: &PathCatalog) -> Result<bool> {
        let have: std::collections::HashSet<PathKey> = self.items.iter().map(|r| r.path).collect();
        for p in catalog.redundant_paths(a, v)?.iter() {
            if !have.contains(&PathKey::from_nodes(p.nodes())?) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn digest(&self) -> Digest {
        Digest::new(
            self.items
                .iter()
                .map(|r| (r.path.init(), r.value))
                .collect(),
        )
    }
}

/// One delivery, as written to the trace log.
#[derive(Clone, Debug, Serialize)]
pub struct MessageRecord {
    pub round: u32,
    pub kind: &'static str,
    pub value: Option<f64>,
    pub path: Vec<NodeId>,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub sent_at: u64,
    pub delivered_at: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub claimed: Option<NodeSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fifo_counter: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digest: Option<Arc<Digest>>,
}

impl MessageRecord {
    pub fn new(
        msg: &Message,
        sender: NodeId,
        receiver: NodeId,
        sent_at: u64,
        delivered_at: u64,
    ) -> Self {
        match msg {
            Message::Value(m) => MessageRecord {
                round: m.round,
                kind: "value",
                value: Some(m.value),
                path: m.path.to_vec(),
                sender,
                receiver,
                sent_at,
                delivered_at,
                claimed: None,
                origin: None,
                fifo_counter: None,
                digest: None,
            },
            Message::Complete(m) => MessageRecord {
                round: m.body.round,
                kind: "complete",
                value: None,
                path: m.path.to_vec(),
                sender,
                receiver,
                sent_at,
                delivered_at,
                claimed: Some(m.body.claimed),
                origin: Some(m.body.origin),
                fifo_counter: Some(m.body.counter),
                digest: Some(m.body.digest.clone()),
            },
        }
    }
}
