//! Per-node reactor. Every predicate is maintained incrementally: arrivals
//! update per-thread counters and cover trackers, and Verify is re-run only
//! after something it depends on changed.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use log::{debug, trace};
use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use super::filter::{trim, FilterOutcome, Item};
use super::topology::{NodeView, Topology, Walk};
use super::CoverTracker;
use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeSet};
use crate::messaging::{
    simple_shape, CompleteBody, CompleteMsg, Digest, Message, PathKey, ValueMsg,
};

/// Messages a handler wants placed on outgoing links, as `(receiver, msg)`.
pub type Outbox = Vec<(NodeId, Message)>;

/// One Filter-and-Average execution.
#[derive(Clone, Debug, Serialize)]
pub struct FaRecord {
    pub node: NodeId,
    pub round: u32,
    /// Messages handled by the node when it ran; 0 means during `start`.
    pub event: u64,
    /// Candidate fault set of the thread that advanced.
    pub chosen: NodeSet,
    pub outcome: FilterOutcome,
}

/// A Maximal-Consistency latch and the payload it flooded.
#[derive(Clone, Debug, Serialize)]
pub struct McLatch {
    pub node: NodeId,
    pub round: u32,
    pub event: u64,
    pub candidate: NodeSet,
    pub digest: Arc<Digest>,
}

#[derive(Debug)]
struct ThreadState {
    /// Node sets avoiding the candidate set whose walks have not all
    /// arrived yet.
    deficit: u32,
    /// Value id + 1 per initiator on paths avoiding the candidate set.
    values: Vec<u32>,
    inconsistent: bool,
    latched: bool,
    /// Initiators whose identical COMPLETE arrived on every in-reach path.
    satisfied: NodeSet,
    fifo_rec: bool,
}

/// COMPLETE messages with equal claimed set and payload, as one unit.
#[derive(Debug)]
struct Claim {
    consistent: bool,
    /// Some source-component node has no value in the payload.
    missing: bool,
    trackers: Vec<usize>,
    /// Node sets of the simple paths it arrived on.
    masks: Vec<NodeSet>,
    complete: bool,
}

#[derive(Debug)]
struct RoundState {
    started: bool,
    /// `nextround`
    advanced: bool,
    dirty: bool,
    /// Value id + 1 of the first message per walk rank.
    seen: Vec<u32>,
    /// Distinct walks received per node set.
    mask_counts: Vec<u64>,
    /// Further `(rank, value id)` pairs on already-seen paths.
    extras: FxHashSet<(u32, u32)>,
    /// Snapshot material for Filter-and-Average, dropped once it ran.
    records: Vec<(u32, u32)>,
    value_bits: Vec<u64>,
    value_ids: FxHashMap<u64, u32>,
    /// Bit per `(value id, initiator, node set)` triple seen so far.
    triples: Vec<u64>,
    n: usize,
    masks_by_pair: FxHashMap<(NodeId, u32), Vec<NodeSet>>,
    threads: Vec<ThreadState>,
    claims: Vec<Claim>,
    claim_ids: FxHashMap<(NodeSet, Arc<Digest>), usize>,
    trackers: Vec<CoverTracker>,
    tracker_ids: FxHashMap<(NodeId, u32, NodeSet), usize>,
    trackers_by_pair: FxHashMap<(NodeId, u32), Vec<usize>>,
    fifo_paths: FxHashMap<(usize, NodeId, Arc<Digest>), FxHashSet<PathKey>>,
}

impl RoundState {
    fn new(view: &NodeView, n: usize) -> Self {
        let seen = vec![0; view.walks.len()];
        crate::mem::advise_huge(&seen);
        RoundState {
            started: false,
            advanced: false,
            dirty: false,
            seen,
            mask_counts: vec![0; view.mask_totals.len()],
            extras: FxHashSet::default(),
            records: Vec::new(),
            value_bits: Vec::new(),
            value_ids: FxHashMap::default(),
            triples: Vec::new(),
            n,
            masks_by_pair: FxHashMap::default(),
            threads: view
                .candidates
                .iter()
                .map(|c| ThreadState {
                    deficit: c.walk_masks,
                    values: vec![0; n],
                    inconsistent: false,
                    latched: false,
                    satisfied: NodeSet::EMPTY,
                    fifo_rec: false,
                })
                .collect(),
            claims: Vec::new(),
            claim_ids: FxHashMap::default(),
            trackers: Vec::new(),
            tracker_ids: FxHashMap::default(),
            trackers_by_pair: FxHashMap::default(),
            fifo_paths: FxHashMap::default(),
        }
    }

    fn intern(&mut self, x: f64) -> u32 {
        let bits = x.to_bits();
        if self.value_bits.len() <= 16 {
            if let Some(i) = self.value_bits.iter().position(|&b| b == bits) {
                return i as u32;
            }
        } else if let Some(&id) = self.value_ids.get(&bits) {
            return id;
        }
        let id = self.value_bits.len() as u32;
        self.value_bits.push(bits);
        self.value_ids.insert(bits, id);
        id
    }

    /// Marks a triple, returning whether it is new.
    fn insert_triple(&mut self, init: NodeId, vid: u32, mask: NodeSet) -> bool {
        let subsets = self.mask_counts.len();
        let i = (vid as usize * self.n + init) * subsets + mask.bits() as usize;
        let (word, bit) = (i / 64, 1u64 << (i % 64));
        if word >= self.triples.len() {
            self.triples
                .resize((word + 1).max(self.triples.len() * 2), 0);
        }
        let fresh = self.triples[word] & bit == 0;
        self.triples[word] |= bit;
        fresh
    }

    fn value(&self, id: u32) -> f64 {
        f64::from_bits(self.value_bits[id as usize])
    }

    fn tracker(&mut self, q: NodeId, vid: u32, universe: NodeSet, f: usize) -> usize {
        if let Some(&id) = self.tracker_ids.get(&(q, vid, universe)) {
            return id;
        }
        let mut t = CoverTracker::new(universe, f);
        if let Some(masks) = self.masks_by_pair.get(&(q, vid)) {
            for &m in masks {
                t.observe(m);
            }
        }
        let id = self.trackers.len();
        self.trackers.push(t);
        self.tracker_ids.insert((q, vid, universe), id);
        self.trackers_by_pair.entry((q, vid)).or_default().push(id);
        id
    }

    fn verify(&self, reach: NodeSet) -> bool {
        self.claims
            .iter()
            .filter(|c| c.consistent && c.masks.iter().any(|m| m.is_subset(reach)))
            .all(|c| c.complete)
    }
}

#[derive(Debug, Default)]
struct Channel {
    next: u64,
    pending: BTreeMap<u64, Arc<CompleteBody>>,
}

/// One node running the BW algorithm.
#[derive(Debug)]
pub struct NodeRuntime {
    me: NodeId,
    topo: Arc<Topology>,
    rounds_total: u32,
    /// `x[r]` for every round reached so far.
    x: Vec<f64>,
    current: u32,
    rounds: Vec<Option<Box<RoundState>>>,
    fifo_counter: u64,
    handled: u64,
    inbox: FxHashMap<(NodeId, PathKey), Channel>,
    /// Own COMPLETE floods awaiting self-delivery.
    local: VecDeque<Arc<CompleteBody>>,
    fa: Vec<FaRecord>,
    latches: Vec<McLatch>,
    rejected: u64,
    failure: Option<Error>,
}

impl NodeRuntime {
    pub fn new(me: NodeId, topo: Arc<Topology>, input: f64, rounds_total: u32) -> Result<Self> {
        if me >= topo.n() {
            return Err(Error::InvalidArgument(format!("node {me} not in graph")));
        }
        if !input.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "input {input} of node {me} is not finite"
            )));
        }
        if rounds_total == 0 {
            return Err(Error::InvalidArgument(
                "at least one round is required".into(),
            ));
        }
        Ok(NodeRuntime {
            me,
            topo,
            rounds_total,
            x: vec![input],
            current: 0,
            rounds: (0..rounds_total).map(|_| None).collect(),
            fifo_counter: 0,
            handled: 0,
            inbox: FxHashMap::default(),
            local: VecDeque::new(),
            fa: Vec::new(),
            latches: Vec::new(),
            rejected: 0,
            failure: None,
        })
    }

    pub fn me(&self) -> NodeId {
        self.me
    }

    /// Round currently being worked on; equals the round count once done.
    pub fn round(&self) -> u32 {
        self.current
    }

    /// `x[0..=current]`
    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn output(&self) -> Option<f64> {
        self.x.get(self.rounds_total as usize).copied()
    }

    pub fn fa_records(&self) -> &[FaRecord] {
        &self.fa
    }

    pub fn mc_latches(&self) -> &[McLatch] {
        &self.latches
    }

    /// Arrivals dropped by a receipt guard.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Set when Filter-and-Average found nothing left after trimming. The
    /// node stops reacting afterwards.
    pub fn failure(&self) -> Option<&Error> {
        self.failure.as_ref()
    }

    pub fn start(&mut self, out: &mut Outbox) {
        self.start_round(0, out);
        self.settle(out);
    }

    pub fn handle(&mut self, from: NodeId, msg: Message, out: &mut Outbox) {
        self.handled += 1;
        if self.failure.is_some() {
            return;
        }
        match msg {
            Message::Value(m) => self.on_value(from, m, out),
            Message::Complete(m) => self.on_complete(from, m, out),
        }
        self.settle(out);
    }

    /// Warms the cache for an upcoming `handle` of `msg`: the walk slot, or
    /// with `resolve` also the walk's entry in the round's arrival table.
    pub fn prefetch(&self, msg: &Message, resolve: bool) {
        let Message::Value(m) = msg else { return };
        let Some(q) = m.path.push(self.me) else {
            return;
        };
        let walks = &self.topo.nodes[self.me].walks;
        if !resolve {
            return walks.prefetch(q);
        }
        let st = self.rounds.get(m.round as usize).and_then(|r| r.as_ref());
        if let (Some(st), Some(w)) = (st, walks.lookup(q)) {
            crate::mem::prefetch(&st.seen[w.rank as usize]);
        }
    }

    fn state(&mut self, r: u32) -> &mut RoundState {
        let topo = &self.topo;
        let me = self.me;
        self.rounds[r as usize]
            .get_or_insert_with(|| Box::new(RoundState::new(&topo.nodes[me], topo.n())))
    }

    fn reject(&mut self, from: NodeId, why: &str) {
        self.rejected += 1;
        debug!("node {}: dropped message from {from}: {why}", self.me);
    }

    fn settle(&mut self, out: &mut Outbox) {
        loop {
            while let Some(body) = self.local.pop_front() {
                let me = self.me;
                self.fifo_accept(
                    body,
                    PathKey::single(me),
                    NodeSet::singleton(me),
                    false,
                    out,
                );
            }
            if !self.evaluate(out) && self.local.is_empty() {
                break;
            }
        }
    }

    fn start_round(&mut self, r: u32, out: &mut Outbox) {
        let topo = self.topo.clone();
        let me = self.me;
        let value = self.x[r as usize];
        let own = PathKey::single(me);
        for w in topo.graph.out_neighbors(me).iter() {
            out.push((
                w,
                Message::Value(ValueMsg {
                    round: r,
                    value,
                    path: own,
                }),
            ));
        }
        let walk = topo.nodes[me]
            .walks
            .lookup(own)
            .expect("single-node walk is indexed");
        let st = self.state(r);
        st.started = true;
        st.dirty = true;
        let vid = st.intern(value);
        st.seen[walk.rank as usize] = vid + 1;
        trace!("node {me}: round {r} starts with {value}");
        self.record(r, walk, vid, true, out);
    }

    fn on_value(&mut self, from: NodeId, m: ValueMsg, out: &mut Outbox) {
        if m.path.is_empty() || m.path.ter() != from {
            return self.reject(from, "last hop is not the sender");
        }
        if m.round >= self.rounds_total || !m.value.is_finite() {
            return self.reject(from, "round or value out of range");
        }
        let Some(q) = m.path.push(self.me) else {
            return self.reject(from, "path too long");
        };
        let topo = self.topo.clone();
        let Some(walk) = topo.nodes[self.me].walks.lookup(q) else {
            return self.reject(from, "not a redundant walk of the graph");
        };
        let rank = walk.rank;
        let st = self.state(m.round);
        let vid = st.intern(m.value);
        let first = match st.seen[rank as usize] {
            0 => {
                st.seen[rank as usize] = vid + 1;
                true
            }
            s if s == vid + 1 => return,
            _ => {
                if !st.extras.insert((rank, vid)) {
                    return;
                }
                false
            }
        };
        if first {
            for w in walk.extensions.iter() {
                out.push((
                    w,
                    Message::Value(ValueMsg {
                        round: m.round,
                        value: m.value,
                        path: q,
                    }),
                ));
            }
        }
        self.record(m.round, walk, vid, first, out);
    }

    /// Adds `(value, path)` to `M` and updates everything derived from it.
    fn record(&mut self, r: u32, walk: Walk, vid: u32, first: bool, out: &mut Outbox) {
        let topo = self.topo.clone();
        let view = &topo.nodes[self.me];
        let (rank, mask, init) = (walk.rank, walk.mask, walk.init);
        let st = self.state(r);
        if !st.advanced {
            st.records.push((rank, vid));
        }
        // Thread state only changes on a new (initiator, value, node set)
        // triple or when a node set's walks are all in.
        if st.insert_triple(init, vid, mask) {
            st.masks_by_pair.entry((init, vid)).or_default().push(mask);
            if let Some(ids) = st.trackers_by_pair.get(&(init, vid)) {
                for &id in ids {
                    if st.trackers[id].observe(mask) {
                        st.dirty = true;
                    }
                }
            }
            for (t, cand) in view.candidates.iter().enumerate() {
                if mask.is_disjoint(cand.set) {
                    let th = &mut st.threads[t];
                    let slot = &mut th.values[init];
                    if *slot == 0 {
                        *slot = vid + 1;
                    } else if *slot != vid + 1 {
                        th.inconsistent = true;
                    }
                }
            }
        }
        if !first {
            return;
        }
        let m = mask.bits() as usize;
        st.mask_counts[m] += 1;
        if st.mask_counts[m] != view.mask_totals[m] {
            return;
        }
        let mut newly = Vec::new();
        for (t, cand) in view.candidates.iter().enumerate() {
            if mask.is_disjoint(cand.set) {
                let th = &mut st.threads[t];
                th.deficit -= 1;
                if th.deficit == 0 && !th.inconsistent {
                    debug_assert!(st.started, "own walk completes last");
                    th.latched = true;
                    newly.push(t);
                }
            }
        }
        for t in newly {
            self.latch(r, t, out);
        }
    }

    fn latch(&mut self, r: u32, t: usize, out: &mut Outbox) {
        let topo = self.topo.clone();
        let candidate = topo.nodes[self.me].candidates[t].set;
        let st = self.state(r);
        let entries = st.threads[t]
            .values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != 0)
            .map(|(w, &s)| (w, st.value(s - 1)))
            .collect();
        let digest = Arc::new(Digest::new(entries));
        trace!(
            "node {}: round {r} consistent and full for {candidate}",
            self.me
        );
        self.latches.push(McLatch {
            node: self.me,
            round: r,
            event: self.handled,
            candidate,
            digest: digest.clone(),
        });
        self.fifo_flood(r, candidate, digest, out);
    }

    fn fifo_flood(&mut self, r: u32, claimed: NodeSet, digest: Arc<Digest>, out: &mut Outbox) {
        self.fifo_counter += 1;
        let body = Arc::new(CompleteBody {
            round: r,
            origin: self.me,
            counter: self.fifo_counter,
            claimed,
            digest,
        });
        let own = PathKey::single(self.me);
        for w in self.topo.graph.out_neighbors(self.me).iter() {
            out.push((
                w,
                Message::Complete(CompleteMsg {
                    body: body.clone(),
                    path: own,
                }),
            ));
        }
        self.local.push_back(body);
    }

    fn on_complete(&mut self, from: NodeId, m: CompleteMsg, out: &mut Outbox) {
        let b = &m.body;
        if m.path.is_empty() || m.path.ter() != from {
            return self.reject(from, "last hop is not the sender");
        }
        if m.path.init() != b.origin || b.counter == 0 || b.round >= self.rounds_total {
            return self.reject(from, "malformed COMPLETE header");
        }
        let n = self.topo.n();
        if b.claimed.len() > self.topo.f
            || !b.claimed.is_subset(NodeSet::full(n))
            || b.claimed.contains(b.origin)
        {
            return self.reject(from, "claimed fault set not admissible");
        }
        let Some(q) = m.path.push(self.me) else {
            return self.reject(from, "path too long");
        };
        let Some(nodes) = simple_shape(&self.topo.graph, q) else {
            return self.reject(from, "not a simple path");
        };
        self.fifo_accept(m.body, q, nodes, true, out);
    }

    /// FIFO-Receive on one `(origin, path)` channel, forwarding first copies
    /// along simple extensions.
    fn fifo_accept(
        &mut self,
        body: Arc<CompleteBody>,
        q: PathKey,
        nodes: NodeSet,
        forward: bool,
        out: &mut Outbox,
    ) {
        let ch = self
            .inbox
            .entry((body.origin, q))
            .or_insert_with(|| Channel {
                next: 1,
                pending: BTreeMap::new(),
            });
        if body.counter < ch.next || ch.pending.contains_key(&body.counter) {
            return;
        }
        if forward {
            for w in self.topo.graph.out_neighbors(self.me).minus(nodes).iter() {
                out.push((
                    w,
                    Message::Complete(CompleteMsg {
                        body: body.clone(),
                        path: q,
                    }),
                ));
            }
        }
        let mut ready = Vec::new();
        if body.counter == ch.next {
            ready.push(body);
            ch.next += 1;
            while let Some(b) = ch.pending.remove(&ch.next) {
                ready.push(b);
                ch.next += 1;
            }
        } else {
            ch.pending.insert(body.counter, body);
        }
        for b in ready {
            self.deliver_complete(b, q, nodes);
        }
    }

    fn deliver_complete(&mut self, body: Arc<CompleteBody>, q: PathKey, nodes: NodeSet) {
        let topo = self.topo.clone();
        let me = self.me;
        let f = topo.f;
        let view = &topo.nodes[me];
        let all = topo.graph.nodes();
        let st = self.state(body.round);

        let key = (body.claimed, body.digest.clone());
        let id = match st.claim_ids.get(&key) {
            Some(&id) => id,
            None => {
                let consistent = body.digest.is_consistent();
                let mut missing = false;
                let mut trackers = Vec::new();
                if consistent {
                    let clauses = topo.clauses(body.claimed).unwrap_or(&[]);
                    'outer: for &s in clauses {
                        let universe = all.minus(s).without(me);
                        for w in s.iter() {
                            let Some(x) = body.digest.value_of(w) else {
                                missing = true;
                                break 'outer;
                            };
                            let vid = st.intern(x);
                            let tid = st.tracker(w, vid, universe, f);
                            if !trackers.contains(&tid) {
                                trackers.push(tid);
                            }
                        }
                    }
                }
                let id = st.claims.len();
                st.claims.push(Claim {
                    consistent,
                    missing,
                    trackers,
                    masks: Vec::new(),
                    complete: false,
                });
                st.claim_ids.insert(key, id);
                id
            }
        };
        let claim = &mut st.claims[id];
        if !claim.masks.contains(&nodes) {
            claim.masks.push(nodes);
            st.dirty = true;
        }

        if let Some(&t) = view.candidate_index.get(&body.claimed) {
            let cand = &view.candidates[t];
            if nodes.is_subset(cand.reach) {
                let paths = st
                    .fifo_paths
                    .entry((t, body.origin, body.digest.clone()))
                    .or_default();
                if paths.insert(q) && paths.len() as u64 == cand.simple_paths[body.origin] {
                    let th = &mut st.threads[t];
                    th.satisfied.insert(body.origin);
                    if !th.fifo_rec && th.satisfied == cand.reach {
                        th.fifo_rec = true;
                        st.dirty = true;
                    }
                }
            }
        }
    }

    /// Runs Verify for the current round if anything changed; advances and
    /// returns true when some thread passes.
    fn evaluate(&mut self, out: &mut Outbox) -> bool {
        if self.failure.is_some() || self.current >= self.rounds_total {
            return false;
        }
        let r = self.current;
        let topo = self.topo.clone();
        let view = &topo.nodes[self.me];
        let st = self.state(r);
        if !st.started || st.advanced || !st.dirty {
            return false;
        }
        st.dirty = false;
        for i in 0..st.claims.len() {
            let c = &st.claims[i];
            if c.consistent
                && !c.missing
                && !c.complete
                && c.trackers.iter().all(|&id| st.trackers[id].satisfied())
            {
                st.claims[i].complete = true;
            }
        }
        let chosen = (0..st.threads.len())
            .find(|&t| st.threads[t].fifo_rec && st.verify(view.candidates[t].reach));
        match chosen {
            Some(t) => {
                self.advance(r, t, out);
                true
            }
            None => false,
        }
    }

    fn advance(&mut self, r: u32, t: usize, out: &mut Outbox) {
        let topo = self.topo.clone();
        let view = &topo.nodes[self.me];
        let st = self.state(r);
        st.advanced = true;
        let records = std::mem::take(&mut st.records);
        let st = &*st;
        let items = records.iter().map(|&(rank, vid)| {
            let walk = view.walks.walk(rank);
            Item {
                value: st.value(vid),
                tie: rank as u128,
                mask: walk.mask,
                init: walk.init,
            }
        });
        let outcome = match trim(items, &view.covers) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("node {}: round {r}: {e}", self.me);
                self.failure = Some(e);
                return;
            }
        };
        let chosen = view.candidates[t].set;
        debug!(
            "node {}: round {r} advances via {chosen}: |O|={} -> {}",
            self.me, outcome.total, outcome.value
        );
        self.x.push(outcome.value);
        self.fa.push(FaRecord {
            node: self.me,
            round: r,
            event: self.handled,
            chosen,
            outcome,
        });
        self.current = r + 1;
        if self.current < self.rounds_total {
            self.start_round(self.current, out);
        }
    }
}
