use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

pub type NodeId = usize;

/// Upper bound on graph size; node sets are 64-bit masks.
pub const MAX_NODES: usize = 64;

/// A set of node ids backed by a bitmask.
///
/// `Ord` is lexicographic over the sorted member list, so `{}` < `{0}` <
/// `{0,1}` < `{1}`. Enumeration orders and tie-breaks rely on this.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<NodeId>", into = "Vec<NodeId>")]
pub struct NodeSet(pub u64);

impl NodeSet {
    pub const EMPTY: NodeSet = NodeSet(0);

    pub fn full(n: usize) -> Self {
        if n >= 64 {
            NodeSet(u64::MAX)
        } else {
            NodeSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(v: NodeId) -> Self {
        NodeSet(1u64 << v)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, v: NodeId) -> bool {
        v < 64 && self.0 >> v & 1 == 1
    }

    pub fn insert(&mut self, v: NodeId) {
        self.0 |= 1u64 << v;
    }

    pub fn remove(&mut self, v: NodeId) {
        self.0 &= !(1u64 << v);
    }

    pub fn with(self, v: NodeId) -> Self {
        NodeSet(self.0 | 1u64 << v)
    }

    pub fn without(self, v: NodeId) -> Self {
        NodeSet(self.0 & !(1u64 << v))
    }

    pub fn union(self, o: NodeSet) -> Self {
        NodeSet(self.0 | o.0)
    }

    pub fn intersect(self, o: NodeSet) -> Self {
        NodeSet(self.0 & o.0)
    }

    pub fn minus(self, o: NodeSet) -> Self {
        NodeSet(self.0 & !o.0)
    }

    /// `V ∖ self` for a graph on `n` nodes.
    pub fn complement(self, n: usize) -> Self {
        NodeSet::full(n).minus(self)
    }

    pub fn is_disjoint(self, o: NodeSet) -> bool {
        self.0 & o.0 == 0
    }

    pub fn is_subset(self, o: NodeSet) -> bool {
        self.0 & !o.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn first(self) -> Option<NodeId> {
        if self.0 == 0 {
            None
        } else {
            Some(self.0.trailing_zeros() as usize)
        }
    }

    pub fn iter(self) -> Iter {
        Iter(self.0)
    }

    pub fn to_vec(self) -> Vec<NodeId> {
        self.iter().collect()
    }
}

pub struct Iter(u64);

impl Iterator for Iter {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        if self.0 == 0 {
            return None;
        }
        let v = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(v)
    }
}

impl FromIterator<NodeId> for NodeSet {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> Self {
        let mut s = NodeSet::EMPTY;
        for v in iter {
            s.insert(v);
        }
        s
    }
}

impl From<Vec<NodeId>> for NodeSet {
    fn from(v: Vec<NodeId>) -> Self {
        v.into_iter().collect()
    }
}

impl From<NodeSet> for Vec<NodeId> {
    fn from(s: NodeSet) -> Self {
        s.to_vec()
    }
}

impl Ord for NodeSet {
    fn cmp(&self, other: &Self) -> Ordering {
        let (mut a, mut b) = (self.iter(), other.iter());
        loop {
            match (a.next(), b.next()) {
                (None, None) => return Ordering::Equal,
                (None, Some(_)) => return Ordering::Less,
                (Some(_), None) => return Ordering::Greater,
                (Some(x), Some(y)) if x != y => return x.cmp(&y),
                _ => {}
            }
        }
    }
}

impl PartialOrd for NodeSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// All subsets of `universe` with at most `k` members, in lexicographic order.
pub fn subsets_up_to(universe: NodeSet, k: usize) -> Vec<NodeSet> {
    let members = universe.to_vec();
    let mut out = Vec::new();
    let mut stack = Vec::new();
    fn rec(
        members: &[NodeId],
        start: usize,
        k: usize,
        cur: &mut Vec<NodeId>,
        out: &mut Vec<NodeSet>,
    ) {
        out.push(cur.iter().copied().collect());
        if cur.len() == k {
            return;
        }
        for i in start..members.len() {
            cur.push(members[i]);
            rec(members, i + 1, k, cur, out);
            cur.pop();
        }
    }
    rec(&members, 0, k, &mut stack, &mut out);
    out
}

/// All subsets of `universe` with exactly `k` members, in lexicographic order.
pub fn subsets_of_size(universe: NodeSet, k: usize) -> Vec<NodeSet> {
    subsets_up_to(universe, k)
        .into_iter()
        .filter(|s| s.len() == k)
        .collect()
}

/// Binomial sum `C(m,0) + … + C(m,k)`, saturating.
pub fn count_subsets_up_to(m: usize, k: usize) -> u64 {
    let mut total: u64 = 0;
    let mut c: u64 = 1;
    for i in 0..=k.min(m) {
        total = total.saturating_add(c);
        c = c.saturating_mul((m - i) as u64) / (i as u64 + 1);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_order() {
        let s = subsets_up_to(NodeSet::full(3), 3);
        let names: Vec<_> = s.iter().map(|x| x.to_vec()).collect();
        assert_eq!(
            names,
            vec![
                vec![],
                vec![0],
                vec![0, 1],
                vec![0, 1, 2],
                vec![0, 2],
                vec![1],
                vec![1, 2],
                vec![2]
            ]
        );
        let mut sorted = s.clone();
        sorted.sort();
        assert_eq!(sorted, s);
    }

    #[test]
    fn subset_counts() {
        assert_eq!(count_subsets_up_to(6, 2), 22);
        assert_eq!(count_subsets_up_to(3, 5), 8);
        assert_eq!(subsets_up_to(NodeSet::full(7), 2).len(), 29);
        assert_eq!(subsets_of_size(NodeSet::full(5), 2).len(), 10);
    }

    #[test]
    fn set_algebra() {
        let a: NodeSet = [0, 2, 5].into_iter().collect();
        assert_eq!(a.complement(6).to_vec(), vec![1, 3, 4]);
        assert!(NodeSet::singleton(2).is_subset(a));
        assert_eq!(a.minus(NodeSet::singleton(0)).first(), Some(2));
        assert_eq!(format!("{a}"), "{0,2,5}");
    }
}
