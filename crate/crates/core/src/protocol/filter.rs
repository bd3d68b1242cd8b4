//! Filter-and-Average: sort by (value, path), drop the longest f-coverable
//! prefix and suffix, return the midpoint of what remains.

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{has_f_cover, NodeId, NodeSet};
use crate::messaging::{order_bits, MessageSet, ValueRecord};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterOutcome {
    pub value: f64,
    /// |O|
    pub total: usize,
    /// |O^lo| and |O^hi|
    pub lo_cut: usize,
    pub hi_cut: usize,
    pub min_kept: f64,
    pub max_kept: f64,
    /// Distinct (initiator, value) pairs in O′, sorted.
    pub kept: Vec<(NodeId, f64)>,
}

fn integrity(total: usize) -> Error {
    Error::Integrity(format!("trimmed vector is empty ({total} messages)"))
}

fn sorted_pairs(mut v: Vec<(NodeId, f64)>) -> Vec<(NodeId, f64)> {
    v.sort_by(|a, b| a.0.cmp(&b.0).then(order_bits(a.1).cmp(&order_bits(b.1))));
    v.dedup_by(|a, b| a.0 == b.0 && a.1.to_bits() == b.1.to_bits());
    v
}

/// The algorithm as written: scan prefixes and suffixes with an explicit
/// cover search. Quadratic; used as the reference for [`fast_filter`].
pub fn filter_and_average(m: &MessageSet, f: usize, me: NodeId, n: usize) -> Result<FilterOutcome> {
    let items: Vec<ValueRecord> = m.iter().copied().collect();
    let total = items.len();
    let universe = NodeSet::full(n).without(me);
    let coverable = |slice: &[ValueRecord]| {
        has_f_cover(slice.iter().map(|r| r.path.node_set()), universe, f).is_some()
    };

    let mut lo = 0;
    while lo < total && coverable(&items[..lo + 1]) {
        lo += 1;
    }
    let mut hi = 0;
    while hi < total && coverable(&items[total - hi - 1..]) {
        hi += 1;
    }
    if lo + hi >= total {
        return Err(integrity(total));
    }
    let kept = &items[lo..total - hi];
    let (min_kept, max_kept) = (kept[0].value, kept[kept.len() - 1].value);
    Ok(FilterOutcome {
        value: (min_kept + max_kept) / 2.0,
        total,
        lo_cut: lo,
        hi_cut: hi,
        min_kept,
        max_kept,
        kept: sorted_pairs(kept.iter().map(|r| (r.path.init(), r.value)).collect()),
    })
}

/// One message as seen by the trimming pass. `tie` must order messages of
/// equal value the same way their paths do.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Item {
    pub value: f64,
    pub tie: u128,
    pub mask: NodeSet,
    pub init: NodeId,
}

type Key = (u64, u128);

impl Item {
    fn key(&self) -> Key {
        (order_bits(self.value), self.tie)
    }
}

/// Same result as [`filter_and_average`] in a few linear passes.
///
/// Prefix `O[..i]` has a cover `C` iff every message before `i` meets `C`,
/// so the longest coverable prefix ends right before the smallest message
/// avoiding `C`, maximized over `C`. The suffix is symmetric.
pub fn fast_filter(records: &[ValueRecord], covers: &[NodeSet]) -> Result<FilterOutcome> {
    let items = records.iter().map(|r| Item {
        value: r.value,
        tie: r.path.raw(),
        mask: r.path.node_set(),
        init: r.path.init(),
    });
    trim(items, covers)
}

pub(crate) fn trim<I>(items: I, covers: &[NodeSet]) -> Result<FilterOutcome>
where
    I: Iterator<Item = Item> + Clone,
{
    let mut total = 0;
    let mut groups: FxHashMap<NodeSet, (Key, Key)> = FxHashMap::default();
    for it in items.clone() {
        total += 1;
        let key = it.key();
        groups
            .entry(it.mask)
            .and_modify(|(lo, hi)| {
                if key < *lo {
                    *lo = key;
                }
                if key > *hi {
                    *hi = key;
                }
            })
            .or_insert((key, key));
    }

    let mut pivot_lo: Option<Key> = None;
    let mut pivot_hi: Option<Key> = None;
    for &c in covers {
        let mut first: Option<Key> = None;
        let mut last: Option<Key> = None;
        for (mask, (lo, hi)) in &groups {
            if mask.is_disjoint(c) {
                first = Some(first.map_or(*lo, |x| x.min(*lo)));
                last = Some(last.map_or(*hi, |x| x.max(*hi)));
            }
        }
        // A cover hitting everything trims the whole vector.
        let (Some(first), Some(last)) = (first, last) else {
            return Err(integrity(total));
        };
        pivot_lo = Some(pivot_lo.map_or(first, |p| p.max(first)));
        pivot_hi = Some(pivot_hi.map_or(last, |p| p.min(last)));
    }
    let (Some(plo), Some(phi)) = (pivot_lo, pivot_hi) else {
        return Err(integrity(total));
    };
    if plo > phi {
        return Err(integrity(total));
    }

    let (mut lo_cut, mut hi_cut) = (0, 0);
    let (mut min_kept, mut max_kept) = (f64::NAN, f64::NAN);
    let mut kept: Vec<(NodeId, f64)> = Vec::new();
    for it in items {
        let key = it.key();
        if key < plo {
            lo_cut += 1;
        } else if key > phi {
            hi_cut += 1;
        } else {
            if key == plo {
                min_kept = it.value;
            }
            if key == phi {
                max_kept = it.value;
            }
            if !kept
                .iter()
                .any(|k| k.0 == it.init && k.1.to_bits() == it.value.to_bits())
            {
                kept.push((it.init, it.value));
            }
        }
    }
    Ok(FilterOutcome {
        value: (min_kept + max_kept) / 2.0,
        total,
        lo_cut,
        hi_cut,
        min_kept,
        max_kept,
        kept: sorted_pairs(kept),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::subsets_up_to;
    use crate::messaging::PathKey;

    fn key(v: &[NodeId]) -> PathKey {
        PathKey::from_nodes(v).unwrap()
    }

    fn example() -> MessageSet {
        // v=0, a=1, b=2, c=3, d=4
        let mut m = MessageSet::new();
        m.insert(0.0, key(&[1, 0]));
        m.insert(4.0, key(&[3, 0]));
        m.insert(6.0, key(&[4, 0]));
        m.insert(10.0, key(&[2, 0]));
        m
    }

    #[test]
    fn trims_one_each_side() {
        let out = filter_and_average(&example(), 1, 0, 5).unwrap();
        assert_eq!((out.lo_cut, out.hi_cut), (1, 1));
        assert_eq!(out.value, 5.0);
        let covers = subsets_up_to(NodeSet::full(5).without(0), 1);
        let recs: Vec<_> = example().iter().copied().collect();
        assert_eq!(fast_filter(&recs, &covers).unwrap(), out);
    }

    #[test]
    fn equal_values() {
        let mut m = MessageSet::new();
        for (i, p) in [[1, 0], [2, 0], [3, 0]].iter().enumerate() {
            m.insert(3.0, key(p));
            let _ = i;
        }
        m.insert(3.0, key(&[0]));
        assert_eq!(filter_and_average(&m, 1, 0, 4).unwrap().value, 3.0);
    }

    #[test]
    fn f_zero_keeps_everything() {
        let mut m = MessageSet::new();
        m.insert(1.0, key(&[1, 0]));
        m.insert(2.0, key(&[1, 2, 0]));
        m.insert(7.0, key(&[1, 3, 0]));
        let out = filter_and_average(&m, 0, 0, 4).unwrap();
        assert_eq!((out.lo_cut, out.hi_cut), (0, 0));
        assert_eq!(out.value, 4.0);
    }

    #[test]
    fn everything_coverable_is_an_integrity_fault() {
        let mut m = MessageSet::new();
        m.insert(1.0, key(&[1, 0]));
        m.insert(2.0, key(&[1, 2, 0]));
        assert!(filter_and_average(&m, 1, 0, 3).is_err());
        let covers = subsets_up_to(NodeSet::full(3).without(0), 1);
        let recs: Vec<_> = m.iter().copied().collect();
        assert!(fast_filter(&recs, &covers).is_err());
    }
}
