use super::{subsets_up_to, NodeSet};

/// Smallest `C ⊆ universe` with `|C| ≤ f` meeting every path's node set, or
/// `None` if there is none. Among covers of the smallest size the
/// lexicographically first is returned. An empty path set yields `{}`.
pub fn has_f_cover<I>(paths: I, universe: NodeSet, f: usize) -> Option<NodeSet>
where
    I: IntoIterator<Item = NodeSet>,
{
    let mut sets: Vec<NodeSet> = paths.into_iter().collect();
    sets.sort_unstable_by_key(|s| s.bits());
    sets.dedup();
    let candidates = sets
        .iter()
        .fold(NodeSet::EMPTY, |acc, s| acc.union(*s))
        .intersect(universe);
    let mut subsets = subsets_up_to(candidates, f);
    subsets.sort_by_key(|s| s.len());
    subsets
        .into_iter()
        .find(|c| sets.iter().all(|p| !p.is_disjoint(*c)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> NodeSet {
        v.iter().copied().collect()
    }

    #[test]
    fn examples() {
        // a=0 b=1 c=2 v=3
        let u = set(&[0, 1, 2]);
        assert_eq!(
            has_f_cover([set(&[0, 1, 3]), set(&[2, 1, 3])], u, 1),
            Some(set(&[1]))
        );
        assert_eq!(has_f_cover([set(&[0, 3]), set(&[1, 3])], u, 1), None);
        assert_eq!(
            has_f_cover(Vec::<NodeSet>::new(), u, 0),
            Some(NodeSet::EMPTY)
        );
    }

    #[test]
    fn prefers_small_then_lexicographic() {
        let u = set(&[0, 1, 2, 3]);
        assert_eq!(
            has_f_cover([set(&[1, 2]), set(&[0, 2])], u, 2),
            Some(set(&[2]))
        );
        assert_eq!(
            has_f_cover([set(&[0, 3]), set(&[1, 2])], u, 2),
            Some(set(&[0, 1]))
        );
    }

    #[test]
    fn uncoverable_outside_universe() {
        assert_eq!(has_f_cover([set(&[4])], set(&[0, 1]), 2), None);
    }
}
