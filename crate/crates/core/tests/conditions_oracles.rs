//! Condition checkers against definitions evaluated by brute force.

mod common;

use common::*;
use proptest::prelude::*;
use reachcons::conditions::*;
use reachcons::graph::{DiGraph, NodeSet};

/// Number of nodes in `a` with an edge into `b`.
fn in_neighbours_from(g: &DiGraph, a: &[usize], b: &[usize]) -> usize {
    a.iter()
        .filter(|&&x| b.iter().any(|&y| g.has_edge(x, y)))
        .count()
}

/// Partition condition from its definition: label every node F, L, C or R.
fn naive_partition(g: &DiGraph, f: usize, which: PartitionCondition) -> bool {
    let n = g.n();
    let t = if which == PartitionCondition::Ccs {
        1
    } else {
        f + 1
    };
    let with_faults = which != PartitionCondition::Cca;
    for code in 0..4usize.pow(n as u32) {
        let labels: Vec<usize> = (0..n).map(|i| code / 4usize.pow(i as u32) % 4).collect();
        let part = |x: usize| (0..n).filter(|&i| labels[i] == x).collect::<Vec<_>>();
        let (ff, l, c, r) = (part(0), part(1), part(2), part(3));
        if ff.len() > if with_faults { f } else { 0 } || l.is_empty() || r.is_empty() {
            continue;
        }
        let lc: Vec<usize> = l.iter().chain(&c).copied().collect();
        let rc: Vec<usize> = r.iter().chain(&c).copied().collect();
        if in_neighbours_from(g, &lc, &r) < t && in_neighbours_from(g, &rc, &l) < t {
            return false;
        }
    }
    true
}

#[test]
fn examples() {
    let tri = DiGraph::from_edges(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
    assert!(check_k_reach(&tri, 1, 1).unwrap().holds);
    assert!(naive_k_reach(&tri, 1, 1));
    let k3 = DiGraph::clique(3).unwrap();
    let k4 = DiGraph::clique(4).unwrap();
    assert!(
        check_partition_condition(&k4, 1, PartitionCondition::Bcs)
            .unwrap()
            .holds
    );
    assert!(
        !check_partition_condition(&k3, 1, PartitionCondition::Bcs)
            .unwrap()
            .holds
    );
    assert!(
        check_partition_condition(&k3, 1, PartitionCondition::Cca)
            .unwrap()
            .holds
    );
    assert!(
        check_partition_condition(&k3, 1, PartitionCondition::Ccs)
            .unwrap()
            .holds
    );
    assert!(!naive_partition(&k3, 1, PartitionCondition::Bcs));
    assert!(naive_partition(&k3, 1, PartitionCondition::Cca));
}

#[test]
fn point_examples() {
    let k4 = DiGraph::clique(4).unwrap();
    assert!(check_point(&k4, set(&[0, 1]), set(&[2]), 2).unwrap());
    let chain = DiGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
    assert!(!check_point(&chain, set(&[0]), set(&[2]), 1).unwrap());
    assert!(check_point(&chain, set(&[1]), set(&[0]), 0).unwrap());
    assert!(check_point(&chain, set(&[0]), NodeSet::EMPTY, 1).is_err());
}

#[test]
fn reach_matches_definition_exhaustively() {
    for n in 1..=4 {
        for g in all_graphs(n) {
            for k in 1..=3 {
                let v = check_k_reach(&g, 1, k).unwrap();
                assert_eq!(v.holds, naive_k_reach(&g, 1, k), "{g:?} k={k}");
                if let Some(w) = v.witness {
                    assert!(w.verify(&g, 1), "{w}");
                }
            }
        }
    }
}

#[test]
fn partition_matches_definition_exhaustively() {
    for n in 1..=4 {
        for g in all_graphs(n) {
            for which in [
                PartitionCondition::Ccs,
                PartitionCondition::Cca,
                PartitionCondition::Bcs,
            ] {
                let v = check_partition_condition(&g, 1, which).unwrap();
                assert_eq!(v.holds, naive_partition(&g, 1, which), "{g:?} {which:?}");
                if let Some(w) = v.witness {
                    assert!(w.verify(&g, 1), "{w}");
                }
            }
        }
    }
}

#[test]
fn generic_k_matches_definition() {
    for g in all_graphs(3).step_by(3) {
        for k in 4..=5 {
            assert_eq!(
                check_k_reach(&g, 1, k).unwrap().holds,
                naive_k_reach(&g, 1, k),
                "{g:?} k={k}"
            );
        }
    }
    assert!(
        check_k_reach(&DiGraph::clique(5).unwrap(), 1, 4)
            .unwrap()
            .holds
    );
    assert!(
        !check_k_reach(&DiGraph::clique(4).unwrap(), 1, 4)
            .unwrap()
            .holds
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn reach_matches_definition(g in arb_graph(4, 6), f in 1usize..=2, k in 1usize..=3) {
        let v = check_k_reach(&g, f, k).unwrap();
        prop_assert_eq!(v.holds, naive_k_reach(&g, f, k));
        if let Some(w) = v.witness {
            prop_assert!(w.verify(&g, f));
        }
    }

    #[test]
    fn monotone_in_f(g in arb_graph(3, 6), k in 1usize..=3) {
        if check_k_reach(&g, 2, k).unwrap().holds {
            prop_assert!(check_k_reach(&g, 1, k).unwrap().holds);
        }
        if check_k_reach(&g, 1, k).unwrap().holds {
            prop_assert!(check_k_reach(&g, 0, k).unwrap().holds);
        }
    }

    #[test]
    fn partition_matches_definition(g in arb_graph(5, 5), which in 0usize..3) {
        let which = [PartitionCondition::Ccs, PartitionCondition::Cca, PartitionCondition::Bcs][which];
        prop_assert_eq!(check_partition_condition(&g, 1, which).unwrap().holds, naive_partition(&g, 1, which));
    }
}
