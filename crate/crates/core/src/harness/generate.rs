//! Graph families for `reachcons gen` and scenario files.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::graph::{DiGraph, NodeId};

pub fn clique(n: usize) -> Result<DiGraph> {
    DiGraph::clique(n)
}

/// Each ordered pair `(u, v)`, `u != v`, is an edge with probability `p`,
/// drawn in lexicographic pair order.
pub fn random(n: usize, p: f64, seed: u64) -> Result<DiGraph> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("edge probability must lie in [0, 1], got {p}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = DiGraph::new(n)?;
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen_bool(p) {
                g.add_edge(u, v)?;
            }
        }
    }
    Ok(g)
}

/// Two complete digraphs `A = 0..size` and `B = size..2·size` joined by
/// `bridges` edges from `A` to `B`. The first `min(bridges, size)` bridges
/// are the matching `i → size + i`; the rest are distinct random pairs.
pub fn two_cliques(size: usize, bridges: usize, seed: u64) -> Result<DiGraph> {
    if size == 0 {
        return invalid("clique size must be positive");
    }
    if bridges > size * size {
        return invalid(format!(
            "at most {} bridges fit between two {size}-cliques",
            size * size
        ));
    }
    let mut g = DiGraph::new(2 * size)?;
    for base in [0, size] {
        for u in 0..size {
            for v in 0..size {
                if u != v {
                    g.add_edge(base + u, base + v)?;
                }
            }
        }
    }
    let matched = bridges.min(size);
    for i in 0..matched {
        g.add_edge(i, size + i)?;
    }
    let mut rest: Vec<(NodeId, NodeId)> = (0..size)
        .flat_map(|a| {
            (0..size)
                .filter(move |&b| b != a)
                .map(move |b| (a, size + b))
        })
        .collect();
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for &(a, b) in rest.iter().take(bridges - matched) {
        g.add_edge(a, b)?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_counts() {
        assert_eq!(clique(4).unwrap().edge_count(), 12);
        assert_eq!(two_cliques(7, 8, 3).unwrap().edge_count(), 92);
        assert_eq!(two_cliques(3, 9, 0).unwrap().edge_count(), 21);
        assert!(two_cliques(3, 10, 0).is_err());
    }

    #[test]
    fn bridges_only_run_forward() {
        let g = two_cliques(7, 8, 11).unwrap();
        assert!(g
            .edges()
            .filter(|&(u, v)| (u < 7) != (v < 7))
            .all(|(u, _)| u < 7));
        assert!((0..7).all(|i| g.has_edge(i, 7 + i)));
    }

    #[test]
    fn random_is_seeded() {
        assert_eq!(random(5, 0.5, 7).unwrap(), random(5, 0.5, 7).unwrap());
        assert_eq!(random(5, 1.0, 0).unwrap(), clique(5).unwrap());
        assert_eq!(random(5, 0.0, 0).unwrap().edge_count(), 0);
        assert!(random(5, 1.5, 0).is_err());
    }
}
