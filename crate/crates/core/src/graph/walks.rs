use rand::Rng;
use rayon::prelude::*;

use super::Graph;
use crate::error::{Error, Result};
use crate::rng;

/// Uniform random walks over a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<u32>>,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub seed: u64,
    /// Size of the node id space the walks are drawn from.
    pub node_count: usize,
}

impl WalkCorpus {
    pub fn len(&self) -> usize {
        self.walks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walks.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }

    /// Rewrites node ids through `map` into a new id space of size
    /// `node_count`.
    pub fn relabel(mut self, node_count: usize, map: impl Fn(u32) -> u32) -> Result<Self> {
        for walk in &mut self.walks {
            for node in walk.iter_mut() {
                let new = map(*node);
                if new as usize >= node_count {
                    return Err(Error::Dimension(format!(
                        "relabelled node {new} outside 0..{node_count}"
                    )));
                }
                *node = new;
            }
        }
        self.node_count = node_count;
        Ok(self)
    }
}

/// Draws `walks_per_node` walks of `walk_length` nodes from every
/// non-isolated node. Walk `k` from node `s` uses its own generator seeded by
/// `(seed, s, k)`, so the corpus does not depend on thread scheduling.
pub fn generate_walks(
    g: &Graph,
    walks_per_node: usize,
    walk_length: usize,
    seed: u64,
) -> Result<WalkCorpus> {
    if walk_length < 2 {
        return Err(Error::Config(format!(
            "walk_length must be at least 2, got {walk_length}"
        )));
    }
    let isolated = (0..g.node_count() as u32)
        .filter(|&s| g.degree(s) == 0)
        .count();
    if isolated > 0 {
        log::warn!("skipping {isolated} isolated nodes as walk starts");
    }

    let per_node: Vec<Vec<Vec<u32>>> = (0..g.node_count() as u32)
        .into_par_iter()
        .map(|start| {
            if g.degree(start) == 0 {
                return Vec::new();
            }
            (0..walks_per_node)
                .map(|k| {
                    let mut rng = rng::child(seed, &[start as u64, k as u64]);
                    let mut walk = Vec::with_capacity(walk_length);
                    let mut cur = start;
                    walk.push(cur);
                    for _ in 1..walk_length {
                        let nbrs = g.neighbors(cur);
                        cur = nbrs[rng.random_range(0..nbrs.len())];
                        walk.push(cur);
                    }
                    walk
                })
                .collect()
        })
        .collect();

    Ok(WalkCorpus {
        walks: per_node.into_iter().flatten().collect(),
        walk_length,
        walks_per_node,
        seed,
        node_count: g.node_count(),
    })
}

/// Deletes nodes failing `keep` from every walk, preserving order, and drops
/// walks left with fewer than two nodes.
pub fn filter_walks(corpus: &WalkCorpus, keep: impl Fn(u32) -> bool + Sync) -> WalkCorpus {
    let walks = corpus
        .walks
        .par_iter()
        .map(|walk| {
            walk.iter()
                .copied()
                .filter(|&n| keep(n))
                .collect::<Vec<_>>()
        })
        .filter(|walk| walk.len() >= 2)
        .collect();
    WalkCorpus {
        walks,
        ..corpus.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn forced_walk_on_single_edge() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let corpus = generate_walks(&g, 5, 4, 1).unwrap();
        for walk in corpus.walks.iter().filter(|w| w[0] == 0) {
            assert_eq!(walk, &vec![0, 1, 0, 1]);
        }
        assert_eq!(corpus.len(), 10);
    }

    #[test]
    fn triangle_transitions_are_uniform() {
        let g = Graph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let corpus = generate_walks(&g, 10_000, 2, 99).unwrap();
        let from_zero: Vec<_> = corpus.walks.iter().filter(|w| w[0] == 0).collect();
        assert_eq!(from_zero.len(), 10_000);
        let ones = from_zero.iter().filter(|w| w[1] == 1).count() as f64 / 10_000.0;
        assert!((ones - 0.5).abs() <= 0.02, "frequency of node 1 was {ones}");
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap();
        let a = generate_walks(&g, 3, 10, 42).unwrap();
        let b = generate_walks(&g, 3, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_walks(&g, 3, 10, 43).unwrap();
        assert_ne!(a.walks, c.walks);
    }

    #[test]
    fn short_walks_rejected() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        assert!(matches!(generate_walks(&g, 1, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn isolated_nodes_skipped() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        let corpus = generate_walks(&g, 2, 3, 0).unwrap();
        assert_eq!(corpus.len(), 4);
        assert!(corpus.walks.iter().all(|w| !w.contains(&2)));
    }

    #[test]
    fn filter_keeps_order() {
        let corpus = WalkCorpus {
            walks: vec![vec![0, 10, 1, 11]],
            walk_length: 4,
            walks_per_node: 1,
            seed: 0,
            node_count: 12,
        };
        let items = filter_walks(&corpus, |n| n >= 10);
        assert_eq!(items.walks, vec![vec![10, 11]]);
        assert_eq!(filter_walks(&corpus, |_| true), corpus);
        assert!(filter_walks(&corpus, |_| false).is_empty());
    }

    #[test]
    fn filter_drops_singletons() {
        let corpus = WalkCorpus {
            walks: vec![vec![0, 10, 1], vec![10, 0, 11]],
            walk_length: 3,
            walks_per_node: 1,
            seed: 0,
            node_count: 12,
        };
        assert_eq!(filter_walks(&corpus, |n| n >= 10).walks, vec![vec![10, 11]]);
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (3usize..12).prop_flat_map(|n| {
            proptest::collection::vec((0..n as u32, 0..n as u32), 1..40)
                .prop_map(move |edges| Graph::new(n, edges).unwrap())
        })
    }

    proptest! {
        #[test]
        fn walks_follow_edges(g in arb_graph(), seed in any::<u64>()) {
            let corpus = generate_walks(&g, 2, 8, seed).unwrap();
            for walk in &corpus.walks {
                prop_assert_eq!(walk.len(), 8);
                for pair in walk.windows(2) {
                    prop_assert!(g.has_edge(pair[0], pair[1]));
                }
            }
        }
    }
}
