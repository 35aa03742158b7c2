use std::collections::HashMap;

use rayon::prelude::*;

use super::WalkCorpus;
use crate::error::{Error, Result};

/// Walks are split into this many contiguous shards whatever the thread
/// count, so shard sums and their merge order are fixed.
const SHARDS: usize = 4;
/// Above this node count shards accumulate into hash maps instead of a dense
/// upper triangle.
const DENSE_LIMIT: usize = 3000;

/// Sparse positive co-occurrence weights.
///
/// A symmetric store keeps each unordered pair once as `(i, j)` with `i < j`
/// and mirrors it on lookup. An asymmetric store keeps ordered pairs.
/// Entries are sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceStore {
    node_count: usize,
    entries: Vec<(u32, u32, f64)>,
    symmetric: bool,
}

impl CooccurrenceStore {
    /// Builds a symmetric store from unordered pairs. Pairs may come in
    /// either orientation; repeats are summed.
    pub fn from_pairs(
        node_count: usize,
        pairs: impl IntoIterator<Item = (u32, u32, f64)>,
    ) -> Result<Self> {
        Self::collect(node_count, pairs, true)
    }

    /// Builds an asymmetric store from ordered pairs.
    pub fn from_ordered_pairs(
        node_count: usize,
        pairs: impl IntoIterator<Item = (u32, u32, f64)>,
    ) -> Result<Self> {
        Self::collect(node_count, pairs, false)
    }

    fn collect(
        node_count: usize,
        pairs: impl IntoIterator<Item = (u32, u32, f64)>,
        symmetric: bool,
    ) -> Result<Self> {
        let mut map: HashMap<(u32, u32), f64> = HashMap::new();
        for (i, j, w) in pairs {
            if i as usize >= node_count || j as usize >= node_count {
                return Err(Error::Dimension(format!(
                    "pair ({i}, {j}) outside {node_count} nodes"
                )));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Numerical(format!(
                    "co-occurrence weight {w} for ({i}, {j}) must be positive"
                )));
            }
            if i == j {
                continue;
            }
            let key = if symmetric {
                (i.min(j), i.max(j))
            } else {
                (i, j)
            };
            *map.entry(key).or_insert(0.0) += w;
        }
        let mut entries: Vec<_> = map.into_iter().map(|((i, j), w)| (i, j, w)).collect();
        entries.sort_unstable_by_key(|e| (e.0, e.1));
        Ok(CooccurrenceStore {
            node_count,
            entries,
            symmetric,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Number of stored entries (unordered pairs when symmetric).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stored entries in `(i, j)` order.
    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn get(&self, i: u32, j: u32) -> f64 {
        let key = if self.symmetric {
            (i.min(j), i.max(j))
        } else {
            (i, j)
        };
        self.entries
            .binary_search_by_key(&key, |e| (e.0, e.1))
            .map(|idx| self.entries[idx].2)
            .unwrap_or(0.0)
    }

    /// Every nonzero `C_ij` as an ordered pair; symmetric entries appear in
    /// both orientations.
    pub fn ordered_pairs(&self) -> Vec<(u32, u32, f64)> {
        if !self.symmetric {
            return self.entries.clone();
        }
        let mut out = Vec::with_capacity(2 * self.entries.len());
        for &(i, j, w) in &self.entries {
            out.push((i, j, w));
            out.push((j, i, w));
        }
        out
    }

    /// Sum of all `C_ij` over ordered pairs.
    pub fn total_mass(&self) -> f64 {
        let s: f64 = self.entries.iter().map(|e| e.2).sum();
        if self.symmetric {
            2.0 * s
        } else {
            s
        }
    }
}

fn tri_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

enum Shard {
    Dense(Vec<f64>),
    Sparse(HashMap<(u32, u32), f64>),
}

fn for_each_pair(walks: &[Vec<u32>], window: usize, mut visit: impl FnMut(u32, u32, f64)) {
    for walk in walks {
        for (p, &i) in walk.iter().enumerate() {
            for (k, &j) in walk[p + 1..].iter().take(window).enumerate() {
                if i != j {
                    visit(i.min(j), i.max(j), 1.0 / (k + 1) as f64);
                }
            }
        }
    }
}

fn accumulate(walks: &[Vec<u32>], n: usize, window: usize) -> Shard {
    if n <= DENSE_LIMIT {
        let mut tri = vec![0.0; n * n.saturating_sub(1) / 2];
        for_each_pair(walks, window, |lo, hi, w| {
            tri[tri_index(n, lo as usize, hi as usize)] += w
        });
        Shard::Dense(tri)
    } else {
        let mut map = HashMap::new();
        for_each_pair(walks, window, |lo, hi, w| {
            *map.entry((lo, hi)).or_insert(0.0) += w
        });
        Shard::Sparse(map)
    }
}

/// Counts walk co-occurrences within `window` steps, weighting a pair at
/// distance `k` by `1/k`. The result is symmetric.
pub fn build_cooccurrence(corpus: &WalkCorpus, window: usize) -> Result<CooccurrenceStore> {
    if window == 0 {
        return Err(Error::Config(
            "co-occurrence window must be at least 1".into(),
        ));
    }
    let n = corpus.node_count;
    if let Some(bad) = corpus.walks.iter().flatten().find(|&&v| v as usize >= n) {
        return Err(Error::Dimension(format!("walk node {bad} outside 0..{n}")));
    }
    let chunk = corpus.walks.len().div_ceil(SHARDS).max(1);
    let shards: Vec<Shard> = corpus
        .walks
        .par_chunks(chunk)
        .map(|walks| accumulate(walks, n, window))
        .collect();

    let mut entries = Vec::new();
    if n <= DENSE_LIMIT {
        let mut total = vec![0.0; n * n.saturating_sub(1) / 2];
        for shard in shards {
            if let Shard::Dense(tri) = shard {
                for (t, s) in total.iter_mut().zip(tri) {
                    *t += s;
                }
            }
        }
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                if total[idx] > 0.0 {
                    entries.push((i as u32, j as u32, total[idx]));
                }
                idx += 1;
            }
        }
    } else {
        let mut total: HashMap<(u32, u32), f64> = HashMap::new();
        for shard in shards {
            if let Shard::Sparse(map) = shard {
                // Per-key sums depend only on shard order, not map order.
                for (key, w) in map {
                    *total.entry(key).or_insert(0.0) += w;
                }
            }
        }
        entries = total.into_iter().map(|((i, j), w)| (i, j, w)).collect();
        entries.sort_unstable_by_key(|e| (e.0, e.1));
    }
    Ok(CooccurrenceStore {
        node_count: n,
        entries,
        symmetric: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(walks: Vec<Vec<u32>>, n: usize) -> WalkCorpus {
        WalkCorpus {
            walk_length: walks.first().map_or(0, Vec::len),
            walks,
            walks_per_node: 1,
            seed: 0,
            node_count: n,
        }
    }

    #[test]
    fn three_node_walk_window_two() {
        let store = build_cooccurrence(&corpus(vec![vec![0, 1, 2]], 3), 2).unwrap();
        assert_eq!(store.get(0, 1), 1.0);
        assert_eq!(store.get(1, 0), 1.0);
        assert_eq!(store.get(1, 2), 1.0);
        assert_eq!(store.get(2, 1), 1.0);
        assert_eq!(store.get(0, 2), 0.5);
        assert_eq!(store.get(2, 0), 0.5);
        assert_eq!(store.len(), 3);
    }

    #[test]
    fn empty_corpus_gives_empty_store() {
        let store = build_cooccurrence(&corpus(vec![], 4), 3).unwrap();
        assert!(store.is_empty());
        assert_eq!(store.total_mass(), 0.0);
    }

    #[test]
    fn zero_window_rejected() {
        assert!(build_cooccurrence(&corpus(vec![vec![0, 1]], 2), 0).is_err());
    }

    #[test]
    fn self_pairs_skipped() {
        let store = build_cooccurrence(&corpus(vec![vec![0, 0, 1]], 2), 2).unwrap();
        assert_eq!(store.get(0, 0), 0.0);
        assert_eq!(store.get(0, 1), 1.0 + 0.5);
    }

    #[test]
    fn ordered_pairs_mirror_entries() {
        let store = build_cooccurrence(&corpus(vec![vec![0, 1, 2]], 3), 1).unwrap();
        let pairs = store.ordered_pairs();
        assert_eq!(pairs.len(), 4);
        assert!(pairs.contains(&(1, 0, 1.0)));
    }

    #[test]
    fn dense_and_sparse_paths_agree() {
        let walks: Vec<Vec<u32>> = (0..50u32)
            .map(|s| (0..12).map(|k| (s * 7 + k * 13) % 40).collect())
            .collect();
        let dense = build_cooccurrence(&corpus(walks.clone(), 40), 4).unwrap();
        let shards: Vec<_> = walks
            .chunks(walks.len().div_ceil(SHARDS))
            .map(|w| {
                let mut map = HashMap::new();
                for_each_pair(w, 4, |i, j, x| *map.entry((i, j)).or_insert(0.0) += x);
                map
            })
            .collect();
        let mut merged: HashMap<(u32, u32), f64> = HashMap::new();
        for map in shards {
            for (k, w) in map {
                *merged.entry(k).or_insert(0.0) += w;
            }
        }
        assert_eq!(merged.len(), dense.len());
        for &(i, j, w) in dense.entries() {
            assert_eq!(merged[&(i, j)], w);
        }
    }

    proptest! {
        #[test]
        fn mass_matches_closed_form(
            walks in proptest::collection::vec(
                proptest::collection::vec(0u32..1000, 6), 1..20),
            window in 1usize..8,
        ) {
            // Distinct ids within each walk so no pair is skipped as a self-pair.
            let walks: Vec<Vec<u32>> = walks
                .into_iter()
                .enumerate()
                .map(|(w, walk)| walk.iter().enumerate()
                    .map(|(p, &x)| (x % 100) * 6 + p as u32 + (w as u32 % 3) * 600)
                    .collect())
                .collect();
            let c = corpus(walks.clone(), 2000);
            let store = build_cooccurrence(&c, window).unwrap();
            let expected: f64 = walks.iter().map(|w| {
                let len = w.len();
                (1..=window.min(len - 1))
                    .map(|k| 2.0 * (len - k) as f64 / k as f64)
                    .sum::<f64>()
            }).sum();
            prop_assert!((store.total_mass() - expected).abs() <= 1e-9 * expected.max(1.0));
        }

        #[test]
        fn store_is_symmetric(
            walks in proptest::collection::vec(
                proptest::collection::vec(0u32..15, 2..10), 1..10),
            window in 1usize..5,
        ) {
            let store = build_cooccurrence(&corpus(walks, 15), window).unwrap();
            for &(i, j, w) in store.entries() {
                prop_assert!(w > 0.0);
                prop_assert_eq!(store.get(i, j), store.get(j, i));
            }
        }
    }
}
