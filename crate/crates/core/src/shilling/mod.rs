//! Shilling attacks on a user-item rating graph and the item-retrieval
//! metrics used to measure their effect on embeddings.

mod experiment;
mod retrieval;

pub use experiment::{
    monet_method_name, run_shilling_experiment, ShillingConfig, ShillingMethodReport,
    ShillingReport,
};
pub use retrieval::{
    attack_direction, attacked_in_top_k, cooccurrence_nn, mrr, nlp_debias, rank_of, topk_neighbors,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, MetadataMatrix, NodeType};
use crate::rng;

/// Bipartite rating graph. Users occupy node ids `0..n_users`; item `i` is
/// node `n_users + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingGraph {
    pub graph: Graph,
    /// Original id of each user index.
    pub user_ids: Vec<u64>,
    /// Original id of each item index.
    pub item_ids: Vec<u64>,
}

impl RatingGraph {
    /// Builds a graph from `(user index, item index)` pairs.
    pub fn from_ratings(
        n_users: usize,
        n_items: usize,
        ratings: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut edges = Vec::new();
        for (u, i) in ratings {
            if u >= n_users || i >= n_items {
                return Err(Error::Dimension(format!(
                    "rating ({u}, {i}) outside {n_users} users x {n_items} items"
                )));
            }
            edges.push((u as u32, (n_users + i) as u32));
        }
        let mut types = vec![NodeType::User; n_users];
        types.resize(n_users + n_items, NodeType::Item);
        let graph = Graph::new(n_users + n_items, edges)?.with_node_types(types)?;
        Ok(RatingGraph {
            graph,
            user_ids: (0..n_users as u64).collect(),
            item_ids: (0..n_items as u64).collect(),
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn item_node(&self, item: usize) -> u32 {
        (self.n_users() + item) as u32
    }

    pub fn rating_count(&self) -> usize {
        self.graph.edge_count()
    }

    /// `index original_id` rows for users then items, for persisting the id
    /// remapping.
    pub fn mapping_tsv(&self) -> String {
        let mut out = String::from("kind\tindex\toriginal_id\n");
        for (i, id) in self.user_ids.iter().enumerate() {
            out.push_str(&format!("user\t{i}\t{id}\n"));
        }
        for (i, id) in self.item_ids.iter().enumerate() {
            out.push_str(&format!("item\t{i}\t{id}\n"));
        }
        out
    }
}

/// Reads a MovieLens `u.data` file (`user item rating timestamp`, tab
/// separated). Ratings become unweighted edges; ids are remapped to
/// contiguous indices in ascending order of the original ids.
pub fn load_movielens(path: &Path) -> Result<RatingGraph> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingData(format!(
                "{} not found; download ml-100k.zip from \
                 https://files.grouplens.org/datasets/movielens/ and extract u.data there",
                path.display()
            ))
        } else {
            Error::io(path, e)
        }
    })?;
    let mut raw = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id = |k: usize, what: &str| -> Result<u64> {
            fields[k].trim().parse().map_err(|_| {
                Error::parse(path, lineno + 1, format!("invalid {what} {:?}", fields[k]))
            })
        };
        raw.push((id(0, "user id")?, id(1, "item id")?));
    }
    if raw.is_empty() {
        return Err(Error::Empty(format!("no ratings in {}", path.display())));
    }
    let index = |ids: Vec<u64>| -> (Vec<u64>, BTreeMap<u64, usize>) {
        let map: BTreeMap<u64, usize> = ids.iter().map(|&id| (id, 0)).collect();
        let sorted: Vec<u64> = map.keys().copied().collect();
        let map = sorted.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        (sorted, map)
    };
    let (user_ids, user_map) = index(raw.iter().map(|r| r.0).collect());
    let (item_ids, item_map) = index(raw.iter().map(|r| r.1).collect());
    let mut rg = RatingGraph::from_ratings(
        user_ids.len(),
        item_ids.len(),
        raw.iter().map(|(u, i)| (user_map[u], item_map[i])),
    )?;
    rg.user_ids = user_ids;
    rg.item_ids = item_ids;
    Ok(rg)
}

/// Influence set, target item and attacking users of one shilling attack.
/// Item and user fields are indices into a [`RatingGraph`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub influence: Vec<usize>,
    pub target: usize,
    pub attackers: Vec<usize>,
    /// Attackers whose ratings are visible in the metadata.
    pub known: Vec<usize>,
    pub known_fraction: f64,
    pub seed: u64,
}

/// Rounds `x >= 0` to the nearest integer, halves up.
fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

impl AttackSpec {
    /// Samples `influence_size` influence items and a distinct target,
    /// `round(attacker_fraction * n_users)` attackers, and
    /// `round(known_fraction * attackers)` known attackers (halves up).
    pub fn sample(
        rg: &RatingGraph,
        influence_size: usize,
        attacker_fraction: f64,
        known_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(known_fraction > 0.0 && known_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "known_fraction must lie in (0, 1], got {known_fraction}"
            )));
        }
        if !(0.0..=1.0).contains(&attacker_fraction) {
            return Err(Error::Config(format!(
                "attacker_fraction must lie in [0, 1], got {attacker_fraction}"
            )));
        }
        if influence_size + 1 > rg.n_items() {
            return Err(Error::Config(format!(
                "{} items cannot hold {influence_size} influence items and a target",
                rg.n_items()
            )));
        }
        let mut rng = rng::seeded(seed);
        let items = index::sample(&mut rng, rg.n_items(), influence_size + 1).into_vec();
        let (influence, target) = (items[..influence_size].to_vec(), items[influence_size]);
        let count = round_half_up(attacker_fraction * rg.n_users() as f64);
        let attackers = index::sample(&mut rng, rg.n_users(), count).into_vec();
        let known_count = round_half_up(known_fraction * count as f64).min(count);
        let known = index::sample(&mut rng, count, known_count)
            .into_iter()
            .map(|k| attackers[k])
            .collect();
        Ok(AttackSpec {
            influence,
            target,
            attackers,
            known,
            known_fraction,
            seed,
        })
    }

    fn check(&self, rg: &RatingGraph) -> Result<()> {
        if let Some(&i) = self
            .influence
            .iter()
            .chain([&self.target])
            .find(|&&i| i >= rg.n_items())
        {
            return Err(Error::Config(format!(
                "attack item {i} unknown ({} items)",
                rg.n_items()
            )));
        }
        if let Some(&u) = self.attackers.iter().find(|&&u| u >= rg.n_users()) {
            return Err(Error::Config(format!(
                "attacker {u} unknown ({} users)",
                rg.n_users()
            )));
        }
        if self.influence.contains(&self.target) {
            return Err(Error::Config("target item is in the influence set".into()));
        }
        if let Some(k) = self.known.iter().find(|k| !self.attackers.contains(k)) {
            return Err(Error::Config(format!(
                "known attacker {k} is not an attacker"
            )));
        }
        Ok(())
    }

    /// Influence items plus the target.
    pub fn attacked_items(&self) -> impl Iterator<Item = usize> + '_ {
        self.influence.iter().copied().chain([self.target])
    }
}

/// Adds a rating from every attacker to every influence item and the
/// target. Existing ratings are kept.
pub fn inject_attack(rg: &RatingGraph, spec: &AttackSpec) -> Result<RatingGraph> {
    spec.check(rg)?;
    let extra: Vec<(u32, u32)> = spec
        .attackers
        .iter()
        .flat_map(|&u| spec.attacked_items().map(move |i| (u as u32, i)))
        .map(|(u, i)| (u, rg.item_node(i)))
        .collect();
    Ok(RatingGraph {
        graph: rg.graph.with_added_edges(extra)?,
        ..rg.clone()
    })
}

/// `n_items x 1` matrix holding, per item, the number of known attackers
/// that rated it.
pub fn attacker_metadata(attacked: &RatingGraph, spec: &AttackSpec) -> Result<MetadataMatrix> {
    spec.check(attacked)?;
    let mut counts = Array2::zeros((attacked.n_items(), 1));
    for &u in &spec.known {
        for &node in attacked.graph.neighbors(u as u32) {
            let item = node as usize - attacked.n_users();
            counts[[item, 0]] += 1.0;
        }
    }
    MetadataMatrix::new(counts)
}

/// Which items carry known-attacker counts in the metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataScope {
    /// Only the influence items and the target; every other item is 0.
    AttackedItems,
    /// Every item a known attacker rated, including their genuine ratings.
    AllRatings,
}

/// Like [`attacker_metadata`], restricted to the attacked items.
pub fn attacked_item_metadata(attacked: &RatingGraph, spec: &AttackSpec) -> Result<MetadataMatrix> {
    let full = attacker_metadata(attacked, spec)?;
    let mut counts = Array2::zeros((attacked.n_items(), 1));
    for item in spec.attacked_items() {
        counts[[item, 0]] = full.values()[[item, 0]];
    }
    MetadataMatrix::new(counts)
}
