use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::retrieval::{attack_direction, attacked_in_top_k, cooccurrence_nn, mrr, nlp_debias};
use super::{
    attacked_item_metadata, attacker_metadata, inject_attack, AttackSpec, MetadataScope,
    RatingGraph,
};
use crate::error::{Error, Result};
use crate::graph::{build_cooccurrence, filter_walks, generate_walks};
use crate::linalg::{distance_correlation, frobenius};
use crate::rng::derive_seed;
use crate::stats::{self, MeanStd};
use crate::train::{combined_embedding, random_embedding, train, TrainConfig, Variant};

const ATTACK_TAG: u64 = 1;
const WALK_TAG: u64 = 2;
const TRAIN_TAG: u64 = 3;
const RANDOM_TAG: u64 = 4;
const DISTANCE_TAG: u64 = 5;

/// Name under which MONET at relaxation `lambda` is reported.
pub fn monet_method_name(lambda: f64) -> String {
    format!("monet_{lambda:.2}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShillingConfig {
    pub repetitions: usize,
    pub seed: u64,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub influence_size: usize,
    pub attacker_fraction: f64,
    pub known_fraction: f64,
    pub top_k: usize,
    pub metadata_scope: MetadataScope,
    pub lambdas: Vec<f64>,
    /// Node pairs sampled for the distance correlation; 0 uses every pair.
    pub distance_pairs: usize,
    /// Shared training settings; variant and lambda are set per method.
    pub train: TrainConfig,
}

impl Default for ShillingConfig {
    fn default() -> Self {
        ShillingConfig {
            repetitions: 10,
            seed: 0,
            walks_per_node: 80,
            walk_length: 40,
            window: 10,
            influence_size: 10,
            attacker_fraction: 0.05,
            known_fraction: 0.5,
            top_k: 20,
            metadata_scope: MetadataScope::AttackedItems,
            lambdas: vec![0.25, 0.5, 0.75, 1.0],
            distance_pairs: 0,
            train: TrainConfig {
                dims: 128,
                meta_dims: 1,
                epochs: 10,
                lambda: 1.0,
                ..Default::default()
            },
        }
    }
}

impl ShillingConfig {
    /// Reported methods in a fixed order.
    pub fn method_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["random", "glove", "glove_meta", "nlp"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        names.extend(self.lambdas.iter().map(|&l| monet_method_name(l)));
        names
    }

    fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be positive".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::Config(format!("lambda {l} outside [0, 1]")));
        }
        let mut names = self.method_names();
        names.sort();
        names.dedup();
        if names.len() != 4 + self.lambdas.len() {
            return Err(Error::Config(
                "lambda grid has duplicates at two decimals".into(),
            ));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be positive".into()));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShillingMethodReport {
    pub lambda: Option<f64>,
    pub attacked_top20: MeanStd,
    pub mrr: MeanStd,
    /// Mean MRR over the mean MRR of the random embedding.
    pub mrr_lift: f64,
    /// Pearson r of cosine distances against GloVe; absent for GloVe itself.
    pub distance_r: Option<MeanStd>,
    /// Mean seconds spent producing the embedding, excluding evaluation.
    pub wall_time_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShillingReport {
    pub methods: BTreeMap<String, ShillingMethodReport>,
    /// Per-repetition attacked counts for each method.
    pub attacked_runs: BTreeMap<String, Vec<f64>>,
    /// Per-repetition training seconds for each method.
    pub wall_time_runs: BTreeMap<String, Vec<f64>>,
    /// Largest `|W_nlp a| / (|W|_F |a|)` over repetitions.
    pub nlp_rejection_residual: f64,
    pub repetitions: usize,
}

impl ShillingReport {
    pub fn method(&self, name: &str) -> Option<&ShillingMethodReport> {
        self.methods.get(name)
    }

    /// `{method -> {attacked_top20, mrr, mrr_lift, distance_r, wall_time_sec}}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.methods).expect("report serialises")
    }

    /// Trade-off points: MRR lift against attacked items, one row per method.
    pub fn tradeoff_tsv(&self) -> String {
        let mut out = String::from(
            "method\tlambda\tmrr_lift\tattacked_top20_mean\tattacked_top20_std\tmrr_mean\tmrr_std\tdistance_r\twall_time_sec\n",
        );
        for (name, m) in &self.methods {
            let lambda = m.lambda.map_or_else(|| "NA".into(), |l| l.to_string());
            let r = m
                .distance_r
                .map_or_else(|| "NA".into(), |r| r.mean.to_string());
            out.push_str(&format!(
                "{name}\t{lambda}\t{}\t{}\t{}\t{}\t{}\t{r}\t{}\n",
                m.mrr_lift,
                m.attacked_top20.mean,
                m.attacked_top20.std,
                m.mrr.mean,
                m.mrr.std,
                m.wall_time_sec
            ));
        }
        out
    }
}

struct MethodRun {
    attacked: f64,
    mrr: f64,
    distance_r: Option<f64>,
    wall_time_sec: f64,
}

struct RepetitionRun {
    methods: Vec<MethodRun>,
    nlp_residual: f64,
}

fn run_repetition(rg: &RatingGraph, config: &ShillingConfig, rep: usize) -> Result<RepetitionRun> {
    let rep_seed = derive_seed(config.seed, &[rep as u64]);
    let spec = AttackSpec::sample(
        rg,
        config.influence_size,
        config.attacker_fraction,
        config.known_fraction,
        derive_seed(rep_seed, &[ATTACK_TAG]),
    )?;
    let attacked = inject_attack(rg, &spec)?;
    let meta = match config.metadata_scope {
        MetadataScope::AttackedItems => attacked_item_metadata(&attacked, &spec)?,
        MetadataScope::AllRatings => attacker_metadata(&attacked, &spec)?,
    };

    let n_users = attacked.n_users() as u32;
    let n_items = attacked.n_items();
    let walks = generate_walks(
        &attacked.graph,
        config.walks_per_node,
        config.walk_length,
        derive_seed(rep_seed, &[WALK_TAG]),
    )?;
    let items =
        filter_walks(&walks, |node| node >= n_users).relabel(n_items, |node| node - n_users)?;
    drop(walks);
    let cooc = build_cooccurrence(&items, config.window)?;
    let nn = cooccurrence_nn(&cooc);
    log::info!("repetition {rep}: {} co-occurring item pairs", cooc.len());

    // Each method is an independent training run with its own seed.
    let fit = |method: u64, variant: Variant, lambda: f64| -> Result<(Array2<f64>, f64)> {
        let cfg = TrainConfig {
            variant,
            lambda,
            seed: derive_seed(rep_seed, &[TRAIN_TAG, method]),
            ..config.train.clone()
        };
        let outcome = train(&cooc, variant.uses_metadata().then_some(&meta), &cfg)?;
        Ok((combined_embedding(&outcome.state)?.0, outcome.wall_time_sec))
    };

    let mut embeddings: Vec<(Array2<f64>, f64)> = Vec::with_capacity(4 + config.lambdas.len());
    let start = Instant::now();
    let random = random_embedding(
        n_items,
        config.train.dims,
        derive_seed(rep_seed, &[RANDOM_TAG]),
    );
    embeddings.push((random, start.elapsed().as_secs_f64()));
    let glove = fit(1, Variant::Glove, config.train.lambda)?;
    embeddings.push(glove);
    embeddings.push(fit(2, Variant::GloveMeta, config.train.lambda)?);

    let start = Instant::now();
    let glove_w = &embeddings[1].0;
    let direction = attack_direction(glove_w.view(), meta.values().column(0))?;
    let nlp = nlp_debias(glove_w.view(), direction.view())?;
    let nlp_time = embeddings[1].1 + start.elapsed().as_secs_f64();
    let residual = nlp.dot(&direction);
    let nlp_residual = residual.dot(&residual).sqrt()
        / (frobenius(glove_w.view()) * direction.dot(&direction).sqrt());
    embeddings.push((nlp, nlp_time));
    for (k, &lambda) in config.lambdas.iter().enumerate() {
        embeddings.push(fit(4 + k as u64, Variant::Monet, lambda)?);
    }

    let distance_seed = derive_seed(rep_seed, &[DISTANCE_TAG]);
    let methods = embeddings
        .iter()
        .enumerate()
        .map(|(idx, (w, wall))| {
            let distance_r = if idx == 1 {
                None
            } else {
                Some(distance_correlation(
                    w.view(),
                    embeddings[1].0.view(),
                    config.distance_pairs,
                    distance_seed,
                )?)
            };
            Ok(MethodRun {
                attacked: attacked_in_top_k(w.view(), &spec, config.top_k)? as f64,
                mrr: mrr(w.view(), &nn)?,
                distance_r,
                wall_time_sec: *wall,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for (name, run) in config.method_names().iter().zip(&methods) {
        log::info!(
            "repetition {rep}: {name} attacked {} mrr {:.5}",
            run.attacked,
            run.mrr
        );
    }
    Ok(RepetitionRun {
        methods,
        nlp_residual,
    })
}

/// Runs the shilling attack experiment: per repetition, inject an attack,
/// build item co-occurrences from user-skipping walks, fit every method on
/// them and score retrieval. Repetitions run in parallel.
pub fn run_shilling_experiment(
    rg: &RatingGraph,
    config: &ShillingConfig,
) -> Result<ShillingReport> {
    config.validate()?;
    let reps: Vec<RepetitionRun> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(rg, config, rep))
        .collect::<Result<_>>()?;

    let names = config.method_names();
    let column = |m: usize, f: fn(&MethodRun) -> f64| -> Vec<f64> {
        reps.iter().map(|r| f(&r.methods[m])).collect()
    };
    let random_mrr = stats::mean(&column(0, |r| r.mrr));
    let mut methods = BTreeMap::new();
    let mut attacked_runs = BTreeMap::new();
    let mut wall_time_runs = BTreeMap::new();
    for (m, name) in names.iter().enumerate() {
        let attacked = column(m, |r| r.attacked);
        let mrrs = column(m, |r| r.mrr);
        let walls = column(m, |r| r.wall_time_sec);
        let distance: Vec<f64> = reps
            .iter()
            .filter_map(|r| r.methods[m].distance_r)
            .collect();
        let mrr = MeanStd::of(&mrrs);
        methods.insert(
            name.clone(),
            ShillingMethodReport {
                lambda: m.checked_sub(4).map(|i| config.lambdas[i]),
                attacked_top20: MeanStd::of(&attacked),
                mrr,
                mrr_lift: mrr.mean / random_mrr,
                distance_r: (!distance.is_empty()).then(|| MeanStd::of(&distance)),
                wall_time_sec: stats::mean(&walls),
            },
        );
        attacked_runs.insert(name.clone(), attacked);
        wall_time_runs.insert(name.clone(), walls);
    }
    Ok(ShillingReport {
        methods,
        attacked_runs,
        wall_time_runs,
        nlp_rejection_residual: reps.iter().map(|r| r.nlp_residual).fold(0.0, f64::max),
        repetitions: config.repetitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_ratings() -> RatingGraph {
        // 60 users in three taste groups over 30 items.
        let ratings = (0..60).flat_map(|u: usize| {
            let base = (u % 3) * 10;
            (0..6).map(move |k| (u, base + (u * 7 + k * 3) % 10))
        });
        RatingGraph::from_ratings(60, 30, ratings).unwrap()
    }

    fn small_config() -> ShillingConfig {
        ShillingConfig {
            repetitions: 2,
            walks_per_node: 4,
            walk_length: 10,
            window: 3,
            influence_size: 3,
            attacker_fraction: 0.1,
            top_k: 5,
            lambdas: vec![0.5, 1.0],
            distance_pairs: 0,
            train: TrainConfig {
                dims: 4,
                meta_dims: 1,
                epochs: 2,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn small_run_reports_every_method() {
        let report = run_shilling_experiment(&toy_ratings(), &small_config()).unwrap();
        let names = small_config().method_names();
        assert_eq!(report.methods.len(), names.len());
        for name in &names {
            let m = report.method(name).unwrap();
            assert!((0.0..=3.0).contains(&m.attacked_top20.mean), "{name}");
            assert!(m.mrr.mean > 0.0 && m.mrr.mean <= 1.0, "{name}");
            assert_eq!(m.distance_r.is_none(), name == "glove");
        }
        assert_eq!(report.method("random").unwrap().mrr_lift, 1.0);
        assert_eq!(report.method("monet_1.00").unwrap().lambda, Some(1.0));
        assert!(report.nlp_rejection_residual < 1e-10);
        assert_eq!(report.tradeoff_tsv().lines().count(), names.len() + 1);
        let json = report.to_json();
        assert!(json["monet_0.50"]["attacked_top20"]["mean"].is_number());
    }

    #[test]
    fn runs_are_deterministic() {
        let mut a = run_shilling_experiment(&toy_ratings(), &small_config()).unwrap();
        let mut b = run_shilling_experiment(&toy_ratings(), &small_config()).unwrap();
        for r in [&mut a, &mut b] {
            r.wall_time_runs.clear();
            for m in r.methods.values_mut() {
                m.wall_time_sec = 0.0;
            }
        }
        assert_eq!(a, b);
    }

    #[test]
    fn single_repetition_has_zero_spread() {
        let cfg = ShillingConfig {
            repetitions: 1,
            ..small_config()
        };
        let report = run_shilling_experiment(&toy_ratings(), &cfg).unwrap();
        assert!(report
            .methods
            .values()
            .all(|m| m.attacked_top20.std == 0.0 && m.mrr.std == 0.0));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let rg = toy_ratings();
        for cfg in [
            ShillingConfig {
                repetitions: 0,
                ..small_config()
            },
            ShillingConfig {
                lambdas: vec![1.5],
                ..small_config()
            },
            ShillingConfig {
                lambdas: vec![0.5, 0.501],
                ..small_config()
            },
        ] {
            assert!(matches!(
                run_shilling_experiment(&rg, &cfg),
                Err(Error::Config(_))
            ));
        }
    }
}
