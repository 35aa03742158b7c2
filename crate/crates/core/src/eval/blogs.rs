use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Pareto};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::probe::{probe_accuracy, ProbeConfig, ProbeKind};
use super::split_nodes;
use crate::error::{Error, Result};
use crate::graph::{
    build_cooccurrence, generate_walks, load_edge_list, load_metadata, EdgeListOptions, Graph,
    MetadataMatrix,
};
use crate::linalg::{metadata_leakage, pca_2d};
use crate::rng::{self, derive_seed};
use crate::stats::MeanStd;
use crate::train::{
    combined_embedding, metadata_importance, random_embedding, train, TrainConfig, Variant,
};

pub const BLOG_METHODS: [&str; 4] = ["random", "glove", "glove_meta", "monet"];

const SURROGATE_PARTIES: [usize; 2] = [531, 576];
const SURROGATE_EDGES: usize = 19_034;
const SURROGATE_WITHIN: f64 = 0.91;
const SURROGATE_TAIL: f64 = 2.1;
const SURROGATE_CAP: f64 = 20.0;

const WALK_TAG: u64 = 1;
const TRAIN_TAG: u64 = 2;
const RANDOM_TAG: u64 = 3;
const SPLIT_TAG: u64 = 4;

/// A graph with a binary affiliation per node.
#[derive(Debug, Clone)]
pub struct BlogData {
    pub graph: Graph,
    pub labels: Vec<usize>,
    /// One-hot affiliation, the metadata given to the metadata-aware models.
    pub metadata: MetadataMatrix,
    pub source: String,
}

impl BlogData {
    pub fn new(graph: Graph, labels: Vec<usize>, source: impl Into<String>) -> Result<Self> {
        if labels.len() != graph.node_count() {
            return Err(Error::Dimension(format!(
                "{} labels for {} nodes",
                labels.len(),
                graph.node_count()
            )));
        }
        let metadata = MetadataMatrix::one_hot(&labels, 2)?;
        Ok(BlogData {
            graph,
            labels,
            metadata,
            source: source.into(),
        })
    }
}

/// Two-party degree-corrected block model shaped like the political blogs
/// network: 1107 nodes, 19034 undirected edges, 91% of them within a
/// party, heavy-tailed degrees and no isolated nodes.
pub fn blog_surrogate(seed: u64) -> BlogData {
    let mut rng = rng::seeded(seed);
    let n: usize = SURROGATE_PARTIES.iter().sum();
    let labels: Vec<usize> = (0..n)
        .map(|i| usize::from(i >= SURROGATE_PARTIES[0]))
        .collect();
    let tail = Pareto::new(1.0, SURROGATE_TAIL).expect("valid Pareto");
    let theta: Vec<f64> = (0..n)
        .map(|_| tail.sample(&mut rng).min(SURROGATE_CAP))
        .collect();

    let members: [Vec<usize>; 2] =
        [0, 1].map(|party| (0..n).filter(|&i| labels[i] == party).collect());
    let pickers: [WeightedIndex<f64>; 2] = [0, 1].map(|party| {
        WeightedIndex::new(members[party].iter().map(|&i| theta[i])).expect("positive weights")
    });
    let anyone = WeightedIndex::new(&theta).expect("positive weights");

    let mut edges: HashSet<(u32, u32)> = HashSet::with_capacity(SURROGATE_EDGES);
    let partner = |rng: &mut rand_chacha::ChaCha8Rng, u: usize| -> usize {
        let party = if rng.random::<f64>() < SURROGATE_WITHIN {
            labels[u]
        } else {
            1 - labels[u]
        };
        members[party][pickers[party].sample(rng)]
    };
    let add = |edges: &mut HashSet<(u32, u32)>, u: usize, v: usize| {
        u != v && edges.insert((u.min(v) as u32, u.max(v) as u32))
    };

    for u in 0..n {
        loop {
            let v = partner(&mut rng, u);
            if add(&mut edges, u, v) {
                break;
            }
        }
    }
    while edges.len() < SURROGATE_EDGES {
        let u = anyone.sample(&mut rng);
        let v = partner(&mut rng, u);
        add(&mut edges, u, v);
    }
    let mut edges: Vec<_> = edges.into_iter().collect();
    edges.sort_unstable();
    let graph = Graph::new(n, edges).expect("ids in range");
    BlogData::new(
        graph,
        labels,
        format!("synthetic two-party block model (seed {seed})"),
    )
    .expect("consistent sizes")
}

/// Reads `edges.tsv` (`src dst` per line) and `labels.tsv` (one row per
/// node: a single 0/1 column or a one-hot row) from `dir`.
pub fn load_blog_data(dir: &Path) -> Result<BlogData> {
    load_blog_files(&dir.join("edges.tsv"), &dir.join("labels.tsv"))
}

/// Reads an undirected edge list and a per-node affiliation file.
pub fn load_blog_files(edges: &Path, labels_path: &Path) -> Result<BlogData> {
    for p in [edges, labels_path] {
        if !p.exists() {
            return Err(Error::MissingData(format!(
                "{} not found; export the political blogs network (e.g. from graph-tool's \
                 collection) as an undirected edge list with contiguous ids and a per-node \
                 affiliation file, or use the synthetic surrogate",
                p.display()
            )));
        }
    }
    let graph = load_edge_list(edges, EdgeListOptions::default())?;
    let meta = load_metadata(labels_path, graph.node_count())?;
    let labels = match meta.dims() {
        1 => meta
            .values()
            .column(0)
            .iter()
            .map(|&v| usize::from(v > 0.5))
            .collect(),
        2 => meta.argmax_labels(),
        d => {
            return Err(Error::Dimension(format!(
                "affiliation file has {d} columns; expected 1 or 2"
            )))
        }
    };
    BlogData::new(graph, labels, edges.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlogConfig {
    pub repetitions: usize,
    pub seed: u64,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub train_fractions: Vec<f64>,
    /// Shift each metadata column to mean zero before training and leakage.
    pub center_metadata: bool,
    /// Shared training settings; the variant is set per method.
    pub train: TrainConfig,
    pub probe: ProbeConfig,
}

impl Default for BlogConfig {
    fn default() -> Self {
        BlogConfig {
            repetitions: 10,
            seed: 0,
            walks_per_node: 80,
            walk_length: 40,
            window: 10,
            train_fractions: (1..10).map(|k| k as f64 / 10.0).collect(),
            center_metadata: false,
            train: TrainConfig {
                dims: 16,
                meta_dims: 2,
                epochs: 20,
                lambda: 1.0,
                ..Default::default()
            },
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub p: f64,
    pub kind: ProbeKind,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub leakage: MeanStd,
    #[serde(rename = "sigma_T")]
    pub sigma_t: Option<Vec<Vec<f64>>>,
    #[serde(rename = "sigma_T_std")]
    pub sigma_t_std: Option<Vec<Vec<f64>>>,
    pub probes: Vec<ProbeSummary>,
    pub wall_time_sec: f64,
}

impl MethodReport {
    /// Mean accuracy of `kind` at fraction `p`.
    pub fn probe(&self, kind: ProbeKind, p: f64) -> Option<f64> {
        self.probes
            .iter()
            .find(|s| s.kind == kind && (s.p - p).abs() < 1e-12)
            .map(|s| s.mean)
    }

    /// Accuracy of `kind` averaged over the fraction grid.
    pub fn probe_grid_mean(&self, kind: ProbeKind) -> f64 {
        let vals: Vec<f64> = self
            .probes
            .iter()
            .filter(|s| s.kind == kind)
            .map(|s| s.mean)
            .collect();
        crate::stats::mean(&vals)
    }
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub methods: BTreeMap<String, MethodReport>,
    /// Leakage of each method in every repetition.
    pub leakage_runs: BTreeMap<String, Vec<f64>>,
    /// PCA coordinates of each method's first-repetition embedding.
    pub pca: BTreeMap<String, Array2<f64>>,
    pub labels: Vec<usize>,
    pub repetitions: usize,
}

impl MetricsReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.get(name)
    }

    /// `{method -> {leakage, sigma_T, probes, wall_time_sec}}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.methods).expect("report serialises")
    }

    /// `node_id x y label` rows for plotting.
    pub fn pca_tsv(&self, method: &str) -> Option<String> {
        let coords = self.pca.get(method)?;
        let mut out = String::from("node_id\tx\ty\tlabel\n");
        for (i, row) in coords.rows().into_iter().enumerate() {
            out.push_str(&format!(
                "{i}\t{}\t{}\t{}\n",
                row[0], row[1], self.labels[i]
            ));
        }
        Some(out)
    }

    /// One row per method, probe kind and fraction.
    pub fn probes_tsv(&self) -> String {
        let mut out = String::from("method\tkind\tp\tmean\tstd\n");
        for (name, m) in &self.methods {
            for s in &m.probes {
                out.push_str(&format!(
                    "{name}\t{}\t{}\t{}\t{}\n",
                    s.kind, s.p, s.mean, s.std
                ));
            }
        }
        out
    }

    /// Leakage and wall time per method.
    pub fn leakage_tsv(&self) -> String {
        let mut out = String::from("method\tleakage_mean\tleakage_std\twall_time_sec\n");
        for (name, m) in &self.methods {
            out.push_str(&format!(
                "{name}\t{}\t{}\t{}\n",
                m.leakage.mean, m.leakage.std, m.wall_time_sec
            ));
        }
        out
    }
}

struct MethodRun {
    leakage: f64,
    sigma_t: Option<Array2<f64>>,
    /// `(fraction index, kind, accuracy)`.
    probes: Vec<(usize, ProbeKind, f64)>,
    wall_time_sec: f64,
    pca: Option<Array2<f64>>,
}

fn validate(config: &BlogConfig) -> Result<()> {
    if config.repetitions == 0 {
        return Err(Error::Config("repetitions must be positive".into()));
    }
    if config.train_fractions.is_empty() {
        return Err(Error::Config("train_fractions is empty".into()));
    }
    if let Some(p) = config
        .train_fractions
        .iter()
        .find(|p| !(**p > 0.0 && **p < 1.0))
    {
        return Err(Error::Config(format!("train fraction {p} outside (0, 1)")));
    }
    config.train.validate()
}

fn run_repetition(data: &BlogData, config: &BlogConfig, rep: usize) -> Result<Vec<MethodRun>> {
    let rep_seed = derive_seed(config.seed, &[rep as u64]);
    let n = data.graph.node_count();
    let corpus = generate_walks(
        &data.graph,
        config.walks_per_node,
        config.walk_length,
        derive_seed(rep_seed, &[WALK_TAG]),
    )?;
    let cooc = build_cooccurrence(&corpus, config.window)?;
    let metadata = if config.center_metadata {
        data.metadata.centered()
    } else {
        data.metadata.clone()
    };
    let raw_m = metadata.values();

    let mut embeddings = Vec::with_capacity(BLOG_METHODS.len());
    let mut runs = Vec::with_capacity(BLOG_METHODS.len());
    for name in BLOG_METHODS {
        let (w, leakage, sigma_t, wall) = if name == "random" {
            let start = Instant::now();
            let w = random_embedding(n, config.train.dims, derive_seed(rep_seed, &[RANDOM_TAG]));
            let wall = start.elapsed().as_secs_f64();
            let leak = metadata_leakage(raw_m, w.view())?;
            (w, leak, None, wall)
        } else {
            let variant: Variant = name.parse()?;
            let cfg = TrainConfig {
                variant,
                seed: derive_seed(rep_seed, &[TRAIN_TAG]),
                ..config.train.clone()
            };
            let meta = variant.uses_metadata().then_some(&metadata);
            let outcome = train(&cooc, meta, &cfg)?;
            let (w, z) = combined_embedding(&outcome.state)?;
            let leak = match &z {
                Some(z) => metadata_leakage(z.view(), w.view())?,
                None => metadata_leakage(raw_m, w.view())?,
            };
            let sigma = if variant.uses_metadata() {
                Some(metadata_importance(&outcome.state)?.sigma_t)
            } else {
                None
            };
            (w, leak, sigma, outcome.wall_time_sec)
        };
        log::info!("repetition {rep}: {name} leakage {leakage:.6e}");
        let pca = if rep == 0 {
            Some(pca_2d(w.view())?)
        } else {
            None
        };
        runs.push(MethodRun {
            leakage,
            sigma_t,
            probes: Vec::new(),
            wall_time_sec: wall,
            pca,
        });
        embeddings.push(w);
    }

    for (idx, &p) in config.train_fractions.iter().enumerate() {
        let (train_ids, test_ids) = split_nodes(
            n,
            p,
            derive_seed(rep_seed, &[SPLIT_TAG, idx as u64]),
            Some(&data.labels),
        )?;
        for (run, w) in runs.iter_mut().zip(&embeddings) {
            for kind in [ProbeKind::Linear, ProbeKind::Nonlinear] {
                let acc = probe_accuracy(
                    kind,
                    w.view(),
                    &data.labels,
                    &train_ids,
                    &test_ids,
                    &config.probe,
                )?;
                run.probes.push((idx, kind, acc));
            }
        }
    }
    Ok(runs)
}

fn matrix_stats(mats: &[&Array2<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (r, c) = mats[0].dim();
    let mut mean = vec![vec![0.0; c]; r];
    let mut std = vec![vec![0.0; c]; r];
    for i in 0..r {
        for j in 0..c {
            let vals: Vec<f64> = mats.iter().map(|m| m[[i, j]]).collect();
            let s = MeanStd::of(&vals);
            mean[i][j] = s.mean;
            std[i][j] = s.std;
        }
    }
    (mean, std)
}

/// Trains every method on each repetition's co-occurrences and measures
/// leakage, metadata importance and probe accuracy. Repetitions run in
/// parallel; results are merged in repetition order.
pub fn run_blog_experiment(data: &BlogData, config: &BlogConfig) -> Result<MetricsReport> {
    validate(config)?;
    let reps: Vec<Vec<MethodRun>> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(data, config, rep))
        .collect::<Result<_>>()?;

    let mut methods = BTreeMap::new();
    let mut leakage_runs = BTreeMap::new();
    let mut pca = BTreeMap::new();
    for (m, name) in BLOG_METHODS.iter().enumerate() {
        let leak: Vec<f64> = reps.iter().map(|r| r[m].leakage).collect();
        let sigmas: Vec<&Array2<f64>> = reps.iter().filter_map(|r| r[m].sigma_t.as_ref()).collect();
        let (sigma_t, sigma_t_std) = if sigmas.is_empty() {
            (None, None)
        } else {
            let (mean, std) = matrix_stats(&sigmas);
            (Some(mean), Some(std))
        };
        let mut probes = Vec::new();
        for kind in [ProbeKind::Linear, ProbeKind::Nonlinear] {
            for (idx, &p) in config.train_fractions.iter().enumerate() {
                let accs: Vec<f64> = reps
                    .iter()
                    .flat_map(|r| r[m].probes.iter())
                    .filter(|(i, k, _)| *i == idx && *k == kind)
                    .map(|t| t.2)
                    .collect();
                let s = MeanStd::of(&accs);
                probes.push(ProbeSummary {
                    p,
                    kind,
                    mean: s.mean,
                    std: s.std,
                });
            }
        }
        let walls: Vec<f64> = reps.iter().map(|r| r[m].wall_time_sec).collect();
        methods.insert(
            name.to_string(),
            MethodReport {
                leakage: MeanStd::of(&leak),
                sigma_t,
                sigma_t_std,
                probes,
                wall_time_sec: crate::stats::mean(&walls),
            },
        );
        leakage_runs.insert(name.to_string(), leak);
        if let Some(coords) = reps[0][m].pca.clone() {
            pca.insert(name.to_string(), coords);
        }
    }
    Ok(MetricsReport {
        methods,
        leakage_runs,
        pca,
        labels: data.labels.clone(),
        repetitions: config.repetitions,
    })
}
