use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use monet::eval::{blog_surrogate, load_blog_files, run_blog_experiment, BlogConfig, BlogData};
use monet::graph::{
    build_cooccurrence, filter_walks, generate_walks, load_edge_list, load_metadata,
    EdgeListOptions,
};
use monet::io::{
    read_cooccurrence, read_corpus, write_cooccurrence, write_corpus, write_matrix_tsv,
};
use monet::shilling::{load_movielens, run_shilling_experiment, ShillingConfig};
use monet::train::{
    combined_embedding, metadata_importance, read_checkpoint, train as fit, write_checkpoint,
    ModelState, TrainConfig,
};

use crate::manifest::{write, Manifest};
use crate::{
    BlogArgs, CoocArgs, ExportArgs, ShillingArgs, SynthArgs, TrainArgs, TrainFlags, WalksArgs,
};

fn output_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

/// Reads a TOML config. A file written beside earlier outputs nests the
/// settings under `section`; a bare table is accepted too.
fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>, section: &str) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    if !path.exists() {
        return Err(
            monet::Error::MissingData(format!("config file {} not found", path.display())).into(),
        );
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let invalid = |e: toml::de::Error| monet::Error::Config(format!("{}: {e}", path.display()));
    let mut table: toml::Table = toml::from_str(&text).map_err(invalid)?;
    let value = match table.remove(section) {
        Some(inner) => inner,
        None => toml::Value::Table(table),
    };
    Ok(value.try_into().map_err(invalid)?)
}

fn require_input(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(monet::Error::MissingData(format!("{} not found", path.display())).into())
    }
}

impl TrainFlags {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.dims {
            cfg.dims = v;
        }
        if let Some(v) = self.meta_dims {
            cfg.meta_dims = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }

    /// Experiments train every variant, so choosing one is a usage error.
    fn apply_shared(&self, cfg: &mut TrainConfig) -> Result<()> {
        if self.variant.is_some() {
            return Err(monet::Error::Config(
                "experiments train every variant; drop --variant".into(),
            )
            .into());
        }
        self.apply(cfg);
        Ok(())
    }
}

#[derive(Serialize)]
struct WalksRun<'a> {
    graph: &'a Path,
    bipartite: bool,
    walks_per_node: usize,
    walk_length: usize,
    seed: u64,
}

pub fn walks(a: WalksArgs) -> Result<()> {
    require_input(&a.graph)?;
    let options = EdgeListOptions {
        bipartite: a.bipartite,
        ..Default::default()
    };
    let graph = load_edge_list(&a.graph, options)?;
    let corpus = generate_walks(&graph, a.walks_per_node, a.walk_length, a.seed)?;
    log::info!("{} walks over {} nodes", corpus.len(), graph.node_count());
    output_dir(&a.out)?;
    write_corpus(&a.out.join("walks.bin"), &corpus)?;
    let mut manifest = Manifest::new("walks");
    manifest.input("graph", &a.graph)?;
    manifest.finish(
        &a.out,
        &WalksRun {
            graph: &a.graph,
            bipartite: a.bipartite,
            walks_per_node: a.walks_per_node,
            walk_length: a.walk_length,
            seed: a.seed,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct CoocRun<'a> {
    walks: &'a Path,
    window: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    keep_from: Option<u32>,
}

pub fn cooc(a: CoocArgs) -> Result<()> {
    require_input(&a.walks)?;
    let mut corpus = read_corpus(&a.walks)?;
    if let Some(first) = a.keep_from {
        let count = corpus
            .node_count
            .checked_sub(first as usize)
            .filter(|&c| c > 0)
            .ok_or_else(|| {
                monet::Error::Config(format!(
                    "--keep-from {first} leaves no nodes of {}",
                    corpus.node_count
                ))
            })?;
        corpus = filter_walks(&corpus, |n| n >= first).relabel(count, |n| n - first)?;
    }
    let store = build_cooccurrence(&corpus, a.window)?;
    log::info!(
        "{} co-occurring pairs over {} nodes",
        store.len(),
        store.node_count()
    );
    output_dir(&a.out)?;
    write_cooccurrence(&a.out.join("cooc.bin"), &store)?;
    let mut manifest = Manifest::new("cooc");
    manifest.input("walks", &a.walks)?;
    manifest.finish(
        &a.out,
        &CoocRun {
            walks: &a.walks,
            window: a.window,
            keep_from: a.keep_from,
        },
    )?;
    Ok(())
}

/// Writes `W.tsv`, and for metadata variants `Z.tsv` and `sigma_t.tsv`.
fn write_embeddings(state: &ModelState, out: &Path) -> Result<()> {
    let (w, z) = combined_embedding(state)?;
    write_matrix_tsv(&out.join("W.tsv"), w.view())?;
    if let Some(z) = z {
        write_matrix_tsv(&out.join("Z.tsv"), z.view())?;
        let sigma = metadata_importance(state)?.sigma_t;
        write_matrix_tsv(&out.join("sigma_t.tsv"), sigma.view())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainRun {
    cooc: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    metadata: Option<PathBuf>,
    train: TrainConfig,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = load_toml(a.config.as_deref(), "train")?;
    a.flags.apply(&mut cfg);
    cfg.validate()?;
    if cfg.variant.uses_metadata() && a.metadata.is_none() {
        return Err(
            monet::Error::Config(format!("variant {} requires --metadata", cfg.variant)).into(),
        );
    }
    require_input(&a.cooc)?;
    let store = read_cooccurrence(&a.cooc)?;
    let metadata = match (&a.metadata, cfg.variant.uses_metadata()) {
        (Some(path), true) => {
            require_input(path)?;
            Some(load_metadata(path, store.node_count())?)
        }
        (Some(_), false) => {
            log::warn!("variant {} ignores --metadata", cfg.variant);
            None
        }
        (None, _) => None,
    };
    let outcome = fit(&store, metadata.as_ref(), &cfg)?;
    log::info!("trained {} in {:.2}s", cfg.variant, outcome.wall_time_sec);

    output_dir(&a.out)?;
    write_checkpoint(&a.out.join("checkpoint.bin"), &outcome.state)?;
    write_embeddings(&outcome.state, &a.out)?;
    let mut losses = String::from("epoch\tloss\n");
    for (e, l) in outcome.epoch_losses.iter().enumerate() {
        losses.push_str(&format!("{}\t{l}\n", e + 1));
    }
    write(&a.out.join("losses.tsv"), losses.as_bytes())?;

    let mut manifest = Manifest::new("train");
    manifest.input("cooc", &a.cooc)?;
    let used_metadata = metadata.and(a.metadata);
    if let Some(path) = &used_metadata {
        manifest.input("metadata", path)?;
    }
    manifest.finish(
        &a.out,
        &TrainRun {
            cooc: a.cooc,
            metadata: used_metadata,
            train: cfg,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ExportRun<'a> {
    checkpoint: &'a Path,
}

pub fn export(a: ExportArgs) -> Result<()> {
    require_input(&a.checkpoint)?;
    let state = read_checkpoint(&a.checkpoint)?;
    output_dir(&a.out)?;
    write_embeddings(&state, &a.out)?;
    let mut manifest = Manifest::new("export");
    manifest.input("checkpoint", &a.checkpoint)?;
    manifest.finish(
        &a.out,
        &ExportRun {
            checkpoint: &a.checkpoint,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct BlogRun<'a> {
    source: &'a str,
    experiment: &'a BlogConfig,
}

pub fn blogs(a: BlogArgs) -> Result<()> {
    let mut cfg: BlogConfig = load_toml(a.config.as_deref(), "experiment")?;
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    if let Some(w) = a.walks_per_node {
        cfg.walks_per_node = w;
    }
    a.flags.apply_shared(&mut cfg.train)?;
    let mut manifest = Manifest::new("experiment blogs");
    let data: BlogData = match (&a.graph, &a.metadata) {
        (Some(graph), Some(labels)) => {
            let data = load_blog_files(graph, labels)?;
            manifest.input("graph", graph)?;
            manifest.input("metadata", labels)?;
            data
        }
        _ if a.synthetic => blog_surrogate(a.synthetic_seed),
        _ => {
            return Err(monet::Error::MissingData(
                "no blog network given; pass --graph edges.tsv --metadata labels.tsv \
                 (the political blogs network with one 0/1 affiliation per node) or \
                 --synthetic for the surrogate"
                    .into(),
            )
            .into())
        }
    };
    log::info!("blog network: {}", data.source);
    let report = run_blog_experiment(&data, &cfg)?;

    output_dir(&a.out)?;
    let json = serde_json::to_string_pretty(&report.to_json())?;
    write(&a.out.join("report.json"), format!("{json}\n").as_bytes())?;
    write(&a.out.join("probes.tsv"), report.probes_tsv().as_bytes())?;
    write(&a.out.join("leakage.tsv"), report.leakage_tsv().as_bytes())?;
    for name in report.pca.keys() {
        if let Some(tsv) = report.pca_tsv(name) {
            write(&a.out.join(format!("pca_{name}.tsv")), tsv.as_bytes())?;
        }
    }
    manifest.finish(
        &a.out,
        &BlogRun {
            source: &data.source,
            experiment: &cfg,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ShillingRun<'a> {
    ratings: &'a Path,
    experiment: &'a ShillingConfig,
}

pub fn shilling(a: ShillingArgs) -> Result<()> {
    let mut cfg: ShillingConfig = load_toml(a.config.as_deref(), "experiment")?;
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    if let Some(w) = a.walks_per_node {
        cfg.walks_per_node = w;
    }
    a.flags.apply_shared(&mut cfg.train)?;
    let ratings = load_movielens(&a.graph)?;
    let report = run_shilling_experiment(&ratings, &cfg)?;

    output_dir(&a.out)?;
    let json = serde_json::to_string_pretty(&report.to_json())?;
    write(&a.out.join("report.json"), format!("{json}\n").as_bytes())?;
    write(
        &a.out.join("tradeoff.tsv"),
        report.tradeoff_tsv().as_bytes(),
    )?;
    write(
        &a.out.join("item_mapping.tsv"),
        ratings.mapping_tsv().as_bytes(),
    )?;
    let mut manifest = Manifest::new("experiment shilling");
    manifest.input("ratings", &a.graph)?;
    manifest.finish(
        &a.out,
        &ShillingRun {
            ratings: &a.graph,
            experiment: &cfg,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SynthRun {
    seed: u64,
}

pub fn synth_blogs(a: SynthArgs) -> Result<()> {
    let data = blog_surrogate(a.seed);
    output_dir(&a.out)?;
    let mut edges = String::new();
    for (s, t) in data.graph.edges() {
        edges.push_str(&format!("{s}\t{t}\n"));
    }
    write(&a.out.join("edges.tsv"), edges.as_bytes())?;
    let labels: String = data.labels.iter().map(|l| format!("{l}\n")).collect();
    write(&a.out.join("labels.tsv"), labels.as_bytes())?;
    write_matrix_tsv(&a.out.join("metadata.tsv"), data.metadata.values())?;
    Manifest::new("synth-blogs").finish(&a.out, &SynthRun { seed: a.seed })?;
    Ok(())
}
