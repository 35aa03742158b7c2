use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn monet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monet"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) {
    let out = monet(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(args: &[&str], cwd: &Path) -> i32 {
    monet(args, cwd).status.code().expect("exit code")
}

/// Synthetic network, walks and co-occurrences under `dir`.
fn prepared(dir: &Path) {
    ok(&["synth-blogs", "--seed", "3", "--out", "data"], dir);
    ok(
        &[
            "walks",
            "--graph",
            "data/edges.tsv",
            "--walks-per-node",
            "2",
            "--walk-length",
            "8",
            "--out",
            "walks",
        ],
        dir,
    );
    ok(
        &[
            "cooc",
            "--walks",
            "walks/walks.bin",
            "--window",
            "3",
            "--out",
            "cooc",
        ],
        dir,
    );
}

fn train_monet(dir: &Path, out: &str) {
    ok(
        &[
            "train",
            "--cooc",
            "cooc/cooc.bin",
            "--metadata",
            "data/metadata.tsv",
            "--variant",
            "monet",
            "--lambda",
            "1.0",
            "--dims",
            "4",
            "--epochs",
            "2",
            "--seed",
            "5",
            "--out",
            out,
        ],
        dir,
    );
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn matrix(dir: &Path, rel: &str) -> Vec<Vec<f64>> {
    String::from_utf8(read(dir, rel))
        .unwrap()
        .lines()
        .map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn pipeline_writes_artifacts_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);
    train_monet(dir, "run_a");
    train_monet(dir, "run_b");
    for file in [
        "W.tsv",
        "Z.tsv",
        "sigma_t.tsv",
        "losses.tsv",
        "checkpoint.bin",
        "config.toml",
        "manifest.json",
    ] {
        assert_eq!(
            read(dir, &format!("run_a/{file}")),
            read(dir, &format!("run_b/{file}")),
            "{file}"
        );
    }

    let w = matrix(dir, "run_a/W.tsv");
    let z = matrix(dir, "run_a/Z.tsv");
    assert_eq!(w.len(), 1107);
    assert_eq!(w[0].len(), 4);
    assert_eq!(z[0].len(), 2);
    // Exported topology stays orthogonal to the metadata embedding.
    let norm = |m: &[Vec<f64>]| m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    for a in 0..2 {
        for b in 0..4 {
            let dot: f64 = z.iter().zip(&w).map(|(zr, wr)| zr[a] * wr[b]).sum();
            assert!(
                dot.abs() <= 1e-6 * norm(&z) * norm(&w),
                "column pair ({a}, {b}): {dot}"
            );
        }
    }

    let manifest: serde_json::Value =
        serde_json::from_slice(&read(dir, "run_a/manifest.json")).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(
        manifest["inputs"]["cooc"]["sha256"].as_str().unwrap().len(),
        64
    );
    assert!(manifest["outputs"]["W.tsv"].is_string());
    let config = String::from_utf8(read(dir, "run_a/config.toml")).unwrap();
    assert!(config.contains("variant = \"monet\""));

    ok(
        &[
            "export",
            "--checkpoint",
            "run_a/checkpoint.bin",
            "--out",
            "exported",
        ],
        dir,
    );
    assert_eq!(read(dir, "exported/W.tsv"), read(dir, "run_a/W.tsv"));
    assert_eq!(read(dir, "exported/Z.tsv"), read(dir, "run_a/Z.tsv"));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);
    train_monet(dir, "first");
    ok(
        &[
            "train",
            "--cooc",
            "cooc/cooc.bin",
            "--metadata",
            "data/metadata.tsv",
            "--config",
            "first/config.toml",
            "--out",
            "again",
        ],
        dir,
    );
    assert_eq!(read(dir, "first/W.tsv"), read(dir, "again/W.tsv"));
    ok(
        &[
            "train",
            "--cooc",
            "cooc/cooc.bin",
            "--config",
            "first/config.toml",
            "--variant",
            "glove",
            "--out",
            "glove",
        ],
        dir,
    );
    assert!(!dir.join("glove/Z.tsv").exists());
}

#[test]
fn monet_without_metadata_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);
    let out = monet(
        &[
            "train",
            "--cooc",
            "cooc/cooc.bin",
            "--variant",
            "monet",
            "--out",
            "t",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--metadata"));
    assert!(!dir.join("t").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&["train", "--bogus"], dir), 2);
    assert_eq!(
        code(&["train", "--cooc", "absent.bin", "--out", "t"], dir),
        3
    );
    assert_eq!(
        code(&["walks", "--graph", "absent.tsv", "--out", "w"], dir),
        3
    );
    assert_eq!(code(&["experiment", "blogs", "--out", "b"], dir), 3);
    assert_eq!(
        code(
            &[
                "experiment",
                "shilling",
                "--graph",
                "absent/u.data",
                "--out",
                "s"
            ],
            dir
        ),
        3
    );
    fs::write(dir.join("edges.tsv"), "0 1\n1 2\n").unwrap();
    assert_eq!(
        code(
            &[
                "walks",
                "--graph",
                "edges.tsv",
                "--walk-length",
                "1",
                "--out",
                "w"
            ],
            dir
        ),
        2
    );
    let out = Command::new(env!("CARGO_BIN_EXE_monet"))
        .args(["synth-blogs", "--out", "s"])
        .current_dir(dir)
        .env("MONET_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn filtered_cooccurrence_renumbers_kept_nodes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // Two users (0, 1) and three items (2, 3, 4).
    fs::write(dir.join("ratings.tsv"), "0 0\n0 1\n1 1\n1 2\n").unwrap();
    ok(
        &[
            "walks",
            "--graph",
            "ratings.tsv",
            "--bipartite",
            "--walks-per-node",
            "3",
            "--walk-length",
            "6",
            "--out",
            "w",
        ],
        dir,
    );
    ok(
        &[
            "cooc",
            "--walks",
            "w/walks.bin",
            "--keep-from",
            "2",
            "--out",
            "c",
        ],
        dir,
    );
    ok(
        &[
            "train",
            "--cooc",
            "c/cooc.bin",
            "--dims",
            "2",
            "--epochs",
            "1",
            "--out",
            "t",
        ],
        dir,
    );
    assert_eq!(matrix(dir, "t/W.tsv").len(), 3);
    assert_eq!(
        code(
            &[
                "cooc",
                "--walks",
                "w/walks.bin",
                "--keep-from",
                "5",
                "--out",
                "c2"
            ],
            dir
        ),
        2
    );
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn blog_experiment_smoke_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(
        dir,
        "blogs.toml",
        "walks_per_node = 1\nwalk_length = 10\nwindow = 3\ntrain_fractions = [0.5]\n\n[train]\ndims = 4\nepochs = 1\n",
    );
    ok(
        &[
            "experiment",
            "blogs",
            "--synthetic",
            "--config",
            "blogs.toml",
            "--repetitions",
            "1",
            "--out",
            "report",
        ],
        dir,
    );
    let report: serde_json::Value =
        serde_json::from_slice(&read(dir, "report/report.json")).unwrap();
    for method in ["random", "glove", "glove_meta", "monet"] {
        assert_eq!(report[method]["leakage"]["std"], 0.0, "{method}");
    }
    assert!(report["monet"]["sigma_T"].is_array());
    for file in [
        "probes.tsv",
        "leakage.tsv",
        "pca_monet.tsv",
        "config.toml",
        "manifest.json",
    ] {
        assert!(dir.join("report").join(file).exists(), "{file}");
    }
    let config = String::from_utf8(read(dir, "report/config.toml")).unwrap();
    assert!(config.contains("repetitions = 1"));
    assert_eq!(
        code(
            &[
                "experiment",
                "blogs",
                "--synthetic",
                "--variant",
                "monet",
                "--out",
                "x"
            ],
            dir
        ),
        2
    );
}

#[test]
fn shilling_experiment_smoke_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // 80 users in four taste groups over 40 items, u.data layout.
    let mut ratings = String::new();
    for u in 0..80 {
        for k in 0..6 {
            let item = (u % 4) * 10 + (u * 7 + k * 3) % 10;
            ratings.push_str(&format!("{}\t{}\t4\t881250949\n", u + 1, item + 1));
        }
    }
    fs::write(dir.join("u.data"), ratings).unwrap();
    write_config(
        dir,
        "shilling.toml",
        "walks_per_node = 3\nwalk_length = 10\nwindow = 3\ninfluence_size = 3\ntop_k = 5\nlambdas = [0.5, 1.0]\n\n[train]\ndims = 4\nepochs = 1\n",
    );
    ok(
        &[
            "experiment",
            "shilling",
            "--graph",
            "u.data",
            "--config",
            "shilling.toml",
            "--repetitions",
            "1",
            "--out",
            "report",
        ],
        dir,
    );
    let report: serde_json::Value =
        serde_json::from_slice(&read(dir, "report/report.json")).unwrap();
    for method in [
        "random",
        "glove",
        "glove_meta",
        "nlp",
        "monet_0.50",
        "monet_1.00",
    ] {
        assert_eq!(report[method]["attacked_top20"]["std"], 0.0, "{method}");
        assert!(
            report[method]["mrr"]["mean"].as_f64().unwrap() > 0.0,
            "{method}"
        );
    }
    assert_eq!(report["random"]["mrr_lift"], 1.0);
    let tradeoff = String::from_utf8(read(dir, "report/tradeoff.tsv")).unwrap();
    assert_eq!(tradeoff.lines().count(), 7);
    assert!(dir.join("report/item_mapping.tsv").exists());
}
