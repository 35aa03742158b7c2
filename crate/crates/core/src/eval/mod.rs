//! Downstream bias measurements: node splits, affiliation probes and the
//! political-blogs experiment.

mod blogs;
mod probe;

pub use blogs::{
    blog_surrogate, load_blog_data, load_blog_files, run_blog_experiment, BlogConfig, BlogData,
    MethodReport, MetricsReport, ProbeSummary, BLOG_METHODS,
};
pub use probe::{
    accuracy, probe_accuracy, KernelProbe, LinearProbe, ProbeConfig, ProbeKind, Standardizer,
};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const MAX_SPLIT_ATTEMPTS: u64 = 100;

/// Accuracy of one probe kind at one training fraction, averaged over
/// repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub train_fraction: f64,
    pub accuracy: f64,
    pub probe_kind: ProbeKind,
    pub repetitions: usize,
    pub std: f64,
}

/// Number of training nodes for fraction `p` of `n`, rounding halves up.
pub fn train_size(n: usize, p: f64) -> usize {
    (p * n as f64 + 0.5).floor() as usize
}

/// Uniform random split with `train_size(n, p)` training nodes, returned as
/// sorted `(train, test)` id lists.
///
/// When `labels` is given, splits leaving a class absent from either side
/// are redrawn (with a warning), up to a fixed number of attempts.
pub fn split_nodes(
    n: usize,
    p: f64,
    seed: u64,
    labels: Option<&[usize]>,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {p}"
        )));
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::Dimension(format!(
                "{} labels for {n} nodes",
                l.len()
            )));
        }
    }
    let k = train_size(n, p);
    if k == 0 || k >= n {
        return Err(Error::Config(format!(
            "fraction {p} of {n} nodes leaves an empty side"
        )));
    }
    let classes = labels.map(|l| {
        let mut c = l.to_vec();
        c.sort_unstable();
        c.dedup();
        c
    });
    let mut ids: Vec<usize> = (0..n).collect();
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        ids.sort_unstable();
        ids.shuffle(&mut rng::child(seed, &[attempt]));
        let mut train = ids[..k].to_vec();
        let mut test = ids[k..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        let ok = match (labels, &classes) {
            (Some(l), Some(classes)) => [&train, &test]
                .iter()
                .all(|side| classes.iter().all(|c| side.iter().any(|&i| l[i] == *c))),
            _ => true,
        };
        if ok {
            return Ok((train, test));
        }
        log::warn!("split attempt {attempt} left a class empty; resampling");
    }
    Err(Error::Numerical(format!(
        "no split of fraction {p} kept every class on both sides after {MAX_SPLIT_ATTEMPTS} attempts"
    )))
}
