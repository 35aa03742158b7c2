//! Embedding training: the GloVe walk loss, its metadata-augmented variant,
//! AdaGrad updates, and the metadata-orthogonal (MONET) training step.

mod checkpoint;
mod debias;
mod grad;
mod model;
mod trainer;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use grad::{batch_gradients, Gradients, SparseRows};
pub use model::{
    combined_embedding, init_model, metadata_importance, pair_loss, random_embedding, smoothing,
    ImportanceMatrix, ModelState,
};
pub use trainer::{train, TrainOutcome, Trainer};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Topology embeddings only.
    Glove,
    /// Topology plus a linear metadata embedding, trained jointly.
    GloveMeta,
    /// `GloveMeta` with topology kept orthogonal to the metadata embedding.
    Monet,
}

impl Variant {
    pub fn uses_metadata(self) -> bool {
        !matches!(self, Variant::Glove)
    }

    pub fn code(self) -> u8 {
        match self {
            Variant::Glove => 0,
            Variant::GloveMeta => 1,
            Variant::Monet => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Variant> {
        match code {
            0 => Some(Variant::Glove),
            1 => Some(Variant::GloveMeta),
            2 => Some(Variant::Monet),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Glove => "glove",
            Variant::GloveMeta => "glove_meta",
            Variant::Monet => "monet",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glove" => Ok(Variant::Glove),
            "glove_meta" | "glove-meta" => Ok(Variant::GloveMeta),
            "monet" => Ok(Variant::Monet),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: Variant,
    /// Topology embedding dimension `d`.
    pub dims: usize,
    /// Metadata embedding dimension `d_z`.
    pub meta_dims: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Parameters start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Projection strength; 1 is exact orthogonality, 0 disables it.
    pub lambda: f64,
    /// Relative singular-value cutoff for the metadata embedding basis.
    pub rank_tol: f64,
    /// Starting value of every AdaGrad accumulator.
    pub accumulator_init: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Glove,
            dims: 16,
            meta_dims: 2,
            learning_rate: 0.05,
            batch_size: 100,
            epochs: 20,
            x_max: 100.0,
            alpha: 0.75,
            seed: 0,
            init_scale: 0.1,
            lambda: 1.0,
            rank_tol: crate::linalg::DEFAULT_RANK_TOL,
            accumulator_init: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.dims == 0 {
            return fail("dims must be positive".into());
        }
        if self.variant.uses_metadata() && self.meta_dims == 0 {
            return fail(format!("variant {} needs meta_dims > 0", self.variant));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.x_max > 0.0 && self.x_max.is_finite()) {
            return fail(format!("x_max must be positive, got {}", self.x_max));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return fail(format!(
                "init_scale must be non-negative, got {}",
                self.init_scale
            ));
        }
        if !(self.accumulator_init > 0.0) {
            return fail("accumulator_init must be positive".into());
        }
        crate::linalg::check_lambda(self.lambda)
    }
}
