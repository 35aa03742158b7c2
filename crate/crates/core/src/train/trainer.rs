use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;

use super::debias::{Debiaser, Side};
use super::grad::{accumulate, Gradients, Scratch};
use super::model::init_model;
use super::{ModelState, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::{CooccurrenceStore, MetadataMatrix};
use crate::rng;

const SHUFFLE_TAG: u64 = 0x5348_5546;

/// Stateful AdaGrad driver for one model.
///
/// For `Monet` the stored `U`, `V` stay unprojected; every step evaluates
/// gradients at the projected point, applies the update to the raw rows
/// (so the effective update is itself projected) and refreshes the basis
/// from the updated transforms.
pub struct Trainer {
    state: ModelState,
    config: TrainConfig,
    debias: Option<Debiaser>,
    grads: Gradients,
    scratch: Scratch,
    delta: Vec<f64>,
}

impl Trainer {
    pub fn new(state: ModelState, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.variant != state.variant {
            return Err(Error::Config(format!(
                "config variant {} does not match model variant {}",
                config.variant, state.variant
            )));
        }
        if config.dims != state.dims() {
            return Err(Error::Dimension(format!(
                "config dims {} but model has {}",
                config.dims,
                state.dims()
            )));
        }
        let debias = state.debiaser();
        let grads = Gradients::for_state(&state);
        let scratch = Scratch::for_state(&state);
        let delta = vec![0.0; state.dims()];
        Ok(Trainer {
            state,
            config,
            debias,
            grads,
            scratch,
            delta,
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn into_state(self) -> ModelState {
        self.state
    }

    /// `W = U + V` as the next step will see it: for `Monet`, the raw rows
    /// minus the incrementally maintained projection, not a fresh one.
    pub fn embedding(&self) -> Array2<f64> {
        let st = &self.state;
        let (n, d) = (st.node_count(), st.dims());
        let mut w = Array2::zeros((n, d));
        let mut row_u = vec![0.0; d];
        let mut row_v = vec![0.0; d];
        for (i, mut out) in w.rows_mut().into_iter().enumerate() {
            row_u.iter_mut().zip(st.u.row(i)).for_each(|(o, &x)| *o = x);
            row_v.iter_mut().zip(st.v.row(i)).for_each(|(o, &x)| *o = x);
            if let Some(db) = &self.debias {
                db.project_row(Side::Center, i, &mut row_u);
                db.project_row(Side::Context, i, &mut row_v);
            }
            out.iter_mut()
                .zip(row_u.iter().zip(&row_v))
                .for_each(|(o, (a, b))| *o = a + b);
        }
        w
    }

    /// Recomputes the cached projection inputs from the parameters.
    pub fn resync(&mut self) {
        if let Some(db) = &mut self.debias {
            db.resync(&self.state);
        }
    }

    /// One AdaGrad step on `batch`; returns the weighted batch loss before
    /// the update.
    pub fn train_step(&mut self, batch: &[(u32, u32, f64)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch".into()));
        }
        let n = self.state.node_count() as u32;
        if let Some(&(i, j, c)) = batch
            .iter()
            .find(|&&(i, j, c)| i >= n || j >= n || !(c > 0.0))
        {
            return Err(Error::Numerical(format!(
                "invalid pair ({i}, {j}, {c}) for {n} nodes"
            )));
        }
        self.grads.clear();
        accumulate(
            &self.state,
            self.debias.as_ref(),
            &self.config,
            batch,
            &mut self.grads,
            &mut self.scratch,
        );
        if !self.grads.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient (batch loss {}, first pair {:?})",
                self.grads.loss, batch[0]
            )));
        }

        let lr = self.config.learning_rate;
        let st = &mut self.state;
        for (side, grads, params, acc) in [
            (Side::Center, &self.grads.u, &mut st.u, &mut st.acc_u),
            (Side::Context, &self.grads.v, &mut st.v, &mut st.acc_v),
        ] {
            let d = params.ncols();
            let params = params.as_slice_mut().expect("standard layout");
            let acc = acc.as_slice_mut().expect("standard layout");
            for (row, g) in grads.iter() {
                let p = &mut params[row * d..(row + 1) * d];
                let h = &mut acc[row * d..(row + 1) * d];
                for (((p, h), delta), &g) in
                    p.iter_mut().zip(h.iter_mut()).zip(&mut self.delta).zip(g)
                {
                    *h += g * g;
                    *delta = -lr * g / h.sqrt();
                    *p += *delta;
                }
                if let Some(db) = &mut self.debias {
                    db.record(side, row, &self.delta);
                }
            }
        }
        for (grads, params, acc) in [
            (&self.grads.a, &mut st.a, &mut st.acc_a),
            (&self.grads.b, &mut st.b, &mut st.acc_b),
        ] {
            for (row, g) in grads.iter() {
                acc[row] += g[0] * g[0];
                params[row] -= lr * g[0] / acc[row].sqrt();
            }
        }
        if let Some(meta) = &mut st.meta {
            let (g1, g2) = (
                self.grads.t1.as_ref().expect("metadata gradients"),
                self.grads.t2.as_ref().expect("metadata gradients"),
            );
            adagrad_dense(&mut meta.t1, &mut meta.acc_t1, g1, lr);
            adagrad_dense(&mut meta.t2, &mut meta.acc_t2, g2, lr);
        }
        if let Some(db) = &mut self.debias {
            let s = self
                .state
                .transform_sum()
                .expect("monet carries transforms");
            db.refresh_basis(s.view());
        }
        Ok(self.grads.loss)
    }
}

fn adagrad_dense(p: &mut Array2<f64>, acc: &mut Array2<f64>, g: &Array2<f64>, lr: f64) {
    ndarray::Zip::from(p).and(acc).and(g).for_each(|p, h, &g| {
        *h += g * g;
        *p -= lr * g / h.sqrt();
    });
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ModelState,
    /// Summed weighted loss over each epoch, measured before each step.
    pub epoch_losses: Vec<f64>,
    pub wall_time_sec: f64,
}

/// Trains a fresh model on every nonzero entry of `cooc` (both orientations
/// of a symmetric store), shuffling pairs each epoch.
pub fn train(
    cooc: &CooccurrenceStore,
    metadata: Option<&MetadataMatrix>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if cooc.is_empty() {
        return Err(Error::Empty("co-occurrence store".into()));
    }
    let start = Instant::now();
    let state = init_model(cooc.node_count(), metadata, config)?;
    let mut trainer = Trainer::new(state, config.clone())?;
    let mut pairs = cooc.ordered_pairs();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = rng::child(config.seed, &[SHUFFLE_TAG, epoch as u64]);
        pairs.shuffle(&mut rng);
        let mut loss = 0.0;
        for batch in pairs.chunks(config.batch_size) {
            loss += trainer.train_step(batch)?;
        }
        trainer.resync();
        log::info!(
            "{} epoch {}/{}: loss {:.6}",
            config.variant,
            epoch + 1,
            config.epochs,
            loss / pairs.len() as f64
        );
        epoch_losses.push(loss);
    }
    let state = trainer.into_state();
    state.check_finite()?;
    Ok(TrainOutcome {
        state,
        epoch_losses,
        wall_time_sec: start.elapsed().as_secs_f64(),
    })
}
