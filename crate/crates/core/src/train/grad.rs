use ndarray::Array2;

use super::debias::{Debiaser, Side};
use super::model::smoothing;
use super::{ModelState, TrainConfig};
use crate::error::{Error, Result};

/// Row-sparse gradient block: only rows touched by a batch are stored, in
/// first-touch order.
#[derive(Debug, Clone)]
pub struct SparseRows {
    width: usize,
    slots: Vec<u32>,
    ids: Vec<usize>,
    data: Vec<f64>,
}

const EMPTY: u32 = u32::MAX;

impl SparseRows {
    pub fn new(rows: usize, width: usize) -> Self {
        SparseRows {
            width,
            slots: vec![EMPTY; rows],
            ids: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&[f64]> {
        match self.slots[id] {
            EMPTY => None,
            slot => {
                let s = slot as usize * self.width;
                Some(&self.data[s..s + self.width])
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        self.ids
            .iter()
            .copied()
            .zip(self.data.chunks_exact(self.width.max(1)))
    }

    pub(crate) fn row_mut(&mut self, id: usize) -> &mut [f64] {
        let slot = match self.slots[id] {
            EMPTY => {
                let slot = self.ids.len();
                self.slots[id] = slot as u32;
                self.ids.push(id);
                self.data.resize(self.data.len() + self.width, 0.0);
                slot
            }
            slot => slot as usize,
        };
        let s = slot * self.width;
        &mut self.data[s..s + self.width]
    }

    pub(crate) fn clear(&mut self) {
        for &id in &self.ids {
            self.slots[id] = EMPTY;
        }
        self.ids.clear();
        self.data.clear();
    }

    fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Gradients of the summed pair losses of one batch.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub u: SparseRows,
    pub v: SparseRows,
    pub a: SparseRows,
    pub b: SparseRows,
    pub t1: Option<Array2<f64>>,
    pub t2: Option<Array2<f64>>,
    /// Summed weighted loss of the batch at the evaluation point.
    pub loss: f64,
}

impl Gradients {
    pub(crate) fn for_state(state: &ModelState) -> Self {
        let n = state.node_count();
        let d = state.dims();
        let t_shape = state.meta.as_ref().map(|m| m.t1.dim());
        Gradients {
            u: SparseRows::new(n, d),
            v: SparseRows::new(n, d),
            a: SparseRows::new(n, 1),
            b: SparseRows::new(n, 1),
            t1: t_shape.map(Array2::zeros),
            t2: t_shape.map(Array2::zeros),
            loss: 0.0,
        }
    }

    pub(crate) fn clear(&mut self) {
        self.u.clear();
        self.v.clear();
        self.a.clear();
        self.b.clear();
        for t in [&mut self.t1, &mut self.t2].into_iter().flatten() {
            t.fill(0.0);
        }
        self.loss = 0.0;
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite()
            && self.u.all_finite()
            && self.v.all_finite()
            && self.a.all_finite()
            && self.b.all_finite()
            && [&self.t1, &self.t2]
                .into_iter()
                .flatten()
                .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Scratch rows reused across pairs.
pub(crate) struct Scratch {
    u: Vec<f64>,
    v: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Scratch {
    pub(crate) fn for_state(state: &ModelState) -> Self {
        let d = state.dims();
        let dz = state.meta_dims();
        Scratch {
            u: vec![0.0; d],
            v: vec![0.0; d],
            x: vec![0.0; dz],
            y: vec![0.0; dz],
        }
    }
}

fn row(m: &Array2<f64>, i: usize) -> &[f64] {
    let d = m.ncols();
    &m.as_slice().expect("standard layout")[i * d..(i + 1) * d]
}

/// Dot product with four interleaved partial sums, so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Loads the rows of pair `(i, j)` as the model sees them and returns the
/// residual `a_i + b_j + U_i.V_j + X_i.Y_j - ln c`.
fn load_pair(
    state: &ModelState,
    debias: Option<&Debiaser>,
    i: usize,
    j: usize,
    c: f64,
    s: &mut Scratch,
) -> f64 {
    s.u.copy_from_slice(row(&state.u, i));
    s.v.copy_from_slice(row(&state.v, j));
    if let Some(db) = debias {
        db.project_row(Side::Center, i, &mut s.u);
        db.project_row(Side::Context, j, &mut s.v);
    }
    let mut e = state.a[i] + state.b[j] + dot(&s.u, &s.v) - c.ln();
    if let Some(meta) = &state.meta {
        let (mi, mj) = (meta.m.row(i), meta.m.row(j));
        s.x.fill(0.0);
        s.y.fill(0.0);
        for l in 0..meta.m.ncols() {
            let (xi, yj) = (mi[l], mj[l]);
            if xi != 0.0 {
                for (x, t) in s.x.iter_mut().zip(meta.t1.row(l)) {
                    *x += xi * t;
                }
            }
            if yj != 0.0 {
                for (y, t) in s.y.iter_mut().zip(meta.t2.row(l)) {
                    *y += yj * t;
                }
            }
        }
        e += dot(&s.x, &s.y);
    }
    e
}

pub(crate) fn residual(
    state: &ModelState,
    debias: Option<&Debiaser>,
    i: usize,
    j: usize,
    c: f64,
) -> f64 {
    let mut s = Scratch::for_state(state);
    load_pair(state, debias, i, j, c, &mut s)
}

/// Accumulates the batch gradients into `grads` (which must be cleared).
pub(crate) fn accumulate(
    state: &ModelState,
    debias: Option<&Debiaser>,
    config: &TrainConfig,
    batch: &[(u32, u32, f64)],
    grads: &mut Gradients,
    s: &mut Scratch,
) {
    for &(i, j, c) in batch {
        let (i, j) = (i as usize, j as usize);
        let e = load_pair(state, debias, i, j, c, s);
        let w = smoothing(c, config.x_max, config.alpha);
        grads.loss += w * e * e;
        let g = 2.0 * w * e;

        for (gu, &vj) in grads.u.row_mut(i).iter_mut().zip(&s.v) {
            *gu += g * vj;
        }
        for (gv, &ui) in grads.v.row_mut(j).iter_mut().zip(&s.u) {
            *gv += g * ui;
        }
        grads.a.row_mut(i)[0] += g;
        grads.b.row_mut(j)[0] += g;

        if let (Some(meta), Some(g1), Some(g2)) = (&state.meta, &mut grads.t1, &mut grads.t2) {
            let (mi, mj) = (meta.m.row(i), meta.m.row(j));
            for l in 0..meta.m.ncols() {
                if mi[l] != 0.0 {
                    for (gt, &y) in g1.row_mut(l).iter_mut().zip(&s.y) {
                        *gt += g * mi[l] * y;
                    }
                }
                if mj[l] != 0.0 {
                    for (gt, &x) in g2.row_mut(l).iter_mut().zip(&s.x) {
                        *gt += g * mj[l] * x;
                    }
                }
            }
        }
    }
}

/// Exact gradients of `sum f(c_ij) (a_i + b_j + U_i.V_j + X_i.Y_j - ln c_ij)^2`
/// over `batch`, taken at the embeddings the model uses (projected for
/// `Monet`). Metadata transform gradients ignore the dependence of the
/// projection basis on the transforms.
pub fn batch_gradients(
    state: &ModelState,
    config: &TrainConfig,
    batch: &[(u32, u32, f64)],
) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::Empty("gradient batch".into()));
    }
    if let Some(&(i, j, c)) = batch.iter().find(|p| !(p.2 > 0.0)) {
        return Err(Error::Numerical(format!(
            "co-occurrence {c} for ({i}, {j}) must be positive"
        )));
    }
    let debias = state.debiaser();
    let mut grads = Gradients::for_state(state);
    let mut scratch = Scratch::for_state(state);
    accumulate(
        state,
        debias.as_ref(),
        config,
        batch,
        &mut grads,
        &mut scratch,
    );
    Ok(grads)
}
