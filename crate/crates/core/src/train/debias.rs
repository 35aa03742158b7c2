//! Incremental projection of the topology parameters against the metadata
//! embedding span.
//!
//! `Z = M (T1 + T2)` always lies in the column span of `M`. With `Q` an
//! orthonormal basis of that span (fixed for the whole run) and `G` an
//! orthonormal basis of `Q^T Z`, the basis of `Z` is `Q G` and
//!
//! ```text
//! P U = U - lambda * Q G G^T (Q^T U)
//! ```
//!
//! Tracking `B = Q^T U` as rows of `U` change makes every training step cost
//! `O(batch * k * d + k^2 * d)` instead of `O(n * d)`, where `k = rank(M)`.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

use super::ModelState;
use crate::linalg::left_singular_basis;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct MetadataSpan {
    q: Array2<f64>,
    coef: Array2<f64>,
}

impl MetadataSpan {
    pub(crate) fn new(m: ArrayView2<'_, f64>, rank_tol: f64) -> Self {
        let q = left_singular_basis(m, rank_tol);
        let coef = q.t().dot(&m);
        MetadataSpan { q, coef }
    }

    pub(crate) fn rank(&self) -> usize {
        self.q.ncols()
    }

    /// Orthonormal basis of `Q^T M S` in span coordinates (`k x r`).
    pub(crate) fn basis_for(
        &self,
        transform_sum: ArrayView2<'_, f64>,
        rank_tol: f64,
    ) -> Array2<f64> {
        left_singular_basis(self.coef.dot(&transform_sum).view(), rank_tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    Center,
    Context,
}

#[derive(Debug, Clone)]
pub(crate) struct Debiaser {
    span: Arc<MetadataSpan>,
    lambda: f64,
    rank_tol: f64,
    /// `Q^T U` and `Q^T V` of the raw parameters.
    bu: Array2<f64>,
    bv: Array2<f64>,
    /// `lambda G G^T` for the current basis.
    mix: Array2<f64>,
    /// `mix * B`: subtracting `Q_i . cu` from a raw row yields the projected
    /// row.
    cu: Array2<f64>,
    cv: Array2<f64>,
}

impl Debiaser {
    pub(crate) fn new(span: Arc<MetadataSpan>, state: &ModelState) -> Self {
        let k = span.rank();
        let d = state.dims();
        let mut db = Debiaser {
            span,
            lambda: state.lambda,
            rank_tol: state.rank_tol,
            bu: Array2::zeros((k, d)),
            bv: Array2::zeros((k, d)),
            mix: Array2::zeros((k, k)),
            cu: Array2::zeros((k, d)),
            cv: Array2::zeros((k, d)),
        };
        db.resync(state);
        let s = state.transform_sum().expect("monet carries transforms");
        db.refresh_basis(s.view());
        db
    }

    /// Recomputes the basis from the current transforms.
    pub(crate) fn refresh_basis(&mut self, transform_sum: ArrayView2<'_, f64>) {
        let g = self.span.basis_for(transform_sum, self.rank_tol);
        self.mix = g.dot(&g.t()) * self.lambda;
        self.refresh_corrections();
    }

    fn refresh_corrections(&mut self) {
        self.cu = self.mix.dot(&self.bu);
        self.cv = self.mix.dot(&self.bv);
    }

    /// Recomputes `Q^T U`, `Q^T V` exactly, discarding accumulated rounding.
    pub(crate) fn resync(&mut self, state: &ModelState) {
        self.bu = self.span.q.t().dot(&state.u);
        self.bv = self.span.q.t().dot(&state.v);
        self.refresh_corrections();
    }

    /// Notes that raw row `row` of `side` moved by `delta`.
    pub(crate) fn record(&mut self, side: Side, row: usize, delta: &[f64]) {
        let k = self.span.rank();
        if k == 0 {
            return;
        }
        let d = delta.len();
        let b = match side {
            Side::Center => &mut self.bu,
            Side::Context => &mut self.bv,
        };
        let b = b.as_slice_mut().expect("standard layout");
        let q = &self.span.q.as_slice().expect("standard layout")[row * k..(row + 1) * k];
        for (brow, &qk) in b.chunks_exact_mut(d).zip(q) {
            if qk != 0.0 {
                for (bc, &dc) in brow.iter_mut().zip(delta) {
                    *bc += qk * dc;
                }
            }
        }
    }

    /// Turns a raw row into its projected counterpart in place.
    pub(crate) fn project_row(&self, side: Side, row: usize, values: &mut [f64]) {
        let k = self.span.rank();
        if k == 0 {
            return;
        }
        let d = values.len();
        let c = match side {
            Side::Center => &self.cu,
            Side::Context => &self.cv,
        };
        let c = c.as_slice().expect("standard layout");
        let q = &self.span.q.as_slice().expect("standard layout")[row * k..(row + 1) * k];
        for (crow, &qk) in c.chunks_exact(d).zip(q) {
            if qk != 0.0 {
                for (v, &cc) in values.iter_mut().zip(crow) {
                    *v -= qk * cc;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MetadataMatrix;
    use crate::train::{init_model, TrainConfig, Variant};

    #[test]
    fn incremental_projection_matches_direct_route() {
        let n = 30;
        let mut meta = Array2::zeros((n, 3));
        for i in 0..n {
            meta[[i, i % 3]] = 1.0;
            meta[[i, 2]] += (i as f64) * 0.1;
        }
        let meta = MetadataMatrix::new(meta).unwrap();
        for lambda in [0.3, 1.0] {
            let cfg = TrainConfig {
                variant: Variant::Monet,
                dims: 4,
                meta_dims: 2,
                lambda,
                init_scale: 0.7,
                seed: 3,
                ..Default::default()
            };
            let mut state = init_model(n, Some(&meta), &cfg).unwrap();
            let mut db = state.debiaser().unwrap();

            // Move a few raw rows and record the moves.
            for (row, shift) in [(0usize, 0.5), (7, -1.25), (29, 2.0)] {
                let delta = vec![shift; 4];
                for (x, dx) in state.u.row_mut(row).iter_mut().zip(&delta) {
                    *x += dx;
                }
                db.record(Side::Center, row, &delta);
            }
            state.meta.as_mut().unwrap().t1[[1, 0]] += 0.3;
            db.refresh_basis(state.transform_sum().unwrap().view());

            let (direct_u, direct_v) = state.topology().unwrap();
            for i in 0..n {
                let mut row = state.u.row(i).to_vec();
                db.project_row(Side::Center, i, &mut row);
                for (a, b) in row.iter().zip(direct_u.row(i)) {
                    assert!((a - b).abs() < 1e-12, "lambda {lambda} row {i}: {a} vs {b}");
                }
                let mut row = state.v.row(i).to_vec();
                db.project_row(Side::Context, i, &mut row);
                for (a, b) in row.iter().zip(direct_v.row(i)) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rank_deficient_metadata_span() {
        let mut m = Array2::zeros((6, 2));
        m.column_mut(0).fill(1.0);
        m.column_mut(1).fill(2.0);
        let span = MetadataSpan::new(m.view(), 1e-8);
        assert_eq!(span.rank(), 1);
        let zero = MetadataSpan::new(Array2::<f64>::zeros((6, 2)).view(), 1e-8);
        assert_eq!(zero.rank(), 0);
    }
}
