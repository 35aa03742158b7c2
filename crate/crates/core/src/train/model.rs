use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::debias::{Debiaser, MetadataSpan};
use super::{TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::graph::MetadataMatrix;
use crate::linalg;
use crate::rng;

/// Metadata input and the two transforms producing `X = M T1`, `Y = M T2`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct MetaParams {
    pub(crate) m: Arc<Array2<f64>>,
    pub(crate) t1: Array2<f64>,
    pub(crate) t2: Array2<f64>,
    pub(crate) acc_t1: Array2<f64>,
    pub(crate) acc_t2: Array2<f64>,
}

/// Trainable parameters plus their AdaGrad accumulators.
///
/// For `Monet`, `u` and `v` hold the unprojected parameters; the embedding
/// the model actually uses is their projection against the current metadata
/// embedding (see [`ModelState::topology`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub(crate) variant: Variant,
    pub(crate) lambda: f64,
    pub(crate) rank_tol: f64,
    pub(crate) u: Array2<f64>,
    pub(crate) v: Array2<f64>,
    pub(crate) a: Array1<f64>,
    pub(crate) b: Array1<f64>,
    pub(crate) acc_u: Array2<f64>,
    pub(crate) acc_v: Array2<f64>,
    pub(crate) acc_a: Array1<f64>,
    pub(crate) acc_b: Array1<f64>,
    pub(crate) meta: Option<MetaParams>,
    pub(crate) span: Option<Arc<MetadataSpan>>,
}

impl ModelState {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn node_count(&self) -> usize {
        self.u.nrows()
    }

    pub fn dims(&self) -> usize {
        self.u.ncols()
    }

    pub fn meta_dims(&self) -> usize {
        self.meta.as_ref().map_or(0, |m| m.t1.ncols())
    }

    pub fn metadata_dims(&self) -> usize {
        self.meta.as_ref().map_or(0, |m| m.m.ncols())
    }

    /// Raw center and context parameters.
    pub fn raw_center(&self) -> ArrayView2<'_, f64> {
        self.u.view()
    }

    pub fn raw_context(&self) -> ArrayView2<'_, f64> {
        self.v.view()
    }

    pub fn biases(&self) -> (&Array1<f64>, &Array1<f64>) {
        (&self.a, &self.b)
    }

    pub fn transforms(&self) -> Option<(ArrayView2<'_, f64>, ArrayView2<'_, f64>)> {
        self.meta.as_ref().map(|m| (m.t1.view(), m.t2.view()))
    }

    pub fn metadata(&self) -> Option<ArrayView2<'_, f64>> {
        self.meta.as_ref().map(|m| m.m.view())
    }

    pub(crate) fn transform_sum(&self) -> Option<Array2<f64>> {
        self.meta.as_ref().map(|m| &m.t1 + &m.t2)
    }

    /// `Z = M T1 + M T2`.
    pub fn metadata_embedding(&self) -> Option<Array2<f64>> {
        self.meta.as_ref().map(|m| m.m.dot(&(&m.t1 + &m.t2)))
    }

    /// The basis used to debias the topology embeddings, if any.
    pub fn projection_basis(&self) -> Result<Option<linalg::ProjectionBasis>> {
        if self.variant != Variant::Monet {
            return Ok(None);
        }
        let z = self.metadata_embedding().expect("monet carries metadata");
        linalg::orthonormal_basis(z.view(), self.rank_tol, self.lambda).map(Some)
    }

    /// The center and context embeddings the model uses: raw for `Glove`
    /// and `GloveMeta`, projected against the metadata embedding for
    /// `Monet`.
    pub fn topology(&self) -> Result<(Array2<f64>, Array2<f64>)> {
        match self.projection_basis()? {
            Some(basis) => Ok((
                linalg::project(self.u.view(), &basis)?,
                linalg::project(self.v.view(), &basis)?,
            )),
            None => Ok((self.u.clone(), self.v.clone())),
        }
    }

    pub(crate) fn debiaser(&self) -> Option<Debiaser> {
        match (&self.span, self.variant) {
            (Some(span), Variant::Monet) if self.lambda > 0.0 => {
                Some(Debiaser::new(span.clone(), self))
            }
            _ => None,
        }
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut check = |name: &str, ok: bool| {
            if !ok {
                bad.push(name.to_string());
            }
        };
        check("U", self.u.iter().all(|v| v.is_finite()));
        check("V", self.v.iter().all(|v| v.is_finite()));
        check("a", self.a.iter().all(|v| v.is_finite()));
        check("b", self.b.iter().all(|v| v.is_finite()));
        if let Some(m) = &self.meta {
            check("T1", m.t1.iter().all(|v| v.is_finite()));
            check("T2", m.t2.iter().all(|v| v.is_finite()));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Numerical(format!(
                "non-finite parameters: {}",
                bad.join(", ")
            )))
        }
    }
}

fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    if scale == 0.0 {
        return Array2::zeros((rows, cols));
    }
    let dist = Uniform::new_inclusive(-scale, scale).expect("finite scale");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Fresh parameters for `n` nodes. Draws come from one generator seeded by
/// `config.seed`, in the order U, V, a, b, T1, T2, so every variant starts
/// from the same topology parameters.
pub fn init_model(
    n: usize,
    metadata: Option<&MetadataMatrix>,
    config: &TrainConfig,
) -> Result<ModelState> {
    config.validate()?;
    let variant = config.variant;
    let meta_input = match (variant.uses_metadata(), metadata) {
        (true, None) => {
            return Err(Error::Config(format!(
                "variant {variant} requires metadata"
            )))
        }
        (true, Some(m)) if m.node_count() != n => {
            return Err(Error::Dimension(format!(
                "metadata has {} rows for {n} nodes",
                m.node_count()
            )))
        }
        (true, Some(m)) => Some(Arc::new(m.values().to_owned())),
        (false, _) => None,
    };

    let d = config.dims;
    let scale = config.init_scale;
    let mut rng = rng::seeded(config.seed);
    let u = uniform_matrix(&mut rng, n, d, scale);
    let v = uniform_matrix(&mut rng, n, d, scale);
    let a = uniform_matrix(&mut rng, n, 1, scale)
        .into_shape_with_order(n)
        .expect("n x 1");
    let b = uniform_matrix(&mut rng, n, 1, scale)
        .into_shape_with_order(n)
        .expect("n x 1");

    let eps = config.accumulator_init;
    let meta = meta_input.map(|m| {
        let (rows, dz) = (m.ncols(), config.meta_dims);
        let t1 = uniform_matrix(&mut rng, rows, dz, scale);
        let t2 = uniform_matrix(&mut rng, rows, dz, scale);
        MetaParams {
            acc_t1: Array2::from_elem((rows, dz), eps),
            acc_t2: Array2::from_elem((rows, dz), eps),
            m,
            t1,
            t2,
        }
    });
    let span = match (&meta, variant) {
        (Some(meta), Variant::Monet) => {
            let span = MetadataSpan::new(meta.m.view(), config.rank_tol);
            if span.rank() == 0 {
                log::warn!("metadata has rank 0; monet training will not debias");
            }
            Some(Arc::new(span))
        }
        _ => None,
    };

    Ok(ModelState {
        variant,
        lambda: config.lambda,
        rank_tol: config.rank_tol,
        acc_u: Array2::from_elem((n, d), eps),
        acc_v: Array2::from_elem((n, d), eps),
        acc_a: Array1::from_elem(n, eps),
        acc_b: Array1::from_elem(n, eps),
        u,
        v,
        a,
        b,
        meta,
        span,
    })
}

/// GloVe weighting `min(1, (c / x_max)^alpha)`.
pub fn smoothing(c: f64, x_max: f64, alpha: f64) -> f64 {
    if c < x_max {
        (c / x_max).powf(alpha)
    } else {
        1.0
    }
}

/// Weighted squared residual of one co-occurrence pair, evaluated at the
/// embeddings the model uses (projected for `Monet`).
///
/// Builds the projection from scratch, so it costs `O(n d)`; the trainer
/// uses an incrementally maintained projection instead.
pub fn pair_loss(state: &ModelState, config: &TrainConfig, i: u32, j: u32, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Numerical(format!(
            "co-occurrence {c} must be positive"
        )));
    }
    let debias = state.debiaser();
    let e = super::grad::residual(state, debias.as_ref(), i as usize, j as usize, c);
    Ok(smoothing(c, config.x_max, config.alpha) * e * e)
}

/// `W = U + V` as used by the model, and `Z = M T1 + M T2` when metadata is
/// present.
pub fn combined_embedding(state: &ModelState) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
    let z = state.metadata_embedding();
    let w_raw = &state.u + &state.v;
    let w = match state.projection_basis()? {
        Some(basis) => linalg::project(w_raw.view(), &basis)?,
        None => w_raw,
    };
    Ok((w, z))
}

/// `m x m` matrix `T1 T2^T` relating pairs of metadata dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMatrix {
    pub sigma_t: Array2<f64>,
}

pub fn metadata_importance(state: &ModelState) -> Result<ImportanceMatrix> {
    match &state.meta {
        Some(m) => Ok(ImportanceMatrix {
            sigma_t: m.t1.dot(&m.t2.t()),
        }),
        None => Err(Error::Config(format!(
            "variant {} has no metadata transforms",
            state.variant
        ))),
    }
}

/// I.i.d. standard normal `n x d` matrix.
pub fn random_embedding(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng::seeded(seed);
    Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::metadata_leakage;

    fn blog_like_meta(n: usize) -> MetadataMatrix {
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        MetadataMatrix::one_hot(&labels, 2).unwrap()
    }

    #[test]
    fn blog_and_shilling_shapes() {
        let cfg = TrainConfig {
            variant: Variant::Monet,
            dims: 16,
            meta_dims: 2,
            ..Default::default()
        };
        let s = init_model(1107, Some(&blog_like_meta(1107)), &cfg).unwrap();
        assert_eq!(s.u.dim(), (1107, 16));
        assert_eq!(s.meta.as_ref().unwrap().t1.dim(), (2, 2));

        let counts = MetadataMatrix::new(Array2::from_elem((1682, 1), 1.0)).unwrap();
        let cfg = TrainConfig {
            variant: Variant::Monet,
            dims: 128,
            meta_dims: 1,
            ..Default::default()
        };
        let s = init_model(1682, Some(&counts), &cfg).unwrap();
        assert_eq!(s.v.dim(), (1682, 128));
        assert_eq!(s.transforms().unwrap().1.dim(), (1, 1));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = TrainConfig {
            seed: 5,
            ..Default::default()
        };
        let a = init_model(30, None, &cfg).unwrap();
        let b = init_model(30, None, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.u.iter().all(|v| v.abs() <= cfg.init_scale));
        assert!(a.acc_u.iter().all(|&v| v == 1e-8));
        let c = init_model(30, None, &TrainConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a.u, c.u);
    }

    #[test]
    fn metadata_variants_need_metadata() {
        let cfg = TrainConfig {
            variant: Variant::Monet,
            ..Default::default()
        };
        assert!(matches!(init_model(4, None, &cfg), Err(Error::Config(_))));
        let meta = blog_like_meta(5);
        assert!(matches!(
            init_model(4, Some(&meta), &cfg),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn smoothing_values() {
        assert_eq!(smoothing(100.0, 100.0, 0.75), 1.0);
        assert_eq!(smoothing(500.0, 100.0, 0.75), 1.0);
        assert!((smoothing(100.0 / 16.0, 100.0, 0.75) - 0.125).abs() < 1e-15);
    }

    fn zeroed(variant: Variant) -> (ModelState, TrainConfig) {
        let cfg = TrainConfig {
            variant,
            dims: 3,
            meta_dims: 2,
            init_scale: 0.0,
            ..Default::default()
        };
        let meta = blog_like_meta(4);
        let m = if variant.uses_metadata() {
            Some(&meta)
        } else {
            None
        };
        (init_model(4, m, &cfg).unwrap(), cfg)
    }

    #[test]
    fn zero_parameters_loss() {
        let (s, cfg) = zeroed(Variant::Glove);
        assert_eq!(pair_loss(&s, &cfg, 0, 1, 1.0).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let expected = smoothing(e, cfg.x_max, cfg.alpha);
        assert!((pair_loss(&s, &cfg, 0, 1, e).unwrap() - expected).abs() < 1e-15);
        assert!(pair_loss(&s, &cfg, 0, 1, 0.0).is_err());
    }

    #[test]
    fn zero_transforms_match_glove() {
        let (mut g, cfg) = zeroed(Variant::Glove);
        let (mut gm, _) = zeroed(Variant::GloveMeta);
        let fill = random_embedding(4, 3, 1);
        g.u.assign(&fill);
        gm.u.assign(&fill);
        g.v.assign(&fill.t().dot(&fill).dot(&fill.t()).t());
        gm.v.assign(&g.v);
        for (i, j) in [(0, 1), (2, 3), (1, 3)] {
            assert_eq!(
                pair_loss(&g, &cfg, i, j, 3.0).unwrap(),
                pair_loss(&gm, &cfg, i, j, 3.0).unwrap()
            );
        }
    }

    #[test]
    fn combined_embedding_sums() {
        let (mut s, _) = zeroed(Variant::GloveMeta);
        let u = random_embedding(4, 3, 2);
        s.u.assign(&u);
        s.v.assign(&(-&u));
        let m = s.meta.as_mut().unwrap();
        m.t1.assign(&random_embedding(2, 2, 3));
        let (w, z) = combined_embedding(&s).unwrap();
        assert!(w.iter().all(|&x| x == 0.0));
        let meta = s.meta.as_ref().unwrap();
        assert_eq!(z.unwrap(), meta.m.dot(&meta.t1));
    }

    #[test]
    fn monet_combined_embedding_is_orthogonal() {
        let cfg = TrainConfig {
            variant: Variant::Monet,
            dims: 5,
            meta_dims: 2,
            init_scale: 0.5,
            ..Default::default()
        };
        let s = init_model(40, Some(&blog_like_meta(40)), &cfg).unwrap();
        let (w, z) = combined_embedding(&s).unwrap();
        let z = z.unwrap();
        let leak = metadata_leakage(z.view(), w.view()).unwrap();
        let rel = linalg::frobenius(z.view()) * linalg::frobenius(w.view());
        assert!(leak.sqrt() <= 1e-6 * rel);
    }

    #[test]
    fn importance_is_transform_product() {
        let (mut s, _) = zeroed(Variant::GloveMeta);
        let m = s.meta.as_mut().unwrap();
        m.t1.assign(&Array2::eye(2));
        m.t2.assign(&Array2::eye(2));
        assert_eq!(
            metadata_importance(&s).unwrap().sigma_t,
            Array2::<f64>::eye(2)
        );
        let (g, _) = zeroed(Variant::Glove);
        assert!(metadata_importance(&g).is_err());
    }

    #[test]
    fn random_embedding_is_centered_and_seeded() {
        let (n, d) = (500, 20);
        let w = random_embedding(n, d, 9);
        assert_eq!(w, random_embedding(n, d, 9));
        assert!(w.mean().unwrap().abs() <= 3.0 / ((n * d) as f64).sqrt());
        let z = blog_like_meta(n).into_values();
        assert!(metadata_leakage(z.view(), w.view()).unwrap() > 0.0);
    }
}
