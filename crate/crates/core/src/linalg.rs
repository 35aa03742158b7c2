//! Orthonormal bases, relaxed orthogonal projection, metadata leakage and
//! the few dense kernels the pipeline needs.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::stats;

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Orthonormal basis `Q` of a matrix column span together with the
/// relaxation `lambda` used when projecting against it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    basis: Array2<f64>,
    tolerance: f64,
    lambda: f64,
}

impl ProjectionBasis {
    pub fn basis(&self) -> ArrayView2<'_, f64> {
        self.basis.view()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn rows(&self) -> usize {
        self.basis.nrows()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )))
    }
}

fn to_nalgebra(m: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Left singular vectors of `m` whose singular values exceed
/// `rank_tol * sigma_max`, as an `n x r` matrix.
///
/// Computed as a Householder QR followed by an SVD of the small triangular
/// factor, so the cost is `O(n * k^2)` for `k` columns.
pub(crate) fn left_singular_basis(m: ArrayView2<'_, f64>, rank_tol: f64) -> Array2<f64> {
    let (n, k) = m.dim();
    if n == 0 || k == 0 || m.iter().all(|&v| v == 0.0) {
        return Array2::zeros((n, 0));
    }
    let qr = to_nalgebra(m).qr();
    let q = qr.q();
    let r = qr.r();
    let svd = r.svd(true, false);
    let u = svd.u.expect("requested left singular vectors");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let mut keep: Vec<usize> = (0..sigma.len())
        .filter(|&i| sigma[i] > rank_tol * smax)
        .collect();
    keep.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let mut basis = Array2::zeros((n, keep.len()));
    for (col, &s) in keep.iter().enumerate() {
        let dir = &q * u.column(s);
        for row in 0..n {
            basis[[row, col]] = dir[row];
        }
    }
    basis
}

/// Orthonormal basis of the column span of `z`, dropping directions whose
/// singular value is at most `rank_tol` times the largest.
pub fn orthonormal_basis(
    z: ArrayView2<'_, f64>,
    rank_tol: f64,
    lambda: f64,
) -> Result<ProjectionBasis> {
    check_lambda(lambda)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in basis input".into()));
    }
    let basis = left_singular_basis(z, rank_tol);
    if basis.ncols() == 0 {
        log::warn!("metadata embedding has rank 0; projection is the identity");
    }
    Ok(ProjectionBasis {
        basis,
        tolerance: rank_tol,
        lambda,
    })
}

/// `W - lambda * Q (Q^T W)`, never forming the `n x n` projector.
pub fn project(w: ArrayView2<'_, f64>, basis: &ProjectionBasis) -> Result<Array2<f64>> {
    if w.nrows() != basis.rows() {
        return Err(Error::Dimension(format!(
            "cannot project {} rows against a basis over {} rows",
            w.nrows(),
            basis.rows()
        )));
    }
    if basis.lambda == 0.0 || basis.rank() == 0 {
        return Ok(w.to_owned());
    }
    let coeff = basis.basis.t().dot(&w);
    let mut out = w.to_owned();
    out.scaled_add(-basis.lambda, &basis.basis.dot(&coeff));
    Ok(out)
}

/// Squared Frobenius norm of `Z^T W`.
pub fn metadata_leakage(z: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Result<f64> {
    if z.nrows() != w.nrows() {
        return Err(Error::Dimension(format!(
            "leakage needs equal row counts, got {} and {}",
            z.nrows(),
            w.nrows()
        )));
    }
    Ok(z.t().dot(&w).iter().map(|v| v * v).sum())
}

pub fn frobenius(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Coordinates of the rows of `w` on its top two principal directions.
///
/// Each direction is signed so that its largest-magnitude entry is positive.
pub fn pca_2d(w: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (n, d) = w.dim();
    if n < 2 {
        return Err(Error::Dimension(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    if d < 2 {
        return Err(Error::Dimension(format!(
            "PCA needs at least 2 columns, got {d}"
        )));
    }
    let mean = w.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &w - &mean;
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(to_nalgebra(cov.view()));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut dirs = Array2::zeros((d, 2));
    for (col, &idx) in order.iter().take(2).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = (0..d).fold(
            0,
            |best, i| if v[i].abs() > v[best].abs() { i } else { best },
        );
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            dirs[[i, col]] = sign * v[i];
        }
    }
    Ok(centered.dot(&dirs))
}

/// `1 - cos(a, b)`. A zero vector is treated as orthogonal to everything.
pub fn cosine_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - a.dot(&b) / (na * nb)
}

/// Pearson correlation between the cosine distances two embeddings assign to
/// the same node pairs. `sample_pairs == 0` uses every pair.
pub fn distance_correlation(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    sample_pairs: usize,
    seed: u64,
) -> Result<f64> {
    let n = a.nrows();
    if n != b.nrows() {
        return Err(Error::Dimension(format!(
            "row counts differ: {} vs {}",
            n,
            b.nrows()
        )));
    }
    if n < 3 {
        return Err(Error::Dimension(format!("need at least 3 rows, got {n}")));
    }
    if sample_pairs == 1 {
        return Err(Error::Config("sample_pairs must be 0 or at least 2".into()));
    }
    let pairs: Vec<(usize, usize)> = if sample_pairs == 0 {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect()
    } else {
        let mut rng = rng::seeded(seed);
        (0..sample_pairs)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            })
            .collect()
    };
    let da: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| cosine_distance(a.row(i), a.row(j)))
        .collect();
    let db: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| cosine_distance(b.row(i), b.row(j)))
        .collect();
    stats::pearson(&da, &db)
        .ok_or_else(|| Error::Undefined("cosine distances have zero variance".into()))
}
