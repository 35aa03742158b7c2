//! Affiliation classifiers used to measure how much label information an
//! embedding still carries.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Linear,
    Nonlinear,
}

impl std::fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProbeKind::Linear => "linear",
            ProbeKind::Nonlinear => "nonlinear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// L2 penalty of the logistic probe (per-sample loss scale).
    pub linear_reg: f64,
    pub linear_max_iters: usize,
    /// Gradient-norm convergence threshold of the logistic probe.
    pub linear_tol: f64,
    /// RBF width; `None` means `1 / d`.
    pub gamma: Option<f64>,
    /// Ridge added to the kernel diagonal.
    pub kernel_reg: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            linear_reg: 1e-3,
            linear_max_iters: 10_000,
            linear_tol: 1e-6,
            gamma: None,
            kernel_reg: 0.1,
        }
    }
}

/// Per-column affine map fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Standardizer {
    /// Constant columns keep unit scale so they map to zero.
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("non-empty rows");
        let scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 0.0 && s.is_finite() { s } else { 1.0 });
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.scale
    }
}

fn check_training_set(x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<()> {
    if x.nrows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Config(format!("probes are binary; got label {bad}")));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::Config(
            "training labels contain a single class".into(),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite features".into()));
    }
    Ok(())
}

fn sign_label(l: usize) -> f64 {
    if l == 1 {
        1.0
    } else {
        -1.0
    }
}

/// L2-regularised logistic regression on standardised features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    standardizer: Standardizer,
    weights: Array1<f64>,
    intercept: f64,
    iterations: usize,
    converged: bool,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss gradient plus ridge term, intercept last.
fn logistic_gradient(
    x: &Array2<f64>,
    y: &[f64],
    w: &Array1<f64>,
    b: f64,
    reg: f64,
) -> (Array1<f64>, f64) {
    let n = x.nrows() as f64;
    let margins = x.dot(w) + b;
    // d/dt log(1 + exp(-y t)) = -y sigmoid(-y t)
    let coef: Array1<f64> = margins
        .iter()
        .zip(y)
        .map(|(&t, &yi)| -yi * sigmoid(-yi * t) / n)
        .collect();
    let gw = x.t().dot(&coef) + reg * w;
    (gw, coef.sum())
}

impl LinearProbe {
    pub fn fit(x: ArrayView2<'_, f64>, labels: &[usize], config: &ProbeConfig) -> Result<Self> {
        check_training_set(x, labels)?;
        let standardizer = Standardizer::fit(x);
        let xs = standardizer.apply(x);
        let y: Vec<f64> = labels.iter().map(|&l| sign_label(l)).collect();
        let (n, d) = xs.dim();
        let reg = config.linear_reg;

        // Hessian bound: 0.25 * trace([X 1]^T [X 1]) / n + reg.
        let trace = (xs.iter().map(|v| v * v).sum::<f64>() + n as f64) / n as f64;
        let step = 1.0 / (0.25 * trace + reg);

        let (mut w, mut b) = (Array1::zeros(d), 0.0);
        let (mut w_prev, mut b_prev) = (w.clone(), b);
        let mut converged = false;
        let mut iterations = 0;
        for k in 0..config.linear_max_iters {
            iterations = k + 1;
            let momentum = k as f64 / (k as f64 + 3.0);
            let yw = &w + &((&w - &w_prev) * momentum);
            let yb = b + momentum * (b - b_prev);
            let (gw, gb) = logistic_gradient(&xs, &y, &yw, yb, reg);
            w_prev = std::mem::replace(&mut w, &yw - &(&gw * step));
            b_prev = std::mem::replace(&mut b, yb - step * gb);

            let (gw, gb) = logistic_gradient(&xs, &y, &w, b, reg);
            let norm = (gw.dot(&gw) + gb * gb).sqrt();
            if norm < config.linear_tol {
                converged = true;
                break;
            }
        }
        if !w.iter().all(|v| v.is_finite()) || !b.is_finite() {
            return Err(Error::Numerical("logistic probe diverged".into()));
        }
        Ok(LinearProbe {
            standardizer,
            weights: w,
            intercept: b,
            iterations,
            converged,
        })
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        let scores = self.standardizer.apply(x).dot(&self.weights) + self.intercept;
        scores.iter().map(|&s| usize::from(s > 0.0)).collect()
    }
}

/// Kernel ridge regression on `+-1` labels with an RBF kernel and sign
/// readout.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelProbe {
    standardizer: Standardizer,
    support: Array2<f64>,
    dual: Array1<f64>,
    gamma: f64,
}

fn rbf(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, gamma: f64) -> Array2<f64> {
    let na: Array1<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
    let nb: Array1<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut k = a.dot(&b.t());
    for ((i, j), v) in k.indexed_iter_mut() {
        let sq = (na[i] + nb[j] - 2.0 * *v).max(0.0);
        *v = (-gamma * sq).exp();
    }
    k
}

impl KernelProbe {
    pub fn fit(x: ArrayView2<'_, f64>, labels: &[usize], config: &ProbeConfig) -> Result<Self> {
        check_training_set(x, labels)?;
        if !(config.kernel_reg > 0.0) {
            return Err(Error::Config("kernel_reg must be positive".into()));
        }
        let gamma = config.gamma.unwrap_or(1.0 / x.ncols() as f64);
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        let standardizer = Standardizer::fit(x);
        let support = standardizer.apply(x);
        let n = support.nrows();
        let k = rbf(support.view(), support.view(), gamma);
        let mut system = DMatrix::from_fn(n, n, |i, j| k[[i, j]]);
        for i in 0..n {
            system[(i, i)] += config.kernel_reg;
        }
        let rhs = DVector::from_iterator(n, labels.iter().map(|&l| sign_label(l)));
        let chol = Cholesky::new(system)
            .ok_or_else(|| Error::Numerical("kernel system is not positive definite".into()))?;
        let alpha = chol.solve(&rhs);
        Ok(KernelProbe {
            standardizer,
            support,
            dual: alpha.iter().copied().collect(),
            gamma,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        let xs = self.standardizer.apply(x);
        let scores = rbf(xs.view(), self.support.view(), self.gamma).dot(&self.dual);
        scores.iter().map(|&s| usize::from(s > 0.0)).collect()
    }
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// Fits a probe of `kind` on the `train` rows and returns accuracy on the
/// `test` rows.
pub fn probe_accuracy(
    kind: ProbeKind,
    w: ArrayView2<'_, f64>,
    labels: &[usize],
    train: &[usize],
    test: &[usize],
    config: &ProbeConfig,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("probe test set".into()));
    }
    let xtr = w.select(Axis(0), train);
    let ytr: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let xte = w.select(Axis(0), test);
    let yte: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let predicted = match kind {
        ProbeKind::Linear => LinearProbe::fit(xtr.view(), &ytr, config)?.predict(xte.view()),
        ProbeKind::Nonlinear => KernelProbe::fit(xtr.view(), &ytr, config)?.predict(xte.view()),
    };
    Ok(accuracy(&predicted, &yte))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, Normal};

    fn clusters(
        n: usize,
        seed: u64,
        centers: &[([f64; 2], usize)],
        noise: f64,
    ) -> (Array2<f64>, Vec<usize>) {
        let mut rng = rng::seeded(seed);
        let dist = Normal::new(0.0, noise).unwrap();
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let (c, label) = centers[i % centers.len()];
            x[[i, 0]] = c[0] + dist.sample(&mut rng);
            x[[i, 1]] = c[1] + dist.sample(&mut rng);
            y.push(label);
        }
        (x, y)
    }

    fn halves(n: usize) -> (Vec<usize>, Vec<usize>) {
        (
            (0..n).filter(|i| (i / 4) % 2 == 0).collect(),
            (0..n).filter(|i| (i / 4) % 2 == 1).collect(),
        )
    }

    #[test]
    fn separable_clusters_are_learned_perfectly() {
        let (x, y) = clusters(200, 1, &[([3.0, 3.0], 1), ([-3.0, -3.0], 0)], 0.5);
        let (train, test) = halves(200);
        let cfg = ProbeConfig::default();
        for kind in [ProbeKind::Linear, ProbeKind::Nonlinear] {
            let acc = probe_accuracy(kind, x.view(), &y, &train, &test, &cfg).unwrap();
            assert_eq!(acc, 1.0, "{kind}");
        }
        let probe = LinearProbe::fit(x.view(), &y, &cfg).unwrap();
        assert!(probe.converged(), "{} iterations", probe.iterations());
    }

    #[test]
    fn xor_needs_the_kernel() {
        let centers = [
            ([1.0, 1.0], 1),
            ([-1.0, -1.0], 1),
            ([1.0, -1.0], 0),
            ([-1.0, 1.0], 0),
        ];
        let (x, y) = clusters(400, 2, &centers, 0.2);
        let (train, test) = halves(400);
        let cfg = ProbeConfig::default();
        let nonlinear =
            probe_accuracy(ProbeKind::Nonlinear, x.view(), &y, &train, &test, &cfg).unwrap();
        let linear = probe_accuracy(ProbeKind::Linear, x.view(), &y, &train, &test, &cfg).unwrap();
        assert!(nonlinear >= 0.95, "nonlinear {nonlinear}");
        assert!(linear <= 0.6, "linear {linear}");
    }

    #[test]
    fn permuted_labels_score_near_chance() {
        let cfg = ProbeConfig::default();
        let mut inside = [0usize; 2];
        let runs = 20;
        for seed in 0..runs {
            let mut rng = rng::seeded(100 + seed);
            let dist = Normal::new(0.0, 1.0).unwrap();
            let x = Array2::from_shape_simple_fn((2000, 8), || dist.sample(&mut rng));
            let mut y: Vec<usize> = (0..2000).map(|i| i % 2).collect();
            y.shuffle(&mut rng);
            let (train, test) = halves(2000);
            for (slot, kind) in [ProbeKind::Linear, ProbeKind::Nonlinear]
                .into_iter()
                .enumerate()
            {
                let acc = probe_accuracy(kind, x.view(), &y, &train, &test, &cfg).unwrap();
                if (acc - 0.5).abs() <= 0.06 {
                    inside[slot] += 1;
                }
            }
        }
        // At least 95% of seeded runs inside the band.
        for count in inside {
            assert!(count * 100 >= 95 * runs as usize, "{count}/{runs}");
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = Array2::zeros((4, 2));
        let cfg = ProbeConfig::default();
        assert!(LinearProbe::fit(x.view(), &[1, 1, 1, 1], &cfg).is_err());
        assert!(KernelProbe::fit(x.view(), &[0, 0, 0, 0], &cfg).is_err());
        assert!(LinearProbe::fit(x.view(), &[0, 1, 2, 1], &cfg).is_err());
    }

    #[test]
    fn kernel_gamma_defaults_to_inverse_dimension() {
        let (x, y) = clusters(20, 3, &[([1.0, 0.0], 1), ([0.0, 1.0], 0)], 0.1);
        let p = KernelProbe::fit(x.view(), &y, &ProbeConfig::default()).unwrap();
        assert_eq!(p.gamma(), 0.5);
    }
}
