//! Exact Gaussian process regression with a squared-exponential kernel,
//! zero prior mean and a hand-written Cholesky factorization.

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::GaussianPrediction;
use crate::rng;
use crate::{Error, Result};

pub const JITTER_START: f64 = 1e-8;
pub const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_var: f64,
    pub lengthscale: f64,
    pub noise_var: f64,
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.signal_var) || !ok(self.lengthscale) || !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::domain(format!("invalid kernel parameters {self:?}")));
        }
        Ok(())
    }

    pub fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_var * (-0.5 * d2 / (self.lengthscale * self.lengthscale)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GprConfig {
    /// Maximum training rows; larger sets are subsampled.
    pub max_rows: usize,
    /// Rows used by the hyperparameter grid search.
    pub search_rows: usize,
    pub lengthscales: Vec<f64>,
    pub signal_vars: Vec<f64>,
    pub noise_vars: Vec<f64>,
    /// Skip the search and use these parameters.
    pub fixed: Option<KernelParams>,
    pub seed: u64,
}

impl Default for GprConfig {
    fn default() -> Self {
        GprConfig {
            max_rows: 2000,
            search_rows: 2000,
            lengthscales: vec![1.0, 2.0, 4.0, 8.0],
            signal_vars: vec![0.5, 1.0, 2.0],
            noise_vars: vec![1e-4, 1e-2],
            fixed: None,
            seed: 0,
        }
    }
}

impl GprConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rows == 0 || self.search_rows == 0 {
            return Err(Error::domain("GPR row caps must be positive"));
        }
        if self.fixed.is_none()
            && (self.lengthscales.is_empty() || self.signal_vars.is_empty() || self.noise_vars.is_empty())
        {
            return Err(Error::domain("GPR grid must be non-empty"));
        }
        if let Some(p) = self.fixed {
            p.validate()?;
        }
        Ok(())
    }
}

/// Lower Cholesky factor of a symmetric matrix, or `None` if it is not
/// numerically positive definite.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    {
        let ls = l.as_slice_mut().expect("standard layout");
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (i * n, j * n);
                let dot: f64 = ls[ri..ri + j].iter().zip(&ls[rj..rj + j]).map(|(x, y)| x * y).sum();
                let v = a[[i, j]] - dot;
                if i == j {
                    if !(v > 0.0) || !v.is_finite() {
                        return None;
                    }
                    ls[ri + i] = v.sqrt();
                } else {
                    ls[ri + j] = v / ls[rj + j];
                }
            }
        }
    }
    Some(l)
}

/// Solves `L z = b` for lower-triangular `L`.
pub fn solve_lower(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let ls = l.as_slice().expect("standard layout");
    let mut z = vec![0.0; n];
    for i in 0..n {
        let row = &ls[i * n..i * n + i];
        let dot: f64 = row.iter().zip(&z[..i]).map(|(x, y)| x * y).sum();
        z[i] = (b[i] - dot) / ls[i * n + i];
    }
    z
}

/// Solves `L^T z = b` for lower-triangular `L`.
pub fn solve_upper_t(l: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut z = b.to_vec();
    for i in (0..n).rev() {
        z[i] /= l[[i, i]];
        let zi = z[i];
        for (k, zk) in z.iter_mut().enumerate().take(i) {
            *zk -= l[[i, k]] * zi;
        }
    }
    z
}

fn kernel_matrix(x: ArrayView2<f64>, p: &KernelParams) -> Array2<f64> {
    let n = x.nrows();
    let rows: Vec<&[f64]> = x.outer_iter().map(|r| r.to_slice().expect("standard layout")).collect();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = p.k(rows[i], rows[j]);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Factorizes `K + (noise + jitter) I`, escalating the jitter by 10x from
/// [`JITTER_START`] up to [`JITTER_MAX`].
fn factorize(k: &Array2<f64>, noise: f64) -> Result<(Array2<f64>, f64)> {
    let mut jitter = JITTER_START;
    loop {
        let mut a = k.clone();
        for i in 0..a.nrows() {
            a[[i, i]] += noise + jitter;
        }
        if let Some(l) = cholesky(&a) {
            return Ok((l, jitter));
        }
        if jitter >= JITTER_MAX {
            return Err(Error::Numerical(format!(
                "kernel matrix not positive definite at jitter {jitter:e}"
            )));
        }
        jitter *= 10.0;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GprModel {
    x: Array2<f64>,
    y: Vec<f64>,
    params: KernelParams,
    chol: Array2<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

/// Persisted form: the factorization is recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GprData {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub params: KernelParams,
}

impl GprModel {
    pub fn fit(x: ArrayView2<f64>, y: &[f64], params: KernelParams) -> Result<Self> {
        params.validate()?;
        if x.nrows() != y.len() || y.is_empty() {
            return Err(Error::domain("GPR needs matching, non-empty inputs and targets"));
        }
        let x = x.as_standard_layout().to_owned();
        let k = kernel_matrix(x.view(), &params);
        let (chol, jitter) = factorize(&k, params.noise_var)?;
        let alpha = solve_upper_t(&chol, &solve_lower(&chol, y));
        Ok(GprModel {
            x,
            y: y.to_vec(),
            params,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn params(&self) -> KernelParams {
        self.params
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn num_train(&self) -> usize {
        self.y.len()
    }

    /// `log p(y | X) = -y^T alpha / 2 - sum log L_ii - n/2 log 2 pi`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.y.len() as f64;
        let fit: f64 = self.y.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let logdet: f64 = (0..self.y.len()).map(|i| self.chol[[i, i]].ln()).sum();
        -0.5 * fit - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Posterior mean and variance of the latent function, variance
    /// clamped at 0.
    pub fn predict_latent(&self, row: &[f64]) -> (f64, f64) {
        let ks: Vec<f64> = self
            .x
            .outer_iter()
            .map(|r| self.params.k(r.as_slice().expect("standard layout"), row))
            .collect();
        let mean = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = solve_lower(&self.chol, &ks);
        let var = self.params.signal_var - v.iter().map(|x| x * x).sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Predictive distribution of a noisy observation.
    pub fn predict(&self, row: &[f64]) -> GaussianPrediction {
        let (mean, var) = self.predict_latent(row);
        GaussianPrediction {
            mean,
            std: (var + self.params.noise_var).sqrt(),
        }
    }

    pub fn to_data(&self) -> GprData {
        GprData {
            x: self.x.clone(),
            y: self.y.clone(),
            params: self.params,
        }
    }

    pub fn from_data(d: GprData) -> Result<Self> {
        Self::fit(d.x.view(), &d.y, d.params)
    }
}

fn subsample(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut rows = index::sample(&mut rng::seeded(seed), n, cap).into_vec();
    rows.sort_unstable();
    rows
}

fn take_rows(x: ArrayView2<f64>, y: &[f64], rows: &[usize]) -> (Array2<f64>, Vec<f64>) {
    (x.select(ndarray::Axis(0), rows), rows.iter().map(|&i| y[i]).collect())
}

/// Grid search maximizing the log marginal likelihood on a subsample.
/// Candidates whose factorization fails are skipped.
pub fn select_kernel(x: ArrayView2<f64>, y: &[f64], cfg: &GprConfig) -> Result<KernelParams> {
    let rows = subsample(x.nrows(), cfg.search_rows, rng::derive(cfg.seed, 1));
    let (xs, ys) = take_rows(x, y, &rows);
    let mut best: Option<(f64, KernelParams)> = None;
    for &lengthscale in &cfg.lengthscales {
        for &signal_var in &cfg.signal_vars {
            for &noise_var in &cfg.noise_vars {
                let p = KernelParams {
                    signal_var,
                    lengthscale,
                    noise_var,
                };
                let Ok(m) = GprModel::fit(xs.view(), &ys, p) else {
                    continue;
                };
                let lml = m.log_marginal_likelihood();
                if lml.is_finite() && best.is_none_or(|(b, _)| lml > b) {
                    best = Some((lml, p));
                }
            }
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::Numerical("no kernel candidate could be factorized".into()))
}

/// Subsamples to `max_rows`, selects kernel parameters (unless fixed) and
/// fits the exact posterior.
pub fn fit_gpr(x: ArrayView2<f64>, y: &[f64], cfg: &GprConfig) -> Result<GprModel> {
    cfg.validate()?;
    if x.nrows() != y.len() || y.is_empty() {
        return Err(Error::domain("GPR needs matching, non-empty inputs and targets"));
    }
    let params = match cfg.fixed {
        Some(p) => p,
        None => select_kernel(x, y, cfg)?,
    };
    let rows = subsample(x.nrows(), cfg.max_rows, rng::derive(cfg.seed, 2));
    let (xs, ys) = take_rows(x, y, &rows);
    GprModel::fit(xs.view(), &ys, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    const P: KernelParams = KernelParams {
        signal_var: 1.5,
        lengthscale: 0.7,
        noise_var: 0.0,
    };

    #[test]
    fn interpolates_single_point() {
        let m = GprModel::fit(array![[0.3, -0.2]].view(), &[1.7], P).unwrap();
        let (mean, var) = m.predict_latent(&[0.3, -0.2]);
        assert_abs_diff_eq!(mean, 1.7, epsilon = 1e-6);
        assert!(var < 1e-6);
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let m = GprModel::fit(array![[0.0], [0.5], [1.0]].view(), &[1.0, 2.0, 0.5], P).unwrap();
        let (mean, var) = m.predict_latent(&[100.0]);
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var, P.signal_var, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = array![[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let l = cholesky(&a).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert!(cholesky(&array![[1.0, 2.0], [2.0, 1.0]]).is_none());
    }

    #[test]
    fn duplicate_rows_need_jitter() {
        let x = array![[0.0], [0.0], [1.0]];
        let m = GprModel::fit(x.view(), &[1.0, 1.0, 0.0], P).unwrap();
        assert!(m.jitter() >= JITTER_START);
    }

    #[test]
    fn grid_prefers_smooth_kernel_for_smooth_data() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64 * 0.25);
        let y: Vec<f64> = (0..40).map(|i| (i as f64 * 0.25 * 0.3).sin()).collect();
        let cfg = GprConfig::default();
        let p = select_kernel(x.view(), &y, &cfg).unwrap();
        assert!(p.lengthscale >= 2.0);
    }
}
