//! Natural gradient boosting for a univariate Gaussian parameterized by
//! `(mu, log sigma)`.
//!
//! Each stage fits one tree per parameter to the per-sample natural
//! gradients on a row subsample, picks a common step scale by line search
//! on that subsample, and moves the parameters by `-lr * scale * tree(x)`.

use ndarray::ArrayView2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeConfig};
use super::GaussianPrediction;
use crate::rng;
use crate::{Error, Result};

/// Lower bound on sigma (in the units the model was fitted in).
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Minimum feasible training rows for a regressor fit.
pub const MIN_TRAIN_ROWS: usize = 10;

const LINE_SEARCH_MAX_SCALE: f64 = 256.0;
const LINE_SEARCH_TOL: f64 = 1e-4;
const LINE_SEARCH_MAX_NORM: f64 = 5.0;
const MAX_HALVINGS: usize = 60;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Ordinary gradient of the Gaussian NLL with respect to `(mu, log sigma)`.
pub fn nll_gradient(y: f64, mu: f64, log_sigma: f64) -> (f64, f64) {
    let var = (2.0 * log_sigma).exp();
    let r = y - mu;
    ((mu - y) / var, 1.0 - r * r / var)
}

/// Natural gradient: the ordinary gradient premultiplied by the inverse
/// Fisher information `diag(sigma^2, 1/2)`.
pub fn natural_gradient_gaussian(y: f64, mu: f64, log_sigma: f64) -> (f64, f64) {
    let var = (2.0 * log_sigma).exp();
    let r = y - mu;
    (mu - y, 0.5 * (1.0 - r * r / var))
}

/// Gaussian NLL of `y` with sigma floored at [`SIGMA_FLOOR`].
pub fn nll(y: f64, mu: f64, log_sigma: f64) -> f64 {
    let sigma = log_sigma.exp().max(SIGMA_FLOOR);
    let r = (y - mu) / sigma;
    HALF_LN_2PI + sigma.ln() + 0.5 * r * r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NgboostConfig {
    pub iterations: usize,
    pub lr: f64,
    pub tree: TreeConfig,
    /// Fraction of rows drawn (without replacement) for each stage.
    pub minibatch_frac: f64,
    /// Stop when the validation NLL has not improved for this many
    /// iterations; the model is truncated at the best iteration.
    pub early_stopping_rounds: Option<usize>,
    pub seed: u64,
}

impl Default for NgboostConfig {
    fn default() -> Self {
        NgboostConfig {
            iterations: 500,
            lr: 0.05,
            tree: TreeConfig::default(),
            minibatch_frac: 0.5,
            early_stopping_rounds: None,
            seed: 0,
        }
    }
}

impl NgboostConfig {
    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::domain("boosting learning rate must be positive"));
        }
        if !(self.minibatch_frac > 0.0 && self.minibatch_frac <= 1.0) {
            return Err(Error::domain("minibatch fraction must lie in (0, 1]"));
        }
        if self.early_stopping_rounds == Some(0) {
            return Err(Error::domain("early stopping rounds must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    /// Trees for `mu` and `log sigma`.
    pub trees: [RegressionTree; 2],
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgboostModel {
    pub mu0: f64,
    pub log_sigma0: f64,
    pub lr: f64,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub train_nll: f64,
    pub valid_nll: Option<f64>,
    pub scale: f64,
}

fn mean_nll(y: &[f64], mu: &[f64], ls: &[f64], rows: Option<&[usize]>) -> f64 {
    match rows {
        Some(rows) => rows.iter().map(|&i| nll(y[i], mu[i], ls[i])).sum::<f64>() / rows.len() as f64,
        None => (0..y.len()).map(|i| nll(y[i], mu[i], ls[i])).sum::<f64>() / y.len() as f64,
    }
}

/// Mean NLL over `rows` after the step `-scale * (dmu, dls)`.
fn stepped_nll(y: &[f64], mu: &[f64], ls: &[f64], dmu: &[f64], dls: &[f64], rows: &[usize], scale: f64) -> f64 {
    rows.iter()
        .map(|&i| nll(y[i], mu[i] - scale * dmu[i], ls[i] - scale * dls[i]))
        .sum::<f64>()
        / rows.len() as f64
}

fn mean_step_norm(dmu: &[f64], dls: &[f64], rows: &[usize], scale: f64) -> f64 {
    rows.iter().map(|&i| scale * dmu[i].hypot(dls[i])).sum::<f64>() / rows.len() as f64
}

/// Doubles the scale while the subsample loss keeps improving, then halves
/// it until the step improves the loss (or is negligibly small) and its
/// mean norm stays bounded.
fn line_search(y: &[f64], mu: &[f64], ls: &[f64], dmu: &[f64], dls: &[f64], rows: &[usize]) -> f64 {
    let init = stepped_nll(y, mu, ls, dmu, dls, rows, 0.0);
    let mut scale = 1.0;
    loop {
        let loss = stepped_nll(y, mu, ls, dmu, dls, rows, scale);
        if !loss.is_finite() || loss > init || scale > LINE_SEARCH_MAX_SCALE {
            break;
        }
        scale *= 2.0;
    }
    for _ in 0..MAX_HALVINGS {
        let loss = stepped_nll(y, mu, ls, dmu, dls, rows, scale);
        let norm = mean_step_norm(dmu, dls, rows, scale);
        if loss.is_finite() && (loss < init || norm < LINE_SEARCH_TOL) && norm < LINE_SEARCH_MAX_NORM {
            return scale;
        }
        scale *= 0.5;
    }
    0.0
}

fn population_moments(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Fits one Gaussian head to `y` (already standardized by the caller).
pub fn fit_ngboost(
    x: ArrayView2<f64>,
    y: &[f64],
    cfg: &NgboostConfig,
    valid: Option<(ArrayView2<f64>, &[f64])>,
) -> Result<(NgboostModel, Vec<IterationStats>)> {
    cfg.validate()?;
    let n = x.nrows();
    if n != y.len() {
        return Err(Error::domain("feature and target row counts differ"));
    }
    if n < MIN_TRAIN_ROWS {
        return Err(Error::domain(format!(
            "need at least {MIN_TRAIN_ROWS} training rows, got {n}"
        )));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite training data"));
    }
    let (m, s) = population_moments(y);
    let mut model = NgboostModel {
        mu0: m,
        log_sigma0: s.max(SIGMA_FLOOR).ln(),
        lr: cfg.lr,
        stages: Vec::with_capacity(cfg.iterations),
    };
    let mut mu = vec![model.mu0; n];
    let mut ls = vec![model.log_sigma0; n];
    let mut valid_state = valid.map(|(vx, vy)| {
        let nv = vx.nrows();
        (vx, vy, vec![model.mu0; nv], vec![model.log_sigma0; nv])
    });
    let batch = ((n as f64 * cfg.minibatch_frac).round() as usize).clamp(1, n);
    let mut gmu = vec![0.0; n];
    let mut gls = vec![0.0; n];
    let mut dmu = vec![0.0; n];
    let mut dls = vec![0.0; n];
    let mut train_nll = mean_nll(y, &mu, &ls, None);
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut best = (f64::INFINITY, 0usize);

    for it in 0..cfg.iterations {
        let mut r = rng::stream(cfg.seed, it as u64);
        let mut rows = if batch == n {
            (0..n).collect::<Vec<_>>()
        } else {
            index::sample(&mut r, n, batch).into_vec()
        };
        rows.sort_unstable();
        for &i in &rows {
            let (a, b) = natural_gradient_gaussian(y[i], mu[i], ls[i]);
            gmu[i] = a;
            gls[i] = b;
        }
        let t_mu = RegressionTree::fit(x, &gmu, &rows, &cfg.tree, &mut r)?;
        let t_ls = RegressionTree::fit(x, &gls, &rows, &cfg.tree, &mut r)?;
        for (i, row) in x.outer_iter().enumerate() {
            let row = row.as_slice().expect("standard layout");
            dmu[i] = t_mu.predict(row);
            dls[i] = t_ls.predict(row);
        }
        let mut scale = line_search(y, &mu, &ls, &dmu, &dls, &rows);

        // Safeguard: the applied step must not raise the full training NLL.
        let all: Vec<usize> = (0..n).collect();
        let mut next = stepped_nll(y, &mu, &ls, &dmu, &dls, &all, cfg.lr * scale);
        let mut halvings = 0;
        while next > train_nll && scale > 0.0 {
            halvings += 1;
            scale = if halvings > MAX_HALVINGS { 0.0 } else { scale * 0.5 };
            next = stepped_nll(y, &mu, &ls, &dmu, &dls, &all, cfg.lr * scale);
        }
        let step = cfg.lr * scale;
        for i in 0..n {
            mu[i] -= step * dmu[i];
            ls[i] -= step * dls[i];
        }
        train_nll = next;

        let valid_nll = valid_state.as_mut().map(|(vx, vy, vmu, vls)| {
            for (i, row) in vx.outer_iter().enumerate() {
                let row = row.to_vec();
                vmu[i] -= step * t_mu.predict(&row);
                vls[i] -= step * t_ls.predict(&row);
            }
            mean_nll(vy, vmu, vls, None)
        });
        model.stages.push(Stage {
            trees: [t_mu, t_ls],
            scale,
        });
        history.push(IterationStats {
            iteration: it + 1,
            train_nll,
            valid_nll,
            scale,
        });
        if let (Some(rounds), Some(v)) = (cfg.early_stopping_rounds, valid_nll) {
            if v < best.0 {
                best = (v, it + 1);
            } else if it + 1 - best.1 >= rounds {
                model.stages.truncate(best.1);
                break;
            }
        }
    }
    Ok((model, history))
}

impl NgboostModel {
    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Raw `(mu, log sigma)` at `row`.
    pub fn predict_params(&self, row: &[f64]) -> (f64, f64) {
        let mut mu = self.mu0;
        let mut ls = self.log_sigma0;
        for s in &self.stages {
            let step = self.lr * s.scale;
            if step != 0.0 {
                mu -= step * s.trees[0].predict(row);
                ls -= step * s.trees[1].predict(row);
            }
        }
        (mu, ls)
    }

    pub fn predict(&self, row: &[f64]) -> GaussianPrediction {
        let (mu, ls) = self.predict_params(row);
        GaussianPrediction {
            mean: mu,
            std: ls.exp().max(SIGMA_FLOOR),
        }
    }
}
