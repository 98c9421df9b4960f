//! Independent brute-force oracles. Each one recomputes a quantity by a
//! route that shares no code with the library implementation.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use ndarray::Array2;
use pec_core::nn::{Activation, LossKind, Mode, Network, NetworkSpec};
use pec_core::regress::gpr::{GprModel, KernelParams};
use pec_core::regress::GaussianPrediction;
use pec_core::rng;
use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

const FD_STEP: f64 = 1e-6;

/// Random network with 1 to 3 hidden layers, random activations, optional
/// hidden dropout and either loss.
pub fn random_network(seed: u64) -> (Network, Array2<f64>, Array2<f64>) {
    let mut r = rng::seeded(seed);
    let input = r.random_range(1..=5);
    let hidden: Vec<usize> = (0..r.random_range(1..=3)).map(|_| r.random_range(1..=6)).collect();
    let acts = [
        Activation::Identity,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
    ];
    let bce = r.random_bool(0.5);
    let (output, out_act, loss) = if bce {
        (1, Activation::Sigmoid, LossKind::BinaryCrossEntropy)
    } else {
        (
            r.random_range(1..=3),
            acts[r.random_range(0..4)],
            LossKind::SquaredError,
        )
    };
    let mut sizes = vec![input];
    sizes.extend(&hidden);
    sizes.push(output);
    let mut activations: Vec<Activation> = hidden.iter().map(|_| acts[r.random_range(0..4)]).collect();
    activations.push(out_act);
    let p = if r.random_bool(0.5) { 0.2 } else { 0.0 };
    let mut dropout = vec![p; hidden.len()];
    dropout.push(0.0);
    let spec = NetworkSpec::new(sizes, activations, dropout, loss).unwrap();
    let mut net = Network::new(spec, seed ^ 0x5eed).unwrap();
    // Random biases too: zero biases put all-zero rows exactly on a ReLU kink.
    let theta: Vec<f64> = (0..net.num_params()).map(|_| r.random_range(-1.0..1.0)).collect();
    net.set_flat_params(&theta).unwrap();
    let rows = r.random_range(2..=8);
    let x = Array2::from_shape_fn((rows, input), |_| r.random_range(-2.0..2.0));
    let y = Array2::from_shape_fn((rows, output), |_| {
        if bce {
            f64::from(u8::from(r.random_bool(0.5)))
        } else {
            r.random_range(-1.0..1.0)
        }
    });
    (net, x, y)
}

/// Loss under a training pass whose dropout masks are fixed by `mask_seed`.
fn fixed_mask_loss(net: &Network, x: &Array2<f64>, y: &Array2<f64>, mask_seed: u64) -> f64 {
    let mut r = rng::seeded(mask_seed);
    let cache = net.forward(x.view(), Mode::Train, &mut r).unwrap();
    net.loss(&cache, y.view()).unwrap()
}

/// Relative error `|g - g_fd| / max(|g| + |g_fd|, 1e-8)` between the
/// backprop gradient and central finite differences, in vector norm.
pub fn gradient_check(net: &Network, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let mask_seed = 17;
    let mut r = rng::seeded(mask_seed);
    let cache = net.forward(x.view(), Mode::Train, &mut r).unwrap();
    let analytic = net.backward(&cache, y.view()).unwrap().flatten();
    let theta = net.flat_params();
    let mut probe = net.clone();
    let mut numeric = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let mut t = theta.clone();
        t[i] = theta[i] + FD_STEP;
        probe.set_flat_params(&t).unwrap();
        let up = fixed_mask_loss(&probe, x, y, mask_seed);
        t[i] = theta[i] - FD_STEP;
        probe.set_flat_params(&t).unwrap();
        let down = fixed_mask_loss(&probe, x, y, mask_seed);
        numeric.push((up - down) / (2.0 * FD_STEP));
    }
    let diff: f64 = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / (na + nn).max(1e-8)
}

/// Natural gradient of the Gaussian NLL in `(mu, log sigma)` as
/// `F^-1 * grad`, with the gradient taken by central differences of the
/// density and the Fisher matrix inverted numerically.
pub fn natural_gradient_fd(y: f64, mu: f64, log_sigma: f64) -> (f64, f64) {
    let nll = |m: f64, s: f64| -Normal::new(m, s.exp()).unwrap().ln_pdf(y);
    let h = 1e-5;
    let g = Vector2::new(
        (nll(mu + h, log_sigma) - nll(mu - h, log_sigma)) / (2.0 * h),
        (nll(mu, log_sigma + h) - nll(mu, log_sigma - h)) / (2.0 * h),
    );
    let var = (2.0 * log_sigma).exp();
    let fisher = Matrix2::new(1.0 / var, 0.0, 0.0, 2.0);
    let ng = fisher.try_inverse().unwrap() * g;
    (ng[0], ng[1])
}

/// GPR posterior mean and latent variance by explicit inversion of
/// `K + (noise + jitter) I`.
pub fn gpr_dense(x: &Array2<f64>, y: &[f64], p: KernelParams, jitter: f64, query: &[f64]) -> (f64, f64) {
    let n = y.len();
    let k = |a: &[f64], b: &[f64]| {
        let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
        p.signal_var * (-d2 / (2.0 * p.lengthscale.powi(2))).exp()
    };
    let row = |i: usize| x.row(i).to_vec();
    let kmat = DMatrix::from_fn(n, n, |i, j| {
        k(&row(i), &row(j)) + if i == j { p.noise_var + jitter } else { 0.0 }
    });
    let inv = kmat.try_inverse().expect("invertible kernel matrix");
    let ks = DVector::from_fn(n, |i, _| k(&row(i), query));
    let yv = DVector::from_column_slice(y);
    let mean = (ks.transpose() * &inv * yv)[0];
    let var = k(query, query) - (ks.transpose() * &inv * &ks)[0];
    (mean, var)
}

/// Maximum absolute disagreement between a fitted GPR and the dense oracle
/// over `queries`, in both mean and latent variance.
pub fn gpr_max_error(model: &GprModel, x: &Array2<f64>, y: &[f64], queries: &Array2<f64>) -> f64 {
    queries
        .outer_iter()
        .map(|q| {
            let q = q.to_vec();
            let (m, v) = model.predict_latent(&q);
            let (mo, vo) = gpr_dense(x, y, model.params(), model.jitter(), &q);
            (m - mo).abs().max((v - vo.max(0.0)).abs())
        })
        .fold(0.0, f64::max)
}

/// CRPS as `integral (F(x) - 1[x >= y])^2 dx` by composite Simpson
/// quadrature on each side of the observation.
pub fn crps_quadrature(mu: f64, sigma: f64, y: f64) -> f64 {
    let n = Normal::new(mu, sigma).unwrap();
    let lo = (mu - 12.0 * sigma).min(y);
    let hi = (mu + 12.0 * sigma).max(y);
    let simpson = |a: f64, b: f64, f: &dyn Fn(f64) -> f64| {
        let m = 20_000;
        let h = (b - a) / m as f64;
        if h == 0.0 {
            return 0.0;
        }
        let mut s = f(a) + f(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    };
    simpson(lo, y, &|x| n.cdf(x).powi(2)) + simpson(y, hi, &|x| (1.0 - n.cdf(x)).powi(2))
}

/// AUC-PR by enumerating every distinct score as a threshold and recounting
/// the whole set for each, then integrating from `(recall 0, precision 1)`.
pub fn auc_pr_enumerated(probs: &[f64], labels: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = probs.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let positives = labels.iter().filter(|l| **l == 1.0).count() as f64;
    let mut points = vec![(0.0, 1.0)];
    for t in thresholds {
        let mut tp = 0.0;
        let mut fp = 0.0;
        for (p, l) in probs.iter().zip(labels) {
            if *p >= t {
                if *l == 1.0 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        points.push((tp / positives, tp / (tp + fp)));
    }
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Predictions with random means and widths plus observations drawn from
/// exactly those distributions.
pub fn calibrated_sample(n: usize, seed: u64) -> (Vec<GaussianPrediction>, Vec<f64>) {
    let mut r = rng::seeded(seed);
    let mut preds = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let mean = r.random_range(-10.0..10.0);
        let std = r.random_range(0.1..3.0);
        let y = mean + std * r.sample::<f64, _>(rand_distr::StandardNormal);
        preds.push(GaussianPrediction { mean, std });
        ys.push(y);
    }
    (preds, ys)
}

/// Mean of `(100 - U1)^2 + (t - U2)^2` for `U1`, `U2` uniform on the given
/// intervals, from the closed-form second moment of a uniform variable.
pub fn expected_squared_terms(eff: (f64, f64), temp: (f64, f64), t: f64) -> f64 {
    let second_moment = |c: f64, (a, b): (f64, f64)| {
        let (u, v) = (c - a, c - b);
        (u.powi(3) - v.powi(3)) / (3.0 * (u - v))
    };
    second_moment(100.0, eff) + second_moment(t, temp)
}
