//! Monte Carlo dropout: a two-output squared-error network whose hidden
//! dropout stays active at inference; the spread of repeated stochastic
//! passes is the predictive uncertainty.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::GaussianPrediction;
use crate::nn::{self, Activation, EpochStats, LossKind, Mode, Network, NetworkSpec, TrainConfig};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McDropoutConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub passes: usize,
    pub seed: u64,
}

impl Default for McDropoutConfig {
    fn default() -> Self {
        McDropoutConfig {
            hidden: vec![64, 32],
            dropout: 0.1,
            epochs: 100,
            lr: 0.001,
            batch_size: 128,
            passes: 100,
            seed: 0,
        }
    }
}

impl McDropoutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.passes < 2 {
            return Err(Error::domain("Monte Carlo dropout needs at least 2 passes"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::domain("dropout rate must lie in [0, 1)"));
        }
        if self.epochs == 0 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::domain("epochs, batch size and learning rate must be positive"));
        }
        Ok(())
    }
}

/// Trains on standardized inputs `x` and standardized targets `y`.
pub fn fit_mc_dropout(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &McDropoutConfig,
    valid: Option<(ArrayView2<f64>, ArrayView2<f64>)>,
) -> Result<(Network, Vec<EpochStats>)> {
    cfg.validate()?;
    let spec = NetworkSpec::mlp(
        x.ncols(),
        &cfg.hidden,
        y.ncols(),
        Activation::Relu,
        Activation::Identity,
        cfg.dropout,
        LossKind::SquaredError,
    )?;
    let mut net = Network::new(spec, cfg.seed)?;
    let history = nn::train(
        &mut net,
        x,
        y,
        &TrainConfig {
            epochs: cfg.epochs,
            lr: cfg.lr,
            batch_size: cfg.batch_size,
            seed: rng::derive(cfg.seed, 1),
        },
        valid,
    )?;
    if history.iter().any(|h| !h.train_loss.is_finite()) {
        return Err(Error::Training("dropout network loss diverged".into()));
    }
    Ok((net, history))
}

/// Mean and population standard deviation of `passes` stochastic forward
/// passes at `row`, one prediction per network output. The dropout masks
/// are drawn from a stream keyed by `seed` and the input's content.
pub fn mc_predict(net: &Network, row: &[f64], passes: usize, seed: u64) -> Result<Vec<GaussianPrediction>> {
    if passes < 2 {
        return Err(Error::domain("Monte Carlo dropout needs at least 2 passes"));
    }
    let d = row.len();
    let batch = Array2::from_shape_fn((passes, d), |(_, j)| row[j]);
    let mut r = rng::stream(seed, rng::hash_f64s(row));
    let out = net.forward(batch.view(), Mode::McSample, &mut r)?.into_output();
    let n = passes as f64;
    Ok(out
        .columns()
        .into_iter()
        .map(|c| {
            // Shifted by the first pass so identical passes give exactly 0.
            let c0 = c[0];
            let shift = c.iter().map(|v| v - c0).sum::<f64>() / n;
            let mean = c0 + shift;
            let var = c.iter().map(|v| (v - c0 - shift) * (v - c0 - shift)).sum::<f64>() / n;
            GaussianPrediction { mean, std: var.sqrt() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn net(dropout: f64) -> Network {
        let spec = NetworkSpec::mlp(
            3,
            &[16, 8],
            2,
            Activation::Relu,
            Activation::Identity,
            dropout,
            LossKind::SquaredError,
        )
        .unwrap();
        Network::new(spec, 11).unwrap()
    }

    #[test]
    fn no_dropout_means_no_spread() {
        let n = net(0.0);
        let row = [0.2, -1.0, 0.5];
        let p = mc_predict(&n, &row, 20, 1).unwrap();
        let det = n.predict(ndarray::aview2(&[row])).unwrap();
        for (k, g) in p.iter().enumerate() {
            assert_eq!(g.std, 0.0);
            assert_abs_diff_eq!(g.mean, det[[0, k]], epsilon = 1e-12);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let n = net(0.1);
        let row = [0.2, -1.0, 0.5];
        assert_eq!(
            mc_predict(&n, &row, 50, 9).unwrap(),
            mc_predict(&n, &row, 50, 9).unwrap()
        );
        assert!(mc_predict(&n, &row, 50, 9).unwrap()[0].std > 0.0);
    }

    #[test]
    fn single_pass_rejected() {
        assert!(mc_predict(&net(0.1), &[0.0; 3], 1, 0).is_err());
    }
}
