//! Gaussian predictive regressors for efficiency and junction temperature.
//!
//! Every regressor works on standardized inputs and standardized targets and
//! models the two targets with independent univariate heads. A
//! [`SurrogateRegressor`] bundles the heads with both scalers so callers
//! pass and receive physical units.

pub mod gpr;
pub mod mc_dropout;
pub mod ngboost;
pub mod tree;

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::converter::DesignPoint;
use crate::dataset::{self, LabeledSample, ScalerParams};
use crate::metrics::z_for_level;
use crate::nn::{Network, NetworkFile};
use crate::rng;
use crate::{Error, Result};

use gpr::{GprConfig, GprData, GprModel};
use mc_dropout::McDropoutConfig;
use ngboost::{NgboostConfig, NgboostModel, MIN_TRAIN_ROWS};

pub const TARGET_NAMES: [&str; 2] = ["efficiency", "temperature"];

pub const REGRESSOR_FORMAT: &str = "pec-regressor";
pub const REGRESSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mean: f64,
    pub std: f64,
}

/// Central interval `mean -/+ z(level) * std`.
pub fn prediction_interval(pred: &GaussianPrediction, level: f64) -> Result<(f64, f64)> {
    let z = z_for_level(level)?;
    Ok((pred.mean - z * pred.std, pred.mean + z * pred.std))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    Ngboost,
    Gpr,
    McDropout,
}

impl RegressorKind {
    pub fn name(self) -> &'static str {
        match self {
            RegressorKind::Ngboost => "ngboost",
            RegressorKind::Gpr => "gpr",
            RegressorKind::McDropout => "mc_dropout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorConfig {
    pub kind: RegressorKind,
    pub ngboost: NgboostConfig,
    pub gpr: GprConfig,
    pub mc_dropout: McDropoutConfig,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig {
            kind: RegressorKind::Ngboost,
            ngboost: NgboostConfig::default(),
            gpr: GprConfig::default(),
            mc_dropout: McDropoutConfig::default(),
        }
    }
}

impl RegressorConfig {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            RegressorKind::Ngboost => self.ngboost.validate(),
            RegressorKind::Gpr => self.gpr.validate(),
            RegressorKind::McDropout => self.mc_dropout.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Heads {
    Ngboost([NgboostModel; 2]),
    Gpr([GprModel; 2]),
    McDropout { network: Network, passes: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateRegressor {
    x_scaler: ScalerParams,
    y_scaler: ScalerParams,
    heads: Heads,
}

/// Per-iteration (boosting) or per-epoch (dropout network) training curve.
/// Missing values are written as empty CSV cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            // Column 0 is the iteration or epoch index.
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, c)| match c {
                    Some(v) if j == 0 => format!("{}", *v as u64),
                    Some(v) => format!("{v:?}"),
                    None => String::new(),
                })
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainedRegressor {
    pub model: SurrogateRegressor,
    pub curve: Option<LearningCurve>,
}

fn ngboost_curve(h: &[Vec<ngboost::IterationStats>; 2]) -> LearningCurve {
    let len = h[0].len().max(h[1].len());
    let at = |k: usize, i: usize| h[k].get(i);
    let rows = (0..len)
        .map(|i| {
            vec![
                Some((i + 1) as f64),
                at(0, i).map(|s| s.train_nll),
                at(1, i).map(|s| s.train_nll),
                at(0, i).and_then(|s| s.valid_nll),
                at(1, i).and_then(|s| s.valid_nll),
            ]
        })
        .collect();
    LearningCurve {
        header: [
            "iteration",
            "efficiency_train_nll",
            "temperature_train_nll",
            "efficiency_valid_nll",
            "temperature_valid_nll",
        ]
        .map(String::from)
        .to_vec(),
        rows,
    }
}

/// Fits the configured regressor on the feasible rows of `train`.
pub fn fit_regressor(
    train: &[LabeledSample],
    cfg: &RegressorConfig,
    valid: Option<&[LabeledSample]>,
) -> Result<TrainedRegressor> {
    cfg.validate()?;
    let train = dataset::feasible_only(train);
    if train.len() < MIN_TRAIN_ROWS {
        return Err(Error::domain(format!(
            "need at least {MIN_TRAIN_ROWS} feasible training rows, got {}",
            train.len()
        )));
    }
    let x_raw = dataset::features(&train);
    let y_raw = dataset::targets(&train);
    let x_scaler = ScalerParams::fit(x_raw.view())?;
    let y_scaler = ScalerParams::fit(y_raw.view())?;
    let x = x_scaler.apply(x_raw.view())?;
    let y = y_scaler.apply(y_raw.view())?;
    let valid = match valid {
        Some(v) => {
            let v = dataset::feasible_only(v);
            if v.is_empty() {
                None
            } else {
                Some((
                    x_scaler.apply(dataset::features(&v).view())?,
                    y_scaler.apply(dataset::targets(&v).view())?,
                ))
            }
        }
        None => None,
    };
    let column = |k: usize| y.index_axis(Axis(1), k).to_vec();
    let (heads, curve) = match cfg.kind {
        RegressorKind::Ngboost => {
            let fit_head = |k: usize| {
                let yk = column(k);
                let vk = valid
                    .as_ref()
                    .map(|(vx, vy)| (vx.view(), vy.index_axis(Axis(1), k).to_vec()));
                let c = NgboostConfig {
                    seed: rng::derive(cfg.ngboost.seed, k as u64),
                    ..cfg.ngboost
                };
                ngboost::fit_ngboost(x.view(), &yk, &c, vk.as_ref().map(|(vx, vy)| (*vx, vy.as_slice())))
            };
            let (a, b) = rayon::join(|| fit_head(0), || fit_head(1));
            let ((ma, ha), (mb, hb)) = (a?, b?);
            (Heads::Ngboost([ma, mb]), Some(ngboost_curve(&[ha, hb])))
        }
        RegressorKind::Gpr => {
            let fit_head = |k: usize| {
                let c = GprConfig {
                    seed: rng::derive(cfg.gpr.seed, k as u64),
                    ..cfg.gpr.clone()
                };
                gpr::fit_gpr(x.view(), &column(k), &c)
            };
            let (a, b) = rayon::join(|| fit_head(0), || fit_head(1));
            (Heads::Gpr([a?, b?]), None)
        }
        RegressorKind::McDropout => {
            let (network, history) = mc_dropout::fit_mc_dropout(
                x.view(),
                y.view(),
                &cfg.mc_dropout,
                valid.as_ref().map(|(vx, vy)| (vx.view(), vy.view())),
            )?;
            let curve = LearningCurve {
                header: ["epoch", "train_loss", "valid_loss"].map(String::from).to_vec(),
                rows: history
                    .iter()
                    .map(|h| vec![Some(h.epoch as f64), Some(h.train_loss), h.valid_loss])
                    .collect(),
            };
            (
                Heads::McDropout {
                    network,
                    passes: cfg.mc_dropout.passes,
                    seed: cfg.mc_dropout.seed,
                },
                Some(curve),
            )
        }
    };
    Ok(TrainedRegressor {
        model: SurrogateRegressor {
            x_scaler,
            y_scaler,
            heads,
        },
        curve,
    })
}

impl SurrogateRegressor {
    pub fn kind(&self) -> RegressorKind {
        match self.heads {
            Heads::Ngboost(_) => RegressorKind::Ngboost,
            Heads::Gpr(_) => RegressorKind::Gpr,
            Heads::McDropout { .. } => RegressorKind::McDropout,
        }
    }

    pub fn heads(&self) -> &Heads {
        &self.heads
    }

    pub fn x_scaler(&self) -> &ScalerParams {
        &self.x_scaler
    }

    pub fn y_scaler(&self) -> &ScalerParams {
        &self.y_scaler
    }

    /// Predictions in standardized target units for a standardized row.
    pub fn predict_standardized(&self, row: &[f64]) -> Result<[GaussianPrediction; 2]> {
        match &self.heads {
            Heads::Ngboost(m) => Ok([m[0].predict(row), m[1].predict(row)]),
            Heads::Gpr(m) => Ok([m[0].predict(row), m[1].predict(row)]),
            Heads::McDropout { network, passes, seed } => {
                let p = mc_dropout::mc_predict(network, row, *passes, *seed)?;
                Ok([p[0], p[1]])
            }
        }
    }

    fn to_physical(&self, k: usize, p: GaussianPrediction) -> GaussianPrediction {
        let scale = if self.y_scaler.constant[k] {
            0.0
        } else {
            self.y_scaler.std[k]
        };
        GaussianPrediction {
            mean: self.y_scaler.invert_value(k, p.mean),
            std: p.std * scale,
        }
    }

    /// Predictions in physical units for a raw feature row.
    pub fn predict_row(&self, row: &[f64]) -> Result<[GaussianPrediction; 2]> {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite regressor input"));
        }
        let z = self.x_scaler.apply_row(row)?;
        let p = self.predict_standardized(&z)?;
        Ok([self.to_physical(0, p[0]), self.to_physical(1, p[1])])
    }

    pub fn predict(&self, design: &DesignPoint) -> Result<[GaussianPrediction; 2]> {
        self.predict_row(&design.to_array())
    }

    pub fn predict_rows(&self, x: ArrayView2<f64>) -> Result<Vec<[GaussianPrediction; 2]>> {
        let rows: Vec<Vec<f64>> = x.outer_iter().map(|r| r.to_vec()).collect();
        rows.par_iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn predict_samples(&self, data: &[LabeledSample]) -> Result<Vec<[GaussianPrediction; 2]>> {
        self.predict_rows(dataset::features(data).view())
    }

    pub fn to_json(&self) -> Result<String> {
        let heads = match &self.heads {
            Heads::Ngboost(m) => HeadsFile::Ngboost { models: m.clone() },
            Heads::Gpr(m) => HeadsFile::Gpr {
                models: [m[0].to_data(), m[1].to_data()],
            },
            Heads::McDropout { network, passes, seed } => HeadsFile::McDropout {
                network: NetworkFile::from_network(network),
                passes: *passes,
                seed: *seed,
            },
        };
        let file = RegressorFile {
            format: REGRESSOR_FORMAT.into(),
            version: REGRESSOR_VERSION,
            x_scaler: self.x_scaler.clone(),
            y_scaler: self.y_scaler.clone(),
            heads,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RegressorFile = serde_json::from_str(text)?;
        if file.format != REGRESSOR_FORMAT || file.version != REGRESSOR_VERSION {
            return Err(Error::domain(format!(
                "unsupported regressor file {} v{}",
                file.format, file.version
            )));
        }
        if file.y_scaler.ncols() != 2 {
            return Err(Error::domain("regressor target scaler must have 2 columns"));
        }
        let heads = match file.heads {
            HeadsFile::Ngboost { models } => Heads::Ngboost(models),
            HeadsFile::Gpr { models: [a, b] } => Heads::Gpr([GprModel::from_data(a)?, GprModel::from_data(b)?]),
            HeadsFile::McDropout { network, passes, seed } => Heads::McDropout {
                network: network.into_network()?,
                passes,
                seed,
            },
        };
        Ok(SurrogateRegressor {
            x_scaler: file.x_scaler,
            y_scaler: file.y_scaler,
            heads,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RegressorFile {
    format: String,
    version: u32,
    x_scaler: ScalerParams,
    y_scaler: ScalerParams,
    heads: HeadsFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum HeadsFile {
    Ngboost {
        models: [NgboostModel; 2],
    },
    Gpr {
        models: [GprData; 2],
    },
    McDropout {
        network: NetworkFile,
        passes: usize,
        seed: u64,
    },
}

/// Splits per-sample pairs into per-target vectors.
pub fn unzip_targets(preds: &[[GaussianPrediction; 2]]) -> [Vec<GaussianPrediction>; 2] {
    [
        preds.iter().map(|p| p[0]).collect(),
        preds.iter().map(|p| p[1]).collect(),
    ]
}

/// Stacks rows into a matrix.
pub fn stack_rows(rows: &[Vec<f64>]) -> Array2<f64> {
    let d = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::converter::ConverterModel;
    use approx::assert_abs_diff_eq;

    #[test]
    fn interval_examples() {
        let (lo, hi) = prediction_interval(&GaussianPrediction { mean: 0.0, std: 1.0 }, 0.95).unwrap();
        assert_abs_diff_eq!(lo, -1.959964, epsilon = 1e-6);
        assert_abs_diff_eq!(hi, 1.959964, epsilon = 1e-6);
        assert_eq!(
            prediction_interval(&GaussianPrediction { mean: 2.0, std: 0.0 }, 0.95).unwrap(),
            (2.0, 2.0)
        );
        assert!(prediction_interval(&GaussianPrediction { mean: 0.0, std: 1.0 }, 1.0).is_err());
    }

    fn small_data() -> Vec<LabeledSample> {
        ConverterModel::default().generate_dataset(300, 5).unwrap()
    }

    fn round_trip(cfg: RegressorConfig) {
        let data = small_data();
        let t = fit_regressor(&data, &cfg, None).unwrap();
        let back = SurrogateRegressor::from_json(&t.model.to_json().unwrap()).unwrap();
        let row = data[0].x.to_array();
        assert_eq!(back.predict_row(&row).unwrap(), t.model.predict_row(&row).unwrap());
        assert_eq!(back.kind(), cfg.kind);
    }

    #[test]
    fn ngboost_round_trip() {
        let mut cfg = RegressorConfig::default();
        cfg.ngboost.iterations = 10;
        round_trip(cfg);
    }

    #[test]
    fn gpr_round_trip() {
        let mut cfg = RegressorConfig {
            kind: RegressorKind::Gpr,
            ..RegressorConfig::default()
        };
        cfg.gpr.max_rows = 60;
        cfg.gpr.search_rows = 60;
        round_trip(cfg);
    }

    #[test]
    fn mc_dropout_round_trip() {
        let mut cfg = RegressorConfig {
            kind: RegressorKind::McDropout,
            ..RegressorConfig::default()
        };
        cfg.mc_dropout.epochs = 2;
        cfg.mc_dropout.hidden = vec![8];
        cfg.mc_dropout.passes = 10;
        round_trip(cfg);
    }

    #[test]
    fn curve_has_one_row_per_iteration() {
        let mut cfg = RegressorConfig::default();
        cfg.ngboost.iterations = 7;
        let t = fit_regressor(&small_data(), &cfg, None).unwrap();
        let csv = t.curve.unwrap().to_csv();
        assert_eq!(csv.lines().count(), 8);
    }
}
