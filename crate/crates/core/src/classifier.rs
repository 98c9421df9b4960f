//! Feasibility classifier: a sigmoid-output network over standardized
//! design parameters with an embedded scaler, a logistic-regression
//! baseline, and k-fold cross-validation.
//!
//! Label 1 is the feasible class. The model emits one logit, so
//! `P(feasible) + P(infeasible) = 1` holds by construction.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::converter::DesignPoint;
use crate::dataset::{self, LabeledSample, ScalerParams};
use crate::metrics::{self, binary_cross_entropy};
use crate::nn::{self, Activation, EpochStats, LossKind, Network, NetworkFile, NetworkSpec, TrainConfig};
use crate::{Error, Result};

pub const CLASSIFIER_FORMAT: &str = "pec-classifier";
pub const CLASSIFIER_VERSION: u32 = 1;

/// Probability threshold for hard labels.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Mlp,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Hidden layer widths of the MLP. Ignored by the logistic baseline.
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 150,
            lr: 0.001,
            batch_size: 128,
            hidden: vec![64, 32],
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::domain("classifier epochs and batch size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::domain("classifier learning rate must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::domain("hidden layer widths must be positive"));
        }
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub kind: ClassifierKind,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityClassifier {
    network: Network,
    scaler: ScalerParams,
    meta: TrainingMeta,
}

/// A trained model together with its per-epoch learning curves.
#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub model: FeasibilityClassifier,
    pub history: Vec<EpochStats>,
}

fn check_labels(y: &[f64]) -> Result<()> {
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::domain("labels must be 0 or 1"));
    }
    let positives = y.iter().filter(|v| **v == 1.0).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Training("training data must contain both classes".into()));
    }
    Ok(())
}

fn column(y: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((y.len(), 1), y.to_vec()).expect("n x 1 shape")
}

fn fit(
    kind: ClassifierKind,
    x: ArrayView2<f64>,
    y: &[f64],
    cfg: &ClassifierConfig,
    valid: Option<(ArrayView2<f64>, &[f64])>,
) -> Result<TrainedClassifier> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::domain("feature and label row counts differ"));
    }
    check_labels(y)?;
    let hidden: &[usize] = match kind {
        ClassifierKind::Mlp => &cfg.hidden,
        ClassifierKind::Logistic => &[],
    };
    let spec = NetworkSpec::mlp(
        x.ncols(),
        hidden,
        1,
        Activation::Relu,
        Activation::Sigmoid,
        0.0,
        LossKind::BinaryCrossEntropy,
    )?;
    let mut network = match kind {
        ClassifierKind::Mlp => Network::new(spec, cfg.seed)?,
        ClassifierKind::Logistic => Network::zeros(spec)?,
    };
    let scaler = ScalerParams::fit(x)?;
    let xs = scaler.apply(x)?;
    let ys = column(y);
    let valid = match valid {
        Some((vx, vy)) => Some((scaler.apply(vx)?, column(vy))),
        None => None,
    };
    let history = nn::train(
        &mut network,
        xs.view(),
        ys.view(),
        &cfg.train_config(),
        valid.as_ref().map(|(vx, vy)| (vx.view(), vy.view())),
    )?;
    if history.iter().any(|h| !h.train_loss.is_finite()) {
        return Err(Error::Training("classifier loss diverged".into()));
    }
    Ok(TrainedClassifier {
        model: FeasibilityClassifier {
            network,
            scaler,
            meta: TrainingMeta {
                kind,
                epochs: cfg.epochs,
                lr: cfg.lr,
                batch_size: cfg.batch_size,
                seed: cfg.seed,
                fold: None,
            },
        },
        history,
    })
}

/// Trains the MLP on raw (unstandardized) features; the scaler is fitted on
/// `x` and embedded in the model.
pub fn train_classifier_xy(
    x: ArrayView2<f64>,
    y: &[f64],
    cfg: &ClassifierConfig,
    valid: Option<(ArrayView2<f64>, &[f64])>,
) -> Result<TrainedClassifier> {
    fit(ClassifierKind::Mlp, x, y, cfg, valid)
}

/// Logistic regression (no hidden layer, zero initialization) trained with
/// the same mini-batch loop.
pub fn train_logistic_xy(
    x: ArrayView2<f64>,
    y: &[f64],
    cfg: &ClassifierConfig,
    valid: Option<(ArrayView2<f64>, &[f64])>,
) -> Result<TrainedClassifier> {
    fit(ClassifierKind::Logistic, x, y, cfg, valid)
}

fn samples_xy(data: &[LabeledSample]) -> (Array2<f64>, Vec<f64>) {
    (dataset::features(data), dataset::labels(data))
}

fn train_samples(
    kind: ClassifierKind,
    train: &[LabeledSample],
    cfg: &ClassifierConfig,
    valid: Option<&[LabeledSample]>,
) -> Result<TrainedClassifier> {
    let (x, y) = samples_xy(train);
    let v = valid.map(samples_xy);
    fit(
        kind,
        x.view(),
        &y,
        cfg,
        v.as_ref().map(|(vx, vy)| (vx.view(), vy.as_slice())),
    )
}

pub fn train_classifier(
    train: &[LabeledSample],
    cfg: &ClassifierConfig,
    valid: Option<&[LabeledSample]>,
) -> Result<TrainedClassifier> {
    train_samples(ClassifierKind::Mlp, train, cfg, valid)
}

pub fn train_logistic_baseline(
    train: &[LabeledSample],
    cfg: &ClassifierConfig,
    valid: Option<&[LabeledSample]>,
) -> Result<TrainedClassifier> {
    train_samples(ClassifierKind::Logistic, train, cfg, valid)
}

impl FeasibilityClassifier {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn scaler(&self) -> &ScalerParams {
        &self.scaler
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn kind(&self) -> ClassifierKind {
        self.meta.kind
    }

    /// Probability of the feasible class for each raw feature row.
    pub fn predict_proba_rows(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite classifier input"));
        }
        let xs = self.scaler.apply(x)?;
        Ok(self.network.predict(xs.view())?.index_axis(Axis(1), 0).to_vec())
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> Result<f64> {
        let x = ArrayView2::from_shape((1, row.len()), row).expect("1 x n shape");
        Ok(self.predict_proba_rows(x)?[0])
    }

    pub fn predict_proba(&self, design: &DesignPoint) -> Result<f64> {
        self.predict_proba_row(&design.to_array())
    }

    pub fn predict_label(&self, design: &DesignPoint) -> Result<bool> {
        Ok(self.predict_proba(design)? >= DECISION_THRESHOLD)
    }

    pub fn predict_samples(&self, data: &[LabeledSample]) -> Result<Vec<f64>> {
        self.predict_proba_rows(dataset::features(data).view())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ClassifierFile {
            format: CLASSIFIER_FORMAT.into(),
            version: CLASSIFIER_VERSION,
            meta: self.meta.clone(),
            scaler: self.scaler.clone(),
            network: NetworkFile::from_network(&self.network),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ClassifierFile = serde_json::from_str(text)?;
        if file.format != CLASSIFIER_FORMAT || file.version != CLASSIFIER_VERSION {
            return Err(Error::domain(format!(
                "unsupported classifier file {} v{}",
                file.format, file.version
            )));
        }
        let network = file.network.into_network()?;
        if file.scaler.ncols() != network.spec().input_size() {
            return Err(Error::domain("classifier scaler width does not match the network"));
        }
        Ok(FeasibilityClassifier {
            network,
            scaler: file.scaler,
            meta: file.meta,
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
struct ClassifierFile {
    format: String,
    version: u32,
    meta: TrainingMeta,
    scaler: ScalerParams,
    network: NetworkFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub bce: f64,
    pub accuracy: f64,
}

/// Per-fold rows plus the average and best rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub mean_bce: f64,
    pub mean_accuracy: f64,
    pub best_bce: f64,
    pub best_accuracy: f64,
}

impl CvReport {
    pub fn from_folds(folds: Vec<FoldResult>) -> Self {
        let k = folds.len();
        let n = k as f64;
        CvReport {
            k,
            mean_bce: folds.iter().map(|f| f.bce).sum::<f64>() / n,
            mean_accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / n,
            best_bce: folds.iter().map(|f| f.bce).fold(f64::INFINITY, f64::min),
            best_accuracy: folds.iter().map(|f| f.accuracy).fold(f64::NEG_INFINITY, f64::max),
            folds,
        }
    }
}

/// k-fold cross-validation of `kind`. Each fold trains a fresh model (with
/// its own scaler) on the other folds and scores the held-out fold.
pub fn cross_validate(
    data: &[LabeledSample],
    k: usize,
    kind: ClassifierKind,
    cfg: &ClassifierConfig,
    split_seed: u64,
) -> Result<CvReport> {
    if k < 2 {
        return Err(Error::domain("cross-validation needs k >= 2"));
    }
    let folds = dataset::kfold(data.len(), k, split_seed)?;
    let results = folds
        .par_iter()
        .enumerate()
        .map(|(i, held)| {
            let mut in_fold = vec![false; data.len()];
            for &j in held {
                in_fold[j] = true;
            }
            let train: Vec<LabeledSample> = data
                .iter()
                .zip(&in_fold)
                .filter(|(_, f)| !**f)
                .map(|(s, _)| *s)
                .collect();
            let test: Vec<LabeledSample> = held.iter().map(|&j| data[j]).collect();
            let mut trained = train_samples(kind, &train, cfg, None)?;
            trained.model.meta.fold = Some(i);
            let probs = trained.model.predict_samples(&test)?;
            let labels = dataset::labels(&test);
            let c = metrics::confusion(&probs, &labels, DECISION_THRESHOLD);
            Ok(FoldResult {
                fold: i + 1,
                bce: binary_cross_entropy(&probs, &labels),
                accuracy: c.accuracy(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport::from_folds(results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng as _;

    fn blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut r = rng::seeded(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = vec![0.0; n];
        for i in 0..n {
            let label = (i % 2) as f64;
            let c = if label == 1.0 { 2.0 } else { -2.0 };
            x[[i, 0]] = c + r.random_range(-1.0..1.0);
            x[[i, 1]] = 10.0 * r.random_range(-1.0..1.0);
            y[i] = label;
        }
        (x, y)
    }

    fn quick() -> ClassifierConfig {
        ClassifierConfig {
            epochs: 30,
            lr: 0.01,
            batch_size: 32,
            hidden: vec![8],
            seed: 3,
        }
    }

    fn accuracy(model: &FeasibilityClassifier, x: ArrayView2<f64>, y: &[f64]) -> f64 {
        let p = model.predict_proba_rows(x).unwrap();
        metrics::confusion(&p, y, 0.5).accuracy()
    }

    #[test]
    fn separable_blobs_learned() {
        let (x, y) = blobs(400, 1);
        let t = train_classifier_xy(x.view(), &y, &quick(), None).unwrap();
        assert!(accuracy(&t.model, x.view(), &y) >= 0.99);
        assert_eq!(t.history.len(), 30);
    }

    #[test]
    fn logistic_separates_1d_toy() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64 - 19.5);
        let y: Vec<f64> = (0..40).map(|i| if i >= 20 { 1.0 } else { 0.0 }).collect();
        let t = train_logistic_xy(x.view(), &y, &quick(), None).unwrap();
        assert_eq!(accuracy(&t.model, x.view(), &y), 1.0);
    }

    #[test]
    fn single_class_is_training_error() {
        let x = Array2::zeros((10, 2));
        let err = train_classifier_xy(x.view(), &[1.0; 10], &quick(), None).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }

    #[test]
    fn same_seed_same_weights() {
        let (x, y) = blobs(100, 2);
        let a = train_classifier_xy(x.view(), &y, &quick(), None).unwrap();
        let b = train_classifier_xy(x.view(), &y, &quick(), None).unwrap();
        assert_eq!(a.model.network().flat_params(), b.model.network().flat_params());
    }

    #[test]
    fn logistic_bias_gradient_is_prior_gap() {
        // Zero weights predict 0.5 everywhere, so the bias gradient is
        // mean(0.5 - y) and a descent step moves the intercept toward the
        // logit of the class prior.
        let spec = NetworkSpec::mlp(
            1,
            &[],
            1,
            Activation::Relu,
            Activation::Sigmoid,
            0.0,
            LossKind::BinaryCrossEntropy,
        )
        .unwrap();
        let net = Network::zeros(spec).unwrap();
        let x = array![[1.0], [-1.0], [0.5], [2.0]];
        let mut r = rng::seeded(0);
        let cache = net.forward(x.view(), Mode::Infer, &mut r).unwrap();
        let balanced = array![[1.0], [0.0], [1.0], [0.0]];
        let g = net.backward(&cache, balanced.view()).unwrap();
        assert_abs_diff_eq!(g.biases[0][0], 0.0, epsilon = 1e-15);
        let skewed = array![[1.0], [1.0], [1.0], [0.0]];
        let g = net.backward(&cache, skewed.view()).unwrap();
        assert_abs_diff_eq!(g.biases[0][0], 0.5 - 0.75, epsilon = 1e-15);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (x, y) = blobs(100, 4);
        let t = train_classifier_xy(x.view(), &y, &quick(), None).unwrap();
        let back = FeasibilityClassifier::from_json(&t.model.to_json().unwrap()).unwrap();
        assert_eq!(back, t.model);
    }

    #[test]
    fn nan_input_rejected() {
        let (x, y) = blobs(100, 5);
        let t = train_classifier_xy(x.view(), &y, &quick(), None).unwrap();
        assert!(t.model.predict_proba_row(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn cv_report_summary_rows() {
        let folds = vec![
            FoldResult {
                fold: 1,
                bce: 0.2,
                accuracy: 0.9,
            },
            FoldResult {
                fold: 2,
                bce: 0.1,
                accuracy: 0.8,
            },
        ];
        let r = CvReport::from_folds(folds);
        assert_abs_diff_eq!(r.mean_accuracy, 0.85, epsilon = 1e-15);
        assert_eq!(r.best_bce, 0.1);
        assert_eq!(r.best_accuracy, 0.9);
    }
}
