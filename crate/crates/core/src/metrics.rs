//! Evaluation metrics: classification scores, pointwise regression errors,
//! probabilistic scores (PICP, MPIW, CRPS, NLL), calibration curves and
//! interval-width histograms.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::regress::{prediction_interval, GaussianPrediction};
use crate::{Error, Result};

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` inside BCE.
pub const PROB_CLIP: f64 = 1e-12;

/// Samples with `|y| < MAPE_MIN_ABS` are skipped by MAPE.
pub const MAPE_MIN_ABS: f64 = 1e-9;

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"` and `"nan"`
/// so reports stay valid JSON.
pub mod float_marker {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float marker `{other}`"))),
            },
        }
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Two-sided standard normal quantile for central coverage `level`.
pub fn z_for_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("interval level must lie in (0, 1), got {level}")));
    }
    Ok(std_normal().inverse_cdf(0.5 * (1.0 + level)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `TP / (TP + (FP + FN) / 2)`.
    pub fn f1(&self) -> f64 {
        let denom = self.tp as f64 + 0.5 * (self.fp + self.fn_) as f64;
        if denom == 0.0 {
            0.0
        } else {
            self.tp as f64 / denom
        }
    }
}

/// `num / den`, or 0 when the denominator is 0.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Label 1 is the positive (feasible) class. FP counts negatives predicted
/// positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub bce: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc_pr: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn check_probabilities(probs: &[f64], labels: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::domain("no predictions"));
    }
    if probs.len() != labels.len() {
        return Err(Error::domain(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::domain("probabilities must lie in [0, 1]"));
    }
    if labels.iter().any(|y| *y != 0.0 && *y != 1.0) {
        return Err(Error::domain("labels must be 0 or 1"));
    }
    Ok(())
}

pub fn confusion(probs: &[f64], labels: &[f64], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for (p, y) in probs.iter().zip(labels) {
        match (*p >= threshold, *y == 1.0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// Mean binary cross-entropy with clipped probabilities.
pub fn binary_cross_entropy(probs: &[f64], labels: &[f64]) -> f64 {
    let n = probs.len() as f64;
    -probs
        .iter()
        .zip(labels)
        .map(|(p, y)| {
            let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum::<f64>()
        / n
}

/// Area under the precision-recall curve swept over every distinct score
/// (predict positive when `score >= threshold`), starting from
/// `(recall 0, precision 1)`, integrated with the trapezoid rule.
pub fn auc_pr(probs: &[f64], labels: &[f64]) -> f64 {
    let positives = labels.iter().filter(|y| **y == 1.0).count();
    if positives == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_r, mut prev_p) = (0.0, 1.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let score = probs[order[i]];
        while i < order.len() && probs[order[i]] == score {
            if labels[order[i]] == 1.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let r = tp as f64 / positives as f64;
        let p = tp as f64 / (tp + fp) as f64;
        area += (r - prev_r) * (p + prev_p) / 2.0;
        prev_r = r;
        prev_p = p;
    }
    area
}

pub fn classification_metrics(probs: &[f64], labels: &[f64], threshold: f64) -> Result<ClassificationReport> {
    check_probabilities(probs, labels)?;
    let c = confusion(probs, labels, threshold);
    Ok(ClassificationReport {
        bce: binary_cross_entropy(probs, labels),
        accuracy: c.accuracy(),
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
        auc_pr: auc_pr(probs, labels),
        tp: c.tp,
        fp: c.fp,
        tn: c.tn,
        fn_: c.fn_,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseMetrics {
    pub rmse: f64,
    pub mae: f64,
    /// Mean absolute percentage error in percent.
    #[serde(with = "float_marker")]
    pub mape: f64,
    pub mape_skipped: usize,
    pub r2: f64,
}

fn check_lengths(a: usize, b: usize, min: usize) -> Result<()> {
    if a != b {
        return Err(Error::domain(format!("length mismatch: {a} vs {b}")));
    }
    if a < min {
        return Err(Error::domain(format!("need at least {min} samples, got {a}")));
    }
    Ok(())
}

/// RMSE, MAE, MAPE and R². MAPE skips near-zero targets and reports how
/// many were skipped (NaN when all are). R² is 1 for a perfect fit of a
/// constant target and 0 for any other fit of a constant target.
pub fn pointwise_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<PointwiseMetrics> {
    check_lengths(y_true.len(), y_pred.len(), 2)?;
    let n = y_true.len() as f64;
    let mut sse = 0.0;
    let mut sae = 0.0;
    let mut ape = 0.0;
    let mut skipped = 0;
    for (t, p) in y_true.iter().zip(y_pred) {
        let e = t - p;
        sse += e * e;
        sae += e.abs();
        if t.abs() < MAPE_MIN_ABS {
            skipped += 1;
        } else {
            ape += (e / t).abs();
        }
    }
    let counted = y_true.len() - skipped;
    let mean = y_true.iter().sum::<f64>() / n;
    let sst: f64 = y_true.iter().map(|t| (t - mean) * (t - mean)).sum();
    let r2 = if sst == 0.0 {
        if sse == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - sse / sst
    };
    Ok(PointwiseMetrics {
        rmse: (sse / n).sqrt(),
        mae: sae / n,
        mape: if counted == 0 {
            f64::NAN
        } else {
            100.0 * ape / counted as f64
        },
        mape_skipped: skipped,
        r2,
    })
}

/// Closed-form CRPS of `N(mu, sigma^2)` at observation `y`:
/// `sigma * [z (2 Phi(z) - 1) + 2 phi(z) - 1 / sqrt(pi)]`.
pub fn gaussian_crps(mu: f64, sigma: f64, y: f64) -> f64 {
    if sigma == 0.0 {
        return (y - mu).abs();
    }
    let n = std_normal();
    let z = (y - mu) / sigma;
    sigma * (z * (2.0 * n.cdf(z) - 1.0) + 2.0 * n.pdf(z) - 1.0 / std::f64::consts::PI.sqrt())
}

/// Negative log density of `y` under `N(mu, sigma^2)`. A zero-width
/// prediction that misses is `+inf`; one that hits is scored with sigma at
/// the clipping bound.
pub fn gaussian_nll(mu: f64, sigma: f64, y: f64) -> f64 {
    let sigma = if sigma == 0.0 {
        if y != mu {
            return f64::INFINITY;
        }
        PROB_CLIP
    } else {
        sigma
    };
    let r = (y - mu) / sigma;
    0.5 * (2.0 * std::f64::consts::PI).ln() + sigma.ln() + 0.5 * r * r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticMetrics {
    pub picp: f64,
    pub mpiw: f64,
    pub crps: f64,
    /// Mean per-sample negative log-likelihood.
    #[serde(with = "float_marker")]
    pub nll: f64,
}

fn check_predictions(preds: &[GaussianPrediction], y_true: &[f64]) -> Result<()> {
    check_lengths(preds.len(), y_true.len(), 1)?;
    if preds
        .iter()
        .any(|p| !(p.std >= 0.0) || !p.mean.is_finite() || !p.std.is_finite())
    {
        return Err(Error::domain("predictions need finite means and non-negative stds"));
    }
    Ok(())
}

pub fn probabilistic_metrics(preds: &[GaussianPrediction], y_true: &[f64], level: f64) -> Result<ProbabilisticMetrics> {
    check_predictions(preds, y_true)?;
    let n = preds.len() as f64;
    let mut covered = 0usize;
    let mut width = 0.0;
    let mut crps = 0.0;
    let mut nll = 0.0;
    for (p, y) in preds.iter().zip(y_true) {
        let (lo, hi) = prediction_interval(p, level)?;
        if lo <= *y && *y <= hi {
            covered += 1;
        }
        width += hi - lo;
        crps += gaussian_crps(p.mean, p.std, *y);
        nll += gaussian_nll(p.mean, p.std, *y);
    }
    Ok(ProbabilisticMetrics {
        picp: covered as f64 / n,
        mpiw: width / n,
        crps: crps / n,
        nll: nll / n,
    })
}

/// Pointwise and probabilistic scores of one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub rmse: f64,
    pub mae: f64,
    #[serde(with = "float_marker")]
    pub mape: f64,
    pub mape_skipped: usize,
    pub r2: f64,
    pub picp: f64,
    pub mpiw: f64,
    pub crps: f64,
    #[serde(with = "float_marker")]
    pub nll: f64,
}

pub fn regression_report(preds: &[GaussianPrediction], y_true: &[f64], level: f64) -> Result<RegressionReport> {
    let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    let pw = pointwise_metrics(y_true, &means)?;
    let pr = probabilistic_metrics(preds, y_true, level)?;
    Ok(RegressionReport {
        rmse: pw.rmse,
        mae: pw.mae,
        mape: pw.mape,
        mape_skipped: pw.mape_skipped,
        r2: pw.r2,
        picp: pr.picp,
        mpiw: pr.mpiw,
        crps: pr.crps,
        nll: pr.nll,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub nominal: Vec<f64>,
    pub observed: Vec<f64>,
}

impl CalibrationCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("nominal,observed\n");
        for (n, o) in self.nominal.iter().zip(&self.observed) {
            s.push_str(&format!("{n:?},{o:?}\n"));
        }
        s
    }
}

/// Observed central-interval coverage at each nominal level of `grid`.
pub fn calibration_curve(preds: &[GaussianPrediction], y_true: &[f64], grid: &[f64]) -> Result<CalibrationCurve> {
    check_predictions(preds, y_true)?;
    if grid.is_empty() {
        return Err(Error::domain("calibration grid is empty"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("calibration grid must be strictly increasing"));
    }
    let mut observed = Vec::with_capacity(grid.len());
    for &level in grid {
        let z = z_for_level(level)?;
        let hits = preds
            .iter()
            .zip(y_true)
            .filter(|(p, y)| (*y - p.mean).abs() <= z * p.std)
            .count();
        observed.push(hits as f64 / preds.len() as f64);
    }
    Ok(CalibrationCurve {
        nominal: grid.to_vec(),
        observed,
    })
}

/// Equal-width histogram over `[min, max]`; `edges` has `bins + 1` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lower,upper,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{:?},{:?},{c}\n", self.edges[i], self.edges[i + 1]));
        }
        s
    }
}

pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() || bins == 0 {
        return Err(Error::domain("histogram needs values and at least one bin"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + span * i as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    for v in values {
        let b = if span > 0.0 {
            (((v - lo) / span) * bins as f64).floor() as usize
        } else {
            0
        };
        counts[b.min(bins - 1)] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Histogram of prediction-interval widths `U - L` at `level`.
pub fn interval_width_histogram(preds: &[GaussianPrediction], level: f64, bins: usize) -> Result<Histogram> {
    let widths = preds
        .iter()
        .map(|p| prediction_interval(p, level).map(|(lo, hi)| hi - lo))
        .collect::<Result<Vec<_>>>()?;
    histogram(&widths, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn g(mean: f64, std: f64) -> GaussianPrediction {
        GaussianPrediction { mean, std }
    }

    #[test]
    fn perfect_classifier() {
        let r = classification_metrics(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0], 0.5).unwrap();
        assert!(r.bce < 1e-11);
        assert_eq!(
            (r.accuracy, r.precision, r.recall, r.f1, r.auc_pr),
            (1.0, 1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn constant_half_bce() {
        let r = classification_metrics(&[0.5; 4], &[1.0, 0.0, 0.0, 1.0], 0.5).unwrap();
        assert_abs_diff_eq!(r.bce, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(r.bce, std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn confusion_scores() {
        let c = Confusion {
            tp: 8,
            fp: 2,
            tn: 6,
            fn_: 4,
        };
        assert_abs_diff_eq!(c.precision(), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(c.recall(), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.f1(), 8.0 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.accuracy(), 0.7, epsilon = 1e-12);
        assert_eq!(Confusion::default().precision(), 0.0);
        assert_eq!(Confusion::default().f1(), 0.0);
    }

    #[test]
    fn classification_input_errors() {
        assert!(classification_metrics(&[], &[], 0.5).is_err());
        assert!(classification_metrics(&[0.5], &[1.0, 0.0], 0.5).is_err());
        assert!(classification_metrics(&[1.5], &[1.0], 0.5).is_err());
    }

    #[test]
    fn pointwise_examples() {
        let m = pointwise_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.rmse, m.mae, m.mape, m.r2), (0.0, 0.0, 0.0, 1.0));
        let m = pointwise_metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_abs_diff_eq!(m.rmse, (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.mae, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.r2, 0.0, epsilon = 1e-12);
        assert!(pointwise_metrics(&[1.0], &[1.0]).is_err());
        assert!(pointwise_metrics(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn mape_skips_zero_targets() {
        let m = pointwise_metrics(&[0.0, 2.0, 4.0], &[1.0, 1.0, 5.0]).unwrap();
        assert_eq!(m.mape_skipped, 1);
        assert_abs_diff_eq!(m.mape, 100.0 * (0.5 + 0.25) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn crps_at_center() {
        let c = gaussian_crps(0.0, 1.0, 0.0);
        let expected = 2.0 / (2.0 * std::f64::consts::PI).sqrt() - 1.0 / std::f64::consts::PI.sqrt();
        assert_abs_diff_eq!(c, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(c, 0.23370, epsilon = 1e-5);
        assert_eq!(gaussian_crps(1.0, 0.0, 3.0), 2.0);
        assert!(gaussian_crps(1.0, 1e-9, 1.0) < 1e-9);
    }

    #[test]
    fn degenerate_nll() {
        assert_eq!(gaussian_nll(0.0, 0.0, 1.0), f64::INFINITY);
        assert!(gaussian_nll(0.0, 0.0, 0.0).is_finite());
        let m = probabilistic_metrics(&[g(0.0, 0.0)], &[1.0], 0.95).unwrap();
        assert_eq!(m.nll, f64::INFINITY);
        assert_eq!(m.crps, 1.0);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"nll\":\"inf\""));
    }

    #[test]
    fn full_coverage() {
        let preds = [g(0.0, 1.0), g(5.0, 2.0)];
        let m = probabilistic_metrics(&preds, &[0.5, 4.0], 0.95).unwrap();
        assert_eq!(m.picp, 1.0);
        assert_abs_diff_eq!(m.mpiw, 2.0 * 1.959964 * 1.5, epsilon = 1e-5);
    }

    #[test]
    fn nested_calibration_levels() {
        let preds: Vec<_> = (0..50).map(|i| g(0.0, 1.0 + i as f64 * 0.01)).collect();
        let y: Vec<f64> = (0..50).map(|i| (i as f64 - 25.0) / 10.0).collect();
        let c = calibration_curve(&preds, &y, &[0.5, 0.9, 0.95]).unwrap();
        assert_eq!(c.observed.len(), 3);
        assert!(c.observed.windows(2).all(|w| w[0] <= w[1]));
        assert!(calibration_curve(&preds, &y, &[]).is_err());
        assert!(calibration_curve(&preds, &y, &[0.9, 0.5]).is_err());
    }

    #[test]
    fn constant_width_histogram() {
        let preds = vec![g(3.0, 0.5); 20];
        let h = interval_width_histogram(&preds, 0.95, 10).unwrap();
        assert_eq!(h.counts.iter().filter(|c| **c > 0).count(), 1);
        assert_eq!(h.counts.iter().sum::<usize>(), 20);
    }

    #[test]
    fn histogram_edges() {
        let h = histogram(&[0.0, 1.0, 2.0, 3.0, 4.0], 4).unwrap();
        assert_eq!(h.edges, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(h.counts, vec![1, 1, 1, 2]);
    }
}
