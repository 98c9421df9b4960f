//! Soft-penalty multi-objective fitness (to be minimized):
//!
//! `F = (100 - Y1)^2 + (t - Y2)^2 + PF * P`
//!
//! where `P` is the classifier's probability that the design is infeasible,
//! `Y1` is the efficiency in percent and `Y2` the junction temperature. In
//! stochastic mode `Y1` and `Y2` are drawn uniformly from the regressor's
//! central prediction interval; in deterministic mode they are the
//! predicted means.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::FeasibilityClassifier;
use crate::converter::{DesignPoint, ParameterBounds};
use crate::dataset::MAX_TEMPERATURE;
use crate::regress::{prediction_interval, GaussianPrediction, SurrogateRegressor};
use crate::rng;
use crate::{Error, Result};

/// Probability that a design is feasible.
pub trait FeasibilityModel: Sync {
    fn prob_feasible(&self, design: &DesignPoint) -> Result<f64>;
}

/// Gaussian predictions of (efficiency, temperature) in physical units.
pub trait QuantityModel: Sync {
    fn predict_quantities(&self, design: &DesignPoint) -> Result<[GaussianPrediction; 2]>;
}

impl FeasibilityModel for FeasibilityClassifier {
    fn prob_feasible(&self, design: &DesignPoint) -> Result<f64> {
        self.predict_proba(design)
    }
}

impl QuantityModel for SurrogateRegressor {
    fn predict_quantities(&self, design: &DesignPoint) -> Result<[GaussianPrediction; 2]> {
        self.predict(design)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMode {
    Stochastic,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// `PF * P`.
    Soft,
    /// `PF` when `P > 0.5`, else 0.
    Harsh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objectives {
    Both,
    EfficiencyOnly,
    TemperatureOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitnessConfig {
    /// Goal junction temperature `t` [degC].
    pub target_temperature: f64,
    pub penalty_factor: f64,
    pub level: f64,
    pub mode: FitnessMode,
    pub penalty: PenaltyMode,
    pub objectives: Objectives,
    pub seed: u64,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        FitnessConfig {
            target_temperature: 28.0,
            penalty_factor: 5.0,
            level: 0.95,
            mode: FitnessMode::Stochastic,
            penalty: PenaltyMode::Soft,
            objectives: Objectives::Both,
            seed: 0,
        }
    }
}

impl FitnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty_factor >= 0.0 && self.penalty_factor.is_finite()) {
            return Err(Error::domain("penalty factor must be finite and non-negative"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::domain("interval level must lie in (0, 1)"));
        }
        if !(0.0..=MAX_TEMPERATURE).contains(&self.target_temperature) {
            return Err(Error::domain(format!(
                "goal temperature must lie in [0, {MAX_TEMPERATURE}] degC"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessValue {
    /// Sum of the three terms.
    pub total: f64,
    pub efficiency_term: f64,
    pub temperature_term: f64,
    pub penalty_term: f64,
    /// Efficiency used, in percent (clamped to [0, 100]).
    pub y1: f64,
    /// Temperature used [degC].
    pub y2: f64,
    /// Classifier probability of the infeasible class.
    pub p_infeasible: f64,
    pub efficiency: GaussianPrediction,
    pub temperature: GaussianPrediction,
}

pub struct FitnessContext<'a> {
    pub classifier: &'a dyn FeasibilityModel,
    pub regressor: &'a dyn QuantityModel,
    pub bounds: ParameterBounds,
    pub config: FitnessConfig,
}

fn draw(pred: &GaussianPrediction, level: f64, mode: FitnessMode, rng: &mut impl Rng) -> Result<f64> {
    match mode {
        FitnessMode::Deterministic => Ok(pred.mean),
        FitnessMode::Stochastic => {
            let (lo, hi) = prediction_interval(pred, level)?;
            Ok(lo + (hi - lo) * rng.random::<f64>())
        }
    }
}

impl<'a> FitnessContext<'a> {
    pub fn new(
        classifier: &'a dyn FeasibilityModel,
        regressor: &'a dyn QuantityModel,
        bounds: ParameterBounds,
        config: FitnessConfig,
    ) -> Result<Self> {
        config.validate()?;
        bounds.validate()?;
        Ok(FitnessContext {
            classifier,
            regressor,
            bounds,
            config,
        })
    }

    /// The stream a candidate's draws come from: keyed by the context seed
    /// and the candidate's content, so re-evaluating a design reproduces
    /// its value.
    pub fn stream_for(&self, design: &DesignPoint) -> rng::Rng {
        rng::stream(self.config.seed, rng::hash_f64s(&design.to_array()))
    }

    pub fn evaluate(&self, design: &DesignPoint) -> Result<FitnessValue> {
        let mut r = self.stream_for(design);
        self.evaluate_with_rng(design, &mut r)
    }

    pub fn evaluate_with_rng(&self, design: &DesignPoint, rng: &mut impl Rng) -> Result<FitnessValue> {
        self.bounds.check(design)?;
        let c = &self.config;
        let p_feasible = self.classifier.prob_feasible(design)?;
        if !(0.0..=1.0).contains(&p_feasible) {
            return Err(Error::Numerical(format!("classifier returned {p_feasible}")));
        }
        let p_infeasible = 1.0 - p_feasible;
        let [eff, temp] = self.regressor.predict_quantities(design)?;
        // Efficiency is drawn before temperature.
        let y1 = (100.0 * draw(&eff, c.level, c.mode, rng)?).clamp(0.0, 100.0);
        let y2 = draw(&temp, c.level, c.mode, rng)?;
        let efficiency_term = match c.objectives {
            Objectives::TemperatureOnly => 0.0,
            _ => (100.0 - y1) * (100.0 - y1),
        };
        let temperature_term = match c.objectives {
            Objectives::EfficiencyOnly => 0.0,
            _ => (c.target_temperature - y2) * (c.target_temperature - y2),
        };
        let penalty_term = match c.penalty {
            PenaltyMode::Soft => c.penalty_factor * p_infeasible,
            PenaltyMode::Harsh if p_infeasible > 0.5 => c.penalty_factor,
            PenaltyMode::Harsh => 0.0,
        };
        let total = efficiency_term + temperature_term + penalty_term;
        if !total.is_finite() {
            return Err(Error::Numerical(format!("non-finite fitness for {design:?}")));
        }
        Ok(FitnessValue {
            total,
            efficiency_term,
            temperature_term,
            penalty_term,
            y1,
            y2,
            p_infeasible,
            efficiency: eff,
            temperature: temp,
        })
    }

    /// Element-wise [`Self::evaluate`]; each candidate uses its own keyed
    /// stream, so the output is independent of order and scheduling.
    pub fn evaluate_batch(&self, designs: &[DesignPoint]) -> Result<Vec<FitnessValue>> {
        designs.par_iter().map(|d| self.evaluate(d)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::converter::nominal_design;
    use approx::assert_abs_diff_eq;

    struct Fixed(f64);
    impl FeasibilityModel for Fixed {
        fn prob_feasible(&self, _: &DesignPoint) -> Result<f64> {
            Ok(self.0)
        }
    }

    struct Preds([GaussianPrediction; 2]);
    impl QuantityModel for Preds {
        fn predict_quantities(&self, _: &DesignPoint) -> Result<[GaussianPrediction; 2]> {
            Ok(self.0)
        }
    }

    fn g(mean: f64, std: f64) -> GaussianPrediction {
        GaussianPrediction { mean, std }
    }

    fn det() -> FitnessConfig {
        FitnessConfig {
            mode: FitnessMode::Deterministic,
            ..FitnessConfig::default()
        }
    }

    fn eval(p_feasible: f64, preds: [GaussianPrediction; 2], cfg: FitnessConfig) -> FitnessValue {
        let c = Fixed(p_feasible);
        let r = Preds(preds);
        let ctx = FitnessContext::new(&c, &r, ParameterBounds::default(), cfg).unwrap();
        ctx.evaluate(&nominal_design()).unwrap()
    }

    #[test]
    fn perfect_candidate_scores_zero() {
        let f = eval(1.0, [g(1.0, 0.0), g(28.0, 0.0)], det());
        assert_eq!(f.total, 0.0);
    }

    #[test]
    fn hand_evaluated_examples() {
        let f = eval(1.0, [g(0.95, 0.0), g(30.0, 0.0)], det());
        assert_abs_diff_eq!(f.total, 29.0, epsilon = 1e-9);
        let f = eval(0.0, [g(0.95, 0.0), g(30.0, 0.0)], det());
        assert_abs_diff_eq!(f.total, 34.0, epsilon = 1e-9);
        assert_eq!(f.total, f.efficiency_term + f.temperature_term + f.penalty_term);
    }

    #[test]
    fn harsh_penalty_is_a_step() {
        let cfg = FitnessConfig {
            penalty: PenaltyMode::Harsh,
            ..det()
        };
        assert_eq!(eval(0.6, [g(1.0, 0.0), g(28.0, 0.0)], cfg).total, 0.0);
        assert_eq!(eval(0.4, [g(1.0, 0.0), g(28.0, 0.0)], cfg).total, 5.0);
    }

    #[test]
    fn single_objective_drops_a_term() {
        let cfg = FitnessConfig {
            objectives: Objectives::EfficiencyOnly,
            ..det()
        };
        assert_abs_diff_eq!(eval(1.0, [g(0.95, 0.0), g(90.0, 0.0)], cfg).total, 25.0, epsilon = 1e-9);
    }

    #[test]
    fn efficiency_draw_is_clamped() {
        let f = eval(1.0, [g(1.2, 0.0), g(28.0, 0.0)], det());
        assert_eq!(f.y1, 100.0);
        assert_eq!(f.total, 0.0);
    }

    #[test]
    fn keyed_stream_repeats() {
        let c = Fixed(0.9);
        let r = Preds([g(0.97, 0.01), g(40.0, 3.0)]);
        let ctx = FitnessContext::new(&c, &r, ParameterBounds::default(), FitnessConfig::default()).unwrap();
        let d = nominal_design();
        assert_eq!(ctx.evaluate(&d).unwrap(), ctx.evaluate(&d).unwrap());
    }

    #[test]
    fn out_of_bounds_rejected() {
        let c = Fixed(0.9);
        let r = Preds([g(0.97, 0.01), g(40.0, 3.0)]);
        let ctx = FitnessContext::new(&c, &r, ParameterBounds::default(), det()).unwrap();
        let mut d = nominal_design();
        d.vdc = 1e9;
        assert!(ctx.evaluate(&d).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FitnessConfig {
            penalty_factor: -1.0,
            ..det()
        }
        .validate()
        .is_err());
        assert!(FitnessConfig { level: 1.0, ..det() }.validate().is_err());
        assert!(FitnessConfig {
            target_temperature: 200.0,
            ..det()
        }
        .validate()
        .is_err());
    }
}
