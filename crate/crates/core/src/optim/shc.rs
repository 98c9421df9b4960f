//! Stochastic hill climbing: Gaussian perturbations, improvements (and
//! ties) always accepted, worse moves accepted with a fixed probability.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_positive, check_rate, Algorithm, Bounds, Evaluator, Objective, OptimizationResult, Tracker};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShcConfig {
    pub iterations: usize,
    pub moves_per_iter: usize,
    pub step_scale: f64,
    pub p_worse: f64,
}

impl Default for ShcConfig {
    fn default() -> Self {
        ShcConfig {
            iterations: 100,
            moves_per_iter: 1,
            step_scale: 0.1,
            p_worse: 0.05,
        }
    }
}

impl ShcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.moves_per_iter == 0 {
            return Err(Error::domain("SHC needs at least one iteration and one move"));
        }
        check_positive("step scale", self.step_scale)?;
        check_rate("p_worse", self.p_worse)
    }
}

pub fn shc(
    objective: &dyn Objective,
    bounds: &Bounds,
    cfg: &ShcConfig,
    seed: u64,
    budget: Option<usize>,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let mut r = rng::seeded(rng::derive(seed, 5));
    let mut ev = Evaluator::new(objective, budget);
    let mut tr = Tracker::new();

    let mut x = bounds.sample(&mut r);
    let Some(e0) = ev.evaluate(&x)? else {
        return tr.finish(Algorithm::Shc, seed, &ev, 0);
    };
    let mut fx = e0.fitness;
    tr.offer(&x, &e0);
    tr.mark_initial();
    'outer: for it in 1..=cfg.iterations {
        for _ in 0..cfg.moves_per_iter {
            let y = bounds.perturb(&x, cfg.step_scale, &mut r);
            let Some(e) = ev.evaluate(&y)? else {
                tr.record(it);
                break 'outer;
            };
            tr.offer(&y, &e);
            let u: f64 = r.random();
            if e.fitness <= fx || u < cfg.p_worse {
                x = y;
                fx = e.fitness;
            }
        }
        tr.record(it);
    }
    tr.finish(Algorithm::Shc, seed, &ev, 0)
}
