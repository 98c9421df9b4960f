//! Simulated annealing with Gaussian proposals and geometric cooling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_positive, Algorithm, Bounds, Evaluator, Objective, OptimizationResult, Tracker};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaConfig {
    pub t0: f64,
    pub cooling: f64,
    pub iterations: usize,
    /// Proposals per temperature level.
    pub moves_per_iter: usize,
    /// Proposal std as a fraction of each gene's range.
    pub step_scale: f64,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            t0: 100.0,
            cooling: 0.9,
            iterations: 100,
            moves_per_iter: 1,
            step_scale: 0.1,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("initial temperature", self.t0)?;
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::domain("cooling factor must lie in (0, 1)"));
        }
        if self.iterations == 0 || self.moves_per_iter == 0 {
            return Err(Error::domain("SA needs at least one iteration and one move"));
        }
        check_positive("step scale", self.step_scale)
    }
}

/// Metropolis acceptance probability `min(1, exp(-delta / t))`.
pub fn acceptance_probability(delta: f64, t: f64) -> f64 {
    if delta <= 0.0 {
        1.0
    } else if t <= 0.0 {
        0.0
    } else {
        (-delta / t).exp()
    }
}

pub fn sa(
    objective: &dyn Objective,
    bounds: &Bounds,
    cfg: &SaConfig,
    seed: u64,
    budget: Option<usize>,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let mut r = rng::seeded(rng::derive(seed, 3));
    let mut ev = Evaluator::new(objective, budget);
    let mut tr = Tracker::new();

    let mut x = bounds.sample(&mut r);
    let Some(e0) = ev.evaluate(&x)? else {
        return tr.finish(Algorithm::Sa, seed, &ev, 0);
    };
    let mut fx = e0.fitness;
    tr.offer(&x, &e0);
    tr.mark_initial();
    let mut t = cfg.t0;
    'outer: for it in 1..=cfg.iterations {
        for _ in 0..cfg.moves_per_iter {
            let y = bounds.perturb(&x, cfg.step_scale, &mut r);
            let Some(e) = ev.evaluate(&y)? else {
                tr.record(it);
                break 'outer;
            };
            tr.offer(&y, &e);
            let u: f64 = r.random();
            if u < acceptance_probability(e.fitness - fx, t) {
                x = y;
                fx = e.fitness;
            }
        }
        t *= cfg.cooling;
        tr.record(it);
    }
    tr.finish(Algorithm::Sa, seed, &ev, 0)
}
