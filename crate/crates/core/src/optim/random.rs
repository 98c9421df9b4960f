//! Uniform random search baseline.

use serde::{Deserialize, Serialize};

use super::{Algorithm, Bounds, Evaluator, Objective, OptimizationResult, Tracker};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomConfig {
    /// Samples per traced iteration.
    pub batch: usize,
    pub iterations: usize,
}

impl Default for RandomConfig {
    fn default() -> Self {
        RandomConfig {
            batch: 20,
            iterations: 100,
        }
    }
}

impl RandomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.iterations == 0 {
            return Err(Error::domain(
                "random search needs a positive batch and iteration count",
            ));
        }
        Ok(())
    }
}

pub fn random_search(
    objective: &dyn Objective,
    bounds: &Bounds,
    cfg: &RandomConfig,
    seed: u64,
    budget: Option<usize>,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let mut r = rng::seeded(rng::derive(seed, 6));
    let mut ev = Evaluator::new(objective, budget);
    let mut tr = Tracker::new();
    for it in 1..=cfg.iterations {
        let xs: Vec<Vec<f64>> = (0..cfg.batch).map(|_| bounds.sample(&mut r)).collect();
        let evals = ev.evaluate_batch(&xs)?;
        for (x, e) in xs.iter().zip(&evals) {
            tr.offer(x, e);
        }
        if it == 1 {
            tr.mark_initial();
        }
        if !evals.is_empty() {
            tr.record(it);
        }
        if evals.len() < xs.len() {
            break;
        }
    }
    tr.finish(Algorithm::Random, seed, &ev, 0)
}
