//! Global-best particle swarm optimization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_rate, Algorithm, Bounds, Evaluator, Objective, OptimizationResult, Tracker};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Evaluated iterations, the initial swarm included.
    pub iterations: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm: 20,
            inertia: 0.1,
            cognitive: 1.0,
            social: 0.2,
            iterations: 100,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm < 2 || self.iterations == 0 {
            return Err(Error::domain("PSO needs swarm >= 2 and at least one iteration"));
        }
        check_rate("inertia", self.inertia)?;
        if !(self.cognitive >= 0.0 && self.social >= 0.0) {
            return Err(Error::domain("PSO acceleration coefficients must be non-negative"));
        }
        Ok(())
    }
}

/// `w v + c1 r1 (pbest - x) + c2 r2 (gbest - x)` for one coordinate.
#[allow(clippy::too_many_arguments)]
pub fn velocity_update(v: f64, x: f64, pbest: f64, gbest: f64, w: f64, c1: f64, c2: f64, r1: f64, r2: f64) -> f64 {
    w * v + c1 * r1 * (pbest - x) + c2 * r2 * (gbest - x)
}

pub fn pso(
    objective: &dyn Objective,
    bounds: &Bounds,
    cfg: &PsoConfig,
    seed: u64,
    budget: Option<usize>,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let mut r = rng::seeded(rng::derive(seed, 2));
    let mut ev = Evaluator::new(objective, budget);
    let mut tr = Tracker::new();
    let d = bounds.dim();

    let mut xs: Vec<Vec<f64>> = (0..cfg.swarm).map(|_| bounds.sample(&mut r)).collect();
    let mut vs = vec![vec![0.0; d]; cfg.swarm];
    let mut pbest = xs.clone();
    let mut pbest_f = vec![f64::INFINITY; cfg.swarm];
    let mut gbest = xs[0].clone();
    let mut gbest_f = f64::INFINITY;

    for it in 1..=cfg.iterations {
        if it > 1 {
            for i in 0..cfg.swarm {
                for j in 0..d {
                    let (r1, r2): (f64, f64) = (r.random(), r.random());
                    vs[i][j] = velocity_update(
                        vs[i][j],
                        xs[i][j],
                        pbest[i][j],
                        gbest[j],
                        cfg.inertia,
                        cfg.cognitive,
                        cfg.social,
                        r1,
                        r2,
                    );
                    xs[i][j] += vs[i][j];
                }
                bounds.clamp_in_place(&mut xs[i]);
            }
        }
        let evals = ev.evaluate_batch(&xs)?;
        for (i, e) in evals.iter().enumerate() {
            tr.offer(&xs[i], e);
            if e.fitness < pbest_f[i] {
                pbest_f[i] = e.fitness;
                pbest[i] = xs[i].clone();
            }
            if e.fitness < gbest_f {
                gbest_f = e.fitness;
                gbest = xs[i].clone();
            }
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
    tr.finish(Algorithm::Pso, seed, &ev, 0)
}
