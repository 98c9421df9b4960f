//! Real-coded genetic algorithm with inverse-fitness roulette selection,
//! single-point crossover, fixed-step sign mutation and elitism.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_positive, check_rate, Algorithm, Bounds, Evaluator, Objective, OptimizationResult, Tracker};
use crate::rng;
use crate::{Error, Result};

/// Added to fitness values before inversion.
pub const ROULETTE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Evaluated generations, the initial population included.
    pub generations: usize,
    /// Mutation step as a fraction of each gene's range.
    pub alpha_frac: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 20,
            crossover_rate: 0.4,
            mutation_rate: 0.3,
            generations: 100,
            alpha_frac: 0.05,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || self.generations == 0 {
            return Err(Error::domain("GA needs population >= 2 and at least one generation"));
        }
        check_rate("crossover rate", self.crossover_rate)?;
        check_rate("mutation rate", self.mutation_rate)?;
        check_positive("mutation step", self.alpha_frac)
    }
}

/// Normalized selection weights proportional to `1 / (f + eps)`, or to
/// `1 / (f - f_min + 1 + eps)` when some fitness is non-positive.
pub fn roulette_weights(fitness: &[f64]) -> Vec<f64> {
    let fmin = fitness.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = if fmin > 0.0 {
        fitness.iter().map(|f| 1.0 / (f + ROULETTE_EPS)).collect()
    } else {
        fitness.iter().map(|f| 1.0 / (f - fmin + 1.0 + ROULETTE_EPS)).collect()
    };
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

fn spin(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Children `a[..k] ++ b[k..]` and `b[..k] ++ a[k..]`.
pub fn single_point_crossover(a: &[f64], b: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let c1 = a[..k].iter().chain(&b[k..]).copied().collect();
    let c2 = b[..k].iter().chain(&a[k..]).copied().collect();
    (c1, c2)
}

fn mutate(x: &mut [f64], bounds: &Bounds, cfg: &GaConfig, rng: &mut impl Rng) {
    for (i, v) in x.iter_mut().enumerate() {
        if rng.random::<f64>() < cfg.mutation_rate {
            let alpha = cfg.alpha_frac * bounds.range(i);
            *v += if rng.random::<bool>() { alpha } else { -alpha };
        }
    }
    bounds.clamp_in_place(x);
}

pub fn ga(
    objective: &dyn Objective,
    bounds: &Bounds,
    cfg: &GaConfig,
    seed: u64,
    budget: Option<usize>,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let mut r = rng::seeded(rng::derive(seed, 1));
    let mut ev = Evaluator::new(objective, budget);
    let mut tr = Tracker::new();
    let n = cfg.population;
    let d = bounds.dim();

    let mut pop: Vec<Vec<f64>> = (0..n).map(|_| bounds.sample(&mut r)).collect();
    let mut fit: Vec<f64> = Vec::new();
    for gen in 1..=cfg.generations {
        if gen > 1 {
            let elite = (0..fit.len())
                .min_by(|&a, &b| fit[a].total_cmp(&fit[b]))
                .expect("non-empty");
            let weights = roulette_weights(&fit);
            let mut next = Vec::with_capacity(n);
            while next.len() < n {
                let p1 = &pop[spin(&weights, &mut r)];
                let p2 = &pop[spin(&weights, &mut r)];
                let (mut c1, mut c2) = if d > 1 && r.random::<f64>() < cfg.crossover_rate {
                    single_point_crossover(p1, p2, r.random_range(1..d))
                } else {
                    (p1.clone(), p2.clone())
                };
                mutate(&mut c1, bounds, cfg, &mut r);
                mutate(&mut c2, bounds, cfg, &mut r);
                next.push(c1);
                if next.len() < n {
                    next.push(c2);
                }
            }
            let slot = r.random_range(0..n);
            next[slot] = pop[elite].clone();
            pop = next;
        }
        let evals = ev.evaluate_batch(&pop)?;
        for (x, e) in pop.iter().zip(&evals) {
            tr.offer(x, e);
        }
        if gen == 1 {
            tr.mark_initial();
        }
        if evals.len() < pop.len() {
            if !evals.is_empty() {
                tr.record(gen);
            }
            break;
        }
        fit = evals.iter().map(|e| e.fitness).collect();
        tr.record(gen);
    }
    tr.finish(Algorithm::Ga, seed, &ev, 0)
}
