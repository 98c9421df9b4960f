//! Tabu search over continuous space. A neighbor is tabu when it lies
//! within `radius` (Euclidean, unit-cube coordinates) of a recently visited
//! solution; tabu neighbors that beat the global best are admitted by
//! aspiration.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{check_positive, Algorithm, Bounds, Evaluator, Objective, OptimizationResult, Tracker};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabuConfig {
    pub tabu_len: usize,
    pub neighborhood: usize,
    pub iterations: usize,
    pub radius: f64,
    pub step_scale: f64,
}

impl Default for TabuConfig {
    fn default() -> Self {
        TabuConfig {
            tabu_len: 20,
            neighborhood: 20,
            iterations: 100,
            radius: 0.05,
            step_scale: 0.1,
        }
    }
}

impl TabuConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tabu_len == 0 || self.neighborhood == 0 || self.iterations == 0 {
            return Err(Error::domain(
                "tabu length, neighborhood and iterations must be positive",
            ));
        }
        if !(self.radius >= 0.0) {
            return Err(Error::domain("tabu radius must be non-negative"));
        }
        check_positive("step scale", self.step_scale)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Whether the normalized point `z` is within `radius` of any list entry.
pub fn is_tabu(z: &[f64], list: &VecDeque<Vec<f64>>, radius: f64) -> bool {
    list.iter().any(|t| distance(z, t) < radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    /// Best non-tabu neighbor.
    Free(usize),
    /// Tabu neighbor admitted because it beats the global best.
    Aspiration(usize),
    /// Every neighbor tabu and none aspirational: best tabu neighbor.
    Override(usize),
}

/// Selects the next move from neighbor fitnesses and tabu flags.
pub fn choose(fitness: &[f64], tabu: &[bool], global_best: f64) -> Choice {
    let best_of = |want_tabu: bool| {
        (0..fitness.len())
            .filter(|&i| tabu[i] == want_tabu)
            .min_by(|&a, &b| fitness[a].total_cmp(&fitness[b]))
    };
    let free = best_of(false);
    let taboo = best_of(true);
    match (free, taboo) {
        (Some(f), Some(t)) if fitness[t] < global_best && fitness[t] < fitness[f] => Choice::Aspiration(t),
        (Some(f), _) => Choice::Free(f),
        (None, Some(t)) if fitness[t] < global_best => Choice::Aspiration(t),
        (None, Some(t)) => Choice::Override(t),
        (None, None) => unreachable!("neighborhood is non-empty"),
    }
}

pub fn tabu(
    objective: &dyn Objective,
    bounds: &Bounds,
    cfg: &TabuConfig,
    seed: u64,
    budget: Option<usize>,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let mut r = rng::seeded(rng::derive(seed, 4));
    let mut ev = Evaluator::new(objective, budget);
    let mut tr = Tracker::new();
    let mut overrides = 0;

    let mut x = bounds.sample(&mut r);
    let Some(e0) = ev.evaluate(&x)? else {
        return tr.finish(Algorithm::Tabu, seed, &ev, 0);
    };
    tr.offer(&x, &e0);
    tr.mark_initial();
    let mut list: VecDeque<Vec<f64>> = VecDeque::with_capacity(cfg.tabu_len);
    list.push_back(bounds.normalize(&x));
    for it in 1..=cfg.iterations {
        let neighbors: Vec<Vec<f64>> = (0..cfg.neighborhood)
            .map(|_| bounds.perturb(&x, cfg.step_scale, &mut r))
            .collect();
        let evals = ev.evaluate_batch(&neighbors)?;
        if evals.is_empty() {
            break;
        }
        let fitness: Vec<f64> = evals.iter().map(|e| e.fitness).collect();
        let flags: Vec<bool> = neighbors[..evals.len()]
            .iter()
            .map(|n| is_tabu(&bounds.normalize(n), &list, cfg.radius))
            .collect();
        let pick = match choose(&fitness, &flags, tr.best_fitness()) {
            Choice::Free(i) | Choice::Aspiration(i) => i,
            Choice::Override(i) => {
                overrides += 1;
                i
            }
        };
        for (n, e) in neighbors.iter().zip(&evals) {
            tr.offer(n, e);
        }
        x = neighbors[pick].clone();
        if list.len() == cfg.tabu_len {
            list.pop_front();
        }
        list.push_back(bounds.normalize(&x));
        tr.record(it);
        if evals.len() < neighbors.len() {
            break;
        }
    }
    tr.finish(Algorithm::Tabu, seed, &ev, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{sphere, FnObjective};

    #[test]
    fn empty_list_is_greedy() {
        assert_eq!(choose(&[3.0, 1.0, 2.0], &[false; 3], 0.0), Choice::Free(1));
    }

    #[test]
    fn identical_point_is_tabu() {
        let list: VecDeque<Vec<f64>> = [vec![0.5, 0.5]].into();
        assert!(is_tabu(&[0.5, 0.5], &list, 0.05));
        assert!(!is_tabu(&[0.6, 0.5], &list, 0.05));
    }

    #[test]
    fn aspiration_admits_tabu_improvement() {
        assert_eq!(choose(&[3.0, 0.5], &[false, true], 1.0), Choice::Aspiration(1));
        assert_eq!(choose(&[3.0, 1.5], &[false, true], 1.0), Choice::Free(0));
        assert_eq!(choose(&[3.0, 1.5], &[true, true], 1.0), Choice::Override(1));
    }

    #[test]
    fn monotone_trace() {
        let b = Bounds::uniform(4, -5.0, 5.0).unwrap();
        let res = tabu(&FnObjective(sphere), &b, &TabuConfig::default(), 2, None).unwrap();
        assert_eq!(res.evaluations, 2001);
        assert!(res.trace.windows(2).all(|w| w[1].best_fitness <= w[0].best_fitness));
    }
}
