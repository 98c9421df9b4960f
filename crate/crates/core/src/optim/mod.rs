//! Bounded real-vector minimization: genetic algorithm, particle swarm,
//! simulated annealing, tabu search, stochastic hill climbing and a
//! random-search baseline, with best-so-far tracing.
//!
//! Every algorithm evaluates candidates through an [`Evaluator`], which
//! caches values by candidate content, counts fitness calls and can enforce
//! a hard evaluation budget.

pub mod compare;
pub mod ga;
pub mod pso;
pub mod random;
pub mod sa;
pub mod shc;
pub mod tabu;

use std::collections::HashMap;
use std::fmt;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::converter::{DesignPoint, ParameterBounds};
use crate::fitness::FitnessContext;
use crate::{Error, Result};

pub use compare::{run_comparison, ComparisonConfig, ComparisonReport, ComparisonRow};

/// Per-gene inclusive bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::domain("bounds need equal, non-zero lengths"));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(Error::domain(
                "every lower bound must be finite and below its upper bound",
            ));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn range(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn clamp_in_place(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((v, lo), hi)| lo <= v && v <= hi)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }

    /// Coordinates rescaled to the unit cube.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.lower[i]) / self.range(i))
            .collect()
    }

    /// `x` plus independent Gaussian noise with per-gene std
    /// `scale * range`, clamped.
    pub fn perturb(&self, x: &[f64], scale: f64, rng: &mut impl Rng) -> Vec<f64> {
        let mut y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let n = Normal::new(0.0, scale * self.range(i)).expect("positive std");
                v + n.sample(rng)
            })
            .collect();
        self.clamp_in_place(&mut y);
        y
    }
}

impl From<&ParameterBounds> for Bounds {
    fn from(b: &ParameterBounds) -> Self {
        Bounds {
            lower: b.lower().to_vec(),
            upper: b.upper().to_vec(),
        }
    }
}

/// Projects every gene onto its `[lower, upper]` interval.
pub fn clamp(genes: &[f64], bounds: &Bounds) -> Vec<f64> {
    let mut x = genes.to_vec();
    bounds.clamp_in_place(&mut x);
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    /// Predicted mean efficiency, when the objective has one.
    pub eff_mu: Option<f64>,
    /// Predicted mean temperature, when the objective has one.
    pub temp_mu: Option<f64>,
}

pub trait Objective: Sync {
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation>;
}

/// Plain scalar function as an objective.
pub struct FnObjective<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        Ok(Evaluation {
            fitness: (self.0)(x),
            eff_mu: None,
            temp_mu: None,
        })
    }
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

impl Objective for FitnessContext<'_> {
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let v = FitnessContext::evaluate(self, &DesignPoint::from_slice(x)?)?;
        Ok(Evaluation {
            fitness: v.total,
            eff_mu: Some(v.efficiency.mean),
            temp_mu: Some(v.temperature.mean),
        })
    }
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Caching, counting front end to an [`Objective`]. Every requested
/// evaluation counts against the budget, cached or not.
pub struct Evaluator<'a> {
    objective: &'a dyn Objective,
    cache: HashMap<Vec<u64>, Evaluation>,
    calls: usize,
    budget: Option<usize>,
}

impl<'a> Evaluator<'a> {
    pub fn new(objective: &'a dyn Objective, budget: Option<usize>) -> Self {
        Evaluator {
            objective,
            cache: HashMap::new(),
            calls: 0,
            budget,
        }
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn unique(&self) -> usize {
        self.cache.len()
    }

    pub fn remaining(&self) -> usize {
        self.budget.map_or(usize::MAX, |b| b.saturating_sub(self.calls))
    }

    pub fn exhausted(&self) -> bool {
        self.remaining() == 0
    }

    /// `None` once the budget is spent.
    pub fn evaluate(&mut self, x: &[f64]) -> Result<Option<Evaluation>> {
        Ok(self.evaluate_batch(&[x.to_vec()])?.pop())
    }

    /// Evaluates the longest prefix of `xs` the budget allows; uncached
    /// candidates are computed in parallel.
    pub fn evaluate_batch(&mut self, xs: &[Vec<f64>]) -> Result<Vec<Evaluation>> {
        let xs = &xs[..xs.len().min(self.remaining())];
        let mut todo: Vec<(Vec<u64>, &Vec<f64>)> = Vec::new();
        for x in xs {
            let k = key(x);
            if !self.cache.contains_key(&k) && !todo.iter().any(|(t, _)| *t == k) {
                todo.push((k, x));
            }
        }
        let fresh = todo
            .par_iter()
            .map(|(_, x)| self.objective.evaluate(x))
            .collect::<Result<Vec<_>>>()?;
        for ((k, _), e) in todo.into_iter().zip(fresh) {
            if !e.fitness.is_finite() {
                return Err(Error::Numerical("objective returned a non-finite value".into()));
            }
            self.cache.insert(k, e);
        }
        self.calls += xs.len();
        Ok(xs.iter().map(|x| self.cache[&key(x)]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ga,
    Pso,
    Sa,
    Tabu,
    Shc,
    Random,
}

impl Algorithm {
    pub const FIVE: [Algorithm; 5] = [
        Algorithm::Ga,
        Algorithm::Pso,
        Algorithm::Sa,
        Algorithm::Tabu,
        Algorithm::Shc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ga => "ga",
            Algorithm::Pso => "pso",
            Algorithm::Sa => "sa",
            Algorithm::Tabu => "tabu",
            Algorithm::Shc => "shc",
            Algorithm::Random => "random",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub best_fitness: f64,
    pub best_eff_mu: Option<f64>,
    pub best_temp_mu: Option<f64>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub best_x: Vec<f64>,
    pub best: Evaluation,
    /// Best fitness among the initial evaluation(s).
    pub initial_best_fitness: f64,
    /// Best-so-far after each iteration.
    pub trace: Vec<TraceRow>,
    pub evaluations: usize,
    pub unique_evaluations: usize,
    /// Tabu steps that had to take a tabu, non-aspirational neighbor.
    pub tabu_overrides: usize,
    pub wall_time_s: f64,
}

impl OptimizationResult {
    pub fn trace_csv(&self) -> String {
        let d = self.best_x.len();
        let mut s = String::from("iteration,best_fitness,best_eff_mu,best_temp_mu");
        for i in 1..=d {
            s.push_str(&format!(",x{i}"));
        }
        s.push('\n');
        let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        for r in &self.trace {
            s.push_str(&format!(
                "{},{:?},{},{}",
                r.iteration,
                r.best_fitness,
                opt(r.best_eff_mu),
                opt(r.best_temp_mu)
            ));
            for v in &r.x {
                s.push_str(&format!(",{v:?}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Best-so-far bookkeeping shared by the algorithms.
pub(crate) struct Tracker {
    best_x: Vec<f64>,
    best: Evaluation,
    initial: Option<f64>,
    trace: Vec<TraceRow>,
    started: Instant,
}

impl Tracker {
    pub fn new() -> Self {
        Tracker {
            best_x: Vec::new(),
            best: Evaluation {
                fitness: f64::INFINITY,
                eff_mu: None,
                temp_mu: None,
            },
            initial: None,
            trace: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Offers a candidate; ties keep the incumbent.
    pub fn offer(&mut self, x: &[f64], e: &Evaluation) {
        if e.fitness < self.best.fitness {
            self.best = *e;
            self.best_x = x.to_vec();
        }
    }

    /// Marks the current best as the initial best.
    pub fn mark_initial(&mut self) {
        self.initial = Some(self.best.fitness);
    }

    pub fn best_fitness(&self) -> f64 {
        self.best.fitness
    }

    pub fn record(&mut self, iteration: usize) {
        self.trace.push(TraceRow {
            iteration,
            best_fitness: self.best.fitness,
            best_eff_mu: self.best.eff_mu,
            best_temp_mu: self.best.temp_mu,
            x: self.best_x.clone(),
        });
    }

    pub fn finish(
        self,
        algorithm: Algorithm,
        seed: u64,
        ev: &Evaluator,
        tabu_overrides: usize,
    ) -> Result<OptimizationResult> {
        if self.best_x.is_empty() {
            return Err(Error::domain("evaluation budget too small to evaluate any candidate"));
        }
        Ok(OptimizationResult {
            algorithm,
            seed,
            initial_best_fitness: self.initial.unwrap_or(self.best.fitness),
            best_x: self.best_x,
            best: self.best,
            trace: self.trace,
            evaluations: ev.calls(),
            unique_evaluations: ev.unique(),
            tabu_overrides,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        })
    }
}

pub(crate) fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Runs one algorithm with its default-or-given configuration.
pub fn run_algorithm(
    algorithm: Algorithm,
    objective: &dyn Objective,
    bounds: &Bounds,
    cfg: &compare::AlgorithmConfigs,
    seed: u64,
    budget: Option<usize>,
) -> Result<OptimizationResult> {
    match algorithm {
        Algorithm::Ga => ga::ga(objective, bounds, &cfg.ga, seed, budget),
        Algorithm::Pso => pso::pso(objective, bounds, &cfg.pso, seed, budget),
        Algorithm::Sa => sa::sa(objective, bounds, &cfg.sa, seed, budget),
        Algorithm::Tabu => tabu::tabu(objective, bounds, &cfg.tabu, seed, budget),
        Algorithm::Shc => shc::shc(objective, bounds, &cfg.shc, seed, budget),
        Algorithm::Random => random::random_search(objective, bounds, &cfg.random, seed, budget),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_examples() {
        let b = Bounds::uniform(3, -1.0, 1.0).unwrap();
        assert_eq!(clamp(&[0.5, -0.2, 1.0], &b), vec![0.5, -0.2, 1.0]);
        assert_eq!(clamp(&[-3.0, 0.0, 7.0], &b), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn evaluator_caches_and_caps() {
        let obj = FnObjective(sphere);
        let mut ev = Evaluator::new(&obj, Some(3));
        let xs = vec![vec![1.0], vec![1.0], vec![2.0], vec![3.0]];
        let out = ev.evaluate_batch(&xs).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(ev.calls(), 3);
        assert_eq!(ev.unique(), 2);
        assert!(ev.exhausted());
        assert!(ev.evaluate(&[0.0]).unwrap().is_none());
    }
}
