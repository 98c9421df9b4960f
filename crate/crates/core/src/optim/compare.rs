//! Multi-seed comparison of the metaheuristics under an optional equal
//! evaluation budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ga::GaConfig;
use super::pso::PsoConfig;
use super::random::RandomConfig;
use super::sa::SaConfig;
use super::shc::ShcConfig;
use super::tabu::TabuConfig;
use super::{run_algorithm, Algorithm, Bounds, Objective, OptimizationResult};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgorithmConfigs {
    pub ga: GaConfig,
    pub pso: PsoConfig,
    pub sa: SaConfig,
    pub tabu: TabuConfig,
    pub shc: ShcConfig,
    pub random: RandomConfig,
}

impl AlgorithmConfigs {
    pub fn validate(&self) -> Result<()> {
        self.ga.validate()?;
        self.pso.validate()?;
        self.sa.validate()?;
        self.tabu.validate()?;
        self.shc.validate()?;
        self.random.validate()
    }

    /// Stretches the single-trajectory algorithms (SA, SHC) and the random
    /// baseline so each can spend `budget` evaluations in its iteration
    /// count. Population algorithms already spend
    /// `population * iterations`.
    pub fn for_budget(&self, budget: usize) -> Self {
        let mut c = *self;
        c.sa.moves_per_iter = budget.div_ceil(c.sa.iterations).max(1);
        c.shc.moves_per_iter = budget.div_ceil(c.shc.iterations).max(1);
        c.random.iterations = budget.div_ceil(c.random.batch).max(1);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparisonConfig {
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    /// Hard cap on fitness evaluations per run, shared by every algorithm.
    pub equal_budget: Option<usize>,
    pub include_random_baseline: bool,
    pub configs: AlgorithmConfigs,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            algorithms: Algorithm::FIVE.to_vec(),
            seeds: vec![1, 2, 3],
            equal_budget: Some(2000),
            include_random_baseline: true,
            configs: AlgorithmConfigs::default(),
        }
    }
}

impl ComparisonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::domain("comparison needs at least one seed"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::domain("comparison needs at least one algorithm"));
        }
        if self.equal_budget == Some(0) {
            return Err(Error::domain("evaluation budget must be positive"));
        }
        self.configs.validate()
    }
}

/// Aggregates of one algorithm over all seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub median_best_fitness: f64,
    pub best_fitness: f64,
    pub median_eff_mu: Option<f64>,
    pub median_temp_mu: Option<f64>,
    /// Predicted means at the best design of the best run.
    pub best_eff_mu: Option<f64>,
    pub best_temp_mu: Option<f64>,
    pub best_x: Vec<f64>,
    pub best_seed: u64,
    pub median_evaluations: f64,
    pub median_wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub baseline: Option<ComparisonRow>,
    #[serde(skip)]
    pub runs: Vec<OptimizationResult>,
}

/// Median (mean of the two middle values for even counts).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn median_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| median(&v))
}

pub fn summarize(algorithm: Algorithm, runs: &[&OptimizationResult]) -> ComparisonRow {
    let best = runs
        .iter()
        .min_by(|a, b| a.best.fitness.total_cmp(&b.best.fitness))
        .expect("at least one run");
    let fit: Vec<f64> = runs.iter().map(|r| r.best.fitness).collect();
    ComparisonRow {
        algorithm,
        runs: runs.len(),
        median_best_fitness: median(&fit),
        best_fitness: best.best.fitness,
        median_eff_mu: median_opt(runs.iter().map(|r| r.best.eff_mu)),
        median_temp_mu: median_opt(runs.iter().map(|r| r.best.temp_mu)),
        best_eff_mu: best.best.eff_mu,
        best_temp_mu: best.best.temp_mu,
        best_x: best.best_x.clone(),
        best_seed: best.seed,
        median_evaluations: median(&runs.iter().map(|r| r.evaluations as f64).collect::<Vec<_>>()),
        median_wall_time_s: median(&runs.iter().map(|r| r.wall_time_s).collect::<Vec<_>>()),
    }
}

/// Runs every configured algorithm once per seed (runs execute in
/// parallel; results keep algorithm-then-seed order).
pub fn run_comparison(objective: &dyn Objective, bounds: &Bounds, cfg: &ComparisonConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let configs = match cfg.equal_budget {
        Some(b) => cfg.configs.for_budget(b),
        None => cfg.configs,
    };
    let mut algorithms = cfg.algorithms.clone();
    if cfg.include_random_baseline && !algorithms.contains(&Algorithm::Random) {
        algorithms.push(Algorithm::Random);
    }
    let jobs: Vec<(Algorithm, u64)> = algorithms
        .iter()
        .flat_map(|a| cfg.seeds.iter().map(move |s| (*a, *s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|(a, s)| run_algorithm(*a, objective, bounds, &configs, *s, cfg.equal_budget))
        .collect::<Result<Vec<_>>>()?;
    let row_for = |a: Algorithm| {
        let rs: Vec<&OptimizationResult> = runs.iter().filter(|r| r.algorithm == a).collect();
        summarize(a, &rs)
    };
    let rows = cfg
        .algorithms
        .iter()
        .filter(|a| **a != Algorithm::Random)
        .map(|a| row_for(*a))
        .collect();
    let baseline = algorithms
        .contains(&Algorithm::Random)
        .then(|| row_for(Algorithm::Random));
    Ok(ComparisonReport { rows, baseline, runs })
}
