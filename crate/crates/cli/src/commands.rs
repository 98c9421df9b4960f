//! The pipeline steps. Each reads the artifacts of the previous steps from
//! the output directory, writes its own, and returns a JSON summary.

use std::fs;
use std::path::Path;

use pec_core::classifier::{
    cross_validate, train_classifier, train_logistic_baseline, ClassifierKind, FeasibilityClassifier,
};
use pec_core::converter::{ConverterModel, DesignPoint, N_PARAMS, PARAM_NAMES};
use pec_core::dataset::{self, LabeledSample, CSV_HEADER};
use pec_core::fitness::{FitnessContext, FitnessMode};
use pec_core::metrics::{calibration_curve, classification_metrics, interval_width_histogram, regression_report};
use pec_core::nn::EpochStats;
use pec_core::optim::compare::{run_comparison, ComparisonReport};
use pec_core::optim::{Algorithm, Bounds, OptimizationResult};
use pec_core::regress::{fit_regressor, unzip_targets, GaussianPrediction, SurrogateRegressor, TARGET_NAMES};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Paths, PipelineConfig};
use crate::error::{CliError, Result};

/// Probability threshold of the feasible class.
pub const THRESHOLD: f64 = 0.5;

/// Resolved configuration plus the artifact layout.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub paths: Paths,
}

impl Context {
    /// Validates `config`, derives the component seeds and fixes the
    /// output directory. Nothing is written.
    pub fn new(mut config: PipelineConfig) -> Result<Self> {
        config.resolve_seeds();
        config.validate()?;
        let paths = Paths::new(config.out.clone());
        Ok(Context { config, paths })
    }

    fn prepare_out(&self) -> Result<()> {
        fs::create_dir_all(&self.paths.out).map_err(|e| CliError::io(&self.paths.out, e))?;
        write_text(&self.paths.file("config.resolved.toml"), &self.config.to_toml()?)
    }

    fn converter(&self) -> ConverterModel {
        ConverterModel {
            bounds: self.config.dataset.bounds,
            ..ConverterModel::default()
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(pec_core::Error::from)?;
    text.push('\n');
    write_text(path, &text)
}

fn require(path: &Path, command: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing {
            path: path.to_path_buf(),
            command,
        })
    }
}

fn read_json<T: DeserializeOwned>(path: &Path, command: &'static str) -> Result<T> {
    require(path, command)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Core(pec_core::Error::Parse {
            line: e.line() as u64,
            message: format!("{}: {e}", path.display()),
        })
    })
}

fn load_dataset(ctx: &Context) -> Result<Vec<LabeledSample>> {
    let path = ctx.paths.dataset();
    require(&path, "generate")?;
    Ok(dataset::load_csv(&path)?)
}

fn load_models(ctx: &Context) -> Result<(FeasibilityClassifier, FeasibilityClassifier, SurrogateRegressor)> {
    for p in [ctx.paths.classifier(), ctx.paths.logistic(), ctx.paths.regressor()] {
        require(&p, "train")?;
    }
    Ok((
        FeasibilityClassifier::load(ctx.paths.classifier())?,
        FeasibilityClassifier::load(ctx.paths.logistic())?,
        SurrogateRegressor::load(ctx.paths.regressor())?,
    ))
}

#[derive(Debug, Serialize)]
struct ColumnStats {
    name: &'static str,
    min: f64,
    max: f64,
    mean: f64,
    std: f64,
}

fn column_stats(name: &'static str, values: impl Iterator<Item = f64> + Clone) -> ColumnStats {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.clone().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    ColumnStats {
        name,
        min: values.clone().fold(f64::INFINITY, f64::min),
        max: values.fold(f64::NEG_INFINITY, f64::max),
        mean,
        std: var.sqrt(),
    }
}

/// Samples and labels the dataset.
pub fn generate(ctx: &Context) -> Result<Value> {
    let cfg = &ctx.config;
    let data = ctx.converter().generate_dataset(cfg.dataset.n, cfg.seed)?;
    ctx.prepare_out()?;
    dataset::save_csv(ctx.paths.dataset(), &data)?;

    let feasible = data.iter().filter(|s| s.feasible).count();
    let mut columns: Vec<ColumnStats> = (0..N_PARAMS)
        .map(|j| column_stats(CSV_HEADER[j], data.iter().map(move |s| s.x.to_array()[j])))
        .collect();
    columns.push(column_stats(CSV_HEADER[N_PARAMS], data.iter().map(|s| s.y1)));
    columns.push(column_stats(CSV_HEADER[N_PARAMS + 1], data.iter().map(|s| s.y2)));
    let summary = json!({
        "rows": data.len(),
        "feasible": feasible,
        "infeasible": data.len() - feasible,
        "feasible_fraction": feasible as f64 / data.len() as f64,
        "seed": cfg.seed,
        "columns": columns,
    });
    write_json(&ctx.paths.dataset_summary(), &summary)?;
    Ok(json!({
        "command": "generate",
        "dataset": ctx.paths.dataset().display().to_string(),
        "rows": data.len(),
        "feasible_fraction": summary["feasible_fraction"],
    }))
}

fn history_csv(history: &[EpochStats]) -> String {
    let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
    let mut s = String::from("epoch,train_loss,train_accuracy,valid_loss,valid_accuracy\n");
    for e in history {
        s.push_str(&format!(
            "{},{:?},{},{},{}\n",
            e.epoch,
            e.train_loss,
            opt(e.train_accuracy),
            opt(e.valid_loss),
            opt(e.valid_accuracy)
        ));
    }
    s
}

/// Trains the classifier, the logistic baseline and the regressor; runs
/// cross-validation of both classifiers over the full dataset.
pub fn train(ctx: &Context) -> Result<Value> {
    let cfg = &ctx.config;
    let data = load_dataset(ctx)?;
    let split = cfg.split_spec();
    let (train, test) = dataset::split(&data, &split)?;
    ctx.prepare_out()?;

    let mlp = train_classifier(&train, &cfg.classifier, Some(&test))?;
    mlp.model.save(ctx.paths.classifier())?;
    write_text(&ctx.paths.file("classifier_curve.csv"), &history_csv(&mlp.history))?;

    let logistic = train_logistic_baseline(&train, &cfg.classifier, Some(&test))?;
    logistic.model.save(ctx.paths.logistic())?;
    write_text(&ctx.paths.file("logistic_curve.csv"), &history_csv(&logistic.history))?;

    let cv_mlp = cross_validate(&data, split.k, ClassifierKind::Mlp, &cfg.classifier, split.seed)?;
    let cv_logistic = cross_validate(&data, split.k, ClassifierKind::Logistic, &cfg.classifier, split.seed)?;
    write_json(
        &ctx.paths.file("cv_report.json"),
        &json!({ "mlp": cv_mlp, "logistic": cv_logistic }),
    )?;

    let regressor = fit_regressor(&train, &cfg.regressor, Some(&test))?;
    regressor.model.save(ctx.paths.regressor())?;
    if let Some(curve) = &regressor.curve {
        write_text(&ctx.paths.file("regressor_curve.csv"), &curve.to_csv())?;
    }

    Ok(json!({
        "command": "train",
        "train_rows": train.len(),
        "test_rows": test.len(),
        "regressor": cfg.regressor.kind.name(),
        "cv_mean_accuracy": { "mlp": cv_mlp.mean_accuracy, "logistic": cv_logistic.mean_accuracy },
        "cv_mean_bce": { "mlp": cv_mlp.mean_bce, "logistic": cv_logistic.mean_bce },
    }))
}

/// Scores the trained models on the held-out rows.
pub fn evaluate(ctx: &Context) -> Result<Value> {
    let cfg = &ctx.config;
    let data = load_dataset(ctx)?;
    let (clf, logistic, reg) = load_models(ctx)?;
    let (_, test) = dataset::split(&data, &cfg.split_spec())?;
    ctx.prepare_out()?;

    let labels = dataset::labels(&test);
    let mlp_report = classification_metrics(&clf.predict_samples(&test)?, &labels, THRESHOLD)?;
    let logistic_report = classification_metrics(&logistic.predict_samples(&test)?, &labels, THRESHOLD)?;
    write_json(
        &ctx.paths.file("classification_report.json"),
        &json!({
            "mlp": mlp_report,
            "logistic": logistic_report,
            "threshold": THRESHOLD,
            "test_rows": test.len(),
        }),
    )?;

    let feasible = dataset::feasible_only(&test);
    let [eff, temp] = unzip_targets(&reg.predict_samples(&feasible)?);
    let truth = [
        feasible.iter().map(|s| s.y1).collect::<Vec<_>>(),
        feasible.iter().map(|s| s.y2).collect::<Vec<_>>(),
    ];
    let ev = &cfg.evaluation;
    let mut reports = Vec::new();
    for ((name, preds), y) in TARGET_NAMES.iter().zip([&eff, &temp]).zip(&truth) {
        reports.push(regression_report(preds, y, ev.level)?);
        write_text(
            &ctx.paths.file(&format!("calibration_{name}.csv")),
            &calibration_curve(preds, y, &ev.calibration_grid)?.to_csv(),
        )?;
        write_text(
            &ctx.paths.file(&format!("hiw_{name}.csv")),
            &interval_width_histogram(preds, ev.level, ev.histogram_bins)?.to_csv(),
        )?;
    }
    write_json(
        &ctx.paths.file("regression_report.json"),
        &json!({
            "regressor": reg.kind().name(),
            "level": ev.level,
            "rows": feasible.len(),
            "efficiency": reports[0],
            "temperature": reports[1],
            "mean_nll": (reports[0].nll + reports[1].nll) / 2.0,
        }),
    )?;

    Ok(json!({
        "command": "evaluate",
        "test_rows": test.len(),
        "mlp_accuracy": mlp_report.accuracy,
        "logistic_accuracy": logistic_report.accuracy,
        "efficiency_r2": reports[0].r2,
        "efficiency_picp": reports[0].picp,
        "temperature_r2": reports[1].r2,
        "temperature_picp": reports[1].picp,
    }))
}

/// Surrogate prediction and converter simulation of an optimized design.
#[derive(Debug, Clone, Serialize)]
pub struct DesignCheck {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub fitness: f64,
    pub design: DesignPoint,
    pub p_feasible: f64,
    pub p_infeasible: f64,
    pub predicted_efficiency: GaussianPrediction,
    pub predicted_temperature: GaussianPrediction,
    pub simulated: Simulated,
    /// `|simulated - predicted mean| <= 3 * std`, per target.
    pub efficiency_within_3_sigma: bool,
    pub temperature_within_3_sigma: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Simulated {
    pub efficiency: f64,
    pub temperature: f64,
    pub converged: bool,
    pub feasible: bool,
}

fn within(sim: f64, p: &GaussianPrediction, k: f64) -> bool {
    (sim - p.mean).abs() <= k * p.std
}

fn check_design(
    ctx: &Context,
    clf: &FeasibilityClassifier,
    reg: &SurrogateRegressor,
    run: &OptimizationResult,
) -> Result<DesignCheck> {
    let design = DesignPoint::from_slice(&run.best_x)?;
    let p_feasible = clf.predict_proba(&design)?;
    let [eff, temp] = reg.predict(&design)?;
    let sim = ctx.converter().evaluate(&design)?;
    let feasible = sim.converged && dataset::label_feasibility(sim.efficiency, sim.temperature)?;
    Ok(DesignCheck {
        algorithm: run.algorithm,
        seed: run.seed,
        fitness: run.best.fitness,
        design,
        p_feasible,
        p_infeasible: 1.0 - p_feasible,
        predicted_efficiency: eff,
        predicted_temperature: temp,
        simulated: Simulated {
            efficiency: sim.efficiency,
            temperature: sim.temperature,
            converged: sim.converged,
            feasible,
        },
        efficiency_within_3_sigma: within(sim.efficiency, &eff, 3.0),
        temperature_within_3_sigma: within(sim.temperature, &temp, 3.0),
    })
}

/// Runs the metaheuristic comparison on the surrogate fitness and checks
/// every best design against the converter model.
pub fn optimize(ctx: &Context, fitness_mode: Option<FitnessMode>) -> Result<Value> {
    let cfg = &ctx.config;
    let (clf, _, reg) = load_models(ctx)?;
    let mut fitness = cfg.fitness;
    if let Some(m) = fitness_mode {
        fitness.mode = m;
    }
    let objective = FitnessContext::new(&clf, &reg, cfg.dataset.bounds, fitness)?;
    let bounds = Bounds::from(&cfg.dataset.bounds);
    let report: ComparisonReport = run_comparison(&objective, &bounds, &cfg.optimize)?;
    ctx.prepare_out()?;

    write_json(&ctx.paths.file("comparison.json"), &report)?;
    let traces = ctx.paths.traces();
    fs::create_dir_all(&traces).map_err(|e| CliError::io(&traces, e))?;
    for run in &report.runs {
        write_text(
            &traces.join(format!("{}_seed{}.csv", run.algorithm.name(), run.seed)),
            &run.trace_csv(),
        )?;
    }

    let checks = report
        .runs
        .iter()
        .map(|r| check_design(ctx, &clf, &reg, r))
        .collect::<Result<Vec<_>>>()?;
    write_json(&ctx.paths.file("best_designs.json"), &checks)?;
    let best = checks
        .iter()
        .filter(|c| c.algorithm != Algorithm::Random)
        .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
        .ok_or_else(|| CliError::Config("no metaheuristic runs configured".into()))?;
    write_json(&ctx.paths.file("best_design.json"), best)?;

    let feasible_runs = checks.iter().filter(|c| c.simulated.feasible).count();
    Ok(json!({
        "command": "optimize",
        "runs": checks.len(),
        "simulated_feasible_runs": feasible_runs,
        "best": {
            "algorithm": best.algorithm,
            "seed": best.seed,
            "fitness": best.fitness,
            "simulated_efficiency": best.simulated.efficiency,
            "simulated_temperature": best.simulated.temperature,
        },
        "median_best_fitness": report
            .rows
            .iter()
            .map(|r| (r.algorithm.name().to_string(), json!(r.median_best_fitness)))
            .collect::<serde_json::Map<_, _>>(),
    }))
}

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) if x.abs() >= 1e4 || (x != 0.0 && x.abs() < 1e-3) => format!("{x:.4e}"),
        Some(x) => format!("{x:.4}"),
        None => match v {
            Value::Null => "-".into(),
            Value::String(s) => s.clone(),
            other => other.to_string(),
        },
    }
}

/// Renders every JSON artifact into a markdown summary.
pub fn report(ctx: &Context) -> Result<String> {
    let p = &ctx.paths;
    let summary: Value = read_json(&p.dataset_summary(), "generate")?;
    let cv: Value = read_json(&p.file("cv_report.json"), "train")?;
    let cls: Value = read_json(&p.file("classification_report.json"), "evaluate")?;
    let reg: Value = read_json(&p.file("regression_report.json"), "evaluate")?;
    let cmp: Value = read_json(&p.file("comparison.json"), "optimize")?;
    let best: Value = read_json(&p.file("best_design.json"), "optimize")?;

    let mut md = String::from("# Converter design optimization report\n\n## Dataset\n\n");
    md.push_str(&format!(
        "{} rows (seed {}), {} feasible, feasible fraction {}.\n\n",
        summary["rows"],
        summary["seed"],
        summary["feasible"],
        num(&summary["feasible_fraction"])
    ));

    md.push_str("## Feasibility classifier\n\n");
    md.push_str("| model | CV accuracy | CV BCE | test accuracy | test BCE | F1 | AUC-PR |\n");
    md.push_str("|---|---|---|---|---|---|---|\n");
    for m in ["mlp", "logistic"] {
        md.push_str(&format!(
            "| {m} | {} | {} | {} | {} | {} | {} |\n",
            num(&cv[m]["mean_accuracy"]),
            num(&cv[m]["mean_bce"]),
            num(&cls[m]["accuracy"]),
            num(&cls[m]["bce"]),
            num(&cls[m]["f1"]),
            num(&cls[m]["auc_pr"])
        ));
    }

    md.push_str(&format!(
        "\n## Regressor ({}, level {})\n\n",
        num(&reg["regressor"]),
        num(&reg["level"])
    ));
    md.push_str("| target | RMSE | MAE | R2 | PICP | MPIW | CRPS | NLL |\n|---|---|---|---|---|---|---|---|\n");
    for t in TARGET_NAMES {
        let r = &reg[t];
        md.push_str(&format!(
            "| {t} | {} | {} | {} | {} | {} | {} | {} |\n",
            num(&r["rmse"]),
            num(&r["mae"]),
            num(&r["r2"]),
            num(&r["picp"]),
            num(&r["mpiw"]),
            num(&r["crps"]),
            num(&r["nll"])
        ));
    }

    md.push_str("\n## Optimizer comparison\n\n");
    md.push_str(
        "| algorithm | runs | median best F | best F | median eff mu | median temp mu | median evaluations |\n",
    );
    md.push_str("|---|---|---|---|---|---|---|\n");
    let rows = cmp["rows"].as_array().cloned().unwrap_or_default();
    for r in rows
        .iter()
        .chain(std::iter::once(&cmp["baseline"]).filter(|b| !b.is_null()))
    {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            num(&r["algorithm"]),
            r["runs"],
            num(&r["median_best_fitness"]),
            num(&r["best_fitness"]),
            num(&r["median_eff_mu"]),
            num(&r["median_temp_mu"]),
            num(&r["median_evaluations"])
        ));
    }

    md.push_str(&format!(
        "\n## Best design ({} seed {}, F = {})\n\n| parameter | value |\n|---|---|\n",
        num(&best["algorithm"]),
        best["seed"],
        num(&best["fitness"])
    ));
    for k in PARAM_NAMES {
        md.push_str(&format!("| {k} | {} |\n", num(&best["design"][k])));
    }
    let sim = &best["simulated"];
    md.push_str(&format!(
        "\nPredicted efficiency {} +/- {}, simulated {}. Predicted temperature {} +/- {} degC, simulated {} degC. \
         P(infeasible) {}. Simulated feasible: {}.\n",
        num(&best["predicted_efficiency"]["mean"]),
        num(&best["predicted_efficiency"]["std"]),
        num(&sim["efficiency"]),
        num(&best["predicted_temperature"]["mean"]),
        num(&best["predicted_temperature"]["std"]),
        num(&sim["temperature"]),
        num(&best["p_infeasible"]),
        sim["feasible"]
    ));

    write_text(&p.file("report.md"), &md)?;
    Ok(md)
}

/// generate, train, evaluate, optimize and report in sequence.
pub fn pipeline(ctx: &Context, fitness_mode: Option<FitnessMode>) -> Result<Value> {
    let steps = [
        generate(ctx)?,
        train(ctx)?,
        evaluate(ctx)?,
        optimize(ctx, fitness_mode)?,
    ];
    report(ctx)?;
    Ok(json!({
        "command": "pipeline",
        "out": ctx.paths.out.display().to_string(),
        "steps": steps,
        "report": ctx.paths.file("report.md").display().to_string(),
    }))
}
