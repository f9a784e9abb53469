use std::fs;
use std::io::Write;
use std::path::Path;

use recruit_core::asymptotics::limit_prob_density;
use recruit_core::distributions::NegBinParams;
use recruit_core::model::{fit_mle, FitOptions, ModelFit, TrialData};
use recruit_core::predict::{
    interval_from_pool, pool_centres, predictive_count_law, predictive_time_law, Objective, PooledPosterior,
    PredictionInterval, PredictionRequest,
};
use recruit_core::simulate::{
    coverage_study, figure_preset, kernel_density, quantile_probability_study, table_preset, CoverageReport,
    FigureCurve, FigureId, OpeningSchedule, SimConfig, TableId, FIGURE_REPLICATIONS, TABLE_REPLICATIONS,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cli::{CurvesArgs, FitArgs, ObjectiveKind, PredictArgs, QqArgs, RunArgs, SimulateArgs};
use crate::error::{CliError, Result};
use crate::input::{events_to_trial, parse_centre_csv, parse_event_csv};
use crate::manifest::{sidecar_path, RunManifest};

/// Seed used by presets when none is given.
pub const DEFAULT_SEED: u64 = 2024;
/// Fewest eligible centres for a Q-Q diagnostic.
pub const QQ_MIN_CENTRES: usize = 5;

fn write_json(out: &mut dyn Write, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    out.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e))
}

fn fit_json(fit: &ModelFit) -> Value {
    json!({
        "alpha_hat": fit.alpha_hat,
        "beta_hat": fit.beta_hat,
        "log_lik": fit.log_lik,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "degenerate": fit.degenerate,
    })
}

fn degenerate_error(fit: &ModelFit) -> CliError {
    CliError::Core(recruit_core::Error::DegenerateLikelihood { log_alpha: fit.alpha_hat.ln() })
}

/// Fit report. A degenerate fit is still reported, then signalled as an error.
pub fn fit(args: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = RunManifest::start("fit", args, None)?;
    let data = parse_centre_csv(&args.data.input, args.data.format, args.data.census)?;
    let fit = fit_mle(&data, &FitOptions { cap_degenerate: true, ..FitOptions::default() })?;
    let mut report = fit_json(&fit);
    let observed = data.total_count() as f64 / data.total_exposure();
    let ratio = fit.alpha_hat / fit.beta_hat;
    report["num_centres"] = json!(data.num_centres());
    report["total_count"] = json!(data.total_count());
    report["total_exposure"] = json!(data.total_exposure());
    report["ratio_check"] = json!({
        "alpha_over_beta": ratio,
        "observed_rate": observed,
        "equal_exposures": data.common_exposure().is_some(),
        "relative_difference": (ratio - observed).abs() / observed,
    });
    report["manifest"] = serde_json::to_value(manifest.finish())?;
    write_json(out, &report)?;
    if fit.degenerate {
        return Err(degenerate_error(&fit));
    }
    Ok(())
}

fn interval_json(iv: &PredictionInterval) -> Value {
    json!({ "lower": iv.lower, "upper": iv.upper, "probs_used": [iv.probs_used.0, iv.probs_used.1] })
}

fn objective_from(kind: ObjectiveKind, horizon: f64) -> Result<Objective> {
    match kind {
        ObjectiveKind::Count if horizon > 0.0 && horizon.is_finite() => Ok(Objective::Count { t_plus: horizon }),
        ObjectiveKind::Time if horizon >= 1.0 && horizon.fract() == 0.0 && horizon < u64::MAX as f64 => {
            Ok(Objective::Time { n_plus: horizon as u64 })
        }
        ObjectiveKind::Count => Err(CliError::Config(format!("count horizon must be finite and > 0, got {horizon}"))),
        ObjectiveKind::Time => Err(CliError::Config(format!("time horizon must be a whole number >= 1, got {horizon}"))),
    }
}

fn law_json(pool: &PooledPosterior, objective: Objective) -> Result<Value> {
    Ok(match objective {
        Objective::Count { t_plus } => {
            let law = predictive_count_law(pool, t_plus)?;
            json!({ "kind": "negative_binomial", "size": law.size, "prob": law.prob })
        }
        Objective::Time { n_plus } => {
            let law = predictive_time_law(pool, n_plus)?;
            json!({ "kind": "pearson6", "shape_num": law.shape_num, "shape_den": law.shape_den, "scale": law.scale })
        }
    })
}

pub fn predict(args: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = RunManifest::start("predict", args, None)?;
    let objective = objective_from(args.objective, args.horizon)?;
    let data = parse_centre_csv(&args.data.input, args.data.format, args.data.census)?;
    let fit = fit_mle(&data, &FitOptions { cap_degenerate: args.allow_degenerate, ..FitOptions::default() })?;
    let pool = pool_centres(&data, &fit)?;
    let request = |adjusted| PredictionRequest { objective, level: args.level, adjusted };
    let raw = interval_from_pool(&pool, &request(false)).map_err(config_if_domain)?;
    let adjusted = if args.adjusted { Some(interval_from_pool(&pool, &request(true))?) } else { None };
    let report = json!({
        "objective": args.objective,
        "horizon": args.horizon,
        "level": args.level,
        "fit": fit_json(&fit),
        "pooled": {
            "n_star": pool.n_star,
            "t_star": pool.t_star,
            "shape": pool.shape,
            "rate": pool.rate,
        },
        "law": law_json(&pool, objective)?,
        "unadjusted": interval_json(&raw),
        "adjusted": adjusted.as_ref().map(interval_json),
        "manifest": manifest.finish(),
    });
    write_json(out, &report)
}

fn config_if_domain(e: recruit_core::Error) -> CliError {
    match e {
        recruit_core::Error::Domain(msg) => CliError::Config(msg),
        e => CliError::Core(e),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Writes a CSV artifact and its manifest.
fn emit(out: &mut dyn Write, run: &RunArgs, csv: &[u8], manifest: &RunManifest) -> Result<()> {
    match &run.output {
        Some(path) => {
            fs::write(path, csv).map_err(|e| CliError::io(path, e))?;
            manifest.write(&run.manifest.clone().unwrap_or_else(|| sidecar_path(path)))
        }
        None => {
            out.write_all(csv).map_err(|e| CliError::io("<stdout>", e))?;
            match &run.manifest {
                Some(path) => manifest.write(path),
                None => Ok(()),
            }
        }
    }
}

fn read_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config: SimConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(config)
}

#[derive(Serialize)]
struct SimulateEcho<'a> {
    table: Option<&'a str>,
    config_file: Option<&'a Path>,
    seed: u64,
    replications: u64,
    rows: &'a [SimConfig],
}

/// Coverage table as CSV, one row per configuration.
pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let (rows, diagnostics) = match (&args.table, &args.config) {
        (Some(id), _) => {
            let id: TableId = id.parse()?;
            let preset = table_preset(
                id,
                args.seed.unwrap_or(DEFAULT_SEED),
                args.reps.unwrap_or(TABLE_REPLICATIONS),
            );
            (preset.rows.into_iter().map(|r| r.config).collect::<Vec<_>>(), preset.diagnostics)
        }
        (None, Some(path)) => {
            let mut config = read_config(path)?;
            config.seed = args.seed.unwrap_or(config.seed);
            config.replications = args.reps.unwrap_or(config.replications);
            let diagnostics = config.schedule != OpeningSchedule::Simultaneous;
            (vec![config], diagnostics)
        }
        (None, None) => return Err(CliError::Config("either --table or --config is required".into())),
    };
    for row in &rows {
        row.validate()?;
    }
    let echo = SimulateEcho {
        table: args.table.as_deref(),
        config_file: args.config.as_deref(),
        seed: rows[0].seed,
        replications: rows[0].replications,
        rows: &rows,
    };
    let manifest = RunManifest::start("simulate", &echo, Some(rows[0].seed))?;
    let reports: Vec<CoverageReport> =
        with_threads(args.run.threads, || rows.iter().map(coverage_study).collect::<recruit_core::Result<_>>())??;

    let count = matches!(rows[0].objective, Objective::Count { .. });
    let mut header = vec!["t"];
    if count {
        header.push("t_plus");
    }
    if diagnostics {
        header.extend(["t_star", "t_star_ratio", "n_star_ratio"]);
    }
    header.extend(["coverage_unadjusted", "width_unadjusted", "coverage_adjusted", "width_adjusted"]);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for (config, r) in rows.iter().zip(&reports) {
        let mut rec = vec![config.census_time];
        if let Objective::Count { t_plus } = config.objective {
            rec.push(t_plus);
        }
        if diagnostics {
            rec.extend([r.mean_t_star, r.t_star_ratio, r.n_star_ratio]);
        }
        rec.extend([
            r.mean_coverage_unadjusted,
            r.mean_width_unadjusted,
            r.mean_coverage_adjusted,
            r.mean_width_adjusted,
        ]);
        w.write_record(rec.iter().map(|x| x.to_string()))?;
    }
    let csv = w.into_inner().map_err(|e| CliError::io("<csv buffer>", e.into_error()))?;

    let mut manifest = manifest.finish();
    manifest.config["reports"] = json!(reports
        .iter()
        .map(|r| json!({ "replications": r.replications, "degenerate_fits": r.degenerate_fits }))
        .collect::<Vec<_>>());
    emit(out, &args.run, &csv, &manifest)
}

#[derive(Serialize)]
struct CurvesEcho<'a> {
    figure: Option<&'a str>,
    config_file: Option<&'a Path>,
    seed: u64,
    replications: u64,
    grid: usize,
    curves: Vec<Value>,
}

/// Limit and simulated densities of the quantile probability as CSV.
pub fn curves(args: &CurvesArgs, out: &mut dyn Write) -> Result<()> {
    if args.grid == 0 {
        return Err(CliError::Config("--grid must be at least 1".into()));
    }
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    let reps = args.reps.unwrap_or(FIGURE_REPLICATIONS);
    let (curves, empirical) = match (&args.figure, &args.config) {
        (Some(id), _) => {
            let id: FigureId = id.parse()?;
            let preset = figure_preset(id, seed, reps)?;
            (preset.curves, preset.empirical)
        }
        (None, Some(path)) => {
            let mut config = read_config(path)?;
            config.seed = args.seed.unwrap_or(config.seed);
            config.replications = args.reps.unwrap_or(config.replications);
            (vec![FigureCurve::new("custom", "custom".into(), config, args.p).map_err(config_if_domain)?], true)
        }
        (None, None) => return Err(CliError::Config("either --figure or --config is required".into())),
    };
    for c in &curves {
        c.config.validate()?;
    }
    let grid: Vec<f64> = (1..=args.grid).map(|i| i as f64 / (args.grid + 1) as f64).collect();
    let echo = CurvesEcho {
        figure: args.figure.as_deref(),
        config_file: args.config.as_deref(),
        seed: curves[0].config.seed,
        replications: curves[0].config.replications,
        grid: args.grid,
        curves: curves
            .iter()
            .map(|c| json!({ "panel": c.panel, "label": c.label, "p": c.p, "config": c.config, "limit_law": c.law }))
            .collect(),
    };
    let manifest = RunManifest::start("curves", &echo, Some(seed))?;

    let simulated: Vec<Option<(Vec<f64>, u64)>> = with_threads(args.run.threads, || {
        curves
            .iter()
            .map(|c| {
                if !empirical {
                    return Ok(None);
                }
                let sample = quantile_probability_study(&c.config, c.p)?;
                Ok(Some((kernel_density(&sample.values, &grid)?, sample.degenerate_fits)))
            })
            .collect::<recruit_core::Result<_>>()
    })??;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["panel", "curve", "w", "theoretical", "empirical"])?;
    for (c, sim) in curves.iter().zip(&simulated) {
        for (i, &x) in grid.iter().enumerate() {
            let theory = limit_prob_density(x, &c.law)?;
            let emp = sim.as_ref().map_or(String::new(), |s| s.0[i].to_string());
            w.write_record([c.panel.clone(), c.label.clone(), x.to_string(), theory.to_string(), emp])?;
        }
    }
    let csv = w.into_inner().map_err(|e| CliError::io("<csv buffer>", e.into_error()))?;
    let mut manifest = manifest.finish();
    manifest.config["degenerate_fits"] = json!(simulated.iter().map(|s| s.as_ref().map(|s| s.1)).collect::<Vec<_>>());
    emit(out, &args.run, &csv, &manifest)
}

/// Sorted initial-window counts against fitted negative-binomial quantiles.
pub fn qq_pairs(centres: &[crate::input::CentreEvents], data: &TrialData, window: f64) -> Result<Vec<(f64, f64)>> {
    if !(window > 0.0) || !window.is_finite() {
        return Err(CliError::Config(format!("window must be finite and > 0, got {window}")));
    }
    let census = data.census_time();
    let mut counts: Vec<u64> = centres
        .iter()
        .filter(|c| census - c.open_time >= window)
        .map(|c| c.event_times.iter().filter(|&&e| e <= c.open_time + window).count() as u64)
        .collect();
    let m = counts.len();
    if m < QQ_MIN_CENTRES {
        return Err(CliError::TooFewCentres { found: m, needed: QQ_MIN_CENTRES, window });
    }
    let fit = fit_mle(data, &FitOptions::default())?;
    let law = NegBinParams::new(fit.alpha_hat, window / (fit.beta_hat + window))?;
    counts.sort_unstable();
    counts
        .iter()
        .enumerate()
        .map(|(i, &n)| Ok((law.quantile((i as f64 + 0.5) / m as f64)? as f64, n as f64)))
        .collect()
}

pub fn diagnose_qq(args: &QqArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = RunManifest::start("diagnose qq", args, None)?;
    if !(args.window > 0.0) || !args.window.is_finite() {
        return Err(CliError::Config(format!("window must be finite and > 0, got {}", args.window)));
    }
    let centres = parse_event_csv(&args.input, args.census)?;
    let data = events_to_trial(&centres, args.census)?;
    let pairs = qq_pairs(&centres, &data, args.window)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["theoretical", "empirical"])?;
    for (q, n) in pairs {
        w.write_record([q.to_string(), n.to_string()])?;
    }
    let csv = w.into_inner().map_err(|e| CliError::io("<csv buffer>", e.into_error()))?;
    let run = RunArgs { threads: None, output: args.output.clone(), manifest: args.manifest.clone() };
    emit(out, &run, &csv, &manifest.finish())
}
