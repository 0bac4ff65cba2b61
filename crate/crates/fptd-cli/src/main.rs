//! Command-line driver.
//!
//! Subcommands: `solve | mc | compare | check-cm | classify`, each driven by
//! a TOML config (see `config.rs`). A JSON summary is written even on
//! failure. Exit codes: 0 success, 1 numerical failure, 2 config error.

// `!(x > 0.0)` deliberately rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use config::{ConfigError, RunConfig};
use fptd_core::{
    classify, cm, csbp_scale, estimate_fptd_many, fptd_laplace, lattice_scale, levy_scale,
    q0_scale, scale_residual, series_scale, tilted_series_scale, volterra_scale, GammaShape, Model,
    ScaleMeasure, SeriesOptions, SimOptions, SolveStatus, Verdict, VolterraGrid,
};
use report::{status_str, ScaleRecord, SolveRow};

#[derive(Parser)]
#[command(
    name = "fptd",
    about = "First-passage transforms of time-changed Levy processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to the TOML run configuration.
    #[arg(long, global = true, default_value = "run.toml")]
    config: PathBuf,
    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the Monte Carlo seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress console output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Compute scale measures and the transform curve.
    Solve,
    /// Monte Carlo estimates of the transform.
    Mc,
    /// Solve and simulate on one grid, then z-score the differences.
    Compare,
    /// Complete-monotonicity checks on the transform curve and on 1/A.
    CheckCm,
    /// Report the sufficiency classification of gamma.
    Classify,
}

enum AppError {
    Config(String),
    Numerical(String),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e.0)
    }
}

impl From<fptd_core::Error> for AppError {
    fn from(e: fptd_core::Error) -> Self {
        AppError::Numerical(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_flag = cli.out.clone();

    let text = match fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            let dir = out_flag.unwrap_or_else(|| PathBuf::from("."));
            return finish_error(
                &dir,
                "summary.json",
                &format!("cannot read config {}: {e}", cli.config.display()),
                true,
                cli.quiet,
            );
        }
    };
    let cfg = match RunConfig::from_toml(&text) {
        Ok(c) => c,
        Err(e) => {
            let dir = out_flag.unwrap_or_else(|| PathBuf::from("."));
            return finish_error(&dir, "summary.json", &e.0, true, cli.quiet);
        }
    };
    let dir = out_flag.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let prefix = cfg.output.prefix.clone();
    let summary_name = format!("{prefix}_summary.json");

    let result = run(cli.command, &cfg, &dir, &prefix, cli.seed);
    match result {
        Ok(summary) => {
            if write_json(&dir, &summary_name, &summary).is_err() {
                eprintln!("error: cannot write summary");
                return ExitCode::from(1);
            }
            if !cli.quiet {
                println!("{}", serde_json::to_string_pretty(&summary).unwrap());
            }
            ExitCode::SUCCESS
        }
        Err(AppError::Config(msg)) => finish_error(&dir, &summary_name, &msg, true, cli.quiet),
        Err(AppError::Numerical(msg)) => finish_error(&dir, &summary_name, &msg, false, cli.quiet),
    }
}

fn finish_error(dir: &Path, name: &str, msg: &str, config: bool, quiet: bool) -> ExitCode {
    let summary = json!({
        "status": "error",
        "kind": if config { "config" } else { "numerical" },
        "error": msg,
    });
    let _ = write_json(dir, name, &summary);
    if !quiet {
        eprintln!("error: {msg}");
    }
    ExitCode::from(if config { 2 } else { 1 })
}

fn write_json(dir: &Path, name: &str, value: &Value) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join(name),
        serde_json::to_string_pretty(value).unwrap() + "\n",
    )
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), AppError> {
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(dir.join(name), text))
        .map_err(|e| AppError::Numerical(format!("cannot write {name}: {e}")))
}

fn run(
    command: Command,
    cfg: &RunConfig,
    dir: &Path,
    prefix: &str,
    seed_override: Option<u64>,
) -> Result<Value, AppError> {
    match command {
        Command::Solve => run_solve(cfg, dir, prefix),
        Command::Mc => run_mc(cfg, dir, prefix, seed_override),
        Command::Compare => run_compare(cfg, dir, prefix, seed_override),
        Command::CheckCm => run_check_cm(cfg),
        Command::Classify => run_classify(cfg),
    }
}

/// Build the scale measure for one `q` along the configured route.
fn build_scale(
    model: &Model,
    q: f64,
    method: &str,
    eval_points: &[f64],
    opts: &SeriesOptions,
    grid: Option<VolterraGrid>,
    k_max: usize,
) -> Result<ScaleMeasure, AppError> {
    if q == 0.0 {
        return Ok(q0_scale(model)?);
    }
    let default_grid = VolterraGrid {
        span: 5.0,
        step: 1e-3,
    };
    let grid = grid.unwrap_or(default_grid);
    let route = if method == "auto" {
        match model.gamma_shape() {
            GammaShape::DiracAtZero { .. } => "closed-levy",
            GammaShape::Lattice { .. } => "lattice",
            GammaShape::AbsolutelyContinuous => "volterra",
            GammaShape::General => "series",
        }
    } else {
        method
    };
    let scale = match route {
        "closed-levy" => levy_scale(model, q)?,
        "closed-csbp" => csbp_scale(model, q, &grid)?,
        "volterra" => volterra_scale(model, q, &grid)?,
        "lattice" => lattice_scale(model, q, k_max)?,
        "series" => series_scale(model, q, eval_points, opts)?,
        "tilted-series" => tilted_series_scale(model, q, eval_points, opts)?,
        other => return Err(AppError::Config(format!("unknown solve.method `{other}`"))),
    };
    Ok(scale)
}

fn run_solve(cfg: &RunConfig, dir: &Path, prefix: &str) -> Result<Value, AppError> {
    let task = cfg
        .solve
        .as_ref()
        .ok_or_else(|| AppError::Config("missing [solve] section".into()))?;
    let model = cfg.build_model()?;
    check_points_in_interval(&model, task.level, &task.x)?;

    let opts = SeriesOptions {
        tolerance: task.tolerance,
        k_max: task.k_max,
    };
    let grid = task.grid.map(|g| VolterraGrid {
        span: g.span,
        step: g.step,
    });
    let mut eval_points: Vec<f64> = task.x.clone();
    eval_points.push(task.level);

    let mut rows: Vec<SolveRow> = Vec::new();
    let mut per_q = Vec::new();
    for (i, &q) in task.q.iter().enumerate() {
        let scale = build_scale(
            &model,
            q,
            &task.method,
            &eval_points,
            &opts,
            grid,
            task.k_max,
        )?;
        let diverged = scale.status == SolveStatus::Diverged;
        for &x in &task.x {
            let value = if diverged {
                f64::NAN
            } else {
                fptd_laplace(&scale, x, task.level)?
            };
            rows.push(SolveRow {
                q,
                x,
                l: task.level,
                value,
                k_truncation: scale.k_truncation,
                tail_bound: scale.tail_bound,
                status: status_str(scale.status).into(),
            });
        }
        let residual = if diverged || q == 0.0 {
            None
        } else {
            let thetas: Vec<f64> = (0..8).map(|k| task.level + 5.0 * k as f64 / 7.0).collect();
            Some(scale_residual(&model, q, &scale, &thetas)?)
        };
        let class = if q > 0.0 {
            Some(classify(&model, q)?)
        } else {
            None
        };
        write_json(
            dir,
            &format!("{prefix}_scale_q{i}.json"),
            &serde_json::to_value(ScaleRecord::new(&scale)).unwrap(),
        )
        .map_err(|e| AppError::Numerical(format!("cannot write scale record: {e}")))?;
        per_q.push(json!({
            "q": q,
            "status": status_str(scale.status),
            "k_truncation": scale.k_truncation,
            "tail_bound": scale.tail_bound,
            "step_halving_error": scale.step_halving_error,
            "residual": residual,
            "classification": class.map(classification_json),
            "scale_file": format!("{prefix}_scale_q{i}.json"),
        }));
    }
    write_text(
        dir,
        &format!("{prefix}_solve.csv"),
        &report::solve_csv(&rows),
    )?;
    Ok(json!({
        "status": "ok",
        "command": "solve",
        "method": task.method,
        "level": task.level,
        "per_q": per_q,
        "csv": format!("{prefix}_solve.csv"),
    }))
}

fn classification_json(c: fptd_core::Classification) -> Value {
    let v = |v: Verdict| match v {
        Verdict::Yes => "yes",
        Verdict::No => "no",
        Verdict::Unknown => "unknown",
    };
    json!({
        "alpha": c.alpha,
        "gamma_atom_at_zero": c.gamma_atom_at_zero,
        "mq_in_mi": v(c.mq_in_mi),
        "nu_atom_at_base": v(c.nu_atom_at_base),
        "heuristic": c.heuristic,
    })
}

fn check_points_in_interval(model: &Model, level: f64, xs: &[f64]) -> Result<(), AppError> {
    if !model.interval.contains(level) {
        return Err(AppError::Config(format!(
            "level {level} lies outside the interval"
        )));
    }
    for &x in xs {
        if !model.interval.contains(x) {
            return Err(AppError::Config(format!(
                "x = {x} lies outside the interval"
            )));
        }
    }
    Ok(())
}

fn run_mc(
    cfg: &RunConfig,
    dir: &Path,
    prefix: &str,
    seed_override: Option<u64>,
) -> Result<Value, AppError> {
    let task = cfg
        .mc
        .as_ref()
        .ok_or_else(|| AppError::Config("missing [mc] section".into()))?;
    let model = cfg.build_model()?;
    let seed = seed_override.unwrap_or(task.seed);
    let opts = SimOptions {
        dt: task.dt,
        internal_budget: task.budget,
        jump_cutoff: task.jump_cutoff,
    };
    if !model.interval.interior_contains(task.level) {
        return Err(AppError::Config(format!(
            "mc.level {} must lie strictly inside the interval",
            task.level
        )));
    }
    let mut rows = Vec::new();
    for &x in &task.x {
        if !model.interval.contains(x) {
            return Err(AppError::Config(format!(
                "mc.x = {x} lies outside the interval"
            )));
        }
        let estimates = estimate_fptd_many(&model, &task.q, x, task.level, task.n, &opts, seed)?;
        rows.extend(estimates);
    }
    write_text(dir, &format!("{prefix}_mc.csv"), &report::mc_csv(&rows))?;
    if task.trace_paths > 0 {
        let mut dump = String::from("# path internal position external\n");
        for stream in 0..task.trace_paths.min(task.n) as u64 {
            let (_, trace) = fptd_core::trace_path(
                &model,
                task.x[0],
                task.level,
                &opts,
                seed,
                stream,
                task.trace_every,
            )?;
            for (u, pos, ext) in trace {
                dump.push_str(&format!(
                    "{stream} {} {} {}\n",
                    report::fmt_f(u),
                    report::fmt_f(pos),
                    report::fmt_f(ext)
                ));
            }
        }
        write_text(dir, &format!("{prefix}_trace.txt"), &dump)?;
    }
    let n_censored: usize = rows.iter().map(|r| r.n_censored).sum::<usize>() / task.q.len().max(1);
    let mut warnings = Vec::new();
    if n_censored > 0 {
        warnings.push(format!(
            "{n_censored} paths were censored at the internal budget; the reported censor_bias_bound bounds the mass they could carry"
        ));
    }
    Ok(json!({
        "status": "ok",
        "command": "mc",
        "seed": seed,
        "dt": task.dt,
        "n": task.n,
        "rows": rows.iter().map(|r| json!({
            "q": r.q, "x": r.x, "l": r.level,
            "mean": r.mean, "std_error": r.std_error,
            "n_passed": r.n_passed, "n_killed": r.n_killed, "n_censored": r.n_censored,
            "censor_bias_bound": r.censor_bias_bound,
        })).collect::<Vec<_>>(),
        "warnings": warnings,
        "csv": format!("{prefix}_mc.csv"),
    }))
}

fn run_compare(
    cfg: &RunConfig,
    dir: &Path,
    prefix: &str,
    seed_override: Option<u64>,
) -> Result<Value, AppError> {
    let mc_task = cfg
        .mc
        .as_ref()
        .ok_or_else(|| AppError::Config("compare needs an [mc] section".into()))?;
    let solve_task = cfg
        .solve
        .as_ref()
        .ok_or_else(|| AppError::Config("compare needs a [solve] section".into()))?;
    let thresholds = cfg.compare.unwrap_or(config::CompareTask {
        z_threshold: 3.0,
        pass_fraction: 0.95,
    });
    let model = cfg.build_model()?;
    check_points_in_interval(&model, mc_task.level, &mc_task.x)?;

    // Solver values on the MC grid, using the solve section's route settings.
    let opts = SeriesOptions {
        tolerance: solve_task.tolerance,
        k_max: solve_task.k_max,
    };
    let grid = solve_task.grid.map(|g| VolterraGrid {
        span: g.span,
        step: g.step,
    });
    let mut eval_points = mc_task.x.clone();
    eval_points.push(mc_task.level);
    let mut solver_rows = Vec::new();
    for &q in &mc_task.q {
        let scale = build_scale(
            &model,
            q,
            &solve_task.method,
            &eval_points,
            &opts,
            grid,
            solve_task.k_max,
        )?;
        for &x in &mc_task.x {
            let value = fptd_laplace(&scale, x, mc_task.level)?;
            solver_rows.push(SolveRow {
                q,
                x,
                l: mc_task.level,
                value,
                k_truncation: scale.k_truncation,
                tail_bound: scale.tail_bound,
                status: status_str(scale.status).into(),
            });
        }
    }

    let seed = seed_override.unwrap_or(mc_task.seed);
    let sim = SimOptions {
        dt: mc_task.dt,
        internal_budget: mc_task.budget,
        jump_cutoff: mc_task.jump_cutoff,
    };
    let mut mc_rows = Vec::new();
    for &x in &mc_task.x {
        mc_rows.extend(estimate_fptd_many(
            &model,
            &mc_task.q,
            x,
            mc_task.level,
            mc_task.n,
            &sim,
            seed,
        )?);
    }

    let report = report::compare_rows(
        &solver_rows,
        &mc_rows,
        thresholds.z_threshold,
        thresholds.pass_fraction,
    )
    .map_err(AppError::Numerical)?;
    write_text(
        dir,
        &format!("{prefix}_compare.csv"),
        &report::compare_csv(&report),
    )?;
    Ok(json!({
        "status": "ok",
        "command": "compare",
        "seed": seed,
        "verdict": report.verdict,
        "fraction_within": report.fraction_within,
        "z_threshold": report.z_threshold,
        "failing_rows": report.failing_rows,
        "csv": format!("{prefix}_compare.csv"),
    }))
}

fn run_check_cm(cfg: &RunConfig) -> Result<Value, AppError> {
    let task = cfg
        .check_cm
        .as_ref()
        .ok_or_else(|| AppError::Config("missing [check_cm] section".into()))?;
    let model = cfg.build_model()?;
    if !model.interval.contains(task.level) {
        return Err(AppError::Config(format!(
            "check_cm.level {} lies outside the interval",
            task.level
        )));
    }

    // Transform-curve side: sample x -> fptd(level + x, level) on (0, span].
    let step = task.span / task.points as f64;
    let xs: Vec<f64> = (1..=task.points)
        .map(|i| task.level + step * i as f64)
        .collect();
    let mut eval_points = xs.clone();
    eval_points.push(task.level);
    let opts = SeriesOptions::default();
    let grid = task.grid.map(|g| VolterraGrid {
        span: g.span,
        step: g.step,
    });
    let method = task.solve_method.as_deref().unwrap_or("auto");
    let scale = build_scale(&model, task.q, method, &eval_points, &opts, grid, 200)?;
    if scale.status == SolveStatus::Diverged {
        return Err(AppError::Numerical(
            "scale measure diverged; no transform curve to check".into(),
        ));
    }
    let curve: Vec<f64> = xs
        .iter()
        .map(|&x| fptd_laplace(&scale, x, task.level))
        .collect::<Result<_, _>>()?;
    let curve_report = cm::finite_difference_check(&curve, task.max_order)?;

    // 1/A side on the same abscissas.
    let one_over_a: Vec<f64> = match task.a_source.as_str() {
        "gamma-hat" => xs.iter().map(|&x| model.clock_rate(x)).collect(),
        "one-plus-sin-squared" => xs
            .iter()
            .map(|&x| 1.0 / (1.0 + x.sin() * x.sin()))
            .collect(),
        other => return Err(AppError::Config(format!("unknown a_source `{other}`"))),
    };
    let a_report = cm::finite_difference_check(&one_over_a, task.max_order)?;

    let side = |r: &cm::CmReport| {
        json!({
            "pass": r.pass,
            "max_order": r.max_order,
            "worst_margin": r.worst_margin,
            "violation": r.violation.as_ref().map(|v| json!({
                "order": v.order, "index": v.index, "value": v.value, "scale": v.scale,
            })),
        })
    };
    Ok(json!({
        "status": "ok",
        "command": "check-cm",
        "q": task.q,
        "points": task.points,
        "fptd_curve": side(&curve_report),
        "one_over_a": side(&a_report),
        "both_sides_pass": curve_report.pass && a_report.pass,
    }))
}

fn run_classify(cfg: &RunConfig) -> Result<Value, AppError> {
    let task = cfg
        .classify
        .ok_or_else(|| AppError::Config("missing [classify] section".into()))?;
    let model = cfg.build_model()?;
    let c = classify(&model, task.q)?;
    let boundary = if model.interval.lower.is_some() {
        // a heuristic probe of an analytic condition; flagged as such
        Some(match model.boundary_membership()? {
            fptd_core::BoundaryMembership::Included => "included",
            fptd_core::BoundaryMembership::Excluded => "excluded",
            fptd_core::BoundaryMembership::Inconclusive => "inconclusive",
        })
    } else {
        None
    };
    Ok(json!({
        "status": "ok",
        "command": "classify",
        "q": task.q,
        "classification": classification_json(c),
        "explosion_safe": fptd_core::explosion_safe(&model.psi, model.killing),
        "base_point": model.base_point().map_err(AppError::from)?,
        "boundary_membership": boundary,
        "boundary_membership_is_heuristic": boundary.map(|_| true),
    }))
}
