//! The four harness commands and their on-disk outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use crate::control::{write_control_csv, ControlFunction};
use crate::error::{Error, Result};
use crate::fem::space::TaylorHoodSpace;
use crate::functional::{eval_functional, FunctionalSpec, Variant};
use crate::harness::config::{ExperimentConfig, InitialControl};
use crate::harness::convergence::ConvergenceReport;
use crate::optimizer::{run_optimization, OptimizationHistory};
use crate::par::map_slice;
use crate::state::{estimate_infsup, solve_state, write_diagnostics, write_solution_csv, StateSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Optimize,
    Converge,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Optimize => "optimize",
            Command::Converge => "converge",
            Command::Sweep => "sweep",
        }
    }
}

/// Runs `command`, writes everything below `out` and returns the summary
/// that is also stored as `summary.json`.
pub fn run_command(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let started = Instant::now();
    let mut summary = match command {
        Command::Solve => cmd_solve(cfg, out)?,
        Command::Optimize => cmd_optimize(cfg, out)?,
        Command::Converge => cmd_converge(cfg, out)?,
        Command::Sweep => cmd_sweep(cfg, out)?,
    };
    summary["command"] = json!(command.name());
    summary["output_dir"] = json!(out);
    summary["seconds"] = json!(started.elapsed().as_secs_f64());
    write_json(&summary, &out.join("summary.json"))?;
    Ok(summary)
}

/// One finished optimization on one mesh level.
#[derive(Debug)]
pub struct LevelRun {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub initial: ControlFunction,
    pub history: OptimizationHistory,
    pub space: TaylorHoodSpace,
    pub spec: FunctionalSpec,
    pub seconds: f64,
}

impl LevelRun {
    fn summary(&self) -> Value {
        let r = self.history.final_record();
        json!({
            "n": self.n,
            "alpha": self.alpha,
            "beta": self.beta,
            "iterations": self.history.iterations(),
            "stop": self.history.stop,
            "monotone": self.history.is_monotone(),
            "initial_j": self.history.records[0].value.total,
            "final": r.value,
            "gradient_norm": r.gradient_norm,
            "seconds": self.seconds,
        })
    }
}

/// Optimizes on mesh level `level` from `initial` with weights `alpha`,
/// `beta` (the config's remaining settings apply).
pub fn optimize_level(
    cfg: &ExperimentConfig,
    level: usize,
    initial: &InitialControl,
    alpha: f64,
    beta: f64,
) -> Result<LevelRun> {
    let started = Instant::now();
    let grid = cfg.grid(level)?;
    let space = cfg.space(level)?;
    let data = cfg.data.build();
    let spec = cfg.spec(alpha, beta, &grid, &space)?;
    let q0 = initial.build(&grid, cfg.degree)?;
    let history = run_optimization(&q0, &data, &cfg.optimizer(spec.clone()), &space)?;
    log::info!(
        "n = {}: {} iterations, j = {:.10e} ({:?})",
        cfg.mesh_sizes[level],
        history.iterations(),
        history.final_record().value.total,
        history.stop
    );
    Ok(LevelRun {
        n: cfg.mesh_sizes[level],
        alpha,
        beta,
        initial: q0,
        history,
        space,
        spec,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Optimizes on every level with the given `alpha` and builds the report.
/// The tracking variant with `alpha = 0` has the known minimum 0; every
/// other case is extrapolated from the three finest levels.
pub fn convergence_study(cfg: &ExperimentConfig, alpha: f64) -> Result<(ConvergenceReport, Vec<LevelRun>)> {
    let levels: Vec<usize> = (0..cfg.mesh_sizes.len()).collect();
    let beta = cfg.functional.beta;
    let runs = map_slice(cfg.execution, &levels, |&l| optimize_level(cfg, l, &cfg.initial_control, alpha, beta))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<_> = runs
        .iter()
        .map(|r| (r.n, r.history.iterations(), r.history.final_record().value))
        .collect();
    let exact = (alpha == 0.0 && cfg.functional.variant == Variant::PerimeterTracking).then_some(0.0);
    let c = &cfg.converge;
    let report = ConvergenceReport::build(alpha, &rows, exact, c.assumed_order, c.min_ratio)?;
    Ok((report, runs))
}

fn cmd_solve(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let mut levels = Vec::new();
    for level in 0..cfg.mesh_sizes.len() {
        let n = cfg.mesh_sizes[level];
        let dir = level_dir(out, n)?;
        let grid = cfg.grid(level)?;
        let space = cfg.space(level)?;
        let q = cfg.initial_control.build(&grid, cfg.degree)?;
        let state = solve_state(&q, &cfg.data.build(), &space)?;
        let spec = cfg.spec(cfg.functional.alpha, cfg.functional.beta, &grid, &space)?;
        let value = eval_functional(&state, &spec, &space)?;
        let beta_h = estimate_infsup(&q, &space)?;
        write_control_csv(&q, &dir.join("control.csv"))?;
        write_state(cfg, &space, &state, &dir, "solution")?;
        write_diagnostics(&state, &dir.join("diagnostics.json"))?;
        space.mesh().export(&dir.join("mesh.txt"))?;
        let summary = json!({
            "n": n,
            "control_cells": grid.cells(),
            "functional": value,
            "infsup": beta_h,
            "relative_residual": state.diagnostics.relative_residual,
            "divergence_residual": state.divergence_residual,
        });
        write_json(&summary, &dir.join("functional.json"))?;
        std::fs::write(dir.join("plot.gp"), SOLVE_PLOT)?;
        levels.push(summary);
    }
    Ok(json!({ "initial_control": cfg.initial_control.name(), "levels": levels }))
}

fn cmd_optimize(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let levels: Vec<usize> = (0..cfg.mesh_sizes.len()).collect();
    let f = &cfg.functional;
    let runs = map_slice(cfg.execution, &levels, |&l| {
        optimize_level(cfg, l, &cfg.initial_control, f.alpha, f.beta)
    });
    let mut summaries = Vec::new();
    for run in runs {
        let run = run?;
        let dir = level_dir(out, run.n)?;
        write_run(cfg, &run, &dir)?;
        summaries.push(run.summary());
    }
    Ok(json!({ "initial_control": cfg.initial_control.name(), "levels": summaries }))
}

fn cmd_converge(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let mut studies = Vec::new();
    for &alpha in &cfg.converge.alphas {
        let dir = out.join(format!("alpha_{alpha}"));
        std::fs::create_dir_all(&dir)?;
        let (report, runs) = convergence_study(cfg, alpha)?;
        for run in &runs {
            write_run(cfg, run, &level_dir(&dir, run.n)?)?;
        }
        report.write_csv(&dir.join("convergence.csv"))?;
        write_json(&serde_json::to_value(&report)?, &dir.join("convergence.json"))?;
        std::fs::write(dir.join("plot.gp"), CONVERGE_PLOT)?;
        log::info!("alpha = {alpha}: fitted order {:?}", report.fitted_order);
        studies.push(json!({
            "alpha": alpha,
            "reference": report.reference,
            "fitted_order": report.fitted_order,
        }));
    }
    Ok(json!({ "studies": studies }))
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let level = cfg.mesh_sizes.len() - 1;
    let pairs: Vec<(f64, f64)> = cfg
        .sweep
        .alphas
        .iter()
        .flat_map(|&a| cfg.sweep.betas.iter().map(move |&b| (a, b)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Config("sweep needs at least one alpha and one beta".into()));
    }
    let runs = map_slice(cfg.execution, &pairs, |&(a, b)| optimize_level(cfg, level, &cfg.initial_control, a, b));
    let mut table = csv::Writer::from_path(out.join("sweep.csv"))?;
    table.write_record(["alpha", "beta", "iterations", "j", "j_energy", "j_reg", "j_vol", "area", "control"])?;
    let mut summaries = Vec::new();
    let mut plot = String::from(SWEEP_PLOT_HEAD);
    for (k, run) in runs.into_iter().enumerate() {
        let run = run?;
        let name = format!("alpha_{}_beta_{}", run.alpha, run.beta);
        write_run(cfg, &run, &level_dir(&out.join(&name), run.n)?)?;
        let r = run.history.final_record();
        let v = r.value;
        table.write_record([
            run.alpha.to_string(),
            run.beta.to_string(),
            run.history.iterations().to_string(),
            format!("{:.17e}", v.total),
            format!("{:.17e}", v.energy),
            format!("{:.17e}", v.regularization),
            format!("{:.17e}", v.volume),
            format!("{:.17e}", r.control.integral()),
            format!("{name}/n{}/control_final.csv", run.n),
        ])?;
        let sep = if k == 0 { "plot" } else { ", \\\n    " };
        plot.push_str(&format!(
            "{sep} '{name}/n{}/control_final.csv' using 1:2 with lines title 'alpha={} beta={}'",
            run.n, run.alpha, run.beta
        ));
        summaries.push(run.summary());
    }
    table.flush()?;
    plot.push('\n');
    std::fs::write(out.join("plot.gp"), plot)?;
    Ok(json!({ "n": cfg.mesh_sizes[level], "runs": summaries }))
}

fn write_run(cfg: &ExperimentConfig, run: &LevelRun, dir: &Path) -> Result<()> {
    run.history.write_csv(&dir.join("history.csv"))?;
    run.history.write_json(&dir.join("history.json"))?;
    write_control_csv(&run.initial, &dir.join("control_initial.csv"))?;
    write_control_csv(run.history.final_control(), &dir.join("control_final.csv"))?;
    let state = solve_state(run.history.final_control(), &cfg.data.build(), &run.space)?;
    write_state(cfg, &run.space, &state, dir, "solution_final")?;
    write_diagnostics(&state, &dir.join("diagnostics.json"))?;
    run.space.mesh().export(&dir.join("mesh.txt"))?;
    write_json(&run.summary(), &dir.join("summary.json"))?;
    std::fs::write(dir.join("plot.gp"), OPTIMIZE_PLOT)?;
    Ok(())
}

fn write_state(cfg: &ExperimentConfig, space: &TaylorHoodSpace, state: &StateSolution, dir: &Path, stem: &str) -> Result<()> {
    write_solution_csv(space, &state.field, None, &dir.join(format!("{stem}.csv")))?;
    if cfg.physical_export {
        write_solution_csv(space, &state.field, Some(&state.control), &dir.join(format!("{stem}_physical.csv")))?;
    }
    Ok(())
}

fn level_dir(out: &Path, n: usize) -> Result<PathBuf> {
    let dir = out.join(format!("n{n}"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json(value: &Value, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

const SOLVE_PLOT: &str = "\
set datafile separator ','
set terminal pngcairo size 900,450
set output 'solution.png'
set key autotitle columnhead
set title 'speed on the physical domain'
plot 'solution_physical.csv' using 1:2:(sqrt($3**2+$4**2)) with points pointtype 7 pointsize 0.4 palette notitle
";

const OPTIMIZE_PLOT: &str = "\
set datafile separator ','
set terminal pngcairo size 1100,450
set output 'optimize.png'
set key autotitle columnhead
set multiplot layout 1,2
set title 'functional'
set xlabel 'iteration'
set logscale y
plot 'history.csv' using 1:2 with linespoints title 'j', \\
     '' using 1:3 with lines title 'energy', \\
     '' using 1:4 with lines title 'regularization'
unset logscale y
set title 'control'
set xlabel 'x'
plot 'control_initial.csv' using 1:2 with lines title 'initial', \\
     'control_final.csv' using 1:2 with lines title 'final'
unset multiplot
";

const CONVERGE_PLOT: &str = "\
set datafile separator ','
set terminal pngcairo size 700,500
set output 'convergence.png'
set key autotitle columnhead
set logscale xy
set xlabel 'h'
set ylabel '|j_h - j|'
plot 'convergence.csv' using 2:8 with linespoints title 'error', \\
     x**2 * 100 with lines dashtype 2 title 'h^2 (shifted)'
";

const SWEEP_PLOT_HEAD: &str = "\
set datafile separator ','
set terminal pngcairo size 800,500
set output 'sweep.png'
set key autotitle columnhead
set xlabel 'x'
set ylabel 'q'
";
