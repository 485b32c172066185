//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --release --test acceptance -- 2 7`.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stokeshape::adjoint::solve_adjoint;
use stokeshape::control::{
    check_admissible, interpolate_control, AdmissibilityParams, AnalyticControl, ControlGrid, Degree, Profile,
};
use stokeshape::data::ProblemData;
use stokeshape::error::Result;
use stokeshape::fem::TaylorHoodSpace;
use stokeshape::functional::{
    eval_directional_derivative, eval_functional, eval_gradient_density, FunctionalSpec, GradientOptions,
    GradientRoute, GradientToggle, Variant,
};
use stokeshape::geometry::{
    eigen_lower_bound_with_floor, map_first_variation, map_forward, map_quantities, map_second_variation, Mat2,
};
use stokeshape::harness::{convergence_study, optimize_level, ExperimentConfig, InitialControl, LevelRun};
use stokeshape::optimizer::OptimizationHistory;
use stokeshape::sensitivity::solve_sensitivity;
use stokeshape::state::{divergence_record, estimate_infsup, solve_state, DIVERGENCE_TOLERANCE};

/// Outcome of one criterion.
struct Verdict {
    pass: bool,
    detail: String,
}

/// Optimizer histories gathered for the monotonicity check.
#[derive(Default)]
struct Runs {
    histories: Vec<(String, bool)>,
}

impl Runs {
    fn record(&mut self, label: String, h: &OptimizationHistory) {
        self.histories.push((label, h.is_monotone()));
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn mat_rel(a: &Mat2, b: &Mat2) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale < 1e-12 {
        (*a - *b).norm()
    } else {
        (*a - *b).norm() / scale
    }
}

fn manufactured_solution(_: &mut Runs) -> Result<Verdict> {
    let sizes = [8, 16, 32, 64];
    let mut pass = true;
    let mut parts = Vec::new();
    for control in [AnalyticControl::flat(), AnalyticControl::parabolic()] {
        let (ou, op) = common::mms_orders(&control, Degree::Linear, &sizes);
        pass &= (ou - 2.0).abs() <= 0.2 && (op - 2.0).abs() <= 0.2;
        parts.push(format!("{}: H1 {ou:.3}, L2(p) {op:.3}", control.name()));
    }
    Ok(Verdict {
        pass,
        detail: parts.join("; "),
    })
}

fn gradient_consistency(_: &mut Runs) -> Result<Verdict> {
    let n = 32;
    let space = TaylorHoodSpace::with_defaults(n)?;
    let grid = ControlGrid::uniform(n)?;
    let data = ProblemData::default();
    let q = AnalyticControl::parabolic().interpolate(&grid, Degree::Quartic);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let directions: Vec<_> = (0..5)
        .map(|_| {
            let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            interpolate_control(
                move |x| 0.1 * (1..=4).map(|k| a[k - 1] * (k as f64 * PI * x).sin()).sum::<f64>(),
                &grid,
                Degree::Quartic,
            )
        })
        .collect();
    let state = solve_state(&q, &data, &space)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (alpha, beta, v_bar) in [(0.0, 0.0, 0.0), (0.1, 10.0, 0.1)] {
        let spec = FunctionalSpec::energy(Variant::PerimeterEnergy, alpha, beta, v_bar);
        let adjoint = solve_adjoint(&q, &state, &spec, &space)?;
        let options = GradientOptions {
            toggle: GradientToggle::GradientCorrected,
            route: GradientRoute::Hadamard,
        };
        let density = eval_gradient_density(&state, &adjoint, &spec, &data, &space, options)?;
        let j = |t: f64, dq| -> Result<f64> {
            let s = solve_state(&q.axpy(t, dq)?, &data, &space)?;
            Ok(eval_functional(&s, &spec, &space)?.total)
        };
        for dq in &directions {
            let hadamard = density.pair(dq);
            let sens = solve_sensitivity(&q, dq, &state, &data, &space)?;
            let volumetric = eval_directional_derivative(&state, &sens, &spec, &space)?;
            let fd = (j(h, dq)? - j(-h, dq)?) / (2.0 * h);
            worst = worst.max(rel(hadamard, fd)).max(rel(volumetric, fd)).max(rel(hadamard, volumetric));
        }
    }
    Ok(Verdict {
        pass: worst <= 1e-3,
        detail: format!("worst pairwise relative gap {worst:.2e} over 10 derivatives (limit 1e-3)"),
    })
}

fn taylor_remainders(_: &mut Runs) -> Result<Verdict> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, data) in [("constant data", ProblemData::brinkman(1.0)), ("varying data", common::varying_data())] {
        let (a, b) = common::taylor_slopes(&data);
        pass &= (a - 2.0).abs() <= 0.1 && (b - 3.0).abs() <= 0.2;
        parts.push(format!("{name}: {a:.3}, {b:.3}"));
    }
    Ok(Verdict {
        pass,
        detail: parts.join("; "),
    })
}

fn tracking_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.mesh_sizes = vec![8, 16, 32, 64];
    cfg.initial_control = InitialControl::Flat;
    cfg.functional.variant = Variant::PerimeterTracking;
    cfg.optimizer.max_iters = 1000;
    cfg
}

fn discretization_order(runs: &mut Runs) -> Result<Verdict> {
    let cfg = tracking_config();
    let mut pass = true;
    let mut parts = Vec::new();
    for (alpha, tol) in [(0.0, 0.4), (0.01, 0.5), (0.1, 0.5)] {
        let (report, level_runs) = convergence_study(&cfg, alpha)?;
        for r in &level_runs {
            runs.record(format!("tracking alpha={alpha} n={}", r.n), &r.history);
        }
        let order = report.fitted_order.unwrap_or(f64::NAN);
        pass &= (order - 2.0).abs() <= tol;
        let j: Vec<String> = report.rows.iter().map(|r| format!("{:.3e}", r.value.total)).collect();
        parts.push(format!("alpha={alpha}: order {order:.2} (j_h {})", j.join(" ")));
    }
    Ok(Verdict {
        pass,
        detail: parts.join("; "),
    })
}

fn initialization_independence(runs: &mut Runs) -> Result<Verdict> {
    let mut cfg = ExperimentConfig::default();
    cfg.mesh_sizes = vec![32];
    let starts = [InitialControl::Parabolic, InitialControl::Sinusoidal, InitialControl::Flat];
    let (alpha, beta) = (cfg.functional.alpha, cfg.functional.beta);
    let results: Vec<LevelRun> = starts
        .iter()
        .map(|s| optimize_level(&cfg, 0, s, alpha, beta))
        .collect::<Result<_>>()?;
    let mut gap: f64 = 0.0;
    for i in 0..results.len() {
        for k in i + 1..results.len() {
            let d = results[i].history.final_control().axpy(-1.0, results[k].history.final_control())?;
            gap = gap.max(d.max_abs());
        }
    }
    let mut iterations = Vec::new();
    for (s, r) in starts.iter().zip(&results) {
        runs.record(format!("{} start", s.name()), &r.history);
        iterations.push(format!("{} {}", s.name(), r.history.iterations()));
    }
    let max_iters = results.iter().map(|r| r.history.iterations()).max().unwrap_or(0);
    Ok(Verdict {
        pass: gap <= 1e-2 && max_iters <= 30,
        detail: format!(
            "pairwise L-inf {gap:.2e} (limit 1e-2); iterations {} (limit 30)",
            iterations.join(", ")
        ),
    })
}

fn inf_sup(_: &mut Runs) -> Result<Verdict> {
    let flat = AnalyticControl::flat();
    let mut pass = true;
    let mut betas = Vec::new();
    let mut parts = Vec::new();
    for n in [8, 16, 32] {
        let space = TaylorHoodSpace::with_defaults(n)?;
        let b0 = estimate_infsup(&flat, &space)?;
        let q = AnalyticControl::parabolic().interpolate(&ControlGrid::uniform(n)?, Degree::Linear);
        let bq = estimate_infsup(&q, &space)?;
        let w1inf = check_admissible(&q, &AdmissibilityParams::default()).lipschitz_proxy;
        pass &= bq >= b0 - w1inf;
        betas.push(b0);
        parts.push(format!("n={n}: beta(0) {b0:.4}, beta(q) {bq:.4} >= {:.4}", b0 - w1inf));
    }
    let lo = betas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = betas.iter().cloned().fold(0.0, f64::max);
    let spread = (hi - lo) / hi;
    pass &= spread <= 0.2 && lo >= 0.1;
    Ok(Verdict {
        pass,
        detail: format!("spread {:.1}%; {}", 100.0 * spread, parts.join("; ")),
    })
}

/// `x(1-x)(a + bx + cx²)` with its first two derivatives.
fn cubic_bubble(a: f64, b: f64, c: f64) -> AnalyticControl {
    AnalyticControl::new("bubble", move |x| {
        let p = [a + b * x + c * x * x, b + 2.0 * c * x, 2.0 * c];
        let w = [x - x * x, 1.0 - 2.0 * x, -2.0];
        [w[0] * p[0], w[1] * p[0] + w[0] * p[1], w[2] * p[0] + 2.0 * w[1] * p[1] + w[0] * p[2]]
    })
}

fn map_oracles(_: &mut Runs) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut draw = |s: f64| cubic_bubble(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s));
    let samples = 1000;
    let mut worst: f64 = 0.0;
    let mut eig_ok = true;
    let mut points = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..samples {
        let (q, dq, tq) = (draw(2.0), draw(1.0), draw(1.0));
        let x = [points.random_range(0.0..1.0), points.random_range(0.0..1.0)];
        let m = map_quantities(&q, x)?;
        let h = 1e-6;
        let col = |k: usize| {
            let mut p = x;
            let mut r = x;
            p[k] += h;
            r[k] -= h;
            let (a, b) = (map_forward(&q, p), map_forward(&q, r));
            [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)]
        };
        let (c0, c1) = (col(0), col(1));
        let dt = Mat2::new(c0[0], c1[0], c0[1], c1[1]);
        let gamma = dt.det();
        let inv = dt.inverse().expect("regular map");
        let a = inv * inv.transpose() * gamma;
        worst = worst.max(rel(m.gamma, gamma)).max(mat_rel(&m.dt, &dt)).max(mat_rel(&m.a, &a));

        let t = 1e-5;
        let shifted = |s: f64| {
            let qs = AnalyticControl::new("shift", {
                let (q, dq) = (q.clone(), dq.clone());
                move |x| {
                    let (a, b) = (q.jet(x), dq.jet(x));
                    std::array::from_fn(|i| a[i] + s * b[i])
                }
            });
            map_quantities(&qs, x).map(|m| m.a)
        };
        let a_fd = (shifted(t)? - shifted(-t)?) * (0.5 / t);
        let v = map_first_variation(&q, &dq, x)?;
        worst = worst.max(mat_rel(&v.a_dot, &a_fd));

        let first = |s: f64| {
            let qs = AnalyticControl::new("shift", {
                let (q, tq) = (q.clone(), tq.clone());
                move |x| {
                    let (a, b) = (q.jet(x), tq.jet(x));
                    std::array::from_fn(|i| a[i] + s * b[i])
                }
            });
            map_first_variation(&qs, &dq, x).map(|v| v.a_dot)
        };
        let a2_fd = (first(t)? - first(-t)?) * (0.5 / t);
        let w = map_second_variation(&q, &dq, &tq, x)?;
        worst = worst.max(mat_rel(&w.a_ddot, &a2_fd));

        let grid: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
        let jets: Vec<[f64; 3]> = grid.iter().map(|&s| q.jet(s)).collect();
        let d1 = jets.iter().fold(0.0f64, |m, j| m.max(j[2].abs()));
        let d2 = jets[0][1].abs();
        let q_max = jets.iter().fold(f64::NEG_INFINITY, |m, j| m.max(j[0]));
        let q_min = jets.iter().fold(f64::INFINITY, |m, j| m.min(j[0]));
        let bound = eigen_lower_bound_with_floor(d1, d2, 1.0 - q_max, q_min);
        eig_ok &= m.a.sym_eigenvalues()[0] >= bound;
    }
    Ok(Verdict {
        pass: worst <= 1e-6 && eig_ok,
        detail: format!(
            "{samples} samples: worst relative gap {worst:.2e} (limit 1e-6); eigenvalue bound {}",
            if eig_ok { "holds" } else { "violated" }
        ),
    })
}

fn invariants(runs: &mut Runs) -> Result<Verdict> {
    if runs.histories.is_empty() {
        let mut cfg = ExperimentConfig::default();
        cfg.mesh_sizes = vec![8];
        let r = optimize_level(&cfg, 0, &InitialControl::Parabolic, 10.0, 1e4)?;
        runs.record("parabolic start n=8".into(), &r.history);
    }
    let (solves, worst) = divergence_record();
    let bad: Vec<&str> = runs.histories.iter().filter(|h| !h.1).map(|h| h.0.as_str()).collect();
    Ok(Verdict {
        pass: solves > 0 && worst <= DIVERGENCE_TOLERANCE && bad.is_empty(),
        detail: format!(
            "{solves} state solves, worst |Bu|/|u| {worst:.2e} (limit 1e-9); {} of {} optimizer runs monotone{}",
            runs.histories.len() - bad.len(),
            runs.histories.len(),
            if bad.is_empty() { String::new() } else { format!(" (not: {})", bad.join(", ")) }
        ),
    })
}

type Criterion = fn(&mut Runs) -> Result<Verdict>;

fn main() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).try_init();
    let criteria: [(u32, &str, Criterion); 8] = [
        (1, "manufactured solution convergence", manufactured_solution),
        (2, "three-way gradient consistency", gradient_consistency),
        (3, "sensitivity Taylor remainders", taylor_remainders),
        (4, "optimal value discretization order", discretization_order),
        (5, "initialization independence", initialization_independence),
        (6, "discrete inf-sup", inf_sup),
        (7, "map-quantity oracles", map_oracles),
        (8, "incompressibility and monotonicity", invariants),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut runs = Runs::default();
    let mut failed = 0;
    let mut ran = 0;
    let mut out = std::io::stdout();
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let verdict = check(&mut runs).unwrap_or_else(|e| Verdict {
            pass: false,
            detail: format!("error: {e}"),
        });
        failed += usize::from(!verdict.pass);
        let _ = writeln!(
            out,
            "criterion {id} [{}] {name}: {} ({:.1} s)",
            if verdict.pass { "PASS" } else { "FAIL" },
            verdict.detail,
            started.elapsed().as_secs_f64()
        );
        let _ = out.flush();
    }
    let _ = writeln!(out, "acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
