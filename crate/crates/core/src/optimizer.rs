//! Projected gradient method with literal backtracking.

use std::cell::RefCell;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adjoint::solve_adjoint;
use crate::control::{check_admissible, interpolate_control, AdmissibilityParams, ControlFunction, Profile};
use crate::data::ProblemData;
use crate::error::{Error, Result};
use crate::fem::assembly::{assemble_scalar, boundary_scalar_load};
use crate::fem::mesh::BoundaryTag;
use crate::fem::solver::SparseLu;
use crate::fem::space::{p2_values, TaylorHoodSpace};
use crate::functional::{
    eval_functional, eval_gradient_density, FunctionalSpec, FunctionalValue, GradientDensity, GradientOptions,
    GradientRoute, GradientToggle, Variant,
};
use crate::state::{solve_state, StateSolution};

/// Settings of [`run_optimization`].
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub epsilon_hat: f64,
    pub epsilon_min: f64,
    pub max_iters: usize,
    /// Optional stop on the `L²(I)` norm of the projected gradient.
    pub gradient_tolerance: Option<f64>,
    pub spec: FunctionalSpec,
    pub toggle: GradientToggle,
    /// `None` picks the boundary density for the energy variants and the
    /// volumetric load for tracking.
    pub route: Option<GradientRoute>,
    pub admissibility: AdmissibilityParams,
}

impl OptimizerConfig {
    pub fn new(spec: FunctionalSpec) -> Self {
        Self {
            epsilon_hat: 0.1,
            epsilon_min: 1e-8,
            max_iters: 100,
            gradient_tolerance: None,
            spec,
            toggle: GradientToggle::default(),
            route: None,
            admissibility: AdmissibilityParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.epsilon_min && self.epsilon_min < self.epsilon_hat) {
            return Err(Error::Config(format!(
                "need 0 < epsilon_min < epsilon_hat, got {} and {}",
                self.epsilon_min, self.epsilon_hat
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        self.spec.validate()
    }

    pub fn gradient_options(&self) -> GradientOptions {
        let route = self.route.unwrap_or(match self.spec.variant {
            Variant::PerimeterTracking => GradientRoute::Volumetric,
            _ => GradientRoute::Hadamard,
        });
        GradientOptions {
            toggle: self.toggle,
            route,
        }
    }
}

/// Factored projection problem `∫∇G·∇w + Gw = ∫_{Γ₀} ψ w` with `G = 0` on
/// the other sides.
pub struct GradientProjector {
    lu: SparseLu,
    fixed: Vec<bool>,
}

impl GradientProjector {
    pub fn new(space: &TaylorHoodSpace) -> Result<Self> {
        let fixed: Vec<bool> = (0..space.scalar_nodes())
            .map(|i| {
                [BoundaryTag::Gamma1, BoundaryTag::Gamma2, BoundaryTag::Gamma3]
                    .iter()
                    .any(|t| space.node_has_tag(i, *t))
            })
            .collect();
        let k = assemble_scalar(space, 1.0, 1.0)?.eliminate(&fixed);
        Ok(Self {
            lu: SparseLu::factor(&k)?,
            fixed,
        })
    }

    /// Nodal values of `G` on the P2 scalar space.
    pub fn extend(&self, density: &GradientDensity, space: &TaylorHoodSpace) -> Vec<f64> {
        let psi = density.as_control();
        let mut rhs = boundary_scalar_load(space, BoundaryTag::Gamma0, |p| psi.value(p[0]));
        for (r, f) in rhs.iter_mut().zip(&self.fixed) {
            if *f {
                *r = 0.0;
            }
        }
        self.lu.solve(&rhs)
    }

    /// `g`: the trace of `G` on `Γ₀` interpolated on the control grid of `q`.
    pub fn project(&self, q: &ControlFunction, density: &GradientDensity, space: &TaylorHoodSpace) -> ControlFunction {
        let g = self.extend(density, space);
        interpolate_control(|x| wall_trace(space, &g, x), q.grid(), q.degree())
    }
}

fn wall_trace(space: &TaylorHoodSpace, field: &[f64], x: f64) -> f64 {
    let p = [x, 0.0];
    let t = space.mesh().locate(p);
    let Ok(geo) = space.element_geometry(t) else {
        return 0.0;
    };
    let [s, r] = geo.local(p);
    let phi = p2_values(s, r);
    space.element_nodes(t).iter().zip(phi).map(|(i, w)| field[*i] * w).sum()
}

/// One-shot version of [`GradientProjector::project`].
pub fn project_gradient(q: &ControlFunction, density: &GradientDensity, space: &TaylorHoodSpace) -> Result<ControlFunction> {
    Ok(GradientProjector::new(space)?.project(q, density, space))
}

/// Outcome of [`backtracking_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub control: ControlFunction,
    pub value: f64,
    /// Step length that produced `control`.
    pub step: f64,
    /// Step length after the last halving.
    pub final_epsilon: f64,
    pub accepted: bool,
}

/// Backtracking on `q_old - ε g`: the first trial uses `ε̂`; while the value
/// exceeds `j_old` and `ε > ε_min`, retry with `ε` and then halve it.
/// Degenerate trial controls count as `+∞`.
pub fn backtracking_step<F>(
    q_old: &ControlFunction,
    j_old: f64,
    g: &ControlFunction,
    mut eval_j: F,
    epsilon_hat: f64,
    epsilon_min: f64,
) -> Result<StepOutcome>
where
    F: FnMut(&ControlFunction) -> Result<f64>,
{
    let mut trial = |eps: f64| -> Result<(ControlFunction, f64)> {
        let q = q_old.axpy(-eps, g)?;
        let q = ControlFunction::from_values(q.grid().clone(), q.degree(), q.values().to_vec())?;
        let j = match eval_j(&q) {
            Ok(j) => j,
            Err(Error::DegenerateMap { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        Ok((q, j))
    };
    let (mut q_new, mut j_new) = trial(epsilon_hat)?;
    let mut step = epsilon_hat;
    let mut eps = epsilon_hat;
    while j_new > j_old && eps > epsilon_min {
        if eps != step {
            (q_new, j_new) = trial(eps)?;
            step = eps;
        }
        eps /= 2.0;
    }
    Ok(StepOutcome {
        control: q_new,
        value: j_new,
        step,
        final_epsilon: eps,
        accepted: j_new <= j_old,
    })
}

/// Why the iteration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum StopReason {
    StepBelowMinimum,
    /// Zero projected gradient or an accepted step without decrease.
    Stationary,
    GradientTolerance,
    MaxIterations,
}

/// One accepted iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub control: ControlFunction,
    pub value: FunctionalValue,
    /// Step that produced this iterate; 0 for the initial control.
    pub step: f64,
    /// `‖g‖_{L²(I)}` of the projected gradient at this iterate.
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationHistory {
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
}

impl OptimizationHistory {
    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("history holds the initial iterate")
    }

    pub fn final_control(&self) -> &ControlFunction {
        &self.final_record().control
    }

    /// Number of accepted descent steps.
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].value.total <= w[0].value.total)
    }

    /// CSV with header `iter,j,j_energy,j_reg,j_vol,step`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iter", "j", "j_energy", "j_reg", "j_vol", "step"])?;
        for r in &self.records {
            let v = r.value;
            w.write_record([
                r.iter.to_string(),
                format!("{:.17e}", v.total),
                format!("{:.17e}", v.energy),
                format!("{:.17e}", v.regularization),
                format!("{:.17e}", v.volume),
                format!("{:.17e}", r.step),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

fn gradient_at(
    state: &StateSolution,
    cfg: &OptimizerConfig,
    data: &ProblemData,
    space: &TaylorHoodSpace,
    projector: &GradientProjector,
) -> Result<ControlFunction> {
    let adjoint = solve_adjoint(&state.control, state, &cfg.spec, space)?;
    let density = eval_gradient_density(state, &adjoint, &cfg.spec, data, space, cfg.gradient_options())?;
    Ok(projector.project(&state.control, &density, space))
}

/// Gradient iteration from `q0` until the step falls to `ε_min`, the
/// iterate is stationary, the optional gradient tolerance is met, or
/// `max_iters` steps are taken.
pub fn run_optimization(
    q0: &ControlFunction,
    data: &ProblemData,
    cfg: &OptimizerConfig,
    space: &TaylorHoodSpace,
) -> Result<OptimizationHistory> {
    cfg.validate()?;
    let projector = GradientProjector::new(space)?;
    let mut state = solve_state(q0, data, space)?;
    let mut value = eval_functional(&state, &cfg.spec, space)?;
    let mut records = Vec::new();
    let mut step = 0.0;
    let mut violated: Vec<&'static str> = Vec::new();
    let stop = loop {
        let g = gradient_at(&state, cfg, data, space, &projector)?;
        let gradient_norm = g.l2_norm();
        let iter = records.len();
        log::info!("iter {iter}: j = {:.10e}, |g| = {gradient_norm:.3e}, step = {step:.3e}", value.total);
        let report = check_admissible(&state.control, &cfg.admissibility);
        let now = report.violations();
        if now != violated {
            if now.is_empty() {
                log::info!("iter {iter}: admissible again");
            } else {
                log::warn!("iter {iter}: admissibility violated ({})", now.join(", "));
            }
            violated = now;
        }
        records.push(IterationRecord {
            iter,
            control: state.control.clone(),
            value,
            step,
            gradient_norm,
        });
        if gradient_norm == 0.0 {
            break StopReason::Stationary;
        }
        if cfg.gradient_tolerance.is_some_and(|tol| gradient_norm <= tol) {
            break StopReason::GradientTolerance;
        }
        if iter >= cfg.max_iters {
            break StopReason::MaxIterations;
        }
        let last: RefCell<Option<StateSolution>> = RefCell::new(None);
        let outcome = backtracking_step(
            &state.control,
            value.total,
            &g,
            |q| {
                let s = solve_state(q, data, space)?;
                let j = eval_functional(&s, &cfg.spec, space)?.total;
                *last.borrow_mut() = Some(s);
                Ok(j)
            },
            cfg.epsilon_hat,
            cfg.epsilon_min,
        )?;
        if !outcome.accepted {
            break StopReason::StepBelowMinimum;
        }
        if outcome.value == value.total {
            break StopReason::Stationary;
        }
        let next = last
            .into_inner()
            .filter(|s| s.control == outcome.control)
            .map_or_else(|| solve_state(&outcome.control, data, space), Ok)?;
        state = next;
        value = eval_functional(&state, &cfg.spec, space)?;
        step = outcome.step;
        if outcome.final_epsilon <= cfg.epsilon_min {
            records.push(IterationRecord {
                iter: iter + 1,
                control: state.control.clone(),
                value,
                step,
                gradient_norm: gradient_at(&state, cfg, data, space, &projector)?.l2_norm(),
            });
            break StopReason::StepBelowMinimum;
        }
    };
    Ok(OptimizationHistory { records, stop })
}
