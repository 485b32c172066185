//! First and second variations of the state with respect to the control.

use crate::control::{ControlFunction, Profile};
use crate::data::ProblemData;
use crate::error::{Error, Result};
use crate::fem::assembly::{assemble, PointCoefficients};
use crate::fem::solver::MixedField;
use crate::fem::space::TaylorHoodSpace;
use crate::fem::SparseSystem;
use crate::geometry::{MapQuantities, MapSecondVariation, MapVariation, Mat2};
use crate::state::StateSolution;

/// State variation along one direction.
#[derive(Debug, Clone)]
pub struct SensitivitySolution {
    pub field: MixedField,
    pub direction: ControlFunction,
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn quad(m: &Mat2, a: [f64; 2], b: [f64; 2]) -> f64 {
    dot(a, m.mul_vec(b))
}

/// Coefficients of `ȧ`, `ḃ` and `Ḟ` for a direction with jet `dq`
/// (`q` and `dq` are `(value, slope, curvature)` at the abscissa of `x`).
pub fn first_variation_coefficients(
    qjet: [f64; 3],
    dqjet: [f64; 3],
    data: &ProblemData,
    x: [f64; 2],
) -> Result<PointCoefficients> {
    let m = MapQuantities::from_jet(qjet, x)?;
    let v = MapVariation::from_jets(qjet, dqjet, x)?;
    let phys = [x[0], x[1] + (1.0 - x[1]) * qjet[0]];
    let (eta, nu) = (data.eta.value(phys), data.nu.value(phys));
    let (geta, gnu) = (data.eta.gradient(phys), data.nu.gradient(phys));
    let f = data.force.value(phys);
    let jf = data.force.jacobian(phys).mul_vec(v.v);
    Ok(PointCoefficients {
        mass: m.gamma * dot(geta, v.v) + eta * v.gamma_dot,
        diffusion: m.a * dot(gnu, v.v) + v.a_dot * nu,
        coupling: v.cof_dv,
        force: [
            m.gamma * jf[0] + f[0] * v.gamma_dot,
            m.gamma * jf[1] + f[1] * v.gamma_dot,
        ],
    })
}

/// Coefficients of `ä` and `F̈`; `b̈` vanishes.
pub fn second_variation_coefficients(
    qjet: [f64; 3],
    djet: [f64; 3],
    tjet: [f64; 3],
    data: &ProblemData,
    x: [f64; 2],
) -> Result<PointCoefficients> {
    let m = MapQuantities::from_jet(qjet, x)?;
    let vd = MapVariation::from_jets(qjet, djet, x)?;
    let vt = MapVariation::from_jets(qjet, tjet, x)?;
    let w = MapSecondVariation::from_jets(qjet, djet, tjet, x)?;
    let phys = [x[0], x[1] + (1.0 - x[1]) * qjet[0]];
    let (eta, nu) = (data.eta.value(phys), data.nu.value(phys));
    let (geta, gnu) = (data.eta.gradient(phys), data.nu.gradient(phys));
    let (heta, hnu) = (data.eta.hessian(phys), data.nu.hessian(phys));
    let f = data.force.value(phys);
    let jf = data.force.jacobian(phys);
    let hf = data.force.hessians(phys);
    let (jfd, jft) = (jf.mul_vec(vd.v), jf.mul_vec(vt.v));
    let mut force = [0.0; 2];
    for i in 0..2 {
        force[i] = m.gamma * quad(&hf[i], vd.v, vt.v)
            + jfd[i] * vt.gamma_dot
            + jft[i] * vd.gamma_dot
            + f[i] * w.gamma_ddot;
    }
    Ok(PointCoefficients {
        mass: m.gamma * quad(&heta, vd.v, vt.v)
            + dot(geta, vd.v) * vt.gamma_dot
            + dot(geta, vt.v) * vd.gamma_dot
            + eta * w.gamma_ddot,
        diffusion: m.a * quad(&hnu, vd.v, vt.v)
            + vt.a_dot * dot(gnu, vd.v)
            + vd.a_dot * dot(gnu, vt.v)
            + w.a_ddot * nu,
        coupling: Mat2::ZERO,
        force,
    })
}

/// Assembled `ȧ`, `ḃ`, `Ḟ` along `dq`.
pub fn assemble_first_variation<P, D>(
    q: &P,
    dq: &D,
    data: &ProblemData,
    space: &TaylorHoodSpace,
) -> Result<SparseSystem>
where
    P: Profile + ?Sized,
    D: Profile + ?Sized,
{
    let kernel = |x: [f64; 2]| first_variation_coefficients(q.jet(x[0]), dq.jet(x[0]), data, x);
    assemble(space, &kernel, space.execution())
}

/// Assembled `ä`, `F̈` along `(dq, tq)`.
pub fn assemble_second_variation<P, D, T>(
    q: &P,
    dq: &D,
    tq: &T,
    data: &ProblemData,
    space: &TaylorHoodSpace,
) -> Result<SparseSystem>
where
    P: Profile + ?Sized,
    D: Profile + ?Sized,
    T: Profile + ?Sized,
{
    let kernel =
        |x: [f64; 2]| second_variation_coefficients(q.jet(x[0]), dq.jet(x[0]), tq.jet(x[0]), data, x);
    assemble(space, &kernel, space.execution())
}

fn check_inputs(q: &ControlFunction, dirs: &[&ControlFunction], state: &StateSolution, space: &TaylorHoodSpace) -> Result<()> {
    if state.control != *q {
        return Err(Error::Mismatch("state was solved for a different control".into()));
    }
    if state.field.velocity.len() != space.velocity_dofs() {
        return Err(Error::Mismatch("state does not live on this space".into()));
    }
    if dirs.iter().any(|d| !d.same_space(q)) {
        return Err(Error::Mismatch("direction and control live on different grids".into()));
    }
    Ok(())
}

fn sub_assign(out: &mut [f64], v: &[f64]) {
    for (o, x) in out.iter_mut().zip(v) {
        *o -= x;
    }
}

/// `r_v -= ȧ(u, ·) + ḃ(·, p)`, `r_π -= ḃ(u, ·)` for one variation.
fn subtract_variation(rv: &mut [f64], rp: &mut [f64], var: &SparseSystem, field: &MixedField) {
    sub_assign(rv, &var.a.matvec(&field.velocity));
    sub_assign(rv, &var.b.matvec_transpose(&field.pressure));
    sub_assign(rp, &var.b.matvec(&field.velocity));
}

/// Solves for `(δu, δp) = S'(q)(δq)` reusing the state factorization.
pub fn solve_sensitivity(
    q: &ControlFunction,
    dq: &ControlFunction,
    state: &StateSolution,
    data: &ProblemData,
    space: &TaylorHoodSpace,
) -> Result<SensitivitySolution> {
    check_inputs(q, &[dq], state, space)?;
    let var = assemble_first_variation(q, dq, data, space)?;
    let mut rv = var.f.clone();
    let mut rp = vec![0.0; space.pressure_dofs()];
    subtract_variation(&mut rv, &mut rp, &var, &state.field);
    let zero = vec![0.0; space.velocity_dofs()];
    let (field, _) = state.solver().solve(&rv, &rp, &zero)?;
    Ok(SensitivitySolution {
        field,
        direction: dq.clone(),
    })
}

/// Solves for `(τδu, τδp) = S''(q)(δq, τq)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_second_sensitivity(
    q: &ControlFunction,
    dq: &ControlFunction,
    tq: &ControlFunction,
    state: &StateSolution,
    sens_dq: &SensitivitySolution,
    sens_tq: &SensitivitySolution,
    data: &ProblemData,
    space: &TaylorHoodSpace,
) -> Result<SensitivitySolution> {
    check_inputs(q, &[dq, tq], state, space)?;
    if sens_dq.direction != *dq || sens_tq.direction != *tq {
        return Err(Error::Mismatch("first sensitivities belong to other directions".into()));
    }
    let second = assemble_second_variation(q, dq, tq, data, space)?;
    let var_d = assemble_first_variation(q, dq, data, space)?;
    let var_t = assemble_first_variation(q, tq, data, space)?;
    let mut rv = second.f.clone();
    sub_assign(&mut rv, &second.a.matvec(&state.field.velocity));
    let mut rp = vec![0.0; space.pressure_dofs()];
    subtract_variation(&mut rv, &mut rp, &var_d, &sens_tq.field);
    subtract_variation(&mut rv, &mut rp, &var_t, &sens_dq.field);
    let zero = vec![0.0; space.velocity_dofs()];
    let (field, _) = state.solver().solve(&rv, &rp, &zero)?;
    Ok(SensitivitySolution {
        field,
        direction: dq.clone(),
    })
}
