//! Cost functionals, their derivatives and gradient densities.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adjoint::{AdjointSolution, AdjointVariant};
use crate::control::{ControlFunction, ControlGrid, Degree, Profile};
use crate::data::ProblemData;
use crate::error::{Error, Result};
use crate::fem::assembly::{assemble, PointCoefficients};
use crate::fem::mesh::{BoundaryEdge, BoundaryTag};
use crate::fem::space::TaylorHoodSpace;
use crate::fem::sparse::{dot, CsrMatrix};
use crate::geometry::{MapQuantities, MapSecondVariation, MapVariation, Mat2};
use crate::par::map_range;
use crate::quadrature::{gauss_line, triangle_degree4};
use crate::sensitivity::{first_variation_coefficients, SensitivitySolution};
use crate::fem::solver::SparseLu;
use crate::geometry::map_forward;
use crate::state::{assemble_state, solve_state_profile, StateSolution};

/// Which cost functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Variant {
    /// Dissipation plus `α‖q''‖²`.
    CurvatureEnergy,
    /// Dissipation plus `α` times the wall length.
    #[default]
    PerimeterEnergy,
    /// Velocity-gradient tracking plus `α/2` times the wall length.
    PerimeterTracking,
}

/// Second factor of the boundary product in the gradient density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum GradientToggle {
    /// `ν∂ₙz - ũ`: the velocity trace vanishes on the wall.
    AsWritten,
    /// `ν∂ₙz - ∂ₙũ`.
    #[default]
    GradientCorrected,
}

/// How the gradient load is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum GradientRoute {
    /// Boundary density from normal traces on the wall.
    #[default]
    Hadamard,
    /// Exact derivative of the discrete functional through the adjoint.
    Volumetric,
}

/// Reference-domain target velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingTarget {
    pub velocity: Vec<f64>,
}

impl TrackingTarget {
    /// State velocity for the target control `q_d`, stored in reference
    /// coordinates.
    pub fn solve<P: Profile + ?Sized>(q_d: &P, data: &ProblemData, space: &TaylorHoodSpace) -> Result<Self> {
        Ok(Self {
            velocity: solve_state_profile(q_d, data, space)?.velocity,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSpec {
    pub variant: Variant,
    pub alpha: f64,
    pub beta: f64,
    pub v_bar: f64,
    pub target: Option<Arc<TrackingTarget>>,
}

impl FunctionalSpec {
    pub fn energy(variant: Variant, alpha: f64, beta: f64, v_bar: f64) -> Self {
        Self {
            variant,
            alpha,
            beta,
            v_bar,
            target: None,
        }
    }

    pub fn tracking(alpha: f64, target: TrackingTarget) -> Self {
        Self {
            variant: Variant::PerimeterTracking,
            alpha,
            beta: 0.0,
            v_bar: 0.0,
            target: Some(Arc::new(target)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Config(format!(
                "weights must be non-negative (alpha {}, beta {})",
                self.alpha, self.beta
            )));
        }
        match (self.variant, &self.target) {
            (Variant::PerimeterTracking, None) => Err(Error::MissingTarget),
            (Variant::PerimeterTracking, Some(_)) | (_, None) => Ok(()),
            (_, Some(_)) => Err(Error::Config("target given for an energy functional".into())),
        }
    }

    pub fn adjoint_variant(&self) -> AdjointVariant {
        match self.variant {
            Variant::PerimeterTracking => AdjointVariant::Tracking,
            _ => AdjointVariant::Energy,
        }
    }

    /// Weight of the wall length, zero for the curvature variant.
    fn perimeter_weight(&self) -> f64 {
        match self.variant {
            Variant::CurvatureEnergy => 0.0,
            Variant::PerimeterEnergy => self.alpha,
            Variant::PerimeterTracking => 0.5 * self.alpha,
        }
    }

    /// `u - u_d` (or `u`).
    pub fn residual_velocity(&self, velocity: &[f64]) -> Result<Vec<f64>> {
        match (self.variant, &self.target) {
            (Variant::PerimeterTracking, Some(t)) => {
                if t.velocity.len() != velocity.len() {
                    return Err(Error::Mismatch("target lives on another space".into()));
                }
                Ok(velocity.iter().zip(&t.velocity).map(|(u, d)| u - d).collect())
            }
            (Variant::PerimeterTracking, None) => Err(Error::MissingTarget),
            _ => Ok(velocity.to_vec()),
        }
    }
}

/// Value of `j` split into its terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub total: f64,
    pub energy: f64,
    pub regularization: f64,
    pub volume: f64,
}

pub fn eval_functional(state: &StateSolution, spec: &FunctionalSpec, space: &TaylorHoodSpace) -> Result<FunctionalValue> {
    spec.validate()?;
    let w = spec.residual_velocity(state.velocity())?;
    let energy = state.energy_matrix(space)?.bilinear(&w, &w);
    let q = &state.control;
    let regularization = match spec.variant {
        Variant::CurvatureEnergy => spec.alpha * q.curvature_energy(),
        _ => spec.perimeter_weight() * q.perimeter(),
    };
    let volume = spec.beta * (q.integral() - spec.v_bar).powi(2);
    Ok(FunctionalValue {
        total: energy + regularization + volume,
        energy,
        regularization,
        volume,
    })
}

/// L²(I) gradient on the control grid together with its load vector
/// `r_i = (Ψ, φ_i)_I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientDensity {
    pub grid: ControlGrid,
    pub degree: Degree,
    pub values: Vec<f64>,
    pub load: Vec<f64>,
}

impl GradientDensity {
    pub fn from_load(q: &ControlFunction, load: Vec<f64>) -> Result<Self> {
        let values = q.riesz_representative(&load)?;
        Ok(Self {
            grid: q.grid().clone(),
            degree: q.degree(),
            values,
            load,
        })
    }

    /// `(Ψ, δq)_I`.
    pub fn pair(&self, dq: &ControlFunction) -> f64 {
        dot(&self.load, dq.values())
    }

    pub fn as_control(&self) -> ControlFunction {
        ControlFunction::from_values_unclamped(self.grid.clone(), self.degree, self.values.clone())
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            degree: self.degree,
            values: self.values.iter().map(|v| t * v).collect(),
            load: self.load.iter().map(|v| t * v).collect(),
        }
    }
}

/// Options of [`eval_gradient_density`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GradientOptions {
    pub toggle: GradientToggle,
    pub route: GradientRoute,
}

fn check_pair(state: &StateSolution, adjoint: &AdjointSolution, spec: &FunctionalSpec) -> Result<()> {
    spec.validate()?;
    if adjoint.variant != spec.adjoint_variant() {
        return Err(Error::Mismatch(format!(
            "{:?} adjoint used for a {:?} functional",
            adjoint.variant, spec.variant
        )));
    }
    if adjoint.control != state.control {
        return Err(Error::Mismatch("adjoint solved for another control".into()));
    }
    Ok(())
}

/// Regularization and volume loads `(·, φ_i)` excluding the curvature term.
fn penalty_load(q: &ControlFunction, spec: &FunctionalSpec) -> Vec<f64> {
    let mut r = vec![0.0; q.dofs()];
    let pw = spec.perimeter_weight();
    if pw != 0.0 {
        for (ri, g) in r.iter_mut().zip(q.perimeter_gradient()) {
            *ri += pw * g;
        }
    }
    if spec.beta != 0.0 {
        let c = 2.0 * spec.beta * (q.integral() - spec.v_bar);
        for (ri, m) in r.iter_mut().zip(q.basis_integrals()) {
            *ri += c * m;
        }
    }
    r
}

/// Gradient density. The curvature variant omits its `2α(q'', δq'')` term.
pub fn eval_gradient_density(
    state: &StateSolution,
    adjoint: &AdjointSolution,
    spec: &FunctionalSpec,
    data: &ProblemData,
    space: &TaylorHoodSpace,
    options: GradientOptions,
) -> Result<GradientDensity> {
    check_pair(state, adjoint, spec)?;
    let q = &state.control;
    let mut load = match options.route {
        GradientRoute::Hadamard => hadamard_load(state, adjoint, spec, data, space, options.toggle)?,
        GradientRoute::Volumetric => volumetric_load(state, adjoint, spec, data, space)?,
    };
    for (r, p) in load.iter_mut().zip(penalty_load(q, spec)) {
        *r += p;
    }
    GradientDensity::from_load(q, load)
}

/// Wall density `Ψ` at abscissa `x` from reference gradients of `u`, `z`
/// and the subtracted field `b`.
pub fn boundary_density(jet: [f64; 3], x: f64, nu: f64, grad_u: &Mat2, grad_z: &Mat2, grad_b: &Mat2) -> Result<f64> {
    let m = MapQuantities::from_jet(jet, [x, 0.0])?;
    let s = (1.0 + jet[1] * jet[1]).sqrt();
    let n = [jet[1] / s, -1.0 / s];
    let dn = m.dt_inv.mul_vec(n);
    let du = grad_u.mul_vec(dn);
    let other = (*grad_z * nu - *grad_b).mul_vec(dn);
    Ok(-(du[0] * other[0] + du[1] * other[1]))
}

/// Wall traction recovered from a discrete residual: the P2 trace on `Γ₀`
/// of `t·√(1+q'²)`. Nodes shared with the inflow side carry no equation;
/// their values are extrapolated linearly through the edge midpoint.
struct WallTrace {
    expansion: Vec<Option<[(usize, f64); 2]>>,
    values: Vec<[f64; 2]>,
}

impl WallTrace {
    fn recover(space: &TaylorHoodSpace, residual: &[f64]) -> Result<Self> {
        let mesh = space.mesh();
        let nodes = space.scalar_nodes();
        let nv = mesh.vertices().len();
        let edges = mesh.boundary_edges(BoundaryTag::Gamma0);
        let corner = |node: usize| space.node_has_tag(node, BoundaryTag::Gamma3);
        let edge_nodes = |be: &BoundaryEdge| {
            let [v0, v1] = mesh.edges()[be.edge];
            [v0, v1, nv + be.edge]
        };
        let mut local = vec![None; nodes];
        let mut count = 0;
        for ids in edges.iter().map(edge_nodes) {
            for node in ids {
                if local[node].is_none() && !corner(node) {
                    local[node] = Some(count);
                    count += 1;
                }
            }
        }
        let mut expansion = vec![None; nodes];
        for [v0, v1, m] in edges.iter().map(edge_nodes) {
            for (node, far) in [(v0, v1), (v1, v0), (m, m)] {
                expansion[node] = match (local[node], local[m], local[far]) {
                    (Some(l), _, _) => Some([(l, 1.0), (l, 0.0)]),
                    (None, Some(lm), Some(lf)) => Some([(lm, 2.0), (lf, -1.0)]),
                    _ => return Err(Error::Mismatch("wall has fewer than two elements".into())),
                };
            }
        }
        // Exact 1D P2 mass matrix on each edge, ordered (v0, v1, mid).
        let unit = [[4.0, -1.0, 2.0], [-1.0, 4.0, 2.0], [2.0, 2.0, 16.0]];
        let mut triplets = Vec::with_capacity(18 * edges.len());
        for (be, ids) in edges.iter().zip(edges.iter().map(edge_nodes)) {
            let [a, b] = mesh.edges()[be.edge].map(|v| mesh.vertices()[v][0]);
            let len = (b - a).abs();
            for i in 0..3 {
                let Some(row) = local[ids[i]] else { continue };
                for j in 0..3 {
                    for (col, c) in expansion[ids[j]].unwrap_or_default() {
                        triplets.push((row, col, c * unit[i][j] * len / 30.0));
                    }
                }
            }
        }
        let lu = SparseLu::factor(&CsrMatrix::from_triplets(count, count, &triplets))?;
        let mut rhs = [vec![0.0; count], vec![0.0; count]];
        for (node, l) in local.iter().enumerate() {
            if let Some(l) = l {
                rhs[0][*l] = residual[node];
                rhs[1][*l] = residual[nodes + node];
            }
        }
        let [tx, ty] = rhs.map(|r| lu.solve(&r));
        let values = tx.into_iter().zip(ty).map(|(a, b)| [a, b]).collect();
        Ok(WallTrace { expansion, values })
    }

    fn node(&self, node: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (l, c) in self.expansion[node].unwrap_or_default() {
            out[0] += c * self.values[l][0];
            out[1] += c * self.values[l][1];
        }
        out
    }

    fn at(&self, ids: [usize; 3], t: f64) -> [f64; 2] {
        let w = [(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)];
        let mut out = [0.0; 2];
        for (id, wk) in ids.iter().zip(w) {
            let v = self.node(*id);
            out[0] += wk * v[0];
            out[1] += wk * v[1];
        }
        out
    }
}

/// `A x + Bᵀ y - rhs` on the velocity rows.
fn velocity_residual(a: &CsrMatrix, b: &CsrMatrix, x: &[f64], y: &[f64], rhs: &[f64]) -> Vec<f64> {
    let ax = a.matvec(x);
    let bty = b.matvec_transpose(y);
    ax.iter().zip(bty).zip(rhs).map(|((p, q), r)| p + q - r).collect()
}

/// Density on the wall with tangential normal derivatives taken from the
/// recovered tractions and normal components from the discrete fields.
fn hadamard_load(
    state: &StateSolution,
    adjoint: &AdjointSolution,
    spec: &FunctionalSpec,
    data: &ProblemData,
    space: &TaylorHoodSpace,
    toggle: GradientToggle,
) -> Result<Vec<f64>> {
    let q = &state.control;
    let u = state.velocity();
    let w = spec.residual_velocity(u)?;
    let shift: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a - b).collect();
    let sys = assemble_state(q, data, space)?;
    let state_trace = WallTrace::recover(space, &velocity_residual(&sys.a, &sys.b, u, state.pressure(), &sys.f))?;
    let ew: Vec<f64> = state.energy_matrix(space)?.matvec(&w).iter().map(|v| 2.0 * v).collect();
    let adjoint_residual = velocity_residual(&sys.a, &sys.b, &adjoint.field.velocity, &adjoint.field.pressure, &ew);
    let adjoint_trace = WallTrace::recover(space, &adjoint_residual)?;
    let rule = gauss_line(5);
    let mesh = space.mesh();
    let nv = mesh.vertices().len();
    let edges = mesh.boundary_edges(BoundaryTag::Gamma0);
    let parts = map_range(space.execution(), edges.len(), |k| -> Result<Vec<(usize, f64)>> {
        let be = edges[k];
        let t = be.triangle;
        let geo = space.element_geometry(t)?;
        let [v0, v1] = mesh.edges()[be.edge];
        let ids = [v0, v1, nv + be.edge];
        let [a, b] = [v0, v1].map(|v| mesh.vertices()[v]);
        let len = (b[0] - a[0]).abs();
        let mut out = Vec::new();
        for gp in &rule {
            let p = [a[0] + gp.t * (b[0] - a[0]), 0.0];
            let [s, r] = geo.local(p);
            let jet = q.jet(p[0]);
            let m = MapQuantities::from_jet(jet, p)?;
            let j = (1.0 + jet[1] * jet[1]).sqrt();
            let n = [jet[1] / j, -1.0 / j];
            let tau = [1.0 / j, jet[1] / j];
            let dn = m.dt_inv.mul_vec(n);
            let normal_part = |field: &[f64]| {
                let d = space.eval_velocity(field, t, &geo, s, r).1.mul_vec(dn);
                [d[0] * n[0] + d[1] * n[1], d[0] * tau[0] + d[1] * tau[1]]
            };
            let tangential = |tr: &WallTrace| {
                let v = tr.at(ids, gp.t);
                (v[0] * tau[0] + v[1] * tau[1]) / j
            };
            let nu = data.nu.value(map_forward(q, p));
            let [un, _] = normal_part(u);
            let [zn, _] = normal_part(&adjoint.field.velocity);
            let [_, dt] = normal_part(&shift);
            let ut = tangential(&state_trace) / nu;
            let wt = ut - dt;
            let zt = tangential(&adjoint_trace) + 2.0 * wt;
            let (bn, bt) = match toggle {
                GradientToggle::AsWritten => (0.0, 0.0),
                GradientToggle::GradientCorrected => (un - normal_part(&shift)[0], wt),
            };
            let psi = -(un * (nu * zn - bn) + ut * (zt - bt));
            let (first, basis) = q.local_basis(p[0]);
            for (i, phi) in basis.iter().enumerate() {
                out.push((first + i, gp.weight * len * psi * phi[0]));
            }
        }
        Ok(out)
    });
    let mut load = vec![0.0; q.dofs()];
    for part in parts {
        for (i, v) in part? {
            load[i] += v;
        }
    }
    Ok(load)
}

/// `j'(q)(φ_i)` of the discrete functional without penalty terms:
/// `(∇w Ȧ, ∇w) + Ḟ(z) - ȧ(u, z) - ḃ(z, p) - ḃ(u, s)`.
fn volumetric_load(
    state: &StateSolution,
    adjoint: &AdjointSolution,
    spec: &FunctionalSpec,
    data: &ProblemData,
    space: &TaylorHoodSpace,
) -> Result<Vec<f64>> {
    let q = &state.control;
    let w = spec.residual_velocity(state.velocity())?;
    let (u, p) = (state.velocity(), state.pressure());
    let (z, s) = (&adjoint.field.velocity, &adjoint.field.pressure);
    let rule = triangle_degree4();
    let unit = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let parts = map_range(space.execution(), space.elements(), |t| -> Result<Vec<(usize, f64)>> {
        let geo = space.element_geometry(t)?;
        let mut out = Vec::new();
        for qp in &rule {
            let x = geo.point(qp.s, qp.t);
            let jet = q.jet(x[0]);
            let (uu, gu) = space.eval_velocity(u, t, &geo, qp.s, qp.t);
            let (zz, gz) = space.eval_velocity(z, t, &geo, qp.s, qp.t);
            let (_, gw) = space.eval_velocity(&w, t, &geo, qp.s, qp.t);
            let pp = space.eval_pressure(p, t, qp.s, qp.t);
            let ss = space.eval_pressure(s, t, qp.s, qp.t);
            let mut val = [0.0; 2];
            for (k, e) in unit.iter().enumerate() {
                let a_dot = MapVariation::from_jets(jet, *e, x)?.a_dot;
                let c = first_variation_coefficients(jet, *e, data, x)?;
                val[k] = Mat2::weighted_inner(&gw, &a_dot, &gw) + c.force[0] * zz[0] + c.force[1] * zz[1]
                    - c.mass * (uu[0] * zz[0] + uu[1] * zz[1])
                    - Mat2::weighted_inner(&gu, &c.diffusion, &gz)
                    + pp * gz.ddot(&c.coupling)
                    + ss * gu.ddot(&c.coupling);
            }
            let wq = qp.weight * geo.det;
            let (first, basis) = q.local_basis(x[0]);
            for (i, phi) in basis.iter().enumerate() {
                out.push((first + i, wq * (val[0] * phi[0] + val[1] * phi[1])));
            }
        }
        Ok(out)
    });
    let mut load = vec![0.0; q.dofs()];
    for part in parts {
        for (i, v) in part? {
            load[i] += v;
        }
    }
    Ok(load)
}

fn energy_variation<P, D>(q: &P, dq: &D, space: &TaylorHoodSpace) -> Result<CsrMatrix>
where
    P: Profile + ?Sized,
    D: Profile + ?Sized,
{
    let kernel = |x: [f64; 2]| -> Result<PointCoefficients> {
        Ok(PointCoefficients {
            diffusion: MapVariation::from_jets(q.jet(x[0]), dq.jet(x[0]), x)?.a_dot,
            ..Default::default()
        })
    };
    Ok(assemble(space, &kernel, space.execution())?.a)
}

fn energy_second_variation<P, D, T>(q: &P, dq: &D, tq: &T, space: &TaylorHoodSpace) -> Result<CsrMatrix>
where
    P: Profile + ?Sized,
    D: Profile + ?Sized,
    T: Profile + ?Sized,
{
    let kernel = |x: [f64; 2]| -> Result<PointCoefficients> {
        let t = x[0];
        Ok(PointCoefficients {
            diffusion: MapSecondVariation::from_jets(q.jet(t), dq.jet(t), tq.jet(t), x)?.a_ddot,
            ..Default::default()
        })
    };
    Ok(assemble(space, &kernel, space.execution())?.a)
}

fn regularization_first(q: &ControlFunction, dq: &ControlFunction, spec: &FunctionalSpec) -> f64 {
    let reg = match spec.variant {
        Variant::CurvatureEnergy => 2.0 * spec.alpha * q.curvature_inner(dq),
        _ => spec.perimeter_weight() * dot(&q.perimeter_gradient(), dq.values()),
    };
    reg + 2.0 * spec.beta * (q.integral() - spec.v_bar) * dq.integral()
}

/// Volumetric `j'(q)(δq)` from the state sensitivity.
pub fn eval_directional_derivative(
    state: &StateSolution,
    sens: &SensitivitySolution,
    spec: &FunctionalSpec,
    space: &TaylorHoodSpace,
) -> Result<f64> {
    spec.validate()?;
    let q = &state.control;
    let dq = &sens.direction;
    if !dq.same_space(q) {
        return Err(Error::Mismatch("direction and control live on different grids".into()));
    }
    let w = spec.residual_velocity(state.velocity())?;
    let e = state.energy_matrix(space)?;
    let e_dot = energy_variation(q, dq, space)?;
    let du = &sens.field.velocity;
    Ok(e_dot.bilinear(&w, &w) + 2.0 * e.bilinear(du, &w) + regularization_first(q, dq, spec))
}

/// `j''(q)(δq, τq)` from first and second state variations.
pub fn eval_second_derivative(
    state: &StateSolution,
    sens_dq: &SensitivitySolution,
    sens_tq: &SensitivitySolution,
    sens2: &SensitivitySolution,
    spec: &FunctionalSpec,
    space: &TaylorHoodSpace,
) -> Result<f64> {
    spec.validate()?;
    let q = &state.control;
    let (dq, tq) = (&sens_dq.direction, &sens_tq.direction);
    if !dq.same_space(q) || !tq.same_space(q) {
        return Err(Error::Mismatch("direction and control live on different grids".into()));
    }
    let w = spec.residual_velocity(state.velocity())?;
    let e = state.energy_matrix(space)?;
    let ed = energy_variation(q, dq, space)?;
    let et = energy_variation(q, tq, space)?;
    let edd = energy_second_variation(q, dq, tq, space)?;
    let (du, tu, tdu) = (&sens_dq.field.velocity, &sens_tq.field.velocity, &sens2.field.velocity);
    let flow = edd.bilinear(&w, &w)
        + 2.0 * ed.bilinear(tu, &w)
        + 2.0 * et.bilinear(du, &w)
        + 2.0 * e.bilinear(du, tu)
        + 2.0 * e.bilinear(tdu, &w);
    let reg = match spec.variant {
        Variant::CurvatureEnergy => 2.0 * spec.alpha * dq.curvature_inner(tq),
        _ => spec.perimeter_weight() * q.perimeter_hessian(dq, tq),
    };
    Ok(flow + reg + 2.0 * spec.beta * dq.integral() * tq.integral())
}
