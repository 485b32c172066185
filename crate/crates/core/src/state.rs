//! Pulled-back generalized Stokes problem.

use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use faer::{Mat, Side};

use crate::control::{ControlFunction, Profile};
use crate::data::ProblemData;
use crate::error::{Error, Result};
use crate::fem::assembly::{assemble, boundary_load, PointCoefficients};
use crate::fem::mesh::BoundaryTag;
use crate::fem::solver::{MixedField, SaddleSolver, SolveDiagnostics, SparseLu};
use crate::fem::space::TaylorHoodSpace;
use crate::fem::sparse::{norm, CsrMatrix};
use crate::fem::SparseSystem;
use crate::geometry::{map_forward, map_quantities, Mat2};
use crate::par::{map_range, sum_range};
use crate::quadrature::triangle_degree4;

/// Tolerance of the discrete divergence identity, relative to `‖u_h‖`.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-9;

/// Discrete state `(u_h, p_h)` for one control.
#[derive(Debug, Clone)]
pub struct StateSolution {
    pub field: MixedField,
    pub control: ControlFunction,
    pub diagnostics: SolveDiagnostics,
    /// `max_k |b(q)(u_h, π_k) - G(q)(π_k)|`.
    pub divergence_residual: f64,
    solver: Arc<SaddleSolver>,
    energy: Arc<OnceLock<CsrMatrix>>,
}

impl StateSolution {
    /// Factorization of the state operator, shared with adjoint and
    /// sensitivity solves at the same control.
    pub fn solver(&self) -> &SaddleSolver {
        &self.solver
    }

    /// Matrix of `∫ tr(∇u A_q ∇vᵀ)` at this control, assembled on first use.
    pub fn energy_matrix(&self, space: &TaylorHoodSpace) -> Result<&CsrMatrix> {
        if let Some(m) = self.energy.get() {
            return Ok(m);
        }
        let m = energy_matrix(&self.control, space)?;
        Ok(self.energy.get_or_init(|| m))
    }

    pub fn velocity(&self) -> &[f64] {
        &self.field.velocity
    }

    pub fn pressure(&self) -> &[f64] {
        &self.field.pressure
    }
}

/// Pointwise coefficients of `a(q)`, `b(q)` and the body-force load.
pub fn state_coefficients<P: Profile + ?Sized>(
    q: &P,
    data: &ProblemData,
    x: [f64; 2],
) -> Result<PointCoefficients> {
    let m = map_quantities(q, x)?;
    let phys = map_forward(q, x);
    let nu = data.nu.value(phys);
    if nu <= 0.0 {
        return Err(Error::Config(format!("viscosity {nu} is not positive at {phys:?}")));
    }
    let f = data.force.value(phys);
    Ok(PointCoefficients {
        mass: data.eta.value(phys) * m.gamma,
        diffusion: m.a * nu,
        coupling: m.cof,
        force: [f[0] * m.gamma, f[1] * m.gamma],
    })
}

/// Blocks of the state system. Essential values enter through
/// [`state_lifting`], so `g` is zero here.
pub fn assemble_state<P: Profile + ?Sized>(
    q: &P,
    data: &ProblemData,
    space: &TaylorHoodSpace,
) -> Result<SparseSystem> {
    let kernel = |x: [f64; 2]| state_coefficients(q, data, x);
    let mut sys = assemble(space, &kernel, space.execution())?;
    let neumann = boundary_load(space, BoundaryTag::Gamma1, |p| data.g_n.at(p));
    for (f, n) in sys.f.iter_mut().zip(neumann) {
        *f += n;
    }
    Ok(sys)
}

/// Nodal lifting of the Dirichlet data.
pub fn state_lifting<P: Profile + ?Sized>(q: &P, data: &ProblemData, space: &TaylorHoodSpace) -> Vec<f64> {
    space.lifting(|node, x| {
        let phys = map_forward(q, x);
        if space.node_has_tag(node, BoundaryTag::Gamma3) {
            data.g_d.at(phys)
        } else {
            data.g_wall.as_ref().map_or([0.0; 2], |g| g.at(phys))
        }
    })
}

/// Matrix of the weighted Dirichlet energy `∫ tr(∇u A_q ∇vᵀ)`.
pub fn energy_matrix<P: Profile + ?Sized>(q: &P, space: &TaylorHoodSpace) -> Result<CsrMatrix> {
    let kernel = |x: [f64; 2]| -> Result<PointCoefficients> {
        Ok(PointCoefficients {
            diffusion: map_quantities(q, x)?.a,
            ..Default::default()
        })
    };
    Ok(assemble(space, &kernel, space.execution())?.a)
}

/// `max_k |(B u)_k|` with `B` the divergence block.
pub fn divergence_residual(system: &SparseSystem, velocity: &[f64]) -> f64 {
    system.b.matvec(velocity).iter().fold(0.0, |m, v| m.max(v.abs()))
}

static SOLVES: AtomicUsize = AtomicUsize::new(0);
static WORST_DIVERGENCE: AtomicU64 = AtomicU64::new(0);

/// State solves performed by this process and the largest
/// `max|B u_h| / ‖u_h‖` among them.
pub fn divergence_record() -> (usize, f64) {
    (
        SOLVES.load(Ordering::Relaxed),
        f64::from_bits(WORST_DIVERGENCE.load(Ordering::Relaxed)),
    )
}

fn solve_profile<P: Profile + ?Sized>(
    q: &P,
    data: &ProblemData,
    space: &TaylorHoodSpace,
) -> Result<(MixedField, SolveDiagnostics, f64, Arc<SaddleSolver>)> {
    let sys = assemble_state(q, data, space)?;
    let lift = state_lifting(q, data, space);
    let solver = SaddleSolver::factor(&sys, space.constrained())?;
    let (field, diag) = solver.solve(&sys.f, &sys.g, &lift)?;
    let div = divergence_residual(&sys, &field.velocity);
    let ratio = div / norm(&field.velocity).max(f64::MIN_POSITIVE);
    SOLVES.fetch_add(1, Ordering::Relaxed);
    WORST_DIVERGENCE.fetch_max(ratio.to_bits(), Ordering::Relaxed);
    if ratio > DIVERGENCE_TOLERANCE {
        return Err(Error::Singular(format!("divergence identity violated by {div:.3e}")));
    }
    log::debug!(
        "state solve: residual {:.2e}, divergence {:.2e}",
        diag.relative_residual,
        div
    );
    Ok((field, diag, div, Arc::new(solver)))
}

pub fn solve_state(q: &ControlFunction, data: &ProblemData, space: &TaylorHoodSpace) -> Result<StateSolution> {
    let (field, diagnostics, divergence_residual, solver) = solve_profile(q, data, space)?;
    Ok(StateSolution {
        field,
        control: q.clone(),
        diagnostics,
        divergence_residual,
        solver,
        energy: Arc::new(OnceLock::new()),
    })
}

/// State for a closed-form control, e.g. the tracking target.
pub fn solve_state_profile<P: Profile + ?Sized>(
    q: &P,
    data: &ProblemData,
    space: &TaylorHoodSpace,
) -> Result<MixedField> {
    Ok(solve_profile(q, data, space)?.0)
}

/// Discrete inf-sup constant of `b(q)` in the `H¹₀ × L²` metric: square
/// root of the smallest eigenvalue of `M_p⁻¹ B K⁻¹ Bᵀ`.
pub fn estimate_infsup<P: Profile + ?Sized>(q: &P, space: &TaylorHoodSpace) -> Result<f64> {
    let exec = space.execution();
    let coupling = |x: [f64; 2]| -> Result<PointCoefficients> {
        Ok(PointCoefficients {
            coupling: map_quantities(q, x)?.cof,
            ..Default::default()
        })
    };
    let b = assemble(space, &coupling, exec)?.b;
    let laplace = |_: [f64; 2]| -> Result<PointCoefficients> {
        Ok(PointCoefficients {
            diffusion: Mat2::IDENTITY,
            ..Default::default()
        })
    };
    let constrained = space.constrained();
    let k = assemble(space, &laplace, exec)?.a.eliminate(constrained);
    let lu = SparseLu::factor(&k)?;
    let (nu, np) = (space.velocity_dofs(), space.pressure_dofs());

    const BLOCK: usize = 32;
    let blocks = np.div_ceil(BLOCK);
    let bt = transpose_dense_columns(&b, constrained);
    let solved = map_range(exec, blocks, |blk| {
        let lo = blk * BLOCK;
        let hi = (lo + BLOCK).min(np);
        let mut x = Mat::<f64>::from_fn(nu, hi - lo, |i, j| bt(i, lo + j));
        lu.solve_columns(&mut x);
        x
    });
    let rows = map_range(exec, np, |r| {
        let pat = b.pattern();
        let mut row = vec![0.0; np];
        for (blk, x) in solved.iter().enumerate() {
            for j in 0..x.ncols() {
                row[blk * BLOCK + j] = pat
                    .row(r)
                    .map(|p| b.values()[p] * x[(pat.col_idx[p], j)])
                    .sum();
            }
        }
        row
    });
    let schur = Mat::<f64>::from_fn(np, np, |i, j| 0.5 * (rows[i][j] + rows[j][i]));
    let mass = pressure_mass(space);
    let eig = mass
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let (u, s) = (eig.U(), eig.S());
    let w = Mat::<f64>::from_fn(np, np, |i, j| u[(i, j)] / s[j].sqrt());
    let c = w.transpose() * &schur * &w;
    let c = Mat::<f64>::from_fn(np, np, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let ev = c
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let top = ev.last().copied().unwrap_or(0.0);
    let smallest = ev
        .into_iter()
        .find(|&l| l > 1e-10 * top)
        .ok_or_else(|| Error::Eigen("no positive eigenvalue".into()))?;
    Ok(smallest.sqrt())
}

fn transpose_dense_columns<'a>(b: &'a CsrMatrix, constrained: &'a [bool]) -> impl Fn(usize, usize) -> f64 + Sync + 'a {
    move |i, k| if constrained[i] { 0.0 } else { b.get(k, i) }
}

/// Dense P1 mass matrix.
pub fn pressure_mass(space: &TaylorHoodSpace) -> Mat<f64> {
    let mesh = space.mesh();
    let np = space.pressure_dofs();
    let mut m = Mat::<f64>::zeros(np, np);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        for i in 0..3 {
            for j in 0..3 {
                m[(tri[i], tri[j])] += area / 12.0 * if i == j { 2.0 } else { 1.0 };
            }
        }
    }
    m
}

/// Reference-domain errors `(|u - u_h|_{H¹}, ‖p - p_h‖_{L²})` against an
/// exact pair given as `(u, ∇u)` and `p`.
pub fn reference_errors<U, PF>(space: &TaylorHoodSpace, field: &MixedField, exact_u: U, exact_p: PF) -> Result<(f64, f64)>
where
    U: Fn([f64; 2]) -> ([f64; 2], Mat2) + Sync,
    PF: Fn([f64; 2]) -> f64 + Sync,
{
    let rule = triangle_degree4();
    let parts = map_range(space.execution(), space.elements(), |t| -> Result<(f64, f64)> {
        let geo = space.element_geometry(t)?;
        let mut acc = (0.0, 0.0);
        for qp in &rule {
            let x = geo.point(qp.s, qp.t);
            let (_, gh) = space.eval_velocity(&field.velocity, t, &geo, qp.s, qp.t);
            let ph = space.eval_pressure(&field.pressure, t, qp.s, qp.t);
            let (_, g) = exact_u(x);
            let d = g - gh;
            let w = qp.weight * geo.det;
            acc.0 += w * d.ddot(&d);
            acc.1 += w * (exact_p(x) - ph).powi(2);
        }
        Ok(acc)
    });
    let mut h1 = 0.0;
    let mut l2 = 0.0;
    for p in parts {
        let (a, b) = p?;
        h1 += a;
        l2 += b;
    }
    Ok((h1.sqrt(), l2.sqrt()))
}

/// Weighted Dirichlet energy `∫ tr(∇u A_q ∇uᵀ)` of a velocity field.
pub fn reference_energy<P: Profile + ?Sized>(q: &P, space: &TaylorHoodSpace, velocity: &[f64]) -> Result<f64> {
    let rule = triangle_degree4();
    let parts = map_range(space.execution(), space.elements(), |t| -> Result<f64> {
        let geo = space.element_geometry(t)?;
        let mut acc = 0.0;
        for qp in &rule {
            let x = geo.point(qp.s, qp.t);
            let a = map_quantities(q, x)?.a;
            let (_, g) = space.eval_velocity(velocity, t, &geo, qp.s, qp.t);
            acc += qp.weight * geo.det * Mat2::weighted_inner(&g, &a, &g);
        }
        Ok(acc)
    });
    parts.into_iter().sum()
}

/// Volume flux `∫ u_x dy` through the vertical line `x = x0` (reference
/// coordinates).
pub fn vertical_flux(space: &TaylorHoodSpace, velocity: &[f64], x0: f64) -> Result<f64> {
    let n = 4 * space.mesh().n();
    let rule = crate::quadrature::gauss_line(4);
    let per = (0..n)
        .map(|k| -> Result<f64> {
            let mut acc = 0.0;
            for gp in &rule {
                let y = (k as f64 + gp.t) / n as f64;
                acc += gp.weight * space.eval_velocity_at(velocity, [x0, y])?.0[0] / n as f64;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sum_range(crate::par::Execution::Sequential, per.len(), |i| per[i]))
}

/// CSV `x,y,ux,uy,p` at mesh vertices; coordinates are mapped to the
/// physical domain when `physical` is given.
pub fn write_solution_csv(
    space: &TaylorHoodSpace,
    field: &MixedField,
    physical: Option<&dyn Profile>,
    path: &Path,
) -> Result<()> {
    let nodes = space.scalar_nodes();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "ux", "uy", "p"])?;
    for (i, &v) in space.mesh().vertices().iter().enumerate() {
        let p = physical.map_or(v, |q| map_forward(q, v));
        w.write_record(
            [p[0], p[1], field.velocity[i], field.velocity[nodes + i], field.pressure[i]].map(|x| format!("{x:.17e}")),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Solve diagnostics as a small JSON document.
pub fn write_diagnostics(state: &StateSolution, path: &Path) -> Result<()> {
    let doc = serde_json::json!({
        "relative_residual": state.diagnostics.relative_residual,
        "refinements": state.diagnostics.refinements,
        "divergence_residual": state.divergence_residual,
        "velocity_dofs": state.field.velocity.len(),
        "pressure_dofs": state.field.pressure.len(),
    });
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}
