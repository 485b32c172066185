//! Generic Taylor-Hood assembly driven by pointwise coefficient kernels.
//!
//! Every form in the toolkit (state, adjoint, first and second control
//! variations) has the shape
//!
//! ```text
//! ∫ m u·v + tr(∇u D ∇vᵀ)      velocity-velocity
//! -∫ π ∇v : C                 pressure-velocity
//! ∫ f·v                       load
//! ```
//!
//! with `(m, D, C, f)` supplied by a [`FormKernel`] at each quadrature point.

use std::sync::{Arc, OnceLock};

use super::solver::SaddleLayout;
use super::space::{p1_values, p2_values, TaylorHoodSpace};
use super::sparse::{CsrMatrix, CsrPattern};
use crate::error::Result;
use crate::fem::mesh::BoundaryTag;
use crate::geometry::Mat2;
use crate::par::{map_range, Execution};
use crate::quadrature::{gauss_line, triangle_degree4};

/// Coefficients of a form at one quadrature point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointCoefficients {
    pub mass: f64,
    pub diffusion: Mat2,
    pub coupling: Mat2,
    pub force: [f64; 2],
}

impl std::ops::Add for PointCoefficients {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            mass: self.mass + o.mass,
            diffusion: self.diffusion + o.diffusion,
            coupling: self.coupling + o.coupling,
            force: [self.force[0] + o.force[0], self.force[1] + o.force[1]],
        }
    }
}

/// Pointwise coefficients at a reference-domain point.
pub trait FormKernel: Sync {
    fn at(&self, point: [f64; 2]) -> Result<PointCoefficients>;
}

impl<F> FormKernel for F
where
    F: Fn([f64; 2]) -> Result<PointCoefficients> + Sync,
{
    fn at(&self, point: [f64; 2]) -> Result<PointCoefficients> {
        self(point)
    }
}

/// Block system `[A Bᵀ; B 0] (u, p) = (f, g)` before boundary conditions.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    layout: Arc<SaddleLayout>,
}

impl SparseSystem {
    /// Wraps arbitrary blocks, computing a fresh saddle layout.
    pub fn new(a: CsrMatrix, b: CsrMatrix, f: Vec<f64>, g: Vec<f64>) -> Self {
        let layout = Arc::new(SaddleLayout::new(a.pattern(), b.pattern()));
        Self { a, b, f, g, layout }
    }

    pub fn layout(&self) -> &Arc<SaddleLayout> {
        &self.layout
    }

    pub fn velocity_dofs(&self) -> usize {
        self.a.nrows()
    }

    pub fn pressure_dofs(&self) -> usize {
        self.b.nrows()
    }
}

/// Sparsity patterns and element scatter maps of a space, built once.
#[derive(Debug)]
pub struct SystemPattern {
    a: Arc<CsrPattern>,
    b: Arc<CsrPattern>,
    /// Per element: component `c`, test `i`, trial `j` at `c·36 + i·6 + j`.
    elem_a: Vec<[u32; 72]>,
    /// Per element: pressure `k`, velocity local dof `c·6 + j` at `k·12 + c·6 + j`.
    elem_b: Vec<[u32; 36]>,
    layout: Arc<SaddleLayout>,
}

impl SystemPattern {
    fn build(space: &TaylorHoodSpace) -> Self {
        let nodes = space.scalar_nodes();
        let nu = 2 * nodes;
        let np = space.pressure_dofs();
        let tris = space.mesh().triangles();
        let mut a_rows = vec![Vec::new(); nu];
        let mut b_rows = vec![Vec::new(); np];
        for t in 0..space.elements() {
            let ids = space.element_nodes(t);
            for c in 0..2 {
                for &i in &ids {
                    for &j in &ids {
                        a_rows[c * nodes + i].push(c * nodes + j);
                    }
                }
            }
            for &k in &tris[t] {
                for c in 0..2 {
                    for &j in &ids {
                        b_rows[k].push(c * nodes + j);
                    }
                }
            }
        }
        let a = Arc::new(CsrPattern::from_rows(nu, a_rows));
        let b = Arc::new(CsrPattern::from_rows(nu, b_rows));
        let mut elem_a = Vec::with_capacity(space.elements());
        let mut elem_b = Vec::with_capacity(space.elements());
        for t in 0..space.elements() {
            let ids = space.element_nodes(t);
            let mut ea = [0u32; 72];
            for c in 0..2 {
                for i in 0..6 {
                    for j in 0..6 {
                        let p = a.position(c * nodes + ids[i], c * nodes + ids[j]).unwrap();
                        ea[c * 36 + i * 6 + j] = p as u32;
                    }
                }
            }
            let mut eb = [0u32; 36];
            for (k, &pk) in tris[t].iter().enumerate() {
                for c in 0..2 {
                    for j in 0..6 {
                        let p = b.position(pk, c * nodes + ids[j]).unwrap();
                        eb[k * 12 + c * 6 + j] = p as u32;
                    }
                }
            }
            elem_a.push(ea);
            elem_b.push(eb);
        }
        let layout = Arc::new(SaddleLayout::new(&a, &b));
        Self {
            a,
            b,
            elem_a,
            elem_b,
            layout,
        }
    }
}

impl TaylorHoodSpace {
    pub(crate) fn pattern(&self) -> &SystemPattern {
        static_pattern(self)
    }
}

fn static_pattern(space: &TaylorHoodSpace) -> &SystemPattern {
    space.pattern_cell().get_or_init(|| SystemPattern::build(space))
}

/// Cache slot stored on the space.
pub type PatternCell = OnceLock<SystemPattern>;

struct ElementContribution {
    a: [[[f64; 6]; 6]; 2],
    b: [[f64; 12]; 3],
    f: [f64; 12],
}

/// Assembles all blocks of the form described by `kernel` with the
/// degree-4 triangle rule.
pub fn assemble<K: FormKernel + ?Sized>(
    space: &TaylorHoodSpace,
    kernel: &K,
    exec: Execution,
) -> Result<SparseSystem> {
    let pattern = space.pattern();
    let rule = triangle_degree4();
    let locals = map_range(exec, space.elements(), |t| -> Result<ElementContribution> {
        let geo = space.element_geometry(t)?;
        let mut out = ElementContribution {
            a: [[[0.0; 6]; 6]; 2],
            b: [[0.0; 12]; 3],
            f: [0.0; 12],
        };
        for qp in &rule {
            let w = qp.weight * geo.det;
            let x = geo.point(qp.s, qp.t);
            let k = kernel.at(x)?;
            let phi = p2_values(qp.s, qp.t);
            let grad = geo.p2_gradients(qp.s, qp.t);
            let psi = p1_values(qp.s, qp.t);
            let dgrad: [[f64; 2]; 6] = grad.map(|g| k.diffusion.mul_vec(g));
            // Row = test function i, column = trial function j.
            for i in 0..6 {
                for j in 0..6 {
                    let stiff = grad[j][0] * dgrad[i][0] + grad[j][1] * dgrad[i][1];
                    out.a[0][i][j] += w * (k.mass * phi[i] * phi[j] + stiff);
                }
            }
            let cg: [[f64; 2]; 6] = grad.map(|g| k.coupling.mul_vec(g));
            for kk in 0..3 {
                for c in 0..2 {
                    for j in 0..6 {
                        out.b[kk][c * 6 + j] -= w * psi[kk] * cg[j][c];
                    }
                }
            }
            for c in 0..2 {
                for j in 0..6 {
                    out.f[c * 6 + j] += w * k.force[c] * phi[j];
                }
            }
        }
        out.a[1] = out.a[0];
        Ok(out)
    });

    let mut a = CsrMatrix::zeros(pattern.a.clone());
    let mut b = CsrMatrix::zeros(pattern.b.clone());
    let nodes = space.scalar_nodes();
    let mut f = vec![0.0; 2 * nodes];
    for (t, local) in locals.into_iter().enumerate() {
        let local = local?;
        let ea = &pattern.elem_a[t];
        let av = a.values_mut();
        for c in 0..2 {
            for i in 0..6 {
                for j in 0..6 {
                    av[ea[c * 36 + i * 6 + j] as usize] += local.a[c][i][j];
                }
            }
        }
        let eb = &pattern.elem_b[t];
        let bv = b.values_mut();
        for (p, val) in eb.iter().zip(local.b.iter().flatten()) {
            bv[*p as usize] += val;
        }
        let ids = space.element_nodes(t);
        for c in 0..2 {
            for j in 0..6 {
                f[c * nodes + ids[j]] += local.f[c * 6 + j];
            }
        }
    }
    let g = vec![0.0; space.pressure_dofs()];
    Ok(SparseSystem {
        a,
        b,
        f,
        g,
        layout: pattern.layout.clone(),
    })
}

/// `∫_{tag} g·v` over boundary edges for every velocity dof (3-point Gauss).
pub fn boundary_load<G>(space: &TaylorHoodSpace, tag: BoundaryTag, g: G) -> Vec<f64>
where
    G: Fn([f64; 2]) -> [f64; 2],
{
    let nodes = space.scalar_nodes();
    let mut out = vec![0.0; 2 * nodes];
    let scalar = boundary_scalar_load(space, tag, |p| g(p)[0]);
    let scalar_y = boundary_scalar_load(space, tag, |p| g(p)[1]);
    out[..nodes].copy_from_slice(&scalar);
    out[nodes..].copy_from_slice(&scalar_y);
    out
}

/// `∫_{tag} g w` for every scalar P2 basis function `w`.
pub fn boundary_scalar_load<G>(space: &TaylorHoodSpace, tag: BoundaryTag, g: G) -> Vec<f64>
where
    G: Fn([f64; 2]) -> f64,
{
    let mesh = space.mesh();
    let nv = mesh.vertices().len();
    let mut out = vec![0.0; space.scalar_nodes()];
    let rule = gauss_line(3);
    for be in mesh.boundary_edges(tag) {
        let [v0, v1] = mesh.edges()[be.edge];
        let (p0, p1) = (mesh.vertices()[v0], mesh.vertices()[v1]);
        let len = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt();
        for gp in &rule {
            let t = gp.t;
            let p = [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])];
            let val = g(p) * gp.weight * len;
            // 1D quadratic Lagrange basis on the edge.
            out[v0] += val * (1.0 - t) * (1.0 - 2.0 * t);
            out[v1] += val * t * (2.0 * t - 1.0);
            out[nv + be.edge] += val * 4.0 * t * (1.0 - t);
        }
    }
    out
}

/// Scalar P2 matrix `∫ m w z + k ∇w·∇z` (constant coefficients).
pub fn assemble_scalar(space: &TaylorHoodSpace, mass: f64, stiffness: f64) -> Result<CsrMatrix> {
    let pattern = space.pattern();
    let nodes = space.scalar_nodes();
    // Reuse the x-component block of the velocity pattern.
    let mut rows = vec![Vec::new(); nodes];
    for (i, row) in rows.iter_mut().enumerate() {
        row.extend(pattern.a.row(i).map(|p| pattern.a.col_idx[p]));
    }
    let scalar = Arc::new(CsrPattern::from_rows(nodes, rows));
    let mut m = CsrMatrix::zeros(scalar);
    let rule = triangle_degree4();
    for t in 0..space.elements() {
        let geo = space.element_geometry(t)?;
        let ids = space.element_nodes(t);
        let mut local = [[0.0; 6]; 6];
        for qp in &rule {
            let w = qp.weight * geo.det;
            let phi = p2_values(qp.s, qp.t);
            let grad = geo.p2_gradients(qp.s, qp.t);
            for i in 0..6 {
                for j in 0..6 {
                    local[i][j] += w
                        * (mass * phi[i] * phi[j]
                            + stiffness * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]));
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                let p = m.pattern().position(ids[i], ids[j]).unwrap();
                m.values_mut()[p] += local[i][j];
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mass_kernel(_: [f64; 2]) -> Result<PointCoefficients> {
        Ok(PointCoefficients {
            mass: 1.0,
            ..Default::default()
        })
    }

    #[test]
    fn mass_matrix_integrates_one() {
        let space = TaylorHoodSpace::with_defaults(3).unwrap();
        let sys = assemble(&space, &mass_kernel, Execution::Sequential).unwrap();
        let nodes = space.scalar_nodes();
        let mut ones = vec![0.0; 2 * nodes];
        ones[..nodes].fill(1.0);
        let total: f64 = sys.a.matvec(&ones).iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn constant_field_energy() {
        // η = ν = 1, q = 0: a(u, u) for u = (1, 0) is ∫ η |u|² = 1.
        let space = TaylorHoodSpace::with_defaults(4).unwrap();
        let k = |_: [f64; 2]| -> Result<PointCoefficients> {
            Ok(PointCoefficients {
                mass: 1.0,
                diffusion: Mat2::IDENTITY,
                coupling: Mat2::IDENTITY,
                force: [0.0; 2],
            })
        };
        let sys = assemble(&space, &k, Execution::Sequential).unwrap();
        let nodes = space.scalar_nodes();
        let mut u = vec![0.0; 2 * nodes];
        u[..nodes].fill(1.0);
        assert!((sys.a.bilinear(&u, &u) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn divergence_free_quadratic_is_in_kernel_of_b() {
        // u = (x², -2xy) is divergence free.
        let space = TaylorHoodSpace::with_defaults(3).unwrap();
        let k = |_: [f64; 2]| -> Result<PointCoefficients> {
            Ok(PointCoefficients {
                coupling: Mat2::IDENTITY,
                ..Default::default()
            })
        };
        let sys = assemble(&space, &k, Execution::Sequential).unwrap();
        let nodes = space.scalar_nodes();
        let mut u = vec![0.0; 2 * nodes];
        for (i, p) in space.node_coords().iter().enumerate() {
            u[i] = p[0] * p[0];
            u[nodes + i] = -2.0 * p[0] * p[1];
        }
        let r = sys.b.matvec(&u);
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn assembly_is_linear_in_the_kernel() {
        let space = TaylorHoodSpace::with_defaults(3).unwrap();
        let k1 = |p: [f64; 2]| -> Result<PointCoefficients> {
            Ok(PointCoefficients {
                mass: p[0],
                diffusion: Mat2::new(1.0, p[1], p[1], 2.0),
                coupling: Mat2::new(p[0], 0.0, 1.0, 1.0),
                force: [p[1], 1.0],
            })
        };
        let k2 = |p: [f64; 2]| -> Result<PointCoefficients> {
            Ok(PointCoefficients {
                mass: 1.0 + p[1],
                diffusion: Mat2::new(0.5, 0.0, 0.0, p[0]),
                coupling: Mat2::new(0.0, p[1], 1.0, 0.0),
                force: [0.0, p[0]],
            })
        };
        let sum = |p: [f64; 2]| -> Result<PointCoefficients> { Ok(k1(p)? + k2(p)?) };
        let s1 = assemble(&space, &k1, Execution::Sequential).unwrap();
        let s2 = assemble(&space, &k2, Execution::Parallel).unwrap();
        let s = assemble(&space, &sum, Execution::Parallel).unwrap();
        assert!(s.a.max_abs_diff(&s1.a.axpy(1.0, &s2.a)) < 1e-12);
        assert!(s.b.max_abs_diff(&s1.b.axpy(1.0, &s2.b)) < 1e-12);
        for i in 0..s.f.len() {
            assert!((s.f[i] - s1.f[i] - s2.f[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_load_has_edge_length() {
        let space = TaylorHoodSpace::with_defaults(5).unwrap();
        let r = boundary_scalar_load(&space, BoundaryTag::Gamma1, |_| 1.0);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
