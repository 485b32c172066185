use serde::{Deserialize, Serialize};

use std::sync::Arc;

use super::assembly::PatternCell;
use super::mesh::{BoundaryTag, Mesh};
use crate::error::{Error, Result};
use crate::geometry::Mat2;
use crate::par::Execution;

/// Velocity components constrained on one boundary part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VelocityConstraint {
    pub tag: BoundaryTag,
    pub components: [bool; 2],
}

/// Essential boundary conditions for the velocity. Pressure is never
/// constrained: the natural outflow condition fixes its level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub constraints: Vec<VelocityConstraint>,
}

impl Default for BoundaryConditions {
    /// No-slip on `Γ0`, inflow on `Γ3`, `u_y = 0` on `Γ2`, free outflow `Γ1`.
    fn default() -> Self {
        Self {
            constraints: vec![
                VelocityConstraint {
                    tag: BoundaryTag::Gamma0,
                    components: [true, true],
                },
                VelocityConstraint {
                    tag: BoundaryTag::Gamma3,
                    components: [true, true],
                },
                VelocityConstraint {
                    tag: BoundaryTag::Gamma2,
                    components: [false, true],
                },
            ],
        }
    }
}

/// Affine element data: vertex coordinates and the inverse-transpose
/// Jacobian of the map from the reference triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub origin: [f64; 2],
    pub jac: Mat2,
    pub jac_inv_t: Mat2,
    pub det: f64,
}

impl ElementGeometry {
    pub fn new(v: [[f64; 2]; 3]) -> Option<Self> {
        let jac = Mat2::new(v[1][0] - v[0][0], v[2][0] - v[0][0], v[1][1] - v[0][1], v[2][1] - v[0][1]);
        let det = jac.det();
        if det <= 0.0 {
            return None;
        }
        Some(Self {
            origin: v[0],
            jac,
            jac_inv_t: jac.inverse()?.transpose(),
            det,
        })
    }

    pub fn point(&self, s: f64, t: f64) -> [f64; 2] {
        let d = self.jac.mul_vec([s, t]);
        [self.origin[0] + d[0], self.origin[1] + d[1]]
    }

    /// Reference coordinates of a physical point.
    pub fn local(&self, p: [f64; 2]) -> [f64; 2] {
        let inv = self.jac_inv_t.transpose();
        inv.mul_vec([p[0] - self.origin[0], p[1] - self.origin[1]])
    }

    /// P2 gradients in physical coordinates.
    pub fn p2_gradients(&self, s: f64, t: f64) -> [[f64; 2]; 6] {
        p2_reference_gradients(s, t).map(|g| self.jac_inv_t.mul_vec(g))
    }

    /// P1 (barycentric) gradients in physical coordinates.
    pub fn p1_gradients(&self) -> [[f64; 2]; 3] {
        [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]].map(|g| self.jac_inv_t.mul_vec(g))
    }
}

/// P2 shape functions: vertices 0..3 then midpoints of local edges
/// (0,1), (1,2), (2,0).
pub fn p2_values(s: f64, t: f64) -> [f64; 6] {
    let l = [1.0 - s - t, s, t];
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

pub fn p2_reference_gradients(s: f64, t: f64) -> [[f64; 2]; 6] {
    let l = [1.0 - s - t, s, t];
    let g: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let vert = |i: usize| {
        let c = 4.0 * l[i] - 1.0;
        [c * g[i][0], c * g[i][1]]
    };
    let edge = |i: usize, j: usize| {
        [
            4.0 * (l[i] * g[j][0] + l[j] * g[i][0]),
            4.0 * (l[i] * g[j][1] + l[j] * g[i][1]),
        ]
    };
    [vert(0), vert(1), vert(2), edge(0, 1), edge(1, 2), edge(2, 0)]
}

pub fn p1_values(s: f64, t: f64) -> [f64; 3] {
    [1.0 - s - t, s, t]
}

/// Taylor-Hood P2/P1 space on a [`Mesh`].
///
/// Scalar P2 nodes are numbered vertices first, then edge midpoints.
/// Velocity dof `c·n_nodes + node` is component `c` at `node`; pressure
/// dofs are vertices.
#[derive(Debug, Clone)]
pub struct TaylorHoodSpace {
    mesh: Mesh,
    bc: BoundaryConditions,
    node_coords: Vec<[f64; 2]>,
    node_tags: Vec<u8>,
    constrained: Vec<bool>,
    element_nodes: Vec<[usize; 6]>,
    pattern: Arc<PatternCell>,
    exec: Execution,
}

impl TaylorHoodSpace {
    pub fn new(mesh: Mesh, bc: BoundaryConditions) -> Result<Self> {
        let nv = mesh.vertices().len();
        let ne = mesh.edges().len();
        let mut node_coords = mesh.vertices().to_vec();
        node_coords.extend((0..ne).map(|e| mesh.edge_midpoint(e)));
        let mut node_tags = vec![0u8; nv + ne];
        for b in mesh.boundary() {
            let bit = 1u8 << b.tag.index();
            let [v0, v1] = mesh.edges()[b.edge];
            node_tags[v0] |= bit;
            node_tags[v1] |= bit;
            node_tags[nv + b.edge] |= bit;
        }
        let nodes = nv + ne;
        let mut constrained = vec![false; 2 * nodes];
        for c in &bc.constraints {
            let bit = 1u8 << c.tag.index();
            for (node, tags) in node_tags.iter().enumerate() {
                if tags & bit != 0 {
                    for comp in 0..2 {
                        if c.components[comp] {
                            constrained[comp * nodes + node] = true;
                        }
                    }
                }
            }
        }
        let element_nodes = mesh
            .triangles()
            .iter()
            .zip(mesh.triangle_edges())
            .map(|(t, e)| [t[0], t[1], t[2], nv + e[0], nv + e[1], nv + e[2]])
            .collect();
        for t in 0..mesh.triangles().len() {
            if mesh.triangle_area(t) <= 0.0 {
                return Err(Error::SingularElement(t));
            }
        }
        Ok(Self {
            mesh,
            bc,
            node_coords,
            node_tags,
            constrained,
            element_nodes,
            pattern: Arc::new(PatternCell::new()),
            exec: Execution::default(),
        })
    }

    pub fn with_defaults(n: usize) -> Result<Self> {
        Self::new(Mesh::new(n)?, BoundaryConditions::default())
    }

    /// Same space with a different assembly strategy.
    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn boundary_conditions(&self) -> &BoundaryConditions {
        &self.bc
    }

    /// Number of scalar P2 nodes.
    pub fn scalar_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn velocity_dofs(&self) -> usize {
        2 * self.node_coords.len()
    }

    pub fn pressure_dofs(&self) -> usize {
        self.mesh.vertices().len()
    }

    pub fn node_coords(&self) -> &[[f64; 2]] {
        &self.node_coords
    }

    pub fn node_has_tag(&self, node: usize, tag: BoundaryTag) -> bool {
        self.node_tags[node] & (1 << tag.index()) != 0
    }

    /// Per-velocity-dof constraint flags.
    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    pub fn free_velocity_dofs(&self) -> usize {
        self.constrained.iter().filter(|c| !**c).count()
    }

    pub(crate) fn pattern_cell(&self) -> &PatternCell {
        &self.pattern
    }

    pub fn element_nodes(&self, t: usize) -> [usize; 6] {
        self.element_nodes[t]
    }

    pub fn elements(&self) -> usize {
        self.element_nodes.len()
    }

    pub fn element_geometry(&self, t: usize) -> Result<ElementGeometry> {
        let v = self.mesh.triangles()[t].map(|i| self.mesh.vertices()[i]);
        ElementGeometry::new(v).ok_or(Error::SingularElement(t))
    }

    /// Nodal lifting: `g(node, point)` at every constrained dof, 0 elsewhere.
    pub fn lifting<G>(&self, g: G) -> Vec<f64>
    where
        G: Fn(usize, [f64; 2]) -> [f64; 2],
    {
        let nodes = self.scalar_nodes();
        let mut out = vec![0.0; 2 * nodes];
        for node in 0..nodes {
            let (cx, cy) = (self.constrained[node], self.constrained[nodes + node]);
            if cx || cy {
                let v = g(node, self.node_coords[node]);
                if cx {
                    out[node] = v[0];
                }
                if cy {
                    out[nodes + node] = v[1];
                }
            }
        }
        out
    }

    /// Velocity value and gradient (`∂_j u_i` in row `i`) of a coefficient
    /// vector at local coordinates of element `t`.
    pub fn eval_velocity(
        &self,
        field: &[f64],
        t: usize,
        geo: &ElementGeometry,
        s: f64,
        r: f64,
    ) -> ([f64; 2], Mat2) {
        let nodes = self.scalar_nodes();
        let phi = p2_values(s, r);
        let grad = geo.p2_gradients(s, r);
        let ids = self.element_nodes[t];
        let mut u = [0.0; 2];
        let mut g = Mat2::ZERO;
        for k in 0..6 {
            for c in 0..2 {
                let coef = field[c * nodes + ids[k]];
                u[c] += coef * phi[k];
                g.0[c][0] += coef * grad[k][0];
                g.0[c][1] += coef * grad[k][1];
            }
        }
        (u, g)
    }

    pub fn eval_pressure(&self, field: &[f64], t: usize, s: f64, r: f64) -> f64 {
        let ids = self.mesh.triangles()[t];
        let phi = p1_values(s, r);
        (0..3).map(|k| field[ids[k]] * phi[k]).sum()
    }

    /// Velocity and gradient at an arbitrary reference point.
    pub fn eval_velocity_at(&self, field: &[f64], p: [f64; 2]) -> Result<([f64; 2], Mat2)> {
        let t = self.mesh.locate(p);
        let geo = self.element_geometry(t)?;
        let [s, r] = geo.local(p);
        Ok(self.eval_velocity(field, t, &geo, s, r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_is_nodal() {
        let nodes = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]];
        for (i, n) in nodes.iter().enumerate() {
            let v = p2_values(n[0], n[1]);
            for (j, val) in v.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((val - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn p2_gradients_match_differences() {
        let h = 1e-6;
        let (s, t) = (0.23, 0.41);
        let g = p2_reference_gradients(s, t);
        for k in 0..6 {
            let ds = (p2_values(s + h, t)[k] - p2_values(s - h, t)[k]) / (2.0 * h);
            let dt = (p2_values(s, t + h)[k] - p2_values(s, t - h)[k]) / (2.0 * h);
            assert!((ds - g[k][0]).abs() < 1e-8 && (dt - g[k][1]).abs() < 1e-8);
        }
    }

    #[test]
    fn dof_counts() {
        let s = TaylorHoodSpace::with_defaults(2).unwrap();
        assert_eq!(s.pressure_dofs(), 9);
        assert_eq!(s.velocity_dofs(), 2 * (9 + 16));
        assert!(s.free_velocity_dofs() < s.velocity_dofs());
    }

    #[test]
    fn constraints_follow_tags() {
        let s = TaylorHoodSpace::with_defaults(4).unwrap();
        let nodes = s.scalar_nodes();
        for (node, p) in s.node_coords().iter().enumerate() {
            let cx = s.constrained()[node];
            let cy = s.constrained()[nodes + node];
            let bottom_or_left = p[1] == 0.0 || p[0] == 0.0;
            assert_eq!(cx, bottom_or_left, "x at {p:?}");
            assert_eq!(cy, bottom_or_left || p[1] == 1.0, "y at {p:?}");
        }
    }

    #[test]
    fn zero_lifting_is_zero() {
        let s = TaylorHoodSpace::with_defaults(3).unwrap();
        assert!(s.lifting(|_, _| [0.0, 0.0]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn velocity_evaluation_reproduces_quadratics() {
        let s = TaylorHoodSpace::with_defaults(3).unwrap();
        let f = |p: [f64; 2]| [p[0] * p[1] + p[1] * p[1], 2.0 * p[0] * p[0] - p[1]];
        let nodes = s.scalar_nodes();
        let mut field = vec![0.0; 2 * nodes];
        for (i, p) in s.node_coords().iter().enumerate() {
            let v = f(*p);
            field[i] = v[0];
            field[nodes + i] = v[1];
        }
        let p = [0.37, 0.61];
        let (u, g) = s.eval_velocity_at(&field, p).unwrap();
        let e = f(p);
        assert!((u[0] - e[0]).abs() < 1e-13 && (u[1] - e[1]).abs() < 1e-13);
        let expect = Mat2::new(p[1], p[0] + 2.0 * p[1], 4.0 * p[0], -1.0);
        assert!((g - expect).norm() < 1e-12);
    }
}
