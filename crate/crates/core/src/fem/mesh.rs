use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary part of the reference square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryTag {
    /// Controlled lower boundary (pulled back `Γ_q`).
    Gamma0,
    /// Outflow, natural (Neumann) condition.
    Gamma1,
    /// Symmetry line, `u_y = 0`.
    Gamma2,
    /// Inflow, Dirichlet profile.
    Gamma3,
}

impl BoundaryTag {
    pub fn index(self) -> usize {
        match self {
            BoundaryTag::Gamma0 => 0,
            BoundaryTag::Gamma1 => 1,
            BoundaryTag::Gamma2 => 2,
            BoundaryTag::Gamma3 => 3,
        }
    }
}

/// Which tag each side of the unit square carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideTags {
    pub bottom: BoundaryTag,
    pub right: BoundaryTag,
    pub top: BoundaryTag,
    pub left: BoundaryTag,
}

impl Default for SideTags {
    fn default() -> Self {
        Self {
            bottom: BoundaryTag::Gamma0,
            right: BoundaryTag::Gamma1,
            top: BoundaryTag::Gamma2,
            left: BoundaryTag::Gamma3,
        }
    }
}

/// Boundary edge with its tag and the unique adjacent triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub edge: usize,
    pub tag: BoundaryTag,
    pub triangle: usize,
    /// Local edge number (0, 1, 2) inside `triangle`.
    pub local: usize,
}

/// Uniform triangulation of the unit square: `n × n` squares, each cut
/// along its lower-left to upper-right diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    n: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Vertex pairs, sorted ascending.
    edges: Vec<[usize; 2]>,
    /// Local edge `k` of a triangle joins local vertices `k` and `(k+1) % 3`.
    triangle_edges: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    sides: SideTags,
}

impl Mesh {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_sides(n, SideTags::default())
    }

    pub fn with_sides(n: usize, sides: SideTags) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidMesh(format!("need n >= 2 subdivisions, got {n}")));
        }
        let stride = n + 1;
        let vid = |i: usize, j: usize| j * stride + i;
        let mut vertices = Vec::with_capacity(stride * stride);
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }

        let mut edge_list: Vec<([usize; 2], usize, usize)> = Vec::with_capacity(6 * n * n);
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_list.push(([a.min(b), a.max(b)], t, k));
            }
        }
        edge_list.sort_unstable();
        let mut edges: Vec<[usize; 2]> = Vec::with_capacity(3 * n * n + 2 * n);
        let mut triangle_edges = vec![[usize::MAX; 3]; triangles.len()];
        let mut occurrences: Vec<(usize, usize, usize)> = Vec::new();
        let mut i = 0;
        while i < edge_list.len() {
            let key = edge_list[i].0;
            let id = edges.len();
            edges.push(key);
            let mut count = 0;
            let mut last = (0, 0);
            while i < edge_list.len() && edge_list[i].0 == key {
                let (_, t, k) = edge_list[i];
                triangle_edges[t][k] = id;
                last = (t, k);
                count += 1;
                i += 1;
            }
            if count == 1 {
                occurrences.push((id, last.0, last.1));
            }
        }

        let mut boundary = Vec::with_capacity(4 * n);
        for (edge, triangle, local) in occurrences {
            let [a, b] = edges[edge];
            let (pa, pb) = (vertices[a], vertices[b]);
            let tag = if pa[1] == 0.0 && pb[1] == 0.0 {
                sides.bottom
            } else if pa[0] == 1.0 && pb[0] == 1.0 {
                sides.right
            } else if pa[1] == 1.0 && pb[1] == 1.0 {
                sides.top
            } else if pa[0] == 0.0 && pb[0] == 0.0 {
                sides.left
            } else {
                return Err(Error::InvalidMesh(format!("interior edge {edge} has one triangle")));
            };
            boundary.push(BoundaryEdge {
                edge,
                tag,
                triangle,
                local,
            });
        }

        let mesh = Self {
            n,
            vertices,
            triangles,
            edges,
            triangle_edges,
            boundary,
            sides,
        };
        for t in 0..mesh.triangles.len() {
            if mesh.triangle_area(t) <= 0.0 {
                return Err(Error::SingularElement(t));
            }
        }
        Ok(mesh)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Maximum element diameter, `√2 / n`.
    pub fn h(&self) -> f64 {
        std::f64::consts::SQRT_2 / self.n as f64
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    pub fn boundary(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn sides(&self) -> SideTags {
        self.sides
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Boundary edges carrying `tag`, ordered along the side.
    pub fn boundary_edges(&self, tag: BoundaryTag) -> Vec<BoundaryEdge> {
        let mut out: Vec<BoundaryEdge> = self.boundary.iter().copied().filter(|b| b.tag == tag).collect();
        out.sort_by(|a, b| {
            let ma = self.edge_midpoint(a.edge);
            let mb = self.edge_midpoint(b.edge);
            (ma[0] + ma[1]).partial_cmp(&(mb[0] + mb[1])).unwrap()
        });
        out
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e].map(|v| self.vertices[v]);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Index of the triangle containing reference point `p` (ties resolved
    /// toward the lower-left square).
    pub fn locate(&self, p: [f64; 2]) -> usize {
        let n = self.n;
        let nf = n as f64;
        let i = ((p[0] * nf).floor() as usize).min(n - 1);
        let j = ((p[1] * nf).floor() as usize).min(n - 1);
        let (lx, ly) = (p[0] * nf - i as f64, p[1] * nf - j as f64);
        let base = 2 * (j * n + i);
        if ly <= lx {
            base
        } else {
            base + 1
        }
    }

    /// Plain-text dump: vertices, triangles and tagged boundary edges.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e}", v[0], v[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "boundary {}", self.boundary.len());
        for b in &self.boundary {
            let [v0, v1] = self.edges[b.edge];
            let _ = writeln!(s, "{} {} {:?}", v0, v1, b.tag);
        }
        s
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
