//! Control functions on `I = (0, 1)`: the lower boundary of the flow domain
//! is the graph of `q`, with `q(0) = q(1) = 0`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_line;

/// Lower bound of the inf-sup constant of the unit square, `1/(4√2)`.
pub const INF_SUP_REFERENCE: f64 = 0.176_776_695_296_636_9;

/// Anything that can report `(q, q', q'')` at a coordinate of `I`.
///
/// Nodal [`ControlFunction`]s and closed-form [`AnalyticControl`]s both
/// drive the domain map through this trait.
pub trait Profile: Send + Sync {
    fn jet(&self, x: f64) -> [f64; 3];

    fn value(&self, x: f64) -> f64 {
        self.jet(x)[0]
    }
}

/// Partition `0 = x_0 < x_1 < ... < x_N = 1` of the unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    nodes: Vec<f64>,
    sigma: f64,
}

impl ControlGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidGrid("need at least two nodes".into()));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(Error::InvalidGrid("endpoints must be 0 and 1".into()));
        }
        let mut sigma: f64 = 0.0;
        for w in nodes.windows(2) {
            let gap = w[1] - w[0];
            if gap <= 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "nodes not strictly increasing at {}",
                    w[0]
                )));
            }
            sigma = sigma.max(gap);
        }
        Ok(Self { nodes, sigma })
    }

    /// `cells` equal subintervals.
    pub fn uniform(cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::InvalidGrid("need at least one cell".into()));
        }
        let mut nodes: Vec<f64> = (0..=cells).map(|i| i as f64 / cells as f64).collect();
        nodes[cells] = 1.0;
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Index `i` of the cell `[x_i, x_{i+1}]` containing `x`; the right
    /// endpoint belongs to the last cell.
    pub fn locate(&self, x: f64) -> usize {
        let n = self.cells();
        match self
            .nodes
            .binary_search_by(|probe| probe.partial_cmp(&x).unwrap())
        {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }
}

/// Polynomial degree on each control cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degree {
    #[default]
    Linear,
    Quartic,
}

impl Degree {
    pub fn order(self) -> usize {
        match self {
            Degree::Linear => 1,
            Degree::Quartic => 4,
        }
    }
}

/// Continuous piecewise-polynomial control in nodal Lagrange form.
///
/// For degree `p` there are `p·N + 1` nodal values; cell `i` owns the
/// values `p·i ..= p·i + p` at equispaced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlFunction {
    grid: ControlGrid,
    values: Vec<f64>,
    degree: Degree,
}

impl ControlFunction {
    pub fn zero(grid: ControlGrid, degree: Degree) -> Self {
        let n = degree.order() * grid.cells() + 1;
        Self {
            grid,
            values: vec![0.0; n],
            degree,
        }
    }

    /// Endpoint values are clamped to zero.
    pub fn from_values(grid: ControlGrid, degree: Degree, mut values: Vec<f64>) -> Result<Self> {
        let n = degree.order() * grid.cells() + 1;
        if values.len() != n {
            return Err(Error::Mismatch(format!(
                "expected {n} nodal values, got {}",
                values.len()
            )));
        }
        values[0] = 0.0;
        values[n - 1] = 0.0;
        Ok(Self {
            grid,
            values,
            degree,
        })
    }

    /// Keeps endpoint values, for densities on the control grid.
    ///
    /// # Panics
    /// If the number of values does not match the grid.
    pub fn from_values_unclamped(grid: ControlGrid, degree: Degree, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), degree.order() * grid.cells() + 1);
        Self {
            grid,
            values,
            degree,
        }
    }

    pub fn grid(&self) -> &ControlGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn dofs(&self) -> usize {
        self.values.len()
    }

    /// Coordinates of all Lagrange nodes, aligned with [`values`](Self::values).
    pub fn node_coordinates(&self) -> Vec<f64> {
        lagrange_nodes(&self.grid, self.degree)
    }

    pub fn same_space(&self, other: &ControlFunction) -> bool {
        self.degree == other.degree && self.grid == other.grid
    }

    /// `self + t·other`, endpoints clamped.
    pub fn axpy(&self, t: f64, other: &ControlFunction) -> Result<ControlFunction> {
        if !self.same_space(other) {
            return Err(Error::Mismatch("controls live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + t * b)
            .collect();
        ControlFunction::from_values(self.grid.clone(), self.degree, values)
    }

    pub fn scaled(&self, t: f64) -> ControlFunction {
        let values = self.values.iter().map(|v| t * v).collect();
        ControlFunction::from_values(self.grid.clone(), self.degree, values)
            .expect("same length")
    }

    /// Local basis values and derivatives at `x` in the containing cell.
    /// Returns the first global dof of the cell plus `(φ, φ', φ'')` arrays.
    pub fn local_basis(&self, x: f64) -> (usize, Vec<[f64; 3]>) {
        let cell = self.grid.locate(x);
        let (a, b) = (self.grid.nodes[cell], self.grid.nodes[cell + 1]);
        let p = self.degree.order();
        let len = b - a;
        let t = (x - a) / len;
        let basis = lagrange_basis(p, t)
            .into_iter()
            .map(|[v, d, dd]| [v, d / len, dd / (len * len)])
            .collect();
        (p * cell, basis)
    }

    /// `∫_I q dx`, exact.
    pub fn integral(&self) -> f64 {
        self.integrate(|j| j[0])
    }

    /// `∫_I φ_k dx` for every nodal basis function.
    pub fn basis_integrals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dofs()];
        let rule = gauss_line(5);
        for cell in 0..self.grid.cells() {
            let (a, b) = (self.grid.nodes[cell], self.grid.nodes[cell + 1]);
            for gp in &rule {
                let (first, basis) = self.local_basis(a + gp.t * (b - a));
                for (k, phi) in basis.iter().enumerate() {
                    out[first + k] += gp.weight * (b - a) * phi[0];
                }
            }
        }
        out
    }

    /// Integrates `g(q, q', q'')` cellwise with a 5-point Gauss rule.
    pub fn integrate<G: Fn([f64; 3]) -> f64>(&self, g: G) -> f64 {
        let rule = gauss_line(5);
        let mut acc = 0.0;
        for cell in 0..self.grid.cells() {
            let (a, b) = (self.grid.nodes[cell], self.grid.nodes[cell + 1]);
            for gp in &rule {
                acc += gp.weight * (b - a) * g(self.jet(a + gp.t * (b - a)));
            }
        }
        acc
    }

    /// `∫_I sqrt(1 + q'^2) dx`, the length of the graph of `q`.
    pub fn perimeter(&self) -> f64 {
        self.integrate(|[_, d, _]| (1.0 + d * d).sqrt())
    }

    /// Load vector `∂/∂q_k ∫ sqrt(1 + q'^2)` over the nodal values.
    pub fn perimeter_gradient(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dofs()];
        let rule = gauss_line(5);
        for cell in 0..self.grid.cells() {
            let (a, b) = (self.grid.nodes[cell], self.grid.nodes[cell + 1]);
            for gp in &rule {
                let x = a + gp.t * (b - a);
                let d = self.jet(x)[1];
                let (first, basis) = self.local_basis(x);
                for (k, phi) in basis.iter().enumerate() {
                    out[first + k] += gp.weight * (b - a) * d * phi[1] / (1.0 + d * d).sqrt();
                }
            }
        }
        out
    }

    /// Second derivative `∫ δq' τq' / (1 + q'^2)^{3/2}` of the perimeter.
    pub fn perimeter_hessian(&self, dq: &ControlFunction, tq: &ControlFunction) -> f64 {
        let rule = gauss_line(5);
        let mut acc = 0.0;
        for cell in 0..self.grid.cells() {
            let (a, b) = (self.grid.nodes[cell], self.grid.nodes[cell + 1]);
            for gp in &rule {
                let x = a + gp.t * (b - a);
                let d = self.jet(x)[1];
                acc += gp.weight * (b - a) * dq.jet(x)[1] * tq.jet(x)[1]
                    / (1.0 + d * d).powf(1.5);
            }
        }
        acc
    }

    /// Curvature inner product `(q'', p'')_I`.
    ///
    /// Linear controls have `q''` concentrated at the nodes; it is replaced by
    /// the nodal difference quotient `D2_i = (s_{i+1} - s_i) / m_i` with dual
    /// cell width `m_i = (h_i + h_{i+1})/2`, and the integral by `Σ m_i D2_i²`.
    pub fn curvature_inner(&self, other: &ControlFunction) -> f64 {
        match self.degree {
            Degree::Linear => {
                let a = self.second_differences();
                let b = other.second_differences();
                a.iter().zip(&b).map(|((da, m), (db, _))| m * da * db).sum()
            }
            Degree::Quartic => {
                let rule = gauss_line(5);
                let mut acc = 0.0;
                for cell in 0..self.grid.cells() {
                    let (lo, hi) = (self.grid.nodes[cell], self.grid.nodes[cell + 1]);
                    for gp in &rule {
                        let x = lo + gp.t * (hi - lo);
                        acc += gp.weight * (hi - lo) * self.jet(x)[2] * other.jet(x)[2];
                    }
                }
                acc
            }
        }
    }

    /// `‖q''‖²_{L²(I)}` (difference-quotient proxy for linear controls).
    pub fn curvature_energy(&self) -> f64 {
        self.curvature_inner(self)
    }

    /// Slopes of a linear control on each cell.
    pub fn slopes(&self) -> Vec<f64> {
        let x = self.node_coordinates();
        self.values
            .windows(2)
            .zip(x.windows(2))
            .map(|(v, x)| (v[1] - v[0]) / (x[1] - x[0]))
            .collect()
    }

    /// Interior second difference quotients with their dual-cell widths.
    fn second_differences(&self) -> Vec<(f64, f64)> {
        let x = self.node_coordinates();
        let s = self.slopes();
        (1..x.len() - 1)
            .map(|i| {
                let m = 0.5 * (x[i + 1] - x[i - 1]);
                ((s[i] - s[i - 1]) / m, m)
            })
            .collect()
    }

    /// Dense mass matrix `(φ_j, φ_k)_I` of the nodal basis.
    pub fn mass_matrix(&self) -> Mat<f64> {
        let n = self.dofs();
        let mut m = Mat::<f64>::zeros(n, n);
        let rule = gauss_line(5);
        for cell in 0..self.grid.cells() {
            let (a, b) = (self.grid.nodes[cell], self.grid.nodes[cell + 1]);
            for gp in &rule {
                let (first, basis) = self.local_basis(a + gp.t * (b - a));
                for (j, pj) in basis.iter().enumerate() {
                    for (k, pk) in basis.iter().enumerate() {
                        m[(first + j, first + k)] += gp.weight * (b - a) * pj[0] * pk[0];
                    }
                }
            }
        }
        m
    }

    /// Nodal values of the `L²(I)` Riesz representative of a load vector
    /// `r_k = ℓ(φ_k)`: solves `M ψ = r` over the full nodal basis.
    pub fn riesz_representative(&self, load: &[f64]) -> Result<Vec<f64>> {
        if load.len() != self.dofs() {
            return Err(Error::Mismatch("load length differs from control dofs".into()));
        }
        let m = self.mass_matrix();
        let rhs = Mat::<f64>::from_fn(load.len(), 1, |i, _| load[i]);
        let sol = m.partial_piv_lu().solve(&rhs);
        Ok((0..load.len()).map(|i| sol[(i, 0)]).collect())
    }

    /// `‖q‖_{L²(I)}`.
    pub fn l2_norm(&self) -> f64 {
        self.integrate(|j| j[0] * j[0]).sqrt()
    }

    /// `max |q(x_k)|` over Lagrange nodes.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Profile for ControlFunction {
    fn jet(&self, x: f64) -> [f64; 3] {
        let (first, basis) = self.local_basis(x);
        let mut out = [0.0; 3];
        for (k, phi) in basis.iter().enumerate() {
            let v = self.values[first + k];
            out[0] += v * phi[0];
            out[1] += v * phi[1];
            out[2] += v * phi[2];
        }
        out
    }
}

/// Equispaced Lagrange basis of degree `p` on `[0, 1]` with first and second
/// derivatives.
fn lagrange_basis(p: usize, t: f64) -> Vec<[f64; 3]> {
    let nodes: Vec<f64> = (0..=p).map(|k| k as f64 / p as f64).collect();
    (0..=p)
        .map(|k| {
            let denom: f64 = (0..=p)
                .filter(|&m| m != k)
                .map(|m| nodes[k] - nodes[m])
                .product();
            let others: Vec<f64> = (0..=p).filter(|&m| m != k).map(|m| nodes[m]).collect();
            let v: f64 = others.iter().map(|&xm| t - xm).product();
            let mut d = 0.0;
            let mut dd = 0.0;
            for a in 0..others.len() {
                let mut prod = 1.0;
                for (b, &xm) in others.iter().enumerate() {
                    if b != a {
                        prod *= t - xm;
                    }
                }
                d += prod;
                for b in 0..others.len() {
                    if b == a {
                        continue;
                    }
                    let mut prod2 = 1.0;
                    for (c, &xm) in others.iter().enumerate() {
                        if c != a && c != b {
                            prod2 *= t - xm;
                        }
                    }
                    dd += prod2;
                }
            }
            [v / denom, d / denom, dd / denom]
        })
        .collect()
}

fn lagrange_nodes(grid: &ControlGrid, degree: Degree) -> Vec<f64> {
    let p = degree.order();
    let mut out = Vec::with_capacity(p * grid.cells() + 1);
    for cell in 0..grid.cells() {
        let (a, b) = (grid.nodes[cell], grid.nodes[cell + 1]);
        for k in 0..p {
            out.push(a + (b - a) * k as f64 / p as f64);
        }
    }
    out.push(1.0);
    out
}

/// Checked evaluation of `q`, `q'` or `q''` at `x ∈ [0, 1]`.
pub fn eval_control(q: &ControlFunction, x: f64, deriv_order: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(x));
    }
    if deriv_order > 2 {
        return Err(Error::Mismatch(format!(
            "derivative order {deriv_order} not supported"
        )));
    }
    Ok(q.jet(x)[deriv_order])
}

/// Nodal interpolant of `f` on `grid`; endpoint values forced to 0.
pub fn interpolate_control<F: Fn(f64) -> f64>(
    f: F,
    grid: &ControlGrid,
    degree: Degree,
) -> ControlFunction {
    let values = lagrange_nodes(grid, degree).into_iter().map(f).collect();
    ControlFunction::from_values(grid.clone(), degree, values).expect("node count matches")
}

/// Closed-form control supplied as a jet `x ↦ (q, q', q'')`.
#[derive(Clone)]
pub struct AnalyticControl {
    name: String,
    jet: Arc<dyn Fn(f64) -> [f64; 3] + Send + Sync>,
}

impl fmt::Debug for AnalyticControl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticControl")
            .field("name", &self.name)
            .finish()
    }
}

impl AnalyticControl {
    pub fn new<F>(name: impl Into<String>, jet: F) -> Self
    where
        F: Fn(f64) -> [f64; 3] + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            jet: Arc::new(jet),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn flat() -> Self {
        Self::new("flat", |_| [0.0; 3])
    }

    /// `0.2 [1 - 4 (x - 0.5)²]`.
    pub fn parabolic() -> Self {
        Self::new("parabolic", |x| {
            let d = x - 0.5;
            [0.2 * (1.0 - 4.0 * d * d), -1.6 * d, -1.6]
        })
    }

    /// `0.1 sin²(2πx)`.
    pub fn sinusoidal() -> Self {
        use std::f64::consts::PI;
        Self::new("sinusoidal", |x| {
            let w = 2.0 * PI;
            let s = (w * x).sin();
            let c = (w * x).cos();
            [
                0.1 * s * s,
                0.2 * w * s * c,
                0.2 * w * w * (c * c - s * s),
            ]
        })
    }

    /// `0.1 + 0.1 cos(2π(x - 0.5))`, the tracking target shape.
    pub fn tracking_target() -> Self {
        use std::f64::consts::PI;
        Self::new("target", |x| {
            let w = 2.0 * PI;
            let a = w * (x - 0.5);
            [0.1 + 0.1 * a.cos(), -0.1 * w * a.sin(), -0.1 * w * w * a.cos()]
        })
    }

    pub fn interpolate(&self, grid: &ControlGrid, degree: Degree) -> ControlFunction {
        interpolate_control(|x| self.value(x), grid, degree)
    }
}

impl Profile for AnalyticControl {
    fn jet(&self, x: f64) -> [f64; 3] {
        (self.jet)(x)
    }
}

/// Constants defining the admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdmissibilityParams {
    /// Minimum gap `1 - q(x) ≥ ε`.
    pub epsilon: f64,
    /// Bound `C` on the (proxy) `H³` norm.
    pub norm_bound: f64,
    /// Inf-sup safety factor `ξ ∈ (0, 1)`.
    pub xi: f64,
    /// Bound on the `W^{3,∞}` norm.
    pub c_infinity: f64,
}

impl Default for AdmissibilityParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            norm_bound: 10.0,
            xi: 0.9,
            c_infinity: 100.0,
        }
    }
}

impl AdmissibilityParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon > 0.0
            && self.epsilon < 1.0
            && self.xi > 0.0
            && self.xi < 1.0
            && self.norm_bound > 0.0
            && self.c_infinity > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid admissibility parameters {self:?}")))
        }
    }
}

/// Result of [`check_admissible`]. Flags are advisory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdmissibilityReport {
    pub max_height: f64,
    pub height_ok: bool,
    pub sobolev_proxy: f64,
    pub sobolev_ok: bool,
    pub lipschitz_proxy: f64,
    pub lipschitz_threshold: f64,
    pub lipschitz_ok: bool,
    pub endpoints_ok: bool,
}

impl AdmissibilityReport {
    pub fn all_ok(&self) -> bool {
        self.height_ok && self.sobolev_ok && self.lipschitz_ok && self.endpoints_ok
    }

    pub fn violations(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if !self.height_ok {
            v.push("height");
        }
        if !self.sobolev_ok {
            v.push("sobolev");
        }
        if !self.lipschitz_ok {
            v.push("lipschitz");
        }
        if !self.endpoints_ok {
            v.push("endpoints");
        }
        v
    }
}

/// Evaluates the admissible-set constraints on `q`.
///
/// * height: `max q ≤ 1 - ε`, sampled at Lagrange nodes and Gauss points;
/// * Sobolev proxy: `sqrt(‖q‖² + ‖q'‖² + ‖q''‖²) ≤ C`, with difference
///   quotients standing in for `q''` on linear controls;
/// * Lipschitz proxy: `‖q‖_∞ + ‖q'‖_∞ ≤ ξ/(4√2)`;
/// * endpoint zeros.
pub fn check_admissible(q: &ControlFunction, p: &AdmissibilityParams) -> AdmissibilityReport {
    let mut samples: Vec<f64> = q.node_coordinates();
    let rule = gauss_line(5);
    for cell in 0..q.grid.cells() {
        let (a, b) = (q.grid.nodes[cell], q.grid.nodes[cell + 1]);
        samples.extend(rule.iter().map(|gp| a + gp.t * (b - a)));
    }
    let mut max_height = f64::NEG_INFINITY;
    let mut sup_value: f64 = 0.0;
    let mut sup_slope: f64 = 0.0;
    for &x in &samples {
        let [v, d, _] = q.jet(x);
        max_height = max_height.max(v);
        sup_value = sup_value.max(v.abs());
        sup_slope = sup_slope.max(d.abs());
    }
    let l2 = q.integrate(|j| j[0] * j[0]);
    let h1 = q.integrate(|j| j[1] * j[1]);
    let h2 = q.curvature_energy();
    let sobolev_proxy = (l2 + h1 + h2).sqrt();
    let lipschitz_proxy = sup_value + sup_slope;
    let lipschitz_threshold = p.xi * INF_SUP_REFERENCE;
    let n = q.values.len();
    AdmissibilityReport {
        max_height,
        height_ok: max_height <= 1.0 - p.epsilon,
        sobolev_proxy,
        sobolev_ok: sobolev_proxy <= p.norm_bound,
        lipschitz_proxy,
        lipschitz_threshold,
        lipschitz_ok: lipschitz_proxy <= lipschitz_threshold,
        endpoints_ok: q.values[0] == 0.0 && q.values[n - 1] == 0.0,
    }
}

/// Writes `x,q` at every Lagrange node.
pub fn write_control_csv(q: &ControlFunction, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "q"])?;
    for (x, v) in q.node_coordinates().iter().zip(q.values()) {
        w.write_record([format!("{x:.17e}"), format!("{v:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `x,q` samples and re-interpolates them onto `grid`, using the
/// piecewise-linear interpolant of the samples.
pub fn read_control_csv(path: &Path, grid: &ControlGrid, degree: Degree) -> Result<ControlFunction> {
    let mut r = csv::Reader::from_path(path)?;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Config("control CSV needs columns x,q".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number in control CSV: {e}")))
        };
        pts.push((parse(0)?, parse(1)?));
    }
    if pts.len() < 2 {
        return Err(Error::Config("control CSV needs at least two rows".into()));
    }
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let sample = |x: f64| -> f64 {
        let i = pts.partition_point(|p| p.0 <= x);
        if i == 0 {
            return pts[0].1;
        }
        if i >= pts.len() {
            return pts[pts.len() - 1].1;
        }
        let (x0, y0) = pts[i - 1];
        let (x1, y1) = pts[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    };
    Ok(interpolate_control(sample, grid, degree))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_nodes() {
        assert!(ControlGrid::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(ControlGrid::new(vec![0.1, 1.0]).is_err());
        let g = ControlGrid::new(vec![0.0, 0.2, 1.0]).unwrap();
        assert!((g.sigma() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_control_evaluates_to_zero() {
        let q = ControlFunction::zero(ControlGrid::uniform(4).unwrap(), Degree::Linear);
        assert_eq!(eval_control(&q, 0.3, 0).unwrap(), 0.0);
    }

    #[test]
    fn parabola_peak_is_recovered() {
        let grid = ControlGrid::uniform(64).unwrap();
        let q = AnalyticControl::parabolic().interpolate(&grid, Degree::Linear);
        assert!((eval_control(&q, 0.5, 0).unwrap() - 0.2).abs() < 1e-14);
    }

    #[test]
    fn hat_slope() {
        let grid = ControlGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let q = ControlFunction::from_values(grid, Degree::Linear, vec![0.0, 0.1, 0.0]).unwrap();
        assert!((eval_control(&q, 0.25, 1).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(eval_control(&q, 0.25, 2).unwrap(), 0.0);
        assert!(matches!(eval_control(&q, 1.5, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn interpolation_of_x_one_minus_x() {
        let grid = ControlGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let q = interpolate_control(|x| x * (1.0 - x), &grid, Degree::Linear);
        assert_eq!(q.values(), &[0.0, 0.25, 0.0]);
        let z = interpolate_control(|_| 0.0, &grid, Degree::Linear);
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interpolation_forces_endpoint_zeros() {
        let grid = ControlGrid::uniform(3).unwrap();
        let q = interpolate_control(|_| 1.0, &grid, Degree::Linear);
        assert_eq!(q.values()[0], 0.0);
        assert_eq!(q.values()[3], 0.0);
    }

    #[test]
    fn quartic_reproduces_quartic_polynomial() {
        let grid = ControlGrid::new(vec![0.0, 0.3, 1.0]).unwrap();
        let f = |x: f64| x * (1.0 - x) * (1.0 + x * x);
        let q = interpolate_control(f, &grid, Degree::Quartic);
        for &x in &[0.1, 0.29, 0.5, 0.77] {
            let [v, d, dd] = q.jet(x);
            assert!((v - f(x)).abs() < 1e-13);
            let df = 1.0 - 2.0 * x + 3.0 * x * x - 4.0 * x * x * x;
            let ddf = -2.0 + 6.0 * x - 12.0 * x * x;
            assert!((d - df).abs() < 1e-11);
            assert!((dd - ddf).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolation_error_is_second_order() {
        use std::f64::consts::PI;
        let f = |x: f64| (PI * x).sin() * (1.0 + x);
        let err = |n: usize| {
            let q = interpolate_control(f, &ControlGrid::uniform(n).unwrap(), Degree::Linear);
            let d = AnalyticControl::new("f", move |x| [f(x), 0.0, 0.0]);
            let rule = gauss_line(5);
            let mut acc = 0.0;
            for c in 0..n {
                let (a, b) = (c as f64 / n as f64, (c + 1) as f64 / n as f64);
                for gp in &rule {
                    let x = a + gp.t * (b - a);
                    acc += gp.weight * (b - a) * (q.value(x) - d.value(x)).powi(2);
                }
            }
            acc.sqrt()
        };
        let orders: Vec<f64> = [8, 16, 32, 64]
            .windows(2)
            .map(|w| (err(w[0]) / err(w[1])).log2())
            .collect();
        for o in orders {
            assert!((o - 2.0).abs() < 0.05, "order {o}");
        }
    }

    #[test]
    fn zero_control_is_admissible() {
        let q = ControlFunction::zero(ControlGrid::uniform(8).unwrap(), Degree::Linear);
        let r = check_admissible(&q, &AdmissibilityParams::default());
        assert!(r.all_ok());
        assert!((r.lipschitz_threshold - 0.9 * 0.176_776_695).abs() < 1e-8);
    }

    #[test]
    fn height_violation_is_flagged() {
        let p = AdmissibilityParams::default();
        let grid = ControlGrid::uniform(4).unwrap();
        let peak = 1.0 - p.epsilon / 2.0;
        let q = ControlFunction::from_values(grid, Degree::Linear, vec![0.0, 0.0, peak, 0.0, 0.0])
            .unwrap();
        let r = check_admissible(&q, &p);
        assert!(!r.height_ok);
        assert!(r.violations().contains(&"height"));
    }

    #[test]
    fn inf_sup_reference_value() {
        assert!((INF_SUP_REFERENCE - 1.0 / (4.0 * 2f64.sqrt())).abs() < 1e-16);
        assert!((INF_SUP_REFERENCE - 0.17678).abs() < 1e-5);
    }

    #[test]
    fn riesz_representative_of_constant_load() {
        // Load r_k = ∫ c φ_k has the constant c as representative.
        let grid = ControlGrid::new(vec![0.0, 0.2, 0.5, 1.0]).unwrap();
        let q = ControlFunction::zero(grid, Degree::Linear);
        let load: Vec<f64> = q.basis_integrals().iter().map(|w| 3.0 * w).collect();
        let psi = q.riesz_representative(&load).unwrap();
        assert!(psi.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn perimeter_gradient_matches_differences() {
        let grid = ControlGrid::uniform(6).unwrap();
        let q = AnalyticControl::sinusoidal().interpolate(&grid, Degree::Linear);
        let g = q.perimeter_gradient();
        let t = 1e-6;
        for k in 1..q.dofs() - 1 {
            let mut e = vec![0.0; q.dofs()];
            e[k] = 1.0;
            let e = ControlFunction::from_values(grid.clone(), Degree::Linear, e).unwrap();
            let fd = (q.axpy(t, &e).unwrap().perimeter() - q.axpy(-t, &e).unwrap().perimeter())
                / (2.0 * t);
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn csv_round_trip_reinterpolates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        let fine = ControlGrid::uniform(16).unwrap();
        let q = AnalyticControl::parabolic().interpolate(&fine, Degree::Linear);
        write_control_csv(&q, &path).unwrap();
        let back = read_control_csv(&path, &fine, Degree::Linear).unwrap();
        assert_eq!(back.values(), q.values());
        let coarse = ControlGrid::uniform(4).unwrap();
        let c = read_control_csv(&path, &coarse, Degree::Linear).unwrap();
        assert!((c.values()[2] - 0.2).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn control(degree: Degree) -> impl Strategy<Value = ControlFunction> {
            (2usize..9).prop_flat_map(move |cells| {
                let n = degree.order() * cells + 1;
                proptest::collection::vec(-0.5..0.5f64, n).prop_map(move |v| {
                    ControlFunction::from_values(ControlGrid::uniform(cells).unwrap(), degree, v).unwrap()
                })
            })
        }

        fn pair() -> impl Strategy<Value = (ControlFunction, ControlFunction)> {
            prop_oneof![Just(Degree::Linear), Just(Degree::Quartic)]
                .prop_flat_map(control)
                .prop_flat_map(|a| {
                    let g = a.grid().clone();
                    let d = a.degree();
                    let n = a.dofs();
                    proptest::collection::vec(-0.5..0.5f64, n).prop_map(move |v| {
                        (a.clone(), ControlFunction::from_values(g.clone(), d, v).unwrap())
                    })
                })
        }

        proptest! {
            #[test]
            fn endpoints_vanish((a, b) in pair(), t in -3.0..3.0f64) {
                let c = a.axpy(t, &b).unwrap();
                prop_assert_eq!(eval_control(&c, 0.0, 0).unwrap(), 0.0);
                prop_assert!(eval_control(&c, 1.0, 0).unwrap().abs() < 1e-14);
            }

            #[test]
            fn evaluation_is_linear((a, b) in pair(), t in -3.0..3.0f64, x in 0.0..1.0f64) {
                let c = a.axpy(t, &b).unwrap();
                for k in 0..3 {
                    let lhs = eval_control(&c, x, k).unwrap();
                    let rhs = eval_control(&a, x, k).unwrap() + t * eval_control(&b, x, k).unwrap();
                    prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
                }
            }

            #[test]
            fn integral_is_linear((a, b) in pair(), t in -3.0..3.0f64) {
                let lhs = a.axpy(t, &b).unwrap().integral();
                prop_assert!((lhs - a.integral() - t * b.integral()).abs() < 1e-12);
                let w = a.basis_integrals();
                let dotted: f64 = w.iter().zip(a.values()).map(|(w, v)| w * v).sum();
                prop_assert!((dotted - a.integral()).abs() < 1e-12);
            }

            #[test]
            fn interpolation_reproduces_nodes(a in control(Degree::Quartic)) {
                let f = |x: f64| eval_control(&a, x, 0).unwrap();
                let b = interpolate_control(f, a.grid(), Degree::Quartic);
                for (u, v) in a.values().iter().zip(b.values()) {
                    prop_assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }
}
