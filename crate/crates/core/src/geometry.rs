//! The domain map `T_q(x, y) = (x, y + (1 - y) q(x))` from the unit square
//! onto `Ω_q`, and every pulled-back coefficient derived from it.
//!
//! All quantities are closed-form functions of `(q, q', q'')` at a point, so
//! they are evaluated on the fly at quadrature points.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::control::Profile;
use crate::error::{Error, Result};

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0; 2]; 2]);
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn transpose(&self) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Cofactor matrix, `cof(M) = det(M) M^{-T}` for invertible `M`.
    pub fn cofactor(&self) -> Mat2 {
        let m = &self.0;
        Mat2([[m[1][1], -m[1][0]], [-m[0][1], m[0][0]]])
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.cofactor().transpose() * (1.0 / d))
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    /// Frobenius inner product `M : N`.
    pub fn ddot(&self, other: &Mat2) -> f64 {
        let (a, b) = (&self.0, &other.0);
        a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(&self) -> [f64; 2] {
        let m = &self.0;
        let a = m[0][0];
        let d = m[1][1];
        let b = 0.5 * (m[0][1] + m[1][0]);
        let mean = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mean - r, mean + r]
    }

    /// `tr(G M Hᵀ)` for velocity gradients `G`, `H`: the pulled-back
    /// `∇u : ∇v` with metric `M`.
    pub fn weighted_inner(g: &Mat2, m: &Mat2, h: &Mat2) -> f64 {
        (*g * *m).ddot(h)
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, o: Mat2) {
        *self = *self + o;
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        self + (-o)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self * -1.0
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        let a = self.0;
        Mat2([[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]])
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

/// `T_q(x, y)`.
pub fn map_forward<P: Profile + ?Sized>(q: &P, point: [f64; 2]) -> [f64; 2] {
    let [x, y] = point;
    [x, y + (1.0 - y) * q.value(x)]
}

/// Pointwise bundle of map-derived coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapQuantities {
    /// `DT_q`.
    pub dt: Mat2,
    /// `γ_q = det DT_q = 1 - q(x)`.
    pub gamma: f64,
    pub dt_inv: Mat2,
    /// `A_q = γ_q DT_q^{-1} DT_q^{-T}`.
    pub a: Mat2,
    /// `cof(DT_q) = γ_q DT_q^{-T}`.
    pub cof: Mat2,
}

impl MapQuantities {
    /// Closed forms from the jet `(q, q')` at the abscissa of the point.
    pub fn from_jet(jet: [f64; 3], point: [f64; 2]) -> Result<Self> {
        let [q, dq, _] = jet;
        let [x, y] = point;
        let c = 1.0 - y;
        let g = 1.0 - q;
        if g <= 0.0 || !g.is_finite() {
            return Err(Error::DegenerateMap { x, y, gamma: g });
        }
        let s = c * dq;
        Ok(Self {
            dt: Mat2::new(1.0, 0.0, s, g),
            gamma: g,
            dt_inv: Mat2::new(1.0, 0.0, -s / g, 1.0 / g),
            a: Mat2::new(g, -s, -s, (s * s + 1.0) / g),
            cof: Mat2::new(g, -s, 0.0, 1.0),
        })
    }
}

/// `MapQuantities` of `q` at a reference point.
pub fn map_quantities<P: Profile + ?Sized>(q: &P, point: [f64; 2]) -> Result<MapQuantities> {
    MapQuantities::from_jet(q.jet(point[0]), point)
}

/// First variation of the map quantities along `δq`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapVariation {
    /// Reference-domain field `V_δq = (0, (1 - y) δq(x))`.
    pub v: [f64; 2],
    /// `DV_δq`.
    pub dv: Mat2,
    /// `γ'_{q,δq} = -δq(x)`.
    pub gamma_dot: f64,
    /// `A'_{q,δq}`.
    pub a_dot: Mat2,
    /// `cof(DV_δq)`, the derivative of `cof(DT_q)`.
    pub cof_dv: Mat2,
}

impl MapVariation {
    pub fn from_jets(q: [f64; 3], dq: [f64; 3], point: [f64; 2]) -> Result<Self> {
        let [x, y] = point;
        let c = 1.0 - y;
        let g = 1.0 - q[0];
        if g <= 0.0 || !g.is_finite() {
            return Err(Error::DegenerateMap { x, y, gamma: g });
        }
        let s = c * q[1];
        let (d, dd) = (dq[0], dq[1]);
        let dv = Mat2::new(0.0, 0.0, c * dd, -d);
        let a22_dot = 2.0 * c * s * dd / g + (s * s + 1.0) * d / (g * g);
        Ok(Self {
            v: [0.0, c * d],
            dv,
            gamma_dot: -d,
            a_dot: Mat2::new(-d, -c * dd, -c * dd, a22_dot),
            cof_dv: dv.cofactor(),
        })
    }
}

pub fn map_first_variation<P, D>(q: &P, dq: &D, point: [f64; 2]) -> Result<MapVariation>
where
    P: Profile + ?Sized,
    D: Profile + ?Sized,
{
    MapVariation::from_jets(q.jet(point[0]), dq.jet(point[0]), point)
}

/// Second variation along `(δq, τq)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSecondVariation {
    /// Always zero: `γ_q` is affine in `q`.
    pub gamma_ddot: f64,
    pub a_ddot: Mat2,
}

impl MapSecondVariation {
    pub fn from_jets(q: [f64; 3], dq: [f64; 3], tq: [f64; 3], point: [f64; 2]) -> Result<Self> {
        let [x, y] = point;
        let c = 1.0 - y;
        let g = 1.0 - q[0];
        if g <= 0.0 || !g.is_finite() {
            return Err(Error::DegenerateMap { x, y, gamma: g });
        }
        let s = c * q[1];
        let (d, dd) = (dq[0], c * dq[1]);
        let (t, td) = (tq[0], c * tq[1]);
        // A22 = (s² + 1)/g with s = (1-y)q', g = 1 - q.
        let a22 = 2.0 * dd * td / g
            + 2.0 * s * (dd * t + td * d) / (g * g)
            + 2.0 * (s * s + 1.0) * d * t / (g * g * g);
        Ok(Self {
            gamma_ddot: 0.0,
            a_ddot: Mat2::new(0.0, 0.0, 0.0, a22),
        })
    }
}

pub fn map_second_variation<P, D, T>(
    q: &P,
    dq: &D,
    tq: &T,
    point: [f64; 2],
) -> Result<MapSecondVariation>
where
    P: Profile + ?Sized,
    D: Profile + ?Sized,
    T: Profile + ?Sized,
{
    let x = point[0];
    MapSecondVariation::from_jets(q.jet(x), dq.jet(x), tq.jet(x), point)
}

/// Physical-domain transformation field `V_{q,δq}` taking `Ω_q` to
/// `Ω_{q+δq}`, evaluated at a physical point of `Ω_q`.
pub fn physical_variation_field<P, D>(q: &P, dq: &D, physical: [f64; 2]) -> [f64; 2]
where
    P: Profile + ?Sized,
    D: Profile + ?Sized,
{
    let [x, y] = physical;
    [0.0, (1.0 - y) / (1.0 - q.value(x)) * dq.value(x)]
}

/// Lower bound on the eigenvalues of `A_q` for controls with
/// `‖q''‖_∞ ≤ d1`, `|q'(0)| ≤ d2` and `q ≤ 1 - ε`:
///
/// `λ̄ = 2 (K + sqrt(K² - 4))^{-1}`, `K = 1 + (1 + (d1 + d2)²)/ε`.
///
/// The leading `1` in `K` bounds `γ_q = 1 - q`, so the estimate assumes
/// `q ≥ 0`; see [`eigen_lower_bound_with_floor`] for signed controls.
pub fn eigen_lower_bound(d1: f64, d2: f64, epsilon: f64) -> f64 {
    eigen_lower_bound_with_floor(d1, d2, epsilon, 0.0)
}

/// [`eigen_lower_bound`] for controls bounded below by `q_min`, which
/// replaces the leading `1` of `K` with `max(1, 1 - q_min)`.
pub fn eigen_lower_bound_with_floor(d1: f64, d2: f64, epsilon: f64, q_min: f64) -> f64 {
    let k = (1.0 - q_min).max(1.0) + (1.0 + (d1 + d2).powi(2)) / epsilon;
    2.0 / (k + (k * k - 4.0).sqrt())
}
