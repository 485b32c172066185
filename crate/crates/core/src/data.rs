//! Physical data of the generalized Stokes problem.
//!
//! Coefficients live on the hold-all domain and are composed with the
//! domain map at quadrature points. Derivatives are user supplied.

use std::fmt;
use std::sync::Arc;

use crate::geometry::Mat2;

type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
type HessFn = Arc<dyn Fn([f64; 2]) -> Mat2 + Send + Sync>;
type VectorFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
type JacobianFn = Arc<dyn Fn([f64; 2]) -> Mat2 + Send + Sync>;
type VectorHessFn = Arc<dyn Fn([f64; 2]) -> [Mat2; 2] + Send + Sync>;

/// Scalar field with gradient and Hessian.
#[derive(Clone)]
pub struct ScalarField {
    value: ScalarFn,
    gradient: GradFn,
    hessian: HessFn,
    constant: Option<f64>,
}

impl ScalarField {
    pub fn constant(c: f64) -> Self {
        Self {
            value: Arc::new(move |_| c),
            gradient: Arc::new(|_| [0.0; 2]),
            hessian: Arc::new(|_| Mat2::ZERO),
            constant: Some(c),
        }
    }

    pub fn new<V, G, H>(value: V, gradient: G, hessian: H) -> Self
    where
        V: Fn([f64; 2]) -> f64 + Send + Sync + 'static,
        G: Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
        H: Fn([f64; 2]) -> Mat2 + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            constant: None,
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        (self.gradient)(x)
    }

    pub fn hessian(&self, x: [f64; 2]) -> Mat2 {
        (self.hessian)(x)
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.constant {
            Some(c) => write!(f, "ScalarField({c})"),
            None => f.write_str("ScalarField(<fn>)"),
        }
    }
}

/// Vector field with Jacobian (row `i` is `∇f_i`) and component Hessians.
#[derive(Clone)]
pub struct VectorField {
    value: VectorFn,
    jacobian: JacobianFn,
    hessians: VectorHessFn,
    zero: bool,
}

impl VectorField {
    pub fn zero() -> Self {
        Self {
            value: Arc::new(|_| [0.0; 2]),
            jacobian: Arc::new(|_| Mat2::ZERO),
            hessians: Arc::new(|_| [Mat2::ZERO; 2]),
            zero: true,
        }
    }

    pub fn new<V, J, H>(value: V, jacobian: J, hessians: H) -> Self
    where
        V: Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
        J: Fn([f64; 2]) -> Mat2 + Send + Sync + 'static,
        H: Fn([f64; 2]) -> [Mat2; 2] + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            jacobian: Arc::new(jacobian),
            hessians: Arc::new(hessians),
            zero: false,
        }
    }

    pub fn value(&self, x: [f64; 2]) -> [f64; 2] {
        (self.value)(x)
    }

    pub fn jacobian(&self, x: [f64; 2]) -> Mat2 {
        (self.jacobian)(x)
    }

    pub fn hessians(&self, x: [f64; 2]) -> [Mat2; 2] {
        (self.hessians)(x)
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.zero { "VectorField(0)" } else { "VectorField(<fn>)" })
    }
}

/// Boundary datum as a function of the physical point.
#[derive(Clone)]
pub struct BoundaryDatum(VectorFn);

impl BoundaryDatum {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
    {
        Self(Arc::new(f))
    }

    pub fn zero() -> Self {
        Self::new(|_| [0.0; 2])
    }

    pub fn at(&self, x: [f64; 2]) -> [f64; 2] {
        (self.0)(x)
    }
}

impl fmt::Debug for BoundaryDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BoundaryDatum(<fn>)")
    }
}

/// Coefficients and boundary data.
#[derive(Debug, Clone)]
pub struct ProblemData {
    /// Reaction coefficient `η ≥ 0`.
    pub eta: ScalarField,
    /// Viscosity `ν ≥ ν₀ > 0`.
    pub nu: ScalarField,
    pub force: VectorField,
    /// Inflow profile on Γ₃.
    pub g_d: BoundaryDatum,
    /// Traction on Γ₁.
    pub g_n: BoundaryDatum,
    /// Velocity on the controlled wall and normal velocity on the
    /// symmetry line. `None` means no-slip / zero normal flow.
    pub g_wall: Option<BoundaryDatum>,
}

impl Default for ProblemData {
    /// `ν = 1`, `η = 0`, `f = 0`, `g_N = 0`, `g_D = (y(2 - y), 0)`.
    fn default() -> Self {
        Self {
            eta: ScalarField::constant(0.0),
            nu: ScalarField::constant(1.0),
            force: VectorField::zero(),
            g_d: BoundaryDatum::new(|p| [p[1] * (2.0 - p[1]), 0.0]),
            g_n: BoundaryDatum::zero(),
            g_wall: None,
        }
    }
}

impl ProblemData {
    /// All data zero except `ν = 1`.
    pub fn quiescent() -> Self {
        Self {
            g_d: BoundaryDatum::zero(),
            ..Self::default()
        }
    }

    /// Default data with a constant reaction coefficient.
    pub fn brinkman(eta: f64) -> Self {
        Self {
            eta: ScalarField::constant(eta),
            ..Self::default()
        }
    }

    pub fn has_constant_coefficients(&self) -> bool {
        self.eta.as_constant().is_some() && self.nu.as_constant().is_some() && self.force.is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_inflow_profile() {
        let d = ProblemData::default();
        assert_eq!(d.g_d.at([0.0, 0.0]), [0.0, 0.0]);
        assert_eq!(d.g_d.at([0.0, 1.0]), [1.0, 0.0]);
        assert!(d.has_constant_coefficients());
        assert_eq!(d.nu.value([0.3, 0.3]), 1.0);
    }

    #[test]
    fn custom_fields_report_derivatives() {
        let eta = ScalarField::new(|p| p[0] * p[1], |p| [p[1], p[0]], |_| Mat2::new(0.0, 1.0, 1.0, 0.0));
        assert_eq!(eta.gradient([2.0, 3.0]), [3.0, 2.0]);
        assert!(eta.as_constant().is_none());
        assert_eq!(ProblemData::quiescent().g_d.at([0.0, 0.5]), [0.0, 0.0]);
    }
}
