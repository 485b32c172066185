//! Adjoint problem of the cost functionals.

use serde::{Deserialize, Serialize};

use crate::control::ControlFunction;
use crate::error::{Error, Result};
use crate::fem::solver::MixedField;
use crate::fem::space::TaylorHoodSpace;
use crate::functional::FunctionalSpec;
use crate::state::StateSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AdjointVariant {
    Energy,
    Tracking,
}

/// Dual pair `(z, s)`.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub field: MixedField,
    pub variant: AdjointVariant,
    pub control: ControlFunction,
}

/// Solves `a(q)(v, z) + b(q)(v, s) = 2(∇w A_q, ∇v)`, `b(q)(z, π) = 0`
/// with `z = 0` on every constrained dof, reusing the state factorization.
pub fn solve_adjoint(
    q: &ControlFunction,
    state: &StateSolution,
    spec: &FunctionalSpec,
    space: &TaylorHoodSpace,
) -> Result<AdjointSolution> {
    spec.validate()?;
    if state.control != *q {
        return Err(Error::Mismatch("state was solved for a different control".into()));
    }
    if state.field.velocity.len() != space.velocity_dofs() {
        return Err(Error::Mismatch("state does not live on this space".into()));
    }
    let w = spec.residual_velocity(state.velocity())?;
    let rhs: Vec<f64> = state.energy_matrix(space)?.matvec(&w).iter().map(|v| 2.0 * v).collect();
    let zero_p = vec![0.0; space.pressure_dofs()];
    let zero_u = vec![0.0; space.velocity_dofs()];
    let (field, _) = state.solver().solve(&rhs, &zero_p, &zero_u)?;
    Ok(AdjointSolution {
        field,
        variant: spec.adjoint_variant(),
        control: q.clone(),
    })
}
