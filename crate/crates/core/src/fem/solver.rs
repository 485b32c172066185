//! Direct solver for the saddle-point system with essential conditions.

use std::sync::{Arc, OnceLock};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LdltRef, SymbolicCholesky, SymmetricOrdering};
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, SparseColMatRef, SymbolicSparseColMatRef, Triplet};
use faer::{get_global_parallelism, Conj, Mat, Side};
use serde::{Deserialize, Serialize};

use super::assembly::SparseSystem;
use super::sparse::{norm, CsrMatrix, CsrPattern};
use crate::error::{Error, Result};

/// Relative residual every solve must reach.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
const MAX_REFINEMENTS: usize = 4;

/// Velocity and pressure coefficient vectors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MixedField {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl MixedField {
    pub fn zeros(nu: usize, np: usize) -> Self {
        Self {
            velocity: vec![0.0; nu],
            pressure: vec![0.0; np],
        }
    }

    pub fn axpy(&self, t: f64, other: &MixedField) -> MixedField {
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + t * y).collect();
        MixedField {
            velocity: add(&self.velocity, &other.velocity),
            pressure: add(&self.pressure, &other.pressure),
        }
    }
}

/// Outcome of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub relative_residual: f64,
    pub refinements: usize,
}

/// Pattern of `[A Bᵀ; B 0]` with scatter maps and a cached symbolic
/// factorization.
#[derive(Debug)]
pub struct SaddleLayout {
    nu: usize,
    np: usize,
    k: CsrPattern,
    a_to_k: Vec<usize>,
    b_to_k: Vec<usize>,
    bt_to_k: Vec<usize>,
    diag: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// CSC slot `s` takes CSR value `csc_src[s]`.
    csc_src: Vec<usize>,
    symbolic: OnceLock<std::result::Result<Arc<SymbolicCholesky<usize>>, String>>,
    /// `+1` on velocity rows, `-1` on pressure rows.
    signs: Vec<i8>,
}

impl SaddleLayout {
    pub fn new(a: &CsrPattern, b: &CsrPattern) -> Self {
        let (nu, np) = (a.nrows, b.nrows);
        let n = nu + np;
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..nu {
            rows[i].extend(a.row(i).map(|p| a.col_idx[p]));
        }
        for k in 0..np {
            for p in b.row(k) {
                let j = b.col_idx[p];
                rows[nu + k].push(j);
                rows[j].push(nu + k);
            }
        }
        for (i, r) in rows.iter_mut().enumerate() {
            r.push(i);
        }
        let k = CsrPattern::from_rows(n, rows);
        let mut a_to_k = Vec::with_capacity(a.nnz());
        for i in 0..nu {
            for p in a.row(i) {
                a_to_k.push(k.position(i, a.col_idx[p]).unwrap());
            }
        }
        let mut b_to_k = Vec::with_capacity(b.nnz());
        let mut bt_to_k = Vec::with_capacity(b.nnz());
        for r in 0..np {
            for p in b.row(r) {
                let j = b.col_idx[p];
                b_to_k.push(k.position(nu + r, j).unwrap());
                bt_to_k.push(k.position(j, nu + r).unwrap());
            }
        }
        let diag = (0..n).map(|i| k.position(i, i).unwrap()).collect();

        let mut counts = vec![0usize; n + 1];
        for &c in &k.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..n {
            counts[c + 1] += counts[c];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0; k.nnz()];
        let mut csc_src = vec![0; k.nnz()];
        for i in 0..n {
            for p in k.row(i) {
                let c = k.col_idx[p];
                let s = next[c];
                next[c] += 1;
                row_idx[s] = i;
                csc_src[s] = p;
            }
        }
        Self {
            nu,
            np,
            k,
            a_to_k,
            b_to_k,
            bt_to_k,
            diag,
            col_ptr,
            row_idx,
            csc_src,
            symbolic: OnceLock::new(),
            signs: (0..n).map(|i| if i < nu { 1 } else { -1 }).collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.nu + self.np
    }

    fn symbolic_ref(&self) -> SymbolicSparseColMatRef<'_, usize> {
        let n = self.dimension();
        SymbolicSparseColMatRef::new_checked(n, n, &self.col_ptr, None, &self.row_idx)
    }

    fn symbolic(&self) -> Result<Arc<SymbolicCholesky<usize>>> {
        self.symbolic
            .get_or_init(|| {
                factorize_symbolic_cholesky(self.symbolic_ref(), Side::Lower, SymmetricOrdering::Amd, Default::default())
                    .map(Arc::new)
                    .map_err(|e| format!("{e:?}"))
            })
            .clone()
            .map_err(Error::Singular)
    }
}

/// Factored system with essential conditions eliminated symmetrically.
#[derive(Debug, Clone)]
pub struct SaddleSolver {
    layout: Arc<SaddleLayout>,
    values: Vec<f64>,
    symbolic: Arc<SymbolicCholesky<usize>>,
    factor: Vec<f64>,
    a: CsrMatrix,
    b: CsrMatrix,
    constrained: Vec<bool>,
}

impl SaddleSolver {
    /// Factors `[A Bᵀ; B 0]` after zeroing constrained rows and columns and
    /// putting 1 on their diagonal.
    pub fn factor(system: &SparseSystem, constrained: &[bool]) -> Result<Self> {
        let layout = system.layout().clone();
        if constrained.len() != layout.nu {
            return Err(Error::Mismatch(format!(
                "{} constraint flags for {} velocity dofs",
                constrained.len(),
                layout.nu
            )));
        }
        let mut values = vec![0.0; layout.k.nnz()];
        let (a, b) = (&system.a, &system.b);
        for i in 0..layout.nu {
            for p in a.pattern().row(i) {
                let j = a.pattern().col_idx[p];
                if !constrained[i] && !constrained[j] {
                    values[layout.a_to_k[p]] += a.values()[p];
                }
            }
        }
        for r in 0..layout.np {
            for p in b.pattern().row(r) {
                let j = b.pattern().col_idx[p];
                if !constrained[j] {
                    values[layout.b_to_k[p]] += b.values()[p];
                    values[layout.bt_to_k[p]] += b.values()[p];
                }
            }
        }
        for (i, &c) in constrained.iter().enumerate() {
            if c {
                values[layout.diag[i]] = 1.0;
            }
        }
        let csc: Vec<f64> = layout.csc_src.iter().map(|&p| values[p]).collect();
        let symbolic = layout.symbolic()?;
        let mat = SparseColMatRef::new(layout.symbolic_ref(), &csc);
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let regularization = LdltRegularization {
            dynamic_regularization_signs: Some(&layout.signs),
            dynamic_regularization_delta: 1e-10 * scale,
            dynamic_regularization_epsilon: 1e-13 * scale,
        };
        let par = get_global_parallelism();
        let mut factor = vec![0.0; symbolic.len_val()];
        let mut mem = MemBuffer::try_new(symbolic.factorize_numeric_ldlt_scratch::<f64>(par, Default::default()))
            .map_err(|e| Error::Singular(format!("{e:?}")))?;
        symbolic
            .factorize_numeric_ldlt(
                &mut factor,
                mat,
                Side::Lower,
                regularization,
                par,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| Error::Singular(format!("{e:?}")))?;
        Ok(Self {
            layout,
            values,
            symbolic,
            factor,
            a: a.clone(),
            b: b.clone(),
            constrained: constrained.to_vec(),
        })
    }

    pub fn velocity_dofs(&self) -> usize {
        self.layout.nu
    }

    pub fn pressure_dofs(&self) -> usize {
        self.layout.np
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let k = &self.layout.k;
        (0..k.nrows)
            .map(|i| k.row(i).map(|p| self.values[p] * x[k.col_idx[p]]).sum())
            .collect()
    }

    fn factor_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut m = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let par = get_global_parallelism();
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, par));
        LdltRef::new(&self.symbolic, &self.factor).solve_in_place_with_conj(
            Conj::No,
            m.as_mut(),
            par,
            MemStack::new(&mut mem),
        );
        (0..rhs.len()).map(|i| m[(i, 0)]).collect()
    }

    /// Solves `A u + Bᵀ p = f`, `B u = g` with `u = prescribed` on
    /// constrained dofs (other entries of `prescribed` are ignored).
    pub fn solve(&self, f: &[f64], g: &[f64], prescribed: &[f64]) -> Result<(MixedField, SolveDiagnostics)> {
        let (nu, np) = (self.layout.nu, self.layout.np);
        if f.len() != nu || g.len() != np || prescribed.len() != nu {
            return Err(Error::Mismatch("right-hand side length".into()));
        }
        let lift: Vec<f64> = (0..nu)
            .map(|i| if self.constrained[i] { prescribed[i] } else { 0.0 })
            .collect();
        let a_lift = self.a.matvec(&lift);
        let b_lift = self.b.matvec(&lift);
        let mut rhs = Vec::with_capacity(nu + np);
        for i in 0..nu {
            rhs.push(if self.constrained[i] { lift[i] } else { f[i] - a_lift[i] });
        }
        for k in 0..np {
            rhs.push(g[k] - b_lift[k]);
        }
        let scale = norm(&rhs).max(f64::MIN_POSITIVE);
        let mut x = self.factor_solve(&rhs);
        let mut refinements = 0;
        let mut rel;
        loop {
            let kx = self.apply(&x);
            let r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, v)| b - v).collect();
            rel = norm(&r) / scale;
            if !rel.is_finite() {
                return Err(Error::Singular("non-finite solution".into()));
            }
            if rel <= 1e-14 || refinements >= MAX_REFINEMENTS {
                break;
            }
            let dx = self.factor_solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
            refinements += 1;
        }
        if rel > RESIDUAL_TOLERANCE {
            return Err(Error::Singular(format!("relative residual {rel:.3e}")));
        }
        let pressure = x.split_off(nu);
        Ok((
            MixedField { velocity: x, pressure },
            SolveDiagnostics {
                relative_residual: rel,
                refinements,
            },
        ))
    }
}

/// General sparse LU of a square compressed-row matrix.
#[derive(Debug, Clone)]
pub struct SparseLu {
    lu: Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn factor(m: &CsrMatrix) -> Result<Self> {
        let n = m.nrows();
        let pat = m.pattern();
        let mut triplets = Vec::with_capacity(pat.nnz());
        for i in 0..n {
            for p in pat.row(i) {
                triplets.push(Triplet::new(i, pat.col_idx[p], m.values()[p]));
            }
        }
        let csc = SparseColMat::<usize, f64>::try_new_from_triplets(n, m.ncols(), &triplets)
            .map_err(|e| Error::Singular(format!("{e:?}")))?;
        let lu = csc.sp_lu().map_err(|e| Error::Singular(format!("{e:?}")))?;
        Ok(Self { lu, n })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut m = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(m.as_mut());
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }

    /// Solves for every column of `rhs` in place.
    pub fn solve_columns(&self, rhs: &mut Mat<f64>) {
        self.lu.solve_in_place(rhs.as_mut());
    }
}

/// One-shot factor and solve.
pub fn solve_saddle(system: &SparseSystem, constrained: &[bool], prescribed: &[f64]) -> Result<MixedField> {
    let solver = SaddleSolver::factor(system, constrained)?;
    Ok(solver.solve(&system.f, &system.g, prescribed)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_block_returns_rhs() {
        let a = CsrMatrix::identity(3);
        let b = CsrMatrix::from_triplets(1, 3, &[(0, 2, 1.0)]);
        let sys = SparseSystem::new(a, b, vec![1.0, 0.0, 0.0], vec![0.0]);
        let x = solve_saddle(&sys, &[false; 3], &[0.0; 3]).unwrap();
        assert!((x.velocity[0] - 1.0).abs() < 1e-15);
        assert!(x.velocity[1].abs() < 1e-15 && x.velocity[2].abs() < 1e-15);
    }

    #[test]
    fn inconsistent_constraint_is_rejected() {
        let a = CsrMatrix::identity(3);
        let b = CsrMatrix::from_triplets(1, 3, &[(0, 0, 0.0)]);
        let sys = SparseSystem::new(a, b, vec![1.0, 0.0, 0.0], vec![1.0]);
        assert!(solve_saddle(&sys, &[false; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn general_lu_solves() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 3.0)]);
        let x = SparseLu::factor(&m).unwrap().solve(&[6.0, 8.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        let e = m.eliminate(&[true, false]);
        assert_eq!(e.get(0, 0), 1.0);
        assert_eq!(e.get(1, 0), 0.0);
        assert_eq!(e.get(1, 1), 3.0);
    }

    #[test]
    fn essential_values_are_imposed() {
        // [2 1; 1 2] u = f with u_0 = 3 prescribed.
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]);
        let b = CsrMatrix::from_triplets(1, 2, &[(0, 1, 1.0)]);
        let sys = SparseSystem::new(a, b, vec![0.0, 4.0], vec![-1.0]);
        let solver = SaddleSolver::factor(&sys, &[true, false]).unwrap();
        let (x, d) = solver.solve(&sys.f, &sys.g, &[3.0, 0.0]).unwrap();
        assert_eq!(x.velocity[0], 3.0);
        assert!((x.velocity[1] + 1.0).abs() < 1e-14);
        // Row 1: 3 + 2·(-1) + p = 4.
        assert!((x.pressure[0] - 3.0).abs() < 1e-14);
        assert!(d.relative_residual < 1e-14);
    }
}
