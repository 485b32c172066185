use std::sync::Arc;

/// Sorted compressed-row sparsity pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrPattern {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl CsrPattern {
    /// Builds a pattern from per-row column lists (duplicates allowed).
    pub fn from_rows(ncols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            debug_assert!(row.last().is_none_or(|&c| c < ncols));
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    pub fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }
}

/// Compressed-row matrix sharing an immutable pattern.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: Arc<CsrPattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<CsrPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn from_parts(pattern: Arc<CsrPattern>, values: Vec<f64>) -> Self {
        assert_eq!(pattern.nnz(), values.len());
        Self { pattern, values }
    }

    /// Sums duplicate entries.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        let pattern = Arc::new(CsrPattern::from_rows(ncols, rows));
        let mut m = Self::zeros(pattern);
        for &(i, j, v) in triplets {
            let p = m.pattern.position(i, j).expect("entry in pattern");
            m.values[p] += v;
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t)
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        (0..self.nrows())
            .map(|i| {
                self.pattern
                    .row(i)
                    .map(|p| self.values[p] * x[self.pattern.col_idx[p]])
                    .sum()
            })
            .collect()
    }

    pub fn matvec_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows());
        let mut out = vec![0.0; self.ncols()];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for p in self.pattern.row(i) {
                out[self.pattern.col_idx[p]] += self.values[p] * yi;
            }
        }
        out
    }

    /// `yᵀ M x`.
    pub fn bilinear(&self, y: &[f64], x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(y).map(|(a, b)| a * b).sum()
    }

    /// `max |M_ij - M_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows() {
            for p in self.pattern.row(i) {
                let j = self.pattern.col_idx[p];
                worst = worst.max((self.values[p] - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Elementwise `self + t·other`; patterns must match.
    pub fn axpy(&self, t: f64, other: &CsrMatrix) -> CsrMatrix {
        assert!(Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + t * b)
            .collect();
        CsrMatrix {
            pattern: self.pattern.clone(),
            values,
        }
    }

    /// Zeroes rows and columns of flagged indices and puts 1 on their
    /// diagonal (square matrices with structural diagonal).
    pub fn eliminate(&self, constrained: &[bool]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.nrows() {
            for p in self.pattern.row(i) {
                let j = self.pattern.col_idx[p];
                if constrained[i] || constrained[j] {
                    out.values[p] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows() {
            for p in self.pattern.row(i) {
                let j = self.pattern.col_idx[p];
                worst = worst.max((self.values[p] - other.get(i, j)).abs());
            }
            for p in other.pattern.row(i) {
                let j = other.pattern.col_idx[p];
                worst = worst.max((other.values[p] - self.get(i, j)).abs());
            }
        }
        worst
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 2, 2.0), (1, 0, -1.0)]);
        assert_eq!(m.get(0, 2), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![3.0, -1.0]);
        assert_eq!(m.matvec_transpose(&[1.0, 2.0]), vec![-2.0, 0.0, 3.0]);
    }

    #[test]
    fn asymmetry_detects_transpose_mismatch() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.5)]);
        assert!((m.max_asymmetry() - 0.5).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn triplets() -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
            proptest::collection::vec((0usize..6, 0usize..5, -5.0..5.0f64), 0..30)
        }

        proptest! {
            #[test]
            fn matvec_matches_dense(t in triplets(), x in proptest::collection::vec(-1.0..1.0f64, 5)) {
                let m = CsrMatrix::from_triplets(6, 5, &t);
                let mut dense = [[0.0; 5]; 6];
                for &(i, j, v) in &t {
                    dense[i][j] += v;
                }
                let y = m.matvec(&x);
                for i in 0..6 {
                    let d: f64 = (0..5).map(|j| dense[i][j] * x[j]).sum();
                    prop_assert!((y[i] - d).abs() < 1e-12);
                }
            }

            #[test]
            fn transpose_is_adjoint(t in triplets(), x in proptest::collection::vec(-1.0..1.0f64, 5), y in proptest::collection::vec(-1.0..1.0f64, 6)) {
                let m = CsrMatrix::from_triplets(6, 5, &t);
                let lhs = dot(&m.matvec(&x), &y);
                let rhs = dot(&x, &m.matvec_transpose(&y));
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }
}
