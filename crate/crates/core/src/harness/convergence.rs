//! Spatial convergence of the optimal functional value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::FunctionalValue;
use crate::harness::richardson::{fit_order, richardson_extrapolate, unsaturated_levels};

/// One mesh level of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub iterations: usize,
    pub value: FunctionalValue,
    pub error: f64,
    /// Excluded from the order fit.
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "method")]
pub enum Reference {
    /// Known minimum.
    Exact { value: f64 },
    /// Limit from the three finest levels.
    Richardson {
        value: f64,
        assumed_order: f64,
        estimated_order: Option<f64>,
    },
}

impl Reference {
    pub fn value(&self) -> f64 {
        match *self {
            Reference::Exact { value } | Reference::Richardson { value, .. } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub alpha: f64,
    pub reference: Reference,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope over the unsaturated levels.
    pub fitted_order: Option<f64>,
}

impl ConvergenceReport {
    /// `levels` holds `(n, iterations, value)` in ascending `n`. With
    /// `exact = Some(v)` the reference is `v`; otherwise it is extrapolated.
    pub fn build(
        alpha: f64,
        levels: &[(usize, usize, FunctionalValue)],
        exact: Option<f64>,
        assumed_order: f64,
        min_ratio: f64,
    ) -> Result<Self> {
        let reference = match exact {
            Some(value) => Reference::Exact { value },
            None => {
                let k = levels.len();
                if k < 3 {
                    return Err(Error::DegenerateSequence(format!(
                        "extrapolation needs three levels, got {k}"
                    )));
                }
                let [a, b, c] = [k - 3, k - 2, k - 1].map(|i| levels[i].2.total);
                let e = richardson_extrapolate(a, b, c, assumed_order)?;
                Reference::Richardson {
                    value: e.limit,
                    assumed_order,
                    estimated_order: e.estimated_order,
                }
            }
        };
        let errors: Vec<f64> = levels.iter().map(|l| (l.2.total - reference.value()).abs()).collect();
        let kept = unsaturated_levels(&errors, min_ratio);
        let rows: Vec<ConvergenceRow> = levels
            .iter()
            .zip(&errors)
            .enumerate()
            .map(|(i, (&(n, iterations, value), &error))| ConvergenceRow {
                n,
                h: 1.0 / n as f64,
                iterations,
                value,
                error,
                saturated: !kept.contains(&i),
            })
            .collect();
        let (h, e): (Vec<f64>, Vec<f64>) = kept.iter().map(|&i| (rows[i].h, rows[i].error)).unzip();
        let fitted_order = if h.len() >= 2 { fit_order(&h, &e).ok() } else { None };
        Ok(Self {
            alpha,
            reference,
            rows,
            fitted_order,
        })
    }

    /// CSV with header `n,h,iterations,j,j_energy,j_reg,j_vol,error,saturated`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "h", "iterations", "j", "j_energy", "j_reg", "j_vol", "error", "saturated"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                format!("{:.17e}", r.h),
                r.iterations.to_string(),
                format!("{:.17e}", r.value.total),
                format!("{:.17e}", r.value.energy),
                format!("{:.17e}", r.value.regularization),
                format!("{:.17e}", r.value.volume),
                format!("{:.17e}", r.error),
                r.saturated.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(total: f64) -> FunctionalValue {
        FunctionalValue {
            total,
            energy: total,
            ..Default::default()
        }
    }

    #[test]
    fn exact_reference_quadratic() {
        let levels: Vec<_> = [8usize, 16, 32, 64].iter().map(|&n| (n, 5, value(3.0 / (n * n) as f64))).collect();
        let r = ConvergenceReport::build(0.0, &levels, Some(0.0), 2.0, 1.5).unwrap();
        assert!((r.fitted_order.unwrap() - 2.0).abs() < 1e-12);
        assert!(r.rows.iter().all(|row| !row.saturated));
    }

    #[test]
    fn richardson_reference() {
        let levels: Vec<_> = [8usize, 16, 32, 64]
            .iter()
            .map(|&n| (n, 5, value(1.0 + 2.0 / (n * n) as f64)))
            .collect();
        let r = ConvergenceReport::build(0.1, &levels, None, 2.0, 1.5).unwrap();
        assert!((r.reference.value() - 1.0).abs() < 1e-12);
        let Reference::Richardson { estimated_order, .. } = r.reference else { panic!() };
        assert!((estimated_order.unwrap() - 2.0).abs() < 1e-9);
        assert!(ConvergenceReport::build(0.1, &levels[..2], None, 2.0, 1.5).is_err());
    }

    #[test]
    fn saturation_is_flagged() {
        let levels = vec![(8, 1, value(1e-2)), (16, 1, value(2.5e-3)), (32, 1, value(2.4e-3))];
        let r = ConvergenceReport::build(0.0, &levels, Some(0.0), 2.0, 1.5).unwrap();
        assert_eq!(r.rows.iter().map(|r| r.saturated).collect::<Vec<_>>(), vec![false, false, true]);
        assert!((r.fitted_order.unwrap() - 2.0).abs() < 1e-12);
    }
}
