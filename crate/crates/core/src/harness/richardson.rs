//! Extrapolation and convergence-order fitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extrapolated limit from three levels `h, h/2, h/4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub limit: f64,
    /// `log₂((v_h - v_{h/2}) / (v_{h/2} - v_{h/4}))`, `None` when undefined.
    pub estimated_order: Option<f64>,
}

/// Richardson limit under an assumed order `p` with refinement ratio 2.
pub fn richardson_extrapolate(v_h: f64, v_h2: f64, v_h4: f64, assumed_order: f64) -> Result<Extrapolation> {
    let r = 2f64.powf(assumed_order);
    let denom = r - 1.0;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::DegenerateSequence(format!("assumed order {assumed_order}")));
    }
    let limit = v_h2 + (v_h4 - v_h2) * r / denom;
    let (d1, d2) = (v_h - v_h2, v_h2 - v_h4);
    let estimated_order = if d1 == 0.0 || d2 == 0.0 || d1 / d2 <= 0.0 {
        None
    } else {
        Some((d1 / d2).log2())
    };
    Ok(Extrapolation { limit, estimated_order })
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_order(h: &[f64], e: &[f64]) -> Result<f64> {
    if h.len() != e.len() || h.len() < 2 {
        return Err(Error::DegenerateSequence(format!("{} points", h.len().min(e.len()))));
    }
    if h.iter().chain(e).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateSequence("non-positive value in log fit".into()));
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateSequence("identical mesh sizes".into()));
    }
    Ok(sxy / sxx)
}

/// Indices of levels kept for the order fit: the error must keep
/// decreasing by at least `min_ratio` from the previous kept level.
pub fn unsaturated_levels(errors: &[f64], min_ratio: f64) -> Vec<usize> {
    let mut keep = Vec::new();
    for (i, &e) in errors.iter().enumerate() {
        match keep.last() {
            None => keep.push(i),
            Some(&k) => {
                if e > 0.0 && errors[k] / e >= min_ratio {
                    keep.push(i);
                } else {
                    break;
                }
            }
        }
    }
    keep
}
