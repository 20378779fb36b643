//! Soft dynamic time warping between 2-D velocity sequences.
//!
//! The smoothed minimum `-γ log Σ exp(-aᵢ/γ)` replaces the hard minimum of
//! classic DTW; `γ = 0` falls back to exact DTW. Only the forward value is
//! computed since the distance is used for retrieval ranking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Velocity2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SoftDtwParams {
    pub gamma: f64,
    /// Use squared Euclidean cost instead of the plain norm.
    #[serde(default)]
    pub squared_cost: bool,
}

impl Default for SoftDtwParams {
    fn default() -> Self {
        SoftDtwParams {
            gamma: 1.0,
            squared_cost: false,
        }
    }
}

impl SoftDtwParams {
    pub fn with_gamma(gamma: f64) -> Self {
        SoftDtwParams {
            gamma,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!(
                "soft-DTW gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Pairwise costs between two sequences, row-major `rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }
}

/// Smoothed minimum; exact minimum when `gamma == 0`.
pub fn soft_min(values: &[f64], gamma: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("soft_min of an empty sequence"));
    }
    if !(gamma >= 0.0) {
        return Err(Error::invalid(format!("soft_min gamma must be >= 0, got {gamma}")));
    }
    Ok(soft_min_unchecked(values, gamma))
}

fn soft_min_unchecked(values: &[f64], gamma: f64) -> f64 {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if gamma == 0.0 || min.is_infinite() {
        return min;
    }
    // log-sum-exp shifted by the minimum so the largest exponent is 0
    let sum: f64 = values.iter().map(|&a| (-(a - min) / gamma).exp()).sum();
    min - gamma * sum.ln()
}

pub fn cost_matrix(x: &[Velocity2], y: &[Velocity2]) -> Result<CostMatrix> {
    cost_matrix_with(x, y, false)
}

fn cost_matrix_with(x: &[Velocity2], y: &[Velocity2], squared: bool) -> Result<CostMatrix> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("cost matrix of an empty sequence"));
    }
    let mut entries = Vec::with_capacity(x.len() * y.len());
    for a in x {
        for b in y {
            let d = *a - *b;
            entries.push(if squared { d.dot(d) } else { d.norm() });
        }
    }
    Ok(CostMatrix {
        rows: x.len(),
        cols: y.len(),
        entries,
    })
}

/// Soft-DTW discrepancy between two sequences.
pub fn soft_dtw(x: &[Velocity2], y: &[Velocity2], params: &SoftDtwParams) -> Result<f64> {
    params.validate()?;
    let cost = cost_matrix_with(x, y, params.squared_cost)?;
    Ok(soft_dtw_from_cost(&cost, params.gamma))
}

fn soft_dtw_from_cost(cost: &CostMatrix, gamma: f64) -> f64 {
    let (n, m) = (cost.rows, cost.cols);
    let mut r = vec![0.0; n * m];
    let mut preds = [0.0; 3];
    for i in 0..n {
        for j in 0..m {
            let mut k = 0;
            if i > 0 {
                preds[k] = r[(i - 1) * m + j];
                k += 1;
            }
            if j > 0 {
                preds[k] = r[i * m + j - 1];
                k += 1;
            }
            if i > 0 && j > 0 {
                preds[k] = r[(i - 1) * m + j - 1];
                k += 1;
            }
            let prev = if k == 0 { 0.0 } else { soft_min_unchecked(&preds[..k], gamma) };
            r[i * m + j] = cost.get(i, j) + prev;
        }
    }
    r[n * m - 1]
}
