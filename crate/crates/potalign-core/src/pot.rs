//! Partial-coupling weights. A coupling entry whose transport cost
//! exceeds a threshold is inadmissible; the soft variant replaces the
//! hard cutoff with a sigmoid so admissibility degrades smoothly and the
//! weights can be recomputed from the live cost matrix every batch.

use crate::mat::Mat;
use crate::math;
use crate::ot::{CostMatrix, Coupling};
use crate::{Error, Result};

/// Threshold and sharpness of the admissibility weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotParams {
    /// Transport cost threshold; costs at or below it count as admissible.
    pub cost_threshold: f64,
    /// Sigmoid sharpness. Zero flattens every weight to 1/2; large values
    /// approach the hard cutoff.
    pub scale: f64,
}

impl PotParams {
    pub fn new(cost_threshold: f64, scale: f64) -> Result<Self> {
        if !cost_threshold.is_finite() {
            return Err(Error::InvalidParam {
                context: "pot cost threshold must be finite",
            });
        }
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParam {
                context: "pot scale must be finite and >= 0",
            });
        }
        Ok(PotParams {
            cost_threshold,
            scale,
        })
    }
}

impl Default for PotParams {
    /// Grid-searched operating point for unit-norm latents: b = 1, scale = 5.
    fn default() -> Self {
        PotParams {
            cost_threshold: 1.0,
            scale: 5.0,
        }
    }
}

/// Per-pair admissibility weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    weights: Mat,
}

impl WeightMatrix {
    pub fn new(weights: Mat) -> Result<Self> {
        if !weights.iter().all(|w| (0.0..=1.0).contains(w)) {
            return Err(Error::InvalidParam {
                context: "weight matrix entries must lie in [0, 1]",
            });
        }
        Ok(WeightMatrix { weights })
    }

    /// All-ones weights: plain OT as a degenerate case.
    pub fn ones(rows: usize, cols: usize) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for w in m.iter_mut() {
            *w = 1.0;
        }
        WeightMatrix { weights: m }
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    pub fn shape(&self) -> (usize, usize) {
        self.weights.shape()
    }
}

/// Binary admissibility: 1 where the cost is at or below the threshold
/// (the boundary itself is admissible), 0 above it.
pub fn hard_weight(cost: &CostMatrix, params: &PotParams) -> WeightMatrix {
    let mut weights = Mat::zeros(cost.n_rows(), cost.n_cols());
    for (w, &c) in weights.iter_mut().zip(cost.values().iter()) {
        *w = if c <= params.cost_threshold { 1.0 } else { 0.0 };
    }
    WeightMatrix { weights }
}

/// Smooth admissibility: `logistic(-scale * (cost - threshold))`, exactly
/// 1/2 at the threshold and strictly decreasing in the cost for scale > 0.
pub fn soft_weight(cost: &CostMatrix, params: &PotParams) -> WeightMatrix {
    let mut weights = Mat::zeros(cost.n_rows(), cost.n_cols());
    for (w, &c) in weights.iter_mut().zip(cost.values().iter()) {
        *w = math::logistic(-params.scale * (c - params.cost_threshold));
    }
    WeightMatrix { weights }
}

/// Weighted objective `sum_ij C_ij * gamma_ij * W_ij`.
pub fn weighted_transport_value(
    cost: &CostMatrix,
    gamma: &Coupling,
    weights: &WeightMatrix,
) -> Result<f64> {
    if cost.shape() != gamma.plan().shape() || cost.shape() != weights.shape() {
        return Err(Error::DimMismatch {
            context: "weighted_transport_value",
            expected: cost.n_rows() * cost.n_cols(),
            found: gamma.plan().n_rows() * gamma.plan().n_cols(),
        });
    }
    let mut v = 0.0;
    for ((c, p), w) in cost
        .values()
        .iter()
        .zip(gamma.plan().iter())
        .zip(weights.weights().iter())
    {
        v += c * p * w;
    }
    Ok(v)
}
