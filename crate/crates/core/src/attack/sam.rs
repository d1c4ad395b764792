use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A worst-case parameter offset of norm `radius` (or zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamPerturbation {
    pub delta_theta: Vec<f64>,
    pub radius: f64,
}

impl SamPerturbation {
    pub fn zeros(len: usize) -> Self {
        Self {
            delta_theta: vec![0.0; len],
            radius: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.delta_theta.iter().all(|&x| x == 0.0)
    }
}

/// `ε · g / ‖g‖₂`, the first-order maximiser over the ε-ball. A zero
/// gradient yields a zero offset.
pub fn sam_perturbation(grad: &[f64], epsilon: f64) -> Result<SamPerturbation> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::config("epsilon", format!("must be finite and >= 0, got {epsilon}")));
    }
    if grad.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("SAM source gradient"));
    }
    let norm = scaled_norm(grad);
    if norm == 0.0 || epsilon == 0.0 {
        return Ok(SamPerturbation {
            delta_theta: vec![0.0; grad.len()],
            radius: epsilon,
        });
    }
    // Normalise in two stages so huge or tiny gradients neither overflow nor
    // lose the last few bits of the unit norm.
    let scale = grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let unit: Vec<f64> = grad.iter().map(|x| x / scale).collect();
    let unit_norm = unit.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(SamPerturbation {
        delta_theta: unit.iter().map(|x| epsilon * (x / unit_norm)).collect(),
        radius: epsilon,
    })
}

/// Euclidean norm without intermediate overflow.
pub(crate) fn scaled_norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.iter().map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}
