use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::objective::FlatObjective;
use super::sam::scaled_norm;
use crate::rng::{derive_seed, seeded, Rng};

/// Outcome of sampling `L(θ*+ζ) ≤ L(θ*) + ε‖∇L(θ*)‖ + L̂ε²/2` over `‖ζ‖ ≤ ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub samples: usize,
    pub violations: usize,
    pub base_loss: f64,
    pub grad_norm: f64,
    pub smoothness: f64,
    /// Right-hand side of the inequality.
    pub bound: f64,
    pub max_perturbed_loss: f64,
}

impl BoundReport {
    pub fn violation_rate(&self) -> f64 {
        self.violations as f64 / self.samples.max(1) as f64
    }
}

fn ball_sample(rng: &mut Rng, dim: usize, radius: f64) -> Vec<f64> {
    let mut z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = scaled_norm(&z);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    if norm > 0.0 {
        z.iter_mut().for_each(|x| *x *= r / norm);
    }
    z
}

fn shifted(theta: &[f64], zeta: &[f64]) -> Vec<f64> {
    theta.iter().zip(zeta).map(|(a, b)| a + b).collect()
}

/// `2 · max ‖∇L(θ₁) − ∇L(θ₂)‖ / ‖θ₁ − θ₂‖` over `samples` pairs in the ball.
pub fn estimate_smoothness(theta: &[f64], objective: &dyn FlatObjective, epsilon: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = seeded(derive_seed(seed, 17));
    let mut best = 0.0f64;
    for _ in 0..samples {
        let a = shifted(theta, &ball_sample(&mut rng, theta.len(), epsilon));
        let b = shifted(theta, &ball_sample(&mut rng, theta.len(), epsilon));
        let dist = scaled_norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
        if dist == 0.0 {
            continue;
        }
        let (_, ga) = objective.value_and_grad(&a);
        let (_, gb) = objective.value_and_grad(&b);
        let diff: Vec<f64> = ga.iter().zip(&gb).map(|(x, y)| x - y).collect();
        best = best.max(scaled_norm(&diff) / dist);
    }
    2.0 * best
}

/// Samples `samples` perturbations in the ε-ball and counts bound violations.
/// `smoothness` overrides the sampled estimate.
pub fn verify_transfer_bound(
    theta_star: &[f64],
    objective: &dyn FlatObjective,
    epsilon: f64,
    samples: usize,
    smoothness: Option<f64>,
    seed: u64,
) -> BoundReport {
    let samples = samples.max(1);
    let (base_loss, grad) = objective.value_and_grad(theta_star);
    let grad_norm = scaled_norm(&grad);
    let smoothness = smoothness.unwrap_or_else(|| estimate_smoothness(theta_star, objective, epsilon, samples, seed));
    let bound = base_loss + epsilon * grad_norm + smoothness * epsilon * epsilon / 2.0;
    // Rounding slack: at ε = 0 both sides are the same number.
    let slack = 1e-12 * bound.abs().max(1.0);
    let mut rng = seeded(derive_seed(seed, 19));
    let mut violations = 0;
    let mut max_perturbed_loss = f64::NEG_INFINITY;
    for _ in 0..samples {
        let zeta = ball_sample(&mut rng, theta_star.len(), epsilon);
        let loss = objective.value(&shifted(theta_star, &zeta));
        max_perturbed_loss = max_perturbed_loss.max(loss);
        // NaN losses count as violations.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(loss <= bound + slack) {
            violations += 1;
        }
    }
    BoundReport {
        epsilon,
        samples,
        violations,
        base_loss,
        grad_norm,
        smoothness,
        bound,
        max_perturbed_loss,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::HalfSquaredNorm;

    #[test]
    fn zero_radius_is_tight() {
        let theta = vec![0.3, -1.2, 2.0];
        let r = verify_transfer_bound(&theta, &HalfSquaredNorm, 0.0, 10, None, 1);
        assert_eq!(r.violations, 0);
        assert_eq!(r.bound, r.base_loss);
        assert_eq!(r.max_perturbed_loss, r.base_loss);
    }

    #[test]
    fn quadratic_never_violates() {
        let theta: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        for eps in [0.01, 0.05, 0.2, 1.0] {
            let r = verify_transfer_bound(&theta, &HalfSquaredNorm, eps, 200, Some(1.0), 4);
            assert_eq!(r.violations, 0, "eps {eps}");
            let est = verify_transfer_bound(&theta, &HalfSquaredNorm, eps, 200, None, 4);
            assert!((est.smoothness - 2.0).abs() < 1e-9);
            assert_eq!(est.violations, 0);
        }
    }

    #[test]
    fn ball_samples_respect_radius() {
        let mut rng = seeded(3);
        for _ in 0..100 {
            assert!(scaled_norm(&ball_sample(&mut rng, 9, 0.3)) <= 0.3 + 1e-15);
        }
    }
}
