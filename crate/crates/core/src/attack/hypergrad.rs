//! Reverse-mode differentiation through recorded WRMF gradient steps.
//!
//! With `θ_{t+1} = θ_t − η ∇L_rec(θ_t; R)`, the adjoint recursion is
//! `ā_t = ā_{t+1} − η H(θ_t) ā_{t+1}`, and each step contributes
//! `−η ∂⟨ā_{t+1}, ∇L_rec(θ_t)⟩/∂R^f = 2η C ⊙ (A_f Vᵀ + U_f Bᵀ)` to the fake rows,
//! where `(A, B)` is the adjoint split into user and item blocks.

use std::ops::Range;

use ndarray::Array2;

use super::objective::FrozenObjective;
use super::sam::SamPerturbation;
use crate::recmodel::{wrmf_hvp, wrmf_value_cross, EmbeddingParams, TrainingTrajectory, WeightedMatrix};
use crate::{Error, Result};

/// `∂L_atk/∂R^f` with `L_atk` evaluated at `θ* + Δ`, `Δ` held constant,
/// backpropagated through the last `unroll_steps` steps (`None` = all).
pub fn hypergradient(
    trajectory: &TrainingTrajectory,
    perturbation: &SamPerturbation,
    objective: &FrozenObjective,
    r: &WeightedMatrix,
    fake_rows: Range<usize>,
    unroll_steps: Option<usize>,
) -> Result<Array2<f64>> {
    let theta = trajectory.final_params();
    if perturbation.delta_theta.len() != theta.len() {
        return Err(Error::Shape(format!(
            "perturbation has {} entries, parameters {}",
            perturbation.delta_theta.len(),
            theta.len()
        )));
    }
    let mut probe = theta.clone();
    if !perturbation.is_zero() {
        let delta = EmbeddingParams::from_flat(theta.num_users(), theta.num_items(), theta.dim(), &perturbation.delta_theta)?;
        probe.add_scaled(1.0, &delta);
    }
    let (_, outer) = objective.value_and_grad(&probe)?;
    backprop_training(trajectory, &outer, r, fake_rows, unroll_steps)
}

/// Pulls `outer = ∂L/∂θ_T` back to the fake rows of `r`.
pub fn backprop_training(
    trajectory: &TrainingTrajectory,
    outer: &EmbeddingParams,
    r: &WeightedMatrix,
    fake_rows: Range<usize>,
    unroll_steps: Option<usize>,
) -> Result<Array2<f64>> {
    let theta = trajectory.final_params();
    if !outer.same_shape(theta) {
        return Err(Error::Shape("outer gradient does not match trajectory parameters".into()));
    }
    if theta.num_users() != r.num_users() || theta.num_items() != r.num_items() {
        return Err(Error::Shape("trajectory parameters do not match the poisoned matrix".into()));
    }
    if fake_rows.start > fake_rows.end || fake_rows.end > r.num_users() {
        return Err(Error::Shape(format!("fake rows {fake_rows:?} outside {} users", r.num_users())));
    }
    let (first, count) = (fake_rows.start, fake_rows.len());
    let mut grad = Array2::zeros((count, r.num_items()));
    let steps = trajectory.steps();
    let start = steps - unroll_steps.unwrap_or(steps).min(steps);
    if start == steps || count == 0 {
        return Ok(grad);
    }
    let (_, weights) = r.dense_rows(first, count);
    let eta = trajectory.learning_rate();
    let l2 = trajectory.l2_reg();
    let k = trajectory.checkpoint_every();
    let mut adjoint = outer.clone();
    let mut hi = steps;
    while hi > start {
        let lo = start.max((hi - 1) / k * k);
        let iterates = trajectory.iterates(r, lo, hi)?;
        for theta_t in iterates.iter().rev() {
            grad.scaled_add(2.0 * eta, &wrmf_value_cross(theta_t, &adjoint, &weights, first));
            let h = wrmf_hvp(theta_t, &adjoint, r, l2);
            adjoint.add_scaled(-eta, &h);
        }
        hi = lo;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::sam_perturbation;
    use crate::attack::AttackObjective;
    use crate::data::InteractionMatrix;
    use crate::recmodel::{train_wrmf, TrainConfig};
    use ndarray::Array2;
    use rand::Rng as _;

    fn setup(seed: u64) -> (InteractionMatrix, Array2<f64>, TrainConfig) {
        let real = InteractionMatrix::from_rows(4, vec![vec![0, 1], vec![1, 2], vec![3], vec![0, 2, 3]]).unwrap();
        let mut rng = crate::rng::seeded(seed);
        // Stay away from the 0.5 weight threshold so finite differences see a
        // smooth map.
        let fake = Array2::from_shape_fn((1, 4), |_| {
            let x: f64 = rng.random_range(0.05..0.4);
            if rng.random_bool(0.5) {
                x
            } else {
                1.0 - x
            }
        });
        let cfg = TrainConfig {
            dim: 2,
            learning_rate: 0.1,
            steps: 3,
            l2_reg: 0.05,
            observed_weight: 1.0,
            missing_weight: 0.2,
            init_std: 0.5,
            seed,
            ..TrainConfig::default()
        };
        (real, fake, cfg)
    }

    fn composite(real: &InteractionMatrix, fake: &Array2<f64>, cfg: &TrainConfig, objective: &AttackObjective, delta: &[f64]) -> f64 {
        let r = WeightedMatrix::with_relaxed_rows(real, fake.view(), cfg.observed_weight, cfg.missing_weight).unwrap();
        let (mut theta, _) = train_wrmf(&r, cfg, false).unwrap();
        let frozen = objective.freeze(&theta, real.num_users(), None);
        let d = EmbeddingParams::from_flat(theta.num_users(), theta.num_items(), theta.dim(), delta).unwrap();
        theta.add_scaled(1.0, &d);
        frozen.value(&theta).unwrap()
    }

    fn check_against_fd(seed: u64, epsilon: f64, checkpoint_every: usize) {
        let (real, fake, mut cfg) = setup(seed);
        cfg.checkpoint_every = checkpoint_every;
        let objective = AttackObjective::FullUser { targets: vec![3] };
        let r = WeightedMatrix::with_relaxed_rows(&real, fake.view(), cfg.observed_weight, cfg.missing_weight).unwrap();
        let (theta, traj) = train_wrmf(&r, &cfg, true).unwrap();
        let traj = traj.unwrap();
        let frozen = objective.freeze(&theta, 4, None);
        let (_, g) = frozen.value_and_grad(&theta).unwrap();
        let sam = sam_perturbation(&g.to_flat(), epsilon).unwrap();
        let hg = hypergradient(&traj, &sam, &frozen, &r, 4..5, None).unwrap();
        let h = 1e-3;
        for i in 0..4 {
            let mut plus = fake.clone();
            plus[[0, i]] += h;
            let mut minus = fake.clone();
            minus[[0, i]] -= h;
            let fd = (composite(&real, &plus, &cfg, &objective, &sam.delta_theta)
                - composite(&real, &minus, &cfg, &objective, &sam.delta_theta))
                / (2.0 * h);
            let err = (fd - hg[[0, i]]).abs() / fd.abs().max(hg[[0, i]].abs()).max(1e-8);
            assert!(err < 1e-3, "item {i}: fd {fd} vs analytic {}", hg[[0, i]]);
        }
    }

    #[test]
    fn matches_finite_differences_without_perturbation() {
        for seed in 0..4 {
            check_against_fd(seed, 0.0, 1);
        }
    }

    #[test]
    fn matches_finite_differences_with_perturbation() {
        for seed in 10..14 {
            check_against_fd(seed, 0.05, 1);
        }
    }

    #[test]
    fn checkpointed_replay_gives_same_gradient() {
        check_against_fd(3, 0.05, 2);
    }

    #[test]
    fn empty_window_is_zero() {
        let (real, fake, cfg) = setup(0);
        let r = WeightedMatrix::with_relaxed_rows(&real, fake.view(), 1.0, 0.2).unwrap();
        let (theta, traj) = train_wrmf(&r, &cfg, true).unwrap();
        let frozen = AttackObjective::FullUser { targets: vec![1] }.freeze(&theta, 4, None);
        let hg = hypergradient(&traj.unwrap(), &SamPerturbation::zeros(theta.len()), &frozen, &r, 4..5, Some(0)).unwrap();
        assert!(hg.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (real, fake, cfg) = setup(0);
        let r = WeightedMatrix::with_relaxed_rows(&real, fake.view(), 1.0, 0.2).unwrap();
        let (theta, traj) = train_wrmf(&r, &cfg, true).unwrap();
        let frozen = AttackObjective::FullUser { targets: vec![1] }.freeze(&theta, 4, None);
        let bad = SamPerturbation::zeros(3);
        assert!(matches!(hypergradient(traj.as_ref().unwrap(), &bad, &frozen, &r, 4..5, None), Err(Error::Shape(_))));
        let ok = SamPerturbation::zeros(theta.len());
        assert!(hypergradient(traj.as_ref().unwrap(), &ok, &frozen, &r, 4..9, None).is_err());
    }
}
