//! Attack losses over real-user score matrices.
//!
//! Both losses are written so that *decreasing* them promotes the targets.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{InteractionMatrix, UserGroups};
use crate::recmodel::{topk_from_scores, EmbeddingParams};
use crate::{Error, Result};

/// Softmax cross-entropy of every target for every real user:
/// `−Σ_t Σ_u log softmax(r̂_u)_t`. Rows are shifted by their maximum.
pub fn attack_loss_full(scores: ArrayView2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>)> {
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    let nt = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(scores.raw_dim());
    for (row, mut g) in scores.rows().into_iter().zip(grad.rows_mut()) {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let mut z = 0.0;
        for (gi, &x) in g.iter_mut().zip(row) {
            let e = (x - max).exp();
            *gi = e;
            z += e;
        }
        let lse = max + z.ln();
        g.mapv_inplace(|e| nt * e / z);
        for &t in targets {
            loss += lse - row[t];
            g[t] -= 1.0;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("full-user attack loss"));
    }
    Ok((loss, grad))
}

/// `𝕀[target ∉ Γ_u]` for every `u ∈ U₁` (rows) and target (columns), where
/// `Γ_u` is the user's current top-`k` list outside `exclude` (when given).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMask {
    pub(crate) outside: Vec<Vec<bool>>,
}

impl GroupMask {
    pub fn compute(
        scores: ArrayView2<f64>,
        targets: &[usize],
        groups: &UserGroups,
        k: usize,
        exclude: Option<&InteractionMatrix>,
    ) -> Self {
        let outside = groups
            .group1
            .iter()
            .map(|&u| {
                let row = scores.row(u).to_vec();
                let top = topk_from_scores(&row, exclude.map_or(&[][..], |m| m.row(u)), k);
                targets.iter().map(|t| !top.contains(t)).collect()
            })
            .collect();
        Self { outside }
    }
}

/// `Σ_t ( mean_{u∈U₁} 𝕀[t ∉ Γ_u]·r̂_ut − mean_{u∈U₀} r̂_ut )` with the indicator
/// recomputed from `scores`.
pub fn attack_loss_group(scores: ArrayView2<f64>, targets: &[usize], groups: &UserGroups, k: usize) -> Result<(f64, Array2<f64>)> {
    let mask = GroupMask::compute(scores, targets, groups, k, None);
    attack_loss_group_frozen(scores, targets, groups, &mask)
}

/// Group loss with a fixed indicator; the indicator contributes no gradient.
pub fn attack_loss_group_frozen(scores: ArrayView2<f64>, targets: &[usize], groups: &UserGroups, mask: &GroupMask) -> Result<(f64, Array2<f64>)> {
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    groups.require_nonempty()?;
    if mask.outside.len() != groups.group1.len() {
        return Err(Error::Shape("group mask does not match group 1".into()));
    }
    let w1 = 1.0 / groups.group1.len() as f64;
    let w0 = 1.0 / groups.group0.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(scores.raw_dim());
    for (i, &u) in groups.group1.iter().enumerate() {
        for (j, &t) in targets.iter().enumerate() {
            if mask.outside[i][j] {
                loss += w1 * scores[[u, t]];
                grad[[u, t]] += w1;
            }
        }
    }
    for &u in &groups.group0 {
        for &t in targets {
            loss -= w0 * scores[[u, t]];
            grad[[u, t]] -= w0;
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    FullUser,
    Group,
}

/// An attack goal over the first `num_real` users of a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackObjective {
    FullUser {
        targets: Vec<usize>,
    },
    Group {
        targets: Vec<usize>,
        groups: UserGroups,
        top_k: usize,
    },
}

impl AttackObjective {
    pub fn targets(&self) -> &[usize] {
        match self {
            AttackObjective::FullUser { targets } | AttackObjective::Group { targets, .. } => targets,
        }
    }

    /// Fixes every piecewise-constant ingredient (the group indicator) at `theta`.
    pub fn freeze(&self, theta: &EmbeddingParams, num_real: usize, exclude: Option<&InteractionMatrix>) -> FrozenObjective {
        let mask = match self {
            AttackObjective::FullUser { .. } => None,
            AttackObjective::Group { targets, groups, top_k } => {
                let scores = real_scores(theta, num_real);
                Some(GroupMask::compute(scores.view(), targets, groups, *top_k, exclude))
            }
        };
        FrozenObjective {
            objective: self.clone(),
            mask,
            num_real,
        }
    }
}

fn real_scores(theta: &EmbeddingParams, num_real: usize) -> Array2<f64> {
    theta.user.slice(s![..num_real, ..]).dot(&theta.item.t())
}

/// An [`AttackObjective`] with its indicator frozen; smooth in the parameters.
#[derive(Debug, Clone)]
pub struct FrozenObjective {
    objective: AttackObjective,
    mask: Option<GroupMask>,
    num_real: usize,
}

impl FrozenObjective {
    pub fn num_real(&self) -> usize {
        self.num_real
    }

    pub fn loss_from_scores(&self, scores: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
        match (&self.objective, &self.mask) {
            (AttackObjective::FullUser { targets }, _) => attack_loss_full(scores, targets),
            (AttackObjective::Group { targets, groups, .. }, Some(mask)) => attack_loss_group_frozen(scores, targets, groups, mask),
            (AttackObjective::Group { .. }, None) => unreachable!("group objectives are frozen with a mask"),
        }
    }

    pub fn value(&self, theta: &EmbeddingParams) -> Result<f64> {
        self.check(theta)?;
        Ok(self.loss_from_scores(real_scores(theta, self.num_real).view())?.0)
    }

    /// Loss and gradient w.r.t. all parameters (fake-user rows get zero).
    pub fn value_and_grad(&self, theta: &EmbeddingParams) -> Result<(f64, EmbeddingParams)> {
        self.check(theta)?;
        let real_users = theta.user.slice(s![..self.num_real, ..]);
        let (loss, g) = self.loss_from_scores(real_scores(theta, self.num_real).view())?;
        let mut grad = EmbeddingParams::zeros(theta.num_users(), theta.num_items(), theta.dim());
        grad.user.slice_mut(s![..self.num_real, ..]).assign(&g.dot(&theta.item));
        grad.item = g.t().dot(&real_users);
        Ok((loss, grad))
    }

    fn check(&self, theta: &EmbeddingParams) -> Result<()> {
        if theta.num_users() < self.num_real {
            return Err(Error::Shape(format!(
                "{} users in params, objective needs {}",
                theta.num_users(),
                self.num_real
            )));
        }
        Ok(())
    }
}

/// A scalar function of a flat parameter vector.
pub trait FlatObjective: Sync {
    fn value(&self, theta: &[f64]) -> f64;
    fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>);
}

/// `½‖θ‖²`, whose gradient is `θ` and whose smoothness constant is exactly 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct HalfSquaredNorm;

impl FlatObjective for HalfSquaredNorm {
    fn value(&self, theta: &[f64]) -> f64 {
        0.5 * theta.iter().map(|x| x * x).sum::<f64>()
    }

    fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        (self.value(theta), theta.to_vec())
    }
}

/// Adapts a [`FrozenObjective`] to flat vectors of a fixed embedding shape.
/// Failures surface as `+∞`.
#[derive(Debug, Clone)]
pub struct EmbeddingObjective {
    frozen: FrozenObjective,
    shape: (usize, usize, usize),
}

impl EmbeddingObjective {
    pub fn new(frozen: FrozenObjective, like: &EmbeddingParams) -> Self {
        Self {
            frozen,
            shape: (like.num_users(), like.num_items(), like.dim()),
        }
    }

    fn params(&self, theta: &[f64]) -> Option<EmbeddingParams> {
        let (nu, ni, d) = self.shape;
        EmbeddingParams::from_flat(nu, ni, d, theta).ok()
    }
}

impl FlatObjective for EmbeddingObjective {
    fn value(&self, theta: &[f64]) -> f64 {
        self.params(theta)
            .and_then(|p| self.frozen.value(&p).ok())
            .unwrap_or(f64::INFINITY)
    }

    fn value_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        match self.params(theta).map(|p| self.frozen.value_and_grad(&p)) {
            Some(Ok((v, g))) => (v, g.to_flat()),
            _ => (f64::INFINITY, vec![f64::NAN; theta.len()]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_scores_give_log_catalogue_size() {
        let (loss, _) = attack_loss_full(array![[0.3, 0.3, 0.3, 0.3]].view(), &[2]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dominant_target_saturates() {
        let (loss, g) = attack_loss_full(array![[0.0, 800.0, 0.0]].view(), &[1]).unwrap();
        assert!(loss.abs() < 1e-300);
        assert!(g.iter().all(|x| x.abs() < 1e-300));
    }

    #[test]
    fn empty_targets_rejected() {
        assert!(matches!(attack_loss_full(array![[1.0]].view(), &[]), Err(Error::EmptyTargets)));
    }

    #[test]
    fn full_loss_is_shift_invariant() {
        let s = array![[0.1, -2.0, 3.0], [1.0, 1.5, -0.5]];
        let shifted = array![[100.1, 98.0, 103.0], [-49.0, -48.5, -50.5]];
        let (a, ga) = attack_loss_full(s.view(), &[0, 2]).unwrap();
        let (b, gb) = attack_loss_full(shifted.view(), &[0, 2]).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((&ga - &gb).iter().all(|x| x.abs() < 1e-12));
    }

    fn two_groups() -> UserGroups {
        UserGroups {
            group0: vec![0, 1],
            group1: vec![2, 3],
        }
    }

    #[test]
    fn symmetric_groups_cancel() {
        // target 0 never in top-1 (item 1 dominates)
        let s = array![[0.5, 2.0], [0.5, 2.0], [0.5, 2.0], [0.5, 2.0]];
        let (loss, _) = attack_loss_group(s.view(), &[0], &two_groups(), 1).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn recommended_target_zeroes_group_one_term() {
        let s = array![[0.2, 1.0], [0.4, 1.0], [3.0, 1.0], [3.0, 1.0]];
        let (loss, g) = attack_loss_group(s.view(), &[0], &two_groups(), 1).unwrap();
        assert!((loss + 0.3).abs() < 1e-12);
        assert_eq!(g[[2, 0]], 0.0);
        assert_eq!(g[[0, 0]], -0.5);
    }

    #[test]
    fn empty_group_rejected() {
        let g = UserGroups {
            group0: vec![0],
            group1: vec![],
        };
        assert!(matches!(attack_loss_group(array![[1.0]].view(), &[0], &g, 1), Err(Error::EmptyGroup(1))));
    }

    #[test]
    fn params_gradient_chains_through_scores() {
        let theta = EmbeddingParams::gaussian(3, 4, 2, 1.0, 5);
        let obj = AttackObjective::FullUser { targets: vec![1] }.freeze(&theta, 2, None);
        let (_, g) = obj.value_and_grad(&theta).unwrap();
        assert!(g.user.row(2).iter().all(|&x| x == 0.0));
        let h = 1e-6;
        let mut plus = theta.clone();
        plus.item[[3, 1]] += h;
        let mut minus = theta.clone();
        minus.item[[3, 1]] -= h;
        let fd = (obj.value(&plus).unwrap() - obj.value(&minus).unwrap()) / (2.0 * h);
        assert!((fd - g.item[[3, 1]]).abs() < 1e-7);
    }
}
