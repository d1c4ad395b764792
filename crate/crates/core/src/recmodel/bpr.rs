//! Bayesian personalised ranking with uniform negative sampling.

use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::lightgcn::Propagation;
use super::{EmbeddingParams, TrainConfig};
use crate::data::InteractionMatrix;
use crate::{rng, Error, Result};

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Adds one triple's `−ln σ(s_ui − s_uj)` gradient to `grad_out` (w.r.t. the
/// scoring embeddings) and its `λ(‖θ_u‖² + ‖θ_i‖² + ‖θ_j‖²)` gradient to
/// `grad_reg` (w.r.t. the raw parameters). Returns the triple loss.
#[allow(clippy::too_many_arguments)]
fn accumulate_triple(
    scoring: &EmbeddingParams,
    raw: &EmbeddingParams,
    user: usize,
    pos: usize,
    neg: usize,
    l2: f64,
    grad_out: &mut EmbeddingParams,
    grad_reg: &mut EmbeddingParams,
) -> f64 {
    let u = scoring.user.row(user);
    let (vi, vj) = (scoring.item.row(pos), scoring.item.row(neg));
    let x = u.dot(&vi) - u.dot(&vj);
    let coef = sigmoid(-x);
    for k in 0..u.len() {
        grad_out.user[[user, k]] -= coef * (vi[k] - vj[k]);
        grad_out.item[[pos, k]] -= coef * u[k];
        grad_out.item[[neg, k]] += coef * u[k];
    }
    let (ru, ri, rj) = (raw.user.row(user), raw.item.row(pos), raw.item.row(neg));
    for k in 0..ru.len() {
        grad_reg.user[[user, k]] += 2.0 * l2 * ru[k];
        grad_reg.item[[pos, k]] += 2.0 * l2 * ri[k];
        grad_reg.item[[neg, k]] += 2.0 * l2 * rj[k];
    }
    softplus(-x) + l2 * (ru.dot(&ru) + ri.dot(&ri) + rj.dot(&rj))
}

/// Loss and full-parameter gradient of a single `(user, positive, negative)` triple.
pub fn bpr_triple_loss(p: &EmbeddingParams, user: usize, pos: usize, neg: usize, l2: f64) -> (f64, EmbeddingParams) {
    let mut g = EmbeddingParams::zeros(p.num_users(), p.num_items(), p.dim());
    let mut reg = g.clone();
    let loss = accumulate_triple(p, p, user, pos, neg, l2, &mut g, &mut reg);
    g.add_scaled(1.0, &reg);
    (loss, g)
}

pub fn train_bpr(r: &InteractionMatrix, cfg: &TrainConfig) -> Result<EmbeddingParams> {
    train_pairwise(r, cfg, None)
}

/// Mini-batch SGD on summed batch losses. With a propagation operator the
/// scores come from propagated embeddings and output gradients are pushed back
/// through the same (symmetric) operator.
pub(crate) fn train_pairwise(r: &InteractionMatrix, cfg: &TrainConfig, prop: Option<&Propagation>) -> Result<EmbeddingParams> {
    let (nu, ni, d) = (r.num_users(), r.num_items(), cfg.dim);
    let mut theta = EmbeddingParams::gaussian(nu, ni, d, cfg.init_std, cfg.seed);
    let mut rng = rng::seeded(rng::derive_seed(cfg.seed, 1));
    let mut pairs: Vec<(usize, usize)> = r
        .rows()
        .iter()
        .enumerate()
        .flat_map(|(u, row)| row.iter().map(move |&v| (u, v)))
        .collect();
    let batch = cfg.batch_size.max(1);
    for epoch in 0..cfg.steps {
        pairs.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in pairs.chunks(batch) {
            let scoring: Cow<EmbeddingParams> = match prop {
                Some(prop) => Cow::Owned(prop.apply(&theta)),
                None => Cow::Borrowed(&theta),
            };
            let mut grad_out = EmbeddingParams::zeros(nu, ni, d);
            let mut grad_reg = EmbeddingParams::zeros(nu, ni, d);
            for &(u, i) in chunk {
                if r.row(u).len() >= ni {
                    continue;
                }
                for _ in 0..cfg.negative_samples {
                    let j = loop {
                        let j = rng.random_range(0..ni);
                        if !r.contains(u, j) {
                            break j;
                        }
                    };
                    epoch_loss += accumulate_triple(&scoring, &theta, u, i, j, cfg.l2_reg, &mut grad_out, &mut grad_reg);
                }
            }
            drop(scoring);
            let mut grad = match prop {
                Some(prop) => prop.apply(&grad_out),
                None => grad_out,
            };
            grad.add_scaled(1.0, &grad_reg);
            theta.add_scaled(-cfg.learning_rate, &grad);
        }
        if !epoch_loss.is_finite() || !theta.is_finite() {
            return Err(Error::Divergence { step: epoch });
        }
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn saturated_triple_has_vanishing_loss() {
        let p = EmbeddingParams::new(array![[1.0, 0.0]], array![[50.0, 0.0], [-50.0, 0.0]]).unwrap();
        let (loss, g) = bpr_triple_loss(&p, 0, 0, 1, 0.0);
        assert!(loss < 1e-40);
        assert!(g.norm() < 1e-40);
    }

    #[test]
    fn stable_softplus() {
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let m = InteractionMatrix::from_rows(6, vec![vec![0, 1], vec![2, 3], vec![4, 5, 0]]).unwrap();
        let cfg = TrainConfig {
            dim: 4,
            steps: 5,
            batch_size: 2,
            learning_rate: 0.1,
            ..Default::default()
        };
        let a = train_bpr(&m, &cfg).unwrap();
        assert_eq!(a, train_bpr(&m, &cfg).unwrap());
        assert_ne!(a, train_bpr(&m, &cfg.with_seed(1)).unwrap());
    }
}
