//! Weighted matrix factorisation for implicit feedback.
//!
//! The loss is `Σ_{u,v} c_uv (r_uv − u_u·v_v)² + λ(‖U‖² + ‖V‖²)` over *all*
//! user-item cells. Cells that are not listed in the [`WeightedMatrix`] carry
//! `r = 0` and the missing weight `c₀`, so the dense part collapses onto the
//! Gram matrices `UᵀU` and `VᵀV` and every evaluation costs
//! `O((|U| + |V|)·d² + nnz·d)`.

use ndarray::{s, Array2, ArrayView2};

use super::{EmbeddingParams, TrainConfig};
use crate::data::InteractionMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub item: usize,
    pub value: f64,
    pub weight: f64,
}

/// Training targets `r_uv` and instance weights `c_uv`, stored sparsely
/// relative to the default cell `(r = 0, c = missing_weight)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMatrix {
    num_items: usize,
    missing_weight: f64,
    rows: Vec<Vec<Entry>>,
}

impl WeightedMatrix {
    pub fn from_binary(m: &InteractionMatrix, observed_weight: f64, missing_weight: f64) -> Self {
        let rows = m
            .rows()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&item| Entry {
                        item,
                        value: 1.0,
                        weight: observed_weight,
                    })
                    .collect()
            })
            .collect();
        Self {
            num_items: m.num_items(),
            missing_weight,
            rows,
        }
    }

    /// Real binary rows followed by relaxed real-valued rows. A relaxed cell is
    /// weighted as observed when its value exceeds 0.5.
    pub fn with_relaxed_rows(
        real: &InteractionMatrix,
        relaxed: ArrayView2<f64>,
        observed_weight: f64,
        missing_weight: f64,
    ) -> Result<Self> {
        if relaxed.ncols() != real.num_items() {
            return Err(Error::Shape(format!(
                "relaxed rows have {} columns, matrix has {} items",
                relaxed.ncols(),
                real.num_items()
            )));
        }
        let mut out = Self::from_binary(real, observed_weight, missing_weight);
        for row in relaxed.rows() {
            out.rows.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, &x)| x != 0.0)
                    .map(|(item, &value)| Entry {
                        item,
                        value,
                        weight: relaxed_weight(value, observed_weight, missing_weight),
                    })
                    .collect(),
            );
        }
        Ok(out)
    }

    pub fn num_users(&self) -> usize {
        self.rows.len()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn missing_weight(&self) -> f64 {
        self.missing_weight
    }

    pub fn rows(&self) -> &[Vec<Entry>] {
        &self.rows
    }

    /// Dense `(values, weights)` for users `first..first + count`.
    pub fn dense_rows(&self, first: usize, count: usize) -> (Array2<f64>, Array2<f64>) {
        let mut values = Array2::zeros((count, self.num_items));
        let mut weights = Array2::from_elem((count, self.num_items), self.missing_weight);
        for (k, row) in self.rows[first..first + count].iter().enumerate() {
            for e in row {
                values[[k, e.item]] = e.value;
                weights[[k, e.item]] = e.weight;
            }
        }
        (values, weights)
    }

    fn check(&self, p: &EmbeddingParams) -> Result<()> {
        if p.num_users() != self.num_users() || p.num_items() != self.num_items {
            return Err(Error::Shape(format!(
                "params {}x{} vs matrix {}x{}",
                p.num_users(),
                p.num_items(),
                self.num_users(),
                self.num_items
            )));
        }
        Ok(())
    }
}

pub fn relaxed_weight(value: f64, observed_weight: f64, missing_weight: f64) -> f64 {
    if value > 0.5 {
        observed_weight
    } else {
        missing_weight
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Loss and its exact gradient with respect to both embedding tables.
pub fn wrmf_loss(p: &EmbeddingParams, r: &WeightedMatrix, l2: f64) -> Result<(f64, EmbeddingParams)> {
    r.check(p)?;
    let c0 = r.missing_weight;
    let d = p.dim();
    let gram_u = p.user.t().dot(&p.user);
    let gram_v = p.item.t().dot(&p.item);
    let mut loss = c0 * (&gram_u * &gram_v).sum();
    let mut grad_u = p.user.dot(&gram_v) * (2.0 * c0);
    let mut grad_v = p.item.dot(&gram_u) * (2.0 * c0);
    {
        let us = p.user.as_slice().expect("standard layout");
        let vs = p.item.as_slice().expect("standard layout");
        let gu = grad_u.as_slice_mut().expect("standard layout");
        let gv = grad_v.as_slice_mut().expect("standard layout");
        for (u, row) in r.rows.iter().enumerate() {
            let uu = &us[u * d..(u + 1) * d];
            for e in row {
                let vv = &vs[e.item * d..(e.item + 1) * d];
                let s = dot(uu, vv);
                loss += e.weight * (e.value - s).powi(2) - c0 * s * s;
                let a = 2.0 * ((e.weight - c0) * s - e.weight * e.value);
                axpy(a, vv, &mut gu[u * d..(u + 1) * d]);
                axpy(a, uu, &mut gv[e.item * d..(e.item + 1) * d]);
            }
        }
    }
    loss += l2 * (p.user.iter().map(|x| x * x).sum::<f64>() + p.item.iter().map(|x| x * x).sum::<f64>());
    grad_u.scaled_add(2.0 * l2, &p.user);
    grad_v.scaled_add(2.0 * l2, &p.item);
    if !loss.is_finite() {
        return Err(Error::NonFinite("WRMF loss"));
    }
    Ok((loss, EmbeddingParams { user: grad_u, item: grad_v }))
}

/// Hessian of the WRMF loss at `p` applied to `dir`.
pub(crate) fn wrmf_hvp(p: &EmbeddingParams, dir: &EmbeddingParams, r: &WeightedMatrix, l2: f64) -> EmbeddingParams {
    let c0 = r.missing_weight;
    let d = p.dim();
    let (u, v, a, b) = (&p.user, &p.item, &dir.user, &dir.item);
    let gram_u = u.t().dot(u);
    let gram_v = v.t().dot(v);
    let bv = b.t().dot(v);
    let au = a.t().dot(u);
    let mut h_u = (a.dot(&gram_v) + u.dot(&(&bv + &bv.t()))) * (2.0 * c0);
    let mut h_v = (b.dot(&gram_u) + v.dot(&(&au + &au.t()))) * (2.0 * c0);
    {
        let us = u.as_slice().expect("standard layout");
        let vs = v.as_slice().expect("standard layout");
        let as_ = a.as_slice().expect("standard layout");
        let bs = b.as_slice().expect("standard layout");
        let hu = h_u.as_slice_mut().expect("standard layout");
        let hv = h_v.as_slice_mut().expect("standard layout");
        for (user, row) in r.rows.iter().enumerate() {
            let ur = user * d..(user + 1) * d;
            let (uu, au_) = (&us[ur.clone()], &as_[ur.clone()]);
            for e in row {
                let vr = e.item * d..(e.item + 1) * d;
                let (vv, bv_) = (&vs[vr.clone()], &bs[vr.clone()]);
                let s = dot(uu, vv);
                let q = dot(au_, vv) + dot(uu, bv_);
                let dc = 2.0 * (e.weight - c0) * q;
                let coef = 2.0 * ((e.weight - c0) * s - e.weight * e.value);
                let hrow = &mut hu[ur.clone()];
                axpy(dc, vv, hrow);
                axpy(coef, bv_, hrow);
                let hcol = &mut hv[vr];
                axpy(dc, uu, hcol);
                axpy(coef, au_, hcol);
            }
        }
    }
    h_u.scaled_add(2.0 * l2, a);
    h_v.scaled_add(2.0 * l2, b);
    EmbeddingParams { user: h_u, item: h_v }
}

/// `c_uv · (a_u·v_v + u_u·b_v)` for users `first..first + weights.nrows()`:
/// minus one half of `∂⟨dir, ∇_θ L⟩ / ∂r_uv`.
pub(crate) fn wrmf_value_cross(p: &EmbeddingParams, dir: &EmbeddingParams, weights: &Array2<f64>, first: usize) -> Array2<f64> {
    let rows = first..first + weights.nrows();
    let q = dir.user.slice(s![rows.clone(), ..]).dot(&p.item.t()) + p.user.slice(s![rows, ..]).dot(&dir.item.t());
    q * weights
}

/// Recorded iterates of full-batch gradient descent.
///
/// Snapshots are kept every `checkpoint_every` steps; intermediate iterates are
/// recomputed from the nearest snapshot, which reproduces them bit for bit
/// because each step is a deterministic function of the previous iterate.
#[derive(Debug, Clone)]
pub struct TrainingTrajectory {
    checkpoint_every: usize,
    checkpoints: Vec<EmbeddingParams>,
    losses: Vec<f64>,
    final_params: EmbeddingParams,
    learning_rate: f64,
    l2_reg: f64,
}

impl TrainingTrajectory {
    pub fn steps(&self) -> usize {
        self.losses.len()
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn final_params(&self) -> &EmbeddingParams {
        &self.final_params
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn l2_reg(&self) -> f64 {
        self.l2_reg
    }

    pub fn checkpoint_every(&self) -> usize {
        self.checkpoint_every
    }

    /// Stored snapshot `θ_{i·checkpoint_every}`.
    pub fn checkpoint(&self, i: usize) -> Option<&EmbeddingParams> {
        self.checkpoints.get(i)
    }

    pub fn step(&self, theta: &EmbeddingParams, r: &WeightedMatrix) -> Result<EmbeddingParams> {
        let (_, g) = wrmf_loss(theta, r, self.l2_reg)?;
        let mut next = theta.clone();
        next.add_scaled(-self.learning_rate, &g);
        Ok(next)
    }

    /// Iterates `θ_t` for `t` in `start..end` (`end ≤ steps`).
    pub fn iterates(&self, r: &WeightedMatrix, start: usize, end: usize) -> Result<Vec<EmbeddingParams>> {
        if end > self.steps() || start > end {
            return Err(Error::Shape(format!("iterate range {start}..{end} of {}", self.steps())));
        }
        let k = self.checkpoint_every;
        let mut out = Vec::with_capacity(end - start);
        let mut t = start - start % k;
        let mut theta = self.checkpoints[t / k].clone();
        while t < end {
            if t.is_multiple_of(k) {
                theta = self.checkpoints[t / k].clone();
            }
            if t >= start {
                out.push(theta.clone());
            }
            if t + 1 < end {
                theta = self.step(&theta, r)?;
            }
            t += 1;
        }
        Ok(out)
    }
}

/// Full-batch gradient descent from a seeded `N(0, init_std²)` initialisation.
pub fn train_wrmf(r: &WeightedMatrix, cfg: &TrainConfig, record: bool) -> Result<(EmbeddingParams, Option<TrainingTrajectory>)> {
    let init = EmbeddingParams::gaussian(r.num_users(), r.num_items(), cfg.dim, cfg.init_std, cfg.seed);
    train_wrmf_from(init, r, cfg, record)
}

pub fn train_wrmf_from(
    init: EmbeddingParams,
    r: &WeightedMatrix,
    cfg: &TrainConfig,
    record: bool,
) -> Result<(EmbeddingParams, Option<TrainingTrajectory>)> {
    r.check(&init)?;
    let k = cfg.checkpoint_every.max(1);
    let mut theta = init;
    let mut checkpoints = Vec::new();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (loss, g) = wrmf_loss(&theta, r, cfg.l2_reg).map_err(|_| Error::Divergence { step })?;
        if record && step.is_multiple_of(k) {
            checkpoints.push(theta.clone());
        }
        losses.push(loss);
        theta.add_scaled(-cfg.learning_rate, &g);
    }
    if !theta.is_finite() {
        return Err(Error::Divergence { step: cfg.steps });
    }
    let trajectory = record.then(|| TrainingTrajectory {
        checkpoint_every: k,
        checkpoints,
        losses,
        final_params: theta.clone(),
        learning_rate: cfg.learning_rate,
        l2_reg: cfg.l2_reg,
    });
    Ok((theta, trajectory))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn dense_loss(p: &EmbeddingParams, r: &WeightedMatrix, l2: f64) -> f64 {
        let (values, weights) = r.dense_rows(0, r.num_users());
        let s = p.user.dot(&p.item.t());
        let fit: f64 = ndarray::Zip::from(&values)
            .and(&weights)
            .and(&s)
            .fold(0.0, |acc, &r, &c, &s| acc + c * (r - s).powi(2));
        fit + l2 * p.dot(p)
    }

    fn fixture(seed: u64) -> (EmbeddingParams, WeightedMatrix) {
        let m = InteractionMatrix::from_rows(5, vec![vec![0, 2], vec![1], vec![], vec![3, 4, 0]]).unwrap();
        let relaxed = array![[0.9, 0.1, 0.0, 0.3, 0.7]];
        let r = WeightedMatrix::with_relaxed_rows(&m, relaxed.view(), 1.0, 0.1).unwrap();
        (EmbeddingParams::gaussian(5, 5, 3, 0.5, seed), r)
    }

    #[test]
    fn zero_embeddings_single_interaction() {
        let m = InteractionMatrix::from_rows(1, vec![vec![0]]).unwrap();
        let r = WeightedMatrix::from_binary(&m, 1.0, 0.05);
        let (loss, g) = wrmf_loss(&EmbeddingParams::zeros(1, 1, 2), &r, 0.0).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn regulariser_only() {
        let m = InteractionMatrix::from_rows(3, vec![vec![]; 2]).unwrap();
        let r = WeightedMatrix::from_binary(&m, 1.0, 0.0);
        let p = EmbeddingParams::gaussian(2, 3, 2, 1.0, 4);
        let (loss, g) = wrmf_loss(&p, &r, 0.3).unwrap();
        assert!((loss - 0.3 * p.dot(&p)).abs() < 1e-12);
        let mut expected = p.clone();
        expected.add_scaled(-1.0 + 0.6, &p);
        let mut diff = g;
        diff.add_scaled(-1.0, &expected);
        assert!(diff.norm() < 1e-12);
    }

    #[test]
    fn gram_loss_matches_dense_sum() {
        for seed in 0..5 {
            let (p, r) = fixture(seed);
            let (loss, _) = wrmf_loss(&p, &r, 0.07).unwrap();
            let dense = dense_loss(&p, &r, 0.07);
            assert!((loss - dense).abs() <= 1e-10 * dense.abs().max(1.0), "{loss} vs {dense}");
        }
    }

    #[test]
    fn hvp_matches_gradient_differences() {
        let (p, r) = fixture(1);
        let dir = EmbeddingParams::gaussian(5, 5, 3, 1.0, 99);
        let h = 1e-5;
        let mut plus = p.clone();
        plus.add_scaled(h, &dir);
        let mut minus = p.clone();
        minus.add_scaled(-h, &dir);
        let (_, gp) = wrmf_loss(&plus, &r, 0.05).unwrap();
        let (_, gm) = wrmf_loss(&minus, &r, 0.05).unwrap();
        let mut fd = gp;
        fd.add_scaled(-1.0, &gm);
        let fd = EmbeddingParams {
            user: fd.user / (2.0 * h),
            item: fd.item / (2.0 * h),
        };
        let hv = wrmf_hvp(&p, &dir, &r, 0.05);
        let mut diff = hv.clone();
        diff.add_scaled(-1.0, &fd);
        assert!(diff.norm() < 1e-6 * hv.norm(), "{} vs {}", diff.norm(), hv.norm());
    }

    #[test]
    fn zero_steps_return_init() {
        let (_, r) = fixture(0);
        let cfg = TrainConfig {
            dim: 3,
            steps: 0,
            ..Default::default()
        };
        let (theta, _) = train_wrmf(&r, &cfg, false).unwrap();
        assert_eq!(theta, EmbeddingParams::gaussian(5, 5, 3, cfg.init_std, cfg.seed));
    }

    #[test]
    fn training_is_deterministic_and_replayable() {
        let (_, r) = fixture(0);
        let cfg = TrainConfig {
            dim: 3,
            steps: 12,
            learning_rate: 0.05,
            checkpoint_every: 4,
            ..Default::default()
        };
        let (a, traj) = train_wrmf(&r, &cfg, true).unwrap();
        let (b, _) = train_wrmf(&r, &cfg, false).unwrap();
        assert_eq!(a, b);
        let traj = traj.unwrap();
        let all = traj.iterates(&r, 0, 12).unwrap();
        assert_eq!(all.len(), 12);
        assert_eq!(&all[4], traj.checkpoint(1).unwrap());
        assert_eq!(&all[8], traj.checkpoint(2).unwrap());
        assert_eq!(traj.step(&all[11], &r).unwrap(), a);
        assert_eq!(traj.iterates(&r, 5, 7).unwrap(), all[5..7].to_vec());
    }

    #[test]
    fn divergence_names_the_step() {
        let (_, r) = fixture(0);
        let cfg = TrainConfig {
            dim: 3,
            steps: 200,
            learning_rate: 50.0,
            init_std: 1.0,
            ..Default::default()
        };
        assert!(matches!(train_wrmf(&r, &cfg, false), Err(Error::Divergence { .. })));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let (_, r) = fixture(0);
        assert!(matches!(wrmf_loss(&EmbeddingParams::zeros(2, 5, 3), &r, 0.0), Err(Error::Shape(_))));
    }
}
