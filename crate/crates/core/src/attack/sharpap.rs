use std::time::Instant;

use log::{debug, info};
use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::hypergrad::{backprop_training, hypergradient};
use super::objective::{AttackObjective, ObjectiveKind};
use super::profiles::{project_topn, FakeProfiles};
use super::sam::sam_perturbation;
use crate::data::{InteractionMatrix, UserGroups};
use crate::recmodel::{train_wrmf_from, EmbeddingParams, TrainConfig, WeightedMatrix};
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Fake users as a fraction of real users.
    pub delta: f64,
    /// Interactions per fake user; `None` uses the mean real profile length.
    pub profile_size: Option<usize>,
    pub epsilon: f64,
    pub lambda2: f64,
    pub outer_iters: usize,
    /// Surrogate steps to differentiate through; `None` unrolls everything.
    pub unroll_steps: Option<usize>,
    /// Start each surrogate fit from the previous outer iteration's optimum.
    pub warm_start: bool,
    pub inner: TrainConfig,
    pub objective: ObjectiveKind,
    pub group_topk: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            profile_size: None,
            epsilon: 0.05,
            lambda2: 1.0,
            outer_iters: 10,
            unroll_steps: None,
            warm_start: false,
            inner: TrainConfig::default(),
            objective: ObjectiveKind::FullUser,
            group_topk: 10,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::config("delta", format!("must be > 0, got {}", self.delta)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::config("epsilon", format!("must be >= 0, got {}", self.epsilon)));
        }
        if !(self.lambda2.is_finite() && self.lambda2 >= 0.0) {
            return Err(Error::config("lambda2", format!("must be >= 0, got {}", self.lambda2)));
        }
        if self.outer_iters == 0 {
            return Err(Error::config("outer_iters", "must be >= 1"));
        }
        if self.group_topk == 0 {
            return Err(Error::config("group_topk", "must be >= 1"));
        }
        self.inner.validate()
    }

    /// `⌊δ·|U^r|⌋`, which must be at least one.
    pub fn num_fake(&self, num_real: usize) -> Result<usize> {
        let n = (self.delta * num_real as f64).floor() as usize;
        if n == 0 {
            return Err(Error::config(
                "delta",
                format!("{} of {num_real} users rounds down to zero fake users", self.delta),
            ));
        }
        Ok(n)
    }

    pub fn resolve_profile_size(&self, real: &InteractionMatrix) -> usize {
        self.profile_size.unwrap_or_else(|| {
            let users = real.num_users().max(1);
            ((real.num_interactions() as f64 / users as f64).round() as usize).max(1)
        })
    }

    /// Builds the configured objective. Group objectives need `groups`.
    pub fn objective(&self, targets: Vec<usize>, groups: Option<UserGroups>) -> Result<AttackObjective> {
        Ok(match self.objective {
            ObjectiveKind::FullUser => AttackObjective::FullUser { targets },
            ObjectiveKind::Group => {
                let groups = groups.ok_or_else(|| Error::config("objective", "group objective without user groups"))?;
                groups.require_nonempty()?;
                AttackObjective::Group {
                    targets,
                    groups,
                    top_k: self.group_topk,
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackVariant {
    /// Bi-level: hypergradient of the loss at the surrogate optimum.
    Backbone,
    /// Tri-level: hypergradient of the loss at the SAM-perturbed optimum.
    SharpAp,
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub profiles: FakeProfiles,
    /// `L_atk(θ*)` at the start of every outer iteration.
    pub loss_log: Vec<f64>,
    /// `L_atk(θ*)` of a surrogate fitted to the final continuous rows.
    pub final_loss: f64,
    pub iteration_seconds: Vec<f64>,
}

pub fn sharpap_attack(real: &InteractionMatrix, objective: &AttackObjective, cfg: &AttackConfig) -> Result<AttackOutcome> {
    gradient_attack(real, objective, cfg, AttackVariant::SharpAp)
}

pub fn backbone_attack(real: &InteractionMatrix, objective: &AttackObjective, cfg: &AttackConfig) -> Result<AttackOutcome> {
    gradient_attack(real, objective, cfg, AttackVariant::Backbone)
}

/// Targets at 1, every other cell `U(0, 0.1)`.
pub fn initial_profiles(num_fake: usize, num_items: usize, targets: &[usize], n: usize, seed: u64) -> Result<FakeProfiles> {
    let mut rng = seeded(derive_seed(seed, 7));
    let mut continuous = Array2::from_shape_fn((num_fake, num_items), |_| rng.random_range(0.0..0.1));
    pin_targets(&mut continuous, targets)?;
    project_topn(&FakeProfiles::new(continuous, targets.to_vec(), n)?)
}

fn pin_targets(continuous: &mut Array2<f64>, targets: &[usize]) -> Result<()> {
    for &t in targets {
        if t >= continuous.ncols() {
            return Err(Error::Shape(format!("target item {t} outside {} items", continuous.ncols())));
        }
        continuous.column_mut(t).fill(1.0);
    }
    Ok(())
}

struct Surrogate<'a> {
    real: &'a InteractionMatrix,
    inner: TrainConfig,
}

impl Surrogate<'_> {
    fn matrix(&self, continuous: &Array2<f64>) -> Result<WeightedMatrix> {
        WeightedMatrix::with_relaxed_rows(self.real, continuous.view(), self.inner.observed_weight, self.inner.missing_weight)
    }

    fn init(&self, num_fake: usize) -> EmbeddingParams {
        EmbeddingParams::gaussian(
            self.real.num_users() + num_fake,
            self.real.num_items(),
            self.inner.dim,
            self.inner.init_std,
            self.inner.seed,
        )
    }
}

pub fn gradient_attack(
    real: &InteractionMatrix,
    objective: &AttackObjective,
    cfg: &AttackConfig,
    variant: AttackVariant,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    let num_real = real.num_users();
    let num_fake = cfg.num_fake(num_real)?;
    let n = cfg.resolve_profile_size(real);
    let targets = objective.targets();
    let mut profiles = initial_profiles(num_fake, real.num_items(), targets, n, cfg.seed)?;
    let surrogate = Surrogate {
        real,
        inner: cfg.inner.with_seed(derive_seed(cfg.seed, 3)),
    };
    let fake_rows = num_real..num_real + num_fake;
    let mut warm: Option<EmbeddingParams> = None;
    let mut loss_log = Vec::with_capacity(cfg.outer_iters);
    let mut iteration_seconds = Vec::with_capacity(cfg.outer_iters);

    for iter in 0..cfg.outer_iters {
        let started = Instant::now();
        let r = surrogate.matrix(&profiles.continuous)?;
        let init = warm.take().unwrap_or_else(|| surrogate.init(num_fake));
        let (theta, trajectory) = train_wrmf_from(init, &r, &surrogate.inner, true)?;
        let trajectory = trajectory.expect("recorded");
        let frozen = objective.freeze(&theta, num_real, Some(real));
        let (loss, grad) = frozen.value_and_grad(&theta)?;
        let hyper = match variant {
            AttackVariant::Backbone => backprop_training(&trajectory, &grad, &r, fake_rows.clone(), cfg.unroll_steps)?,
            AttackVariant::SharpAp => {
                let sam = sam_perturbation(&grad.to_flat(), cfg.epsilon)?;
                hypergradient(&trajectory, &sam, &frozen, &r, fake_rows.clone(), cfg.unroll_steps)?
            }
        };
        if hyper.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("hypergradient"));
        }
        profiles.continuous.scaled_add(-cfg.lambda2, &hyper);
        profiles.continuous.mapv_inplace(|x| x.clamp(0.0, 1.0));
        pin_targets(&mut profiles.continuous, targets)?;
        profiles = project_topn(&profiles)?;
        profiles.check_invariants()?;
        debug!(
            "{variant:?} iteration {iter}: L_atk {loss:.6}, |hypergradient|_max {:.3e}",
            hyper.iter().fold(0.0f64, |m, x| m.max(x.abs()))
        );
        loss_log.push(loss);
        if cfg.warm_start {
            warm = Some(theta);
        }
        iteration_seconds.push(started.elapsed().as_secs_f64());
    }

    let r = surrogate.matrix(&profiles.continuous)?;
    let init = warm.take().unwrap_or_else(|| surrogate.init(num_fake));
    let (theta, _) = train_wrmf_from(init, &r, &surrogate.inner, false)?;
    let final_loss = objective.freeze(&theta, num_real, Some(real)).value(&theta)?;
    info!(
        "{variant:?}: L_atk {:.6} -> {final_loss:.6} over {} iterations",
        loss_log[0], cfg.outer_iters
    );
    Ok(AttackOutcome {
        profiles,
        loss_log,
        final_loss,
        iteration_seconds,
    })
}
