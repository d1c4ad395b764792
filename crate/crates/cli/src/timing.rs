use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use sharpap_core::attack::{gradient_attack, AttackConfig, AttackVariant};
use sharpap_core::data::sample_target_items;
use sharpap_core::Result;

use crate::config::ExperimentConfig;
use crate::pipeline::{objective_for, prepare};

#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub variant: String,
    pub epsilon: f64,
    pub outer_iters: usize,
    /// Minimum wall-clock over trials.
    pub total_seconds: f64,
    pub seconds_per_iteration: f64,
    pub trial_seconds: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    /// `(t_sharpap − t_backbone) / t_backbone × 100` for each paired trial.
    pub paired_overhead_percent: Vec<f64>,
    /// Median of the paired overheads. Pairing cancels machine-speed drift
    /// that dominates independent minima on shared hosts.
    pub overhead_percent: f64,
}

impl TimingReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Times the ε = 0 backbone against SharpAP with identical seeds and targets.
/// Each trial runs both variants back to back, in ABBA order across trials.
pub fn run_timing_comparison(cfg: &ExperimentConfig) -> Result<TimingReport> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let seed = cfg.repeat_seed(0);
    let targets = sample_target_items(&prepared.split.train, cfg.targets.count, cfg.targets.band, None, seed)?;
    let objective = objective_for(cfg, &prepared, targets)?;
    let sharp = AttackConfig {
        seed,
        ..cfg.attack.clone()
    };
    let base = AttackConfig { epsilon: 0.0, ..sharp.clone() };
    let variants = [(AttackVariant::Backbone, &base), (AttackVariant::SharpAp, &sharp)];
    let mut trials = [Vec::new(), Vec::new()];
    for trial in 0..cfg.timing.trials {
        let order = if trial.is_multiple_of(2) { [0, 1] } else { [1, 0] };
        for slot in order {
            let (variant, acfg) = &variants[slot];
            let started = Instant::now();
            gradient_attack(&prepared.split.train, &objective, acfg, *variant)?;
            trials[slot].push(started.elapsed().as_secs_f64());
        }
    }
    let rows: Vec<TimingRow> = variants
        .iter()
        .zip(trials)
        .map(|((variant, acfg), t)| {
            let best = t.iter().copied().fold(f64::INFINITY, f64::min);
            TimingRow {
                variant: match variant {
                    AttackVariant::Backbone => "backbone".into(),
                    AttackVariant::SharpAp => "sharpap".into(),
                },
                epsilon: acfg.epsilon,
                outer_iters: acfg.outer_iters,
                total_seconds: best,
                seconds_per_iteration: best / acfg.outer_iters as f64,
                trial_seconds: t,
            }
        })
        .collect();
    let paired_overhead_percent: Vec<f64> = rows[0]
        .trial_seconds
        .iter()
        .zip(&rows[1].trial_seconds)
        .map(|(b, s)| (s - b) / b * 100.0)
        .collect();
    let overhead_percent = median(&paired_overhead_percent);
    Ok(TimingReport {
        rows,
        paired_overhead_percent,
        overhead_percent,
    })
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
