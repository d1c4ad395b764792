use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{group_difference, hit_ratio_at_k, ndcg_at_k, Metric};
use super::report::{EvalReport, ReportRow};
use crate::attack::FakeProfiles;
use crate::data::{InteractionMatrix, Split, UserGroups};
use crate::recmodel::{predict_scores, topk_from_scores, train_model, ModelKind, TrainConfig};
use crate::rng::derive_seed;
use crate::{Error, Result};

pub const CLEAN: &str = "clean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VictimSpec {
    pub model: ModelKind,
    #[serde(default)]
    pub train: TrainConfig,
}

impl VictimSpec {
    pub fn name(&self) -> &'static str {
        self.model.name()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub metrics: Vec<Metric>,
    pub ks: Vec<usize>,
    pub repeats: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: vec![Metric::Hr, Metric::Ndcg],
            ks: vec![10, 20],
            repeats: 10,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(Error::config("eval.metrics", "at least one metric is required"));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::config("eval.ks", "cutoffs must be a non-empty list of positive integers"));
        }
        if self.repeats == 0 {
            return Err(Error::config("eval.repeats", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NamedProfiles {
    pub name: String,
    pub profiles: FakeProfiles,
}

/// Everything one repeat evaluates: its seed, targets and attackers.
#[derive(Debug, Clone)]
pub struct RepeatInput {
    pub seed: u64,
    pub targets: Vec<usize>,
    pub attackers: Vec<NamedProfiles>,
}

/// Real users with held-out test items, ascending.
pub fn test_users(split: &Split) -> Vec<usize> {
    (0..split.test.num_users()).filter(|&u| !split.test.row(u).is_empty()).collect()
}

/// Retrains every victim on train + fake rows (plus a clean control) for every
/// repeat and reports the requested metrics on real test users.
pub fn evaluate_transfer(
    split: &Split,
    repeats: &[RepeatInput],
    victims: &[VictimSpec],
    cfg: &EvalConfig,
    groups: Option<&UserGroups>,
) -> Result<EvalReport> {
    evaluate_cells(split, repeats, victims, cfg, groups, None, "")
}

/// Attacker names in report order, starting with the clean control.
fn attacker_names(repeats: &[RepeatInput]) -> Result<Vec<String>> {
    let first = repeats.first().ok_or_else(|| Error::config("eval.repeats", "no repeats to evaluate"))?;
    let names: Vec<String> = std::iter::once(CLEAN.to_string())
        .chain(first.attackers.iter().map(|a| a.name.clone()))
        .collect();
    for r in repeats {
        if r.attackers.len() + 1 != names.len() || r.attackers.iter().zip(&names[1..]).any(|(a, n)| &a.name != n) {
            return Err(Error::config("attackers", "every repeat must list the same attackers in the same order"));
        }
    }
    Ok(names)
}

/// Shared driver. `removals[repeat][attacker]` lists poisoned-matrix users to
/// drop before training (attacker 0 is the clean control); removed real users
/// are also excluded from evaluation. `victim_suffix` decorates victim names.
pub(crate) fn evaluate_cells(
    split: &Split,
    repeats: &[RepeatInput],
    victims: &[VictimSpec],
    cfg: &EvalConfig,
    groups: Option<&UserGroups>,
    removals: Option<&[Vec<Vec<usize>>]>,
    victim_suffix: &str,
) -> Result<EvalReport> {
    cfg.validate()?;
    if victims.is_empty() {
        return Err(Error::config("victims", "at least one victim is required"));
    }
    let names = attacker_names(repeats)?;
    let users = test_users(split);
    if users.is_empty() {
        return Err(Error::EmptyUsers);
    }
    let groups = match (cfg.metrics.contains(&Metric::D), groups) {
        (false, _) => None,
        (true, None) => return Err(Error::config("eval.metrics", "D requires user groups")),
        (true, Some(g)) => {
            let g = g.restrict(&users);
            g.require_nonempty()?;
            Some(g)
        }
    };
    let jobs: Vec<(usize, usize, usize)> = (0..repeats.len())
        .flat_map(|r| (0..names.len()).flat_map(move |a| (0..victims.len()).map(move |v| (r, a, v))))
        .collect();
    let cells: Vec<Option<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(r, a, v)| {
            let rep = &repeats[r];
            let fake = (a > 0).then(|| &rep.attackers[a - 1].profiles);
            let removed = removals.map_or(&[][..], |rm| &rm[r][a][..]);
            let seed = derive_seed(rep.seed, 1000 + v as u64);
            match evaluate_cell(split, fake, removed, &victims[v], seed, &users, &rep.targets, cfg, groups.as_ref()) {
                Ok(values) => Some(values),
                Err(e) => {
                    warn!("{} on {} (repeat {r}) failed: {e}", names[a], victims[v].name());
                    None
                }
            }
        })
        .collect();

    let mut rows = Vec::new();
    let per = names.len() * victims.len();
    for (a, name) in names.iter().enumerate() {
        for (v, victim) in victims.iter().enumerate() {
            let victim_name = format!("{}{victim_suffix}", victim.name());
            let mut slot = 0;
            for &metric in &cfg.metrics {
                for &k in &cfg.ks {
                    let values = (0..repeats.len())
                        .map(|r| cells[r * per + a * victims.len() + v].as_ref().map(|c| c[slot]))
                        .collect();
                    rows.push(ReportRow::new(name, &victim_name, metric.name(), k, values));
                    slot += 1;
                }
            }
        }
    }
    Ok(EvalReport {
        fingerprint: String::new(),
        seeds: repeats.iter().map(|r| r.seed).collect(),
        rows,
    })
}

/// Metric values in `metrics × ks` order for one retrained victim.
#[allow(clippy::too_many_arguments)]
fn evaluate_cell(
    split: &Split,
    fake: Option<&FakeProfiles>,
    removed: &[usize],
    victim: &VictimSpec,
    seed: u64,
    users: &[usize],
    targets: &[usize],
    cfg: &EvalConfig,
    groups: Option<&UserGroups>,
) -> Result<Vec<f64>> {
    let poisoned = match fake {
        Some(fp) => fp.poison(&split.train)?,
        None => split.train.clone(),
    };
    let mut removed = removed.to_vec();
    removed.sort_unstable();
    let (train, row_of): (InteractionMatrix, Vec<Option<usize>>) = if removed.is_empty() {
        let rows = (0..poisoned.num_users()).map(Some).collect();
        (poisoned, rows)
    } else {
        let keep: Vec<usize> = (0..poisoned.num_users()).filter(|u| removed.binary_search(u).is_err()).collect();
        let mut row_of = vec![None; poisoned.num_users()];
        for (new, &old) in keep.iter().enumerate() {
            row_of[old] = Some(new);
        }
        (poisoned.select_users(&keep), row_of)
    };
    let eval: Vec<(usize, usize)> = users.iter().filter_map(|&u| row_of[u].map(|row| (u, row))).collect();
    if eval.is_empty() {
        return Err(Error::EmptyUsers);
    }
    let params = train_model(victim.model, &train, &victim.train.with_seed(seed))?;
    let kmax = *cfg.ks.iter().max().expect("validated");
    let rows: Vec<usize> = eval.iter().map(|&(_, row)| row).collect();
    let scores = predict_scores(&params, &rows);
    let lists: Vec<Vec<usize>> = rows
        .iter()
        .zip(scores.rows())
        .map(|(&row, s)| topk_from_scores(s.as_slice().expect("standard layout"), train.row(row), kmax))
        .collect();
    let local_groups = groups.map(|g| {
        let position = |u: &usize| eval.binary_search_by_key(u, |&(orig, _)| orig).ok();
        UserGroups {
            group0: g.group0.iter().filter_map(position).collect(),
            group1: g.group1.iter().filter_map(position).collect(),
        }
    });
    let mut out = Vec::with_capacity(cfg.metrics.len() * cfg.ks.len());
    for &metric in &cfg.metrics {
        for &k in &cfg.ks {
            out.push(match metric {
                Metric::Hr => hit_ratio_at_k(&lists, targets, k)?,
                Metric::Ndcg => ndcg_at_k(&lists, targets, k)?,
                Metric::D => group_difference(&lists, targets, local_groups.as_ref().expect("checked above"), k)?,
            });
        }
    }
    Ok(out)
}
