//! Stage implementations shared by the subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use sharpap_core::attack::{
    baseline_popular, baseline_random, gradient_attack, AttackConfig, AttackObjective, AttackVariant, EmbeddingObjective,
    FakeProfiles, ProfileSidecar,
};
use sharpap_core::data::synthetic::generate;
use sharpap_core::data::{
    binarize_explicit, dataset_stats, group_users, group_users_from_attributes, kcore_filter, load_interactions, read_ratings,
    sample_target_items, split_dataset, write_triplets, DatasetStats, InputFormat, InteractionMatrix, Split, UserGroups,
};
use sharpap_core::defense::evaluate_under_defense;
use sharpap_core::eval::{evaluate_transfer, EvalReport, NamedProfiles, RepeatInput};
use sharpap_core::landscape::{loss_landscape_grid, sharpness_score, LandscapeGrid};
use sharpap_core::recmodel::{train_wrmf, WeightedMatrix};
use sharpap_core::{Error, Result};

use crate::config::{AttackerKind, DatasetSpec, ExperimentConfig};
use crate::manifest::Manifest;

pub struct Prepared {
    pub matrix: InteractionMatrix,
    pub split: Split,
    pub groups: Option<UserGroups>,
    pub stats: DatasetStats,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (matrix, groups) = match &cfg.dataset {
        DatasetSpec::File {
            path,
            format,
            groups,
            binarize_threshold,
            kcore,
        } => {
            let m = match (format, binarize_threshold) {
                (InputFormat::RatingCsv, Some(t)) => binarize_explicit(&read_ratings(path)?, *t),
                _ => load_interactions(path, *format)?,
            };
            let m = if *kcore > 0 { kcore_filter(&m, *kcore) } else { m };
            let g = groups.as_deref().map(|p| group_users(p, &m)).transpose()?;
            (m, g)
        }
        DatasetSpec::Synthetic {
            config,
            binarize_threshold,
            kcore,
        } => {
            let data = generate(config);
            let m = binarize_explicit(&data.ratings, *binarize_threshold);
            let m = if *kcore > 0 { kcore_filter(&m, *kcore) } else { m };
            let g = group_users_from_attributes(&data.attributes, &m);
            (m, Some(g))
        }
    };
    if matrix.num_users() == 0 || matrix.num_items() == 0 {
        return Err(Error::EmptyDataset);
    }
    let split = split_dataset(&matrix, cfg.split.ratios, cfg.split.seed)?;
    let stats = dataset_stats(&matrix);
    Ok(Prepared {
        matrix,
        split,
        groups,
        stats,
    })
}

/// Profiles produced by one attacker in one repeat.
pub struct AttackRun {
    pub attacker: AttackerKind,
    pub profiles: FakeProfiles,
    pub loss_log: Vec<f64>,
    pub final_loss: Option<f64>,
}

pub struct RepeatRun {
    pub repeat: usize,
    pub seed: u64,
    pub targets: Vec<usize>,
    pub runs: Vec<AttackRun>,
}

impl RepeatRun {
    pub fn input(&self) -> RepeatInput {
        RepeatInput {
            seed: self.seed,
            targets: self.targets.clone(),
            attackers: self
                .runs
                .iter()
                .map(|r| NamedProfiles {
                    name: r.attacker.name().to_string(),
                    profiles: r.profiles.clone(),
                })
                .collect(),
        }
    }

    pub fn get(&self, attacker: AttackerKind) -> Option<&AttackRun> {
        self.runs.iter().find(|r| r.attacker == attacker)
    }
}

pub fn attack_config_for(cfg: &ExperimentConfig, seed: u64) -> AttackConfig {
    AttackConfig {
        seed,
        ..cfg.attack.clone()
    }
}

pub fn objective_for(cfg: &ExperimentConfig, prepared: &Prepared, targets: Vec<usize>) -> Result<AttackObjective> {
    cfg.attack.objective(targets, prepared.groups.clone())
}

fn targets_for(cfg: &ExperimentConfig, prepared: &Prepared, seed: u64) -> Result<Vec<usize>> {
    let group = match cfg.attack.objective {
        sharpap_core::attack::ObjectiveKind::Group => prepared.groups.as_ref().map(|g| g.group1.as_slice()),
        sharpap_core::attack::ObjectiveKind::FullUser => None,
    };
    sample_target_items(&prepared.split.train, cfg.targets.count, cfg.targets.band, group, seed)
}

/// The configured attackers for every repeat; repeats run in parallel and are
/// returned in repeat order.
pub fn run_attacks(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<Vec<RepeatRun>> {
    (0..cfg.eval.repeats)
        .into_par_iter()
        .map(|repeat| {
            let seed = cfg.repeat_seed(repeat);
            let targets = targets_for(cfg, prepared, seed)?;
            let acfg = attack_config_for(cfg, seed);
            let train = &prepared.split.train;
            let mut runs = Vec::new();
            let mut seen = Vec::new();
            for &kind in &cfg.attackers {
                if kind == AttackerKind::Clean || seen.contains(&kind) {
                    continue;
                }
                seen.push(kind);
                let run = match kind {
                    AttackerKind::Clean => unreachable!(),
                    AttackerKind::Random | AttackerKind::Popular => {
                        let f = if kind == AttackerKind::Random { baseline_random } else { baseline_popular };
                        AttackRun {
                            attacker: kind,
                            profiles: f(train, &targets, &acfg, seed)?,
                            loss_log: Vec::new(),
                            final_loss: None,
                        }
                    }
                    AttackerKind::Backbone | AttackerKind::Sharpap => {
                        let variant = if kind == AttackerKind::Backbone { AttackVariant::Backbone } else { AttackVariant::SharpAp };
                        let objective = objective_for(cfg, prepared, targets.clone())?;
                        let out = gradient_attack(train, &objective, &acfg, variant)?;
                        AttackRun {
                            attacker: kind,
                            profiles: out.profiles,
                            loss_log: out.loss_log,
                            final_loss: Some(out.final_loss),
                        }
                    }
                };
                info!("repeat {repeat}: {} done", kind.name());
                runs.push(run);
            }
            Ok(RepeatRun {
                repeat,
                seed,
                targets,
                runs,
            })
        })
        .collect()
}

pub fn evaluate(cfg: &ExperimentConfig, prepared: &Prepared, repeats: &[RepeatRun]) -> Result<EvalReport> {
    let inputs: Vec<RepeatInput> = repeats.iter().map(RepeatRun::input).collect();
    let mut report = evaluate_transfer(&prepared.split, &inputs, &cfg.victims, &cfg.eval, prepared.groups.as_ref())?;
    report.fingerprint = cfg.fingerprint()?;
    Ok(report)
}

pub fn defend(cfg: &ExperimentConfig, prepared: &Prepared, repeats: &[RepeatRun]) -> Result<Option<EvalReport>> {
    let Some(pca) = &cfg.defense else {
        return Ok(None);
    };
    let inputs: Vec<RepeatInput> = repeats.iter().map(RepeatRun::input).collect();
    let fraction = pca.resolve_fraction(cfg.attack.delta);
    let mut report = evaluate_under_defense(&prepared.split, &inputs, &cfg.victims, &cfg.eval, prepared.groups.as_ref(), pca, fraction)?;
    report.fingerprint = cfg.fingerprint()?;
    Ok(Some(report))
}

/// Landscape of the attack loss around a surrogate fitted to train + `profiles`.
pub fn surrogate_landscape(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    objective: &AttackObjective,
    profiles: &FakeProfiles,
) -> Result<LandscapeGrid> {
    let lcfg = cfg.landscape.clone().unwrap_or_default();
    let train = &prepared.split.train;
    let poisoned = profiles.poison(train)?;
    let inner = &cfg.attack.inner;
    let r = WeightedMatrix::from_binary(&poisoned, inner.observed_weight, inner.missing_weight);
    let (theta, _) = train_wrmf(&r, inner, false)?;
    let frozen = objective.freeze(&theta, train.num_users(), Some(train));
    let flat = EmbeddingObjective::new(frozen, &theta);
    loss_landscape_grid(&theta.to_flat(), &flat, &lcfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct LandscapeSummary {
    pub repeat: usize,
    pub attacker: String,
    pub sharpness: Option<f64>,
    pub center_value: Option<f64>,
    pub direction_checksums: [String; 2],
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Everything `run` computes, keyed for callers that want more than files.
pub struct RunOutput {
    pub report: EvalReport,
    pub defense: Option<EvalReport>,
    pub landscapes: Vec<LandscapeSummary>,
    pub manifest: Manifest,
}

/// Which stages a subcommand executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub attack: bool,
    pub evaluate: bool,
    pub landscape: bool,
    pub defend: bool,
}

impl Stages {
    pub const INGEST: Stages = Stages {
        attack: false,
        evaluate: false,
        landscape: false,
        defend: false,
    };
    pub const ALL: Stages = Stages {
        attack: true,
        evaluate: true,
        landscape: true,
        defend: true,
    };

    pub fn names(&self) -> Vec<&'static str> {
        let mut v = vec!["ingest"];
        let flags = [
            (self.attack, "attack"),
            (self.evaluate, "evaluate"),
            (self.landscape, "landscape"),
            (self.defend, "defend"),
        ];
        v.extend(flags.iter().filter(|(on, _)| *on).map(|&(_, n)| n));
        v
    }
}

/// Runs the requested stages and writes their artifacts under `out`. On a
/// stage failure the manifest is still written, marking partial completion.
pub fn run_stages(cfg: &ExperimentConfig, out: &Path, stages: Stages) -> Result<RunOutput> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut manifest = Manifest::new(cfg)?;
    let result = execute(cfg, out, stages, &mut manifest);
    if let Err(e) = &result {
        manifest.fail(&e.to_string());
    }
    manifest.write(out)?;
    let (report, defense, landscapes) = result?;
    Ok(RunOutput {
        report,
        defense,
        landscapes,
        manifest,
    })
}

type StageResults = (EvalReport, Option<EvalReport>, Vec<LandscapeSummary>);

fn execute(cfg: &ExperimentConfig, out: &Path, stages: Stages, manifest: &mut Manifest) -> Result<StageResults> {
    let started = Instant::now();
    let prepared = prepare(cfg)?;
    let data_dir = out.join("data");
    fs::create_dir_all(&data_dir)?;
    write_json(&data_dir.join("stats.json"), &prepared.stats)?;
    write_triplets(&prepared.split.train, &data_dir.join("train.csv"))?;
    write_triplets(&prepared.split.validation, &data_dir.join("validation.csv"))?;
    write_triplets(&prepared.split.test, &data_dir.join("test.csv"))?;
    manifest.complete("ingest", &["data/stats.json", "data/train.csv", "data/validation.csv", "data/test.csv"]);
    info!("ingest: {:?} ({:.1?})", prepared.stats, started.elapsed());

    let mut report = EvalReport {
        fingerprint: cfg.fingerprint()?,
        seeds: Vec::new(),
        rows: Vec::new(),
    };
    if !stages.attack {
        return Ok((report, None, Vec::new()));
    }
    let repeats = run_attacks(cfg, &prepared)?;
    let profile_dir = out.join("profiles");
    fs::create_dir_all(&profile_dir)?;
    let mut files = Vec::new();
    let mut targets = BTreeMap::new();
    for rep in &repeats {
        targets.insert(format!("repeat_{}", rep.repeat), rep.targets.clone());
        for run in &rep.runs {
            let stem = format!("{}_r{}", run.attacker.name(), rep.repeat);
            run.profiles.write_csv(&profile_dir.join(format!("{stem}.csv")))?;
            ProfileSidecar {
                attacker: run.attacker.name().to_string(),
                seed: rep.seed,
                config: attack_config_for(cfg, rep.seed),
                target_items: run.profiles.target_items.clone(),
                max_items: run.profiles.max_items,
                loss_log: run.loss_log.clone(),
            }
            .write(&profile_dir.join(format!("{stem}.json")))?;
            files.push(format!("profiles/{stem}.csv"));
            files.push(format!("profiles/{stem}.json"));
        }
    }
    write_json(&profile_dir.join("targets.json"), &targets)?;
    files.push("profiles/targets.json".into());
    manifest.complete("attack", &files.iter().map(String::as_str).collect::<Vec<_>>());
    info!("attack stage done ({:.1?})", started.elapsed());

    if stages.evaluate {
        report = evaluate(cfg, &prepared, &repeats)?;
        report.write_csv(&out.join("report.csv"))?;
        report.write_json(&out.join("report.json"))?;
        manifest.complete("evaluate", &["report.csv", "report.json"]);
        info!("evaluate stage done ({:.1?})", started.elapsed());
    }

    let mut summaries = Vec::new();
    if stages.landscape && cfg.landscape.is_some() {
        let dir = out.join("landscape");
        fs::create_dir_all(&dir)?;
        let mut files = Vec::new();
        for rep in &repeats {
            let objective = objective_for(cfg, &prepared, rep.targets.clone())?;
            for run in rep.runs.iter().filter(|r| matches!(r.attacker, AttackerKind::Backbone | AttackerKind::Sharpap)) {
                let grid = surrogate_landscape(cfg, &prepared, &objective, &run.profiles)?;
                let stem = format!("{}_r{}", run.attacker.name(), rep.repeat);
                grid.write_csv(&dir.join(format!("{stem}.csv")))?;
                grid.write_metadata(&dir.join(format!("{stem}.json")))?;
                files.push(format!("landscape/{stem}.csv"));
                files.push(format!("landscape/{stem}.json"));
                summaries.push(LandscapeSummary {
                    repeat: rep.repeat,
                    attacker: run.attacker.name().to_string(),
                    sharpness: finite(sharpness_score(&grid)),
                    center_value: finite(grid.center_value()),
                    direction_checksums: grid.direction_checksums.clone(),
                });
            }
        }
        write_json(&dir.join("summary.json"), &summaries)?;
        files.push("landscape/summary.json".into());
        manifest.complete("landscape", &files.iter().map(String::as_str).collect::<Vec<_>>());
    }

    let mut defense = None;
    if stages.defend {
        if let Some(d) = defend(cfg, &prepared, &repeats)? {
            d.write_csv(&out.join("defense_report.csv"))?;
            d.write_json(&out.join("defense_report.json"))?;
            manifest.complete("defend", &["defense_report.csv", "defense_report.json"]);
            defense = Some(d);
        }
    }
    Ok((report, defense, summaries))
}

pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput> {
    run_stages(cfg, out, Stages::ALL)
}

/// Default artifacts location: `<output_dir>`.
pub fn output_dir(cfg: &ExperimentConfig, cli: Option<PathBuf>) -> PathBuf {
    cli.or_else(|| std::env::var_os("SHARPAP_OUT").map(PathBuf::from))
        .unwrap_or_else(|| cfg.output_dir.clone())
}
