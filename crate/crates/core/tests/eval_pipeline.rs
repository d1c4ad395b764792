use sharpap_core::attack::{baseline_random, AttackConfig, FakeProfiles};
use sharpap_core::data::synthetic::{generate, SyntheticConfig};
use sharpap_core::data::{binarize_explicit, group_users_from_attributes, split_dataset, Split, UserGroups};
use sharpap_core::defense::{evaluate_under_defense, PcaConfig};
use sharpap_core::eval::{evaluate_transfer, EvalConfig, Metric, NamedProfiles, RepeatInput, VictimSpec, CLEAN};
use sharpap_core::recmodel::{ModelKind, TrainConfig};

fn small() -> (Split, UserGroups) {
    let cfg = SyntheticConfig {
        num_users: 120,
        num_items: 80,
        mean_ratings_per_user: 20.0,
        min_ratings_per_user: 8,
        seed: 5,
        ..SyntheticConfig::default()
    };
    let data = generate(&cfg);
    let m = binarize_explicit(&data.ratings, 4.0);
    let groups = group_users_from_attributes(&data.attributes, &m);
    (split_dataset(&m, [0.7, 0.1, 0.2], 1).unwrap(), groups)
}

fn victims() -> Vec<VictimSpec> {
    let train = TrainConfig {
        dim: 8,
        steps: 20,
        learning_rate: 0.05,
        batch_size: 256,
        init_std: 0.1,
        ..TrainConfig::default()
    };
    [ModelKind::Wrmf, ModelKind::Bpr, ModelKind::Lightgcn]
        .into_iter()
        .map(|model| VictimSpec {
            model,
            train: train.clone(),
        })
        .collect()
}

fn repeats(split: &Split, n: usize) -> Vec<RepeatInput> {
    let acfg = AttackConfig {
        delta: 0.05,
        profile_size: Some(6),
        ..AttackConfig::default()
    };
    (0..n as u64)
        .map(|seed| {
            let targets = vec![3 + seed as usize, 40];
            let fp = baseline_random(&split.train, &targets, &acfg, seed).unwrap();
            RepeatInput {
                seed,
                targets,
                attackers: vec![NamedProfiles {
                    name: "random".into(),
                    profiles: fp,
                }],
            }
        })
        .collect()
}

fn eval_cfg() -> EvalConfig {
    EvalConfig {
        metrics: vec![Metric::Hr, Metric::Ndcg, Metric::D],
        ks: vec![5, 10],
        repeats: 2,
    }
}

#[test]
fn report_covers_every_cell_and_is_deterministic() {
    let (split, groups) = small();
    let reps = repeats(&split, 2);
    let a = evaluate_transfer(&split, &reps, &victims(), &eval_cfg(), Some(&groups)).unwrap();
    assert_eq!(a.rows.len(), 2 * 3 * 3 * 2);
    for attacker in [CLEAN, "random"] {
        for v in ["wrmf", "bpr", "lightgcn"] {
            for m in ["HR", "NDCG", "D"] {
                for k in [5, 10] {
                    let row = a.get(attacker, v, m, k).unwrap();
                    assert_eq!(row.values.len(), 2);
                    let lo = if m == "D" { -1.0 } else { 0.0 };
                    assert!(row.values.iter().flatten().all(|x| (lo..=1.0).contains(x)));
                }
            }
        }
    }
    let b = evaluate_transfer(&split, &reps, &victims(), &eval_cfg(), Some(&groups)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn d_without_groups_is_a_config_error() {
    let (split, _) = small();
    assert!(evaluate_transfer(&split, &repeats(&split, 1), &victims(), &eval_cfg(), None).is_err());
}

#[test]
fn mismatched_attackers_rejected() {
    let (split, groups) = small();
    let mut reps = repeats(&split, 2);
    reps[1].attackers.clear();
    assert!(evaluate_transfer(&split, &reps, &victims(), &eval_cfg(), Some(&groups)).is_err());
}

#[test]
fn separable_fakes_are_removed_and_defended_rows_approach_clean() {
    let (split, groups) = small();
    // Every fake rates half the catalogue: trivially the densest rows.
    let num_items = split.train.num_items();
    let all: Vec<usize> = (0..=num_items / 2).collect();
    let fp = FakeProfiles::from_discrete(num_items, vec![all; 6], vec![40], num_items).unwrap();
    let reps = vec![RepeatInput {
        seed: 3,
        targets: vec![40],
        attackers: vec![NamedProfiles {
            name: "dense".into(),
            profiles: fp,
        }],
    }];
    let cfg = EvalConfig {
        repeats: 1,
        ..eval_cfg()
    };
    let wrmf = &victims()[..1];
    let report = evaluate_under_defense(&split, &reps, wrmf, &cfg, Some(&groups), &PcaConfig::default(), 0.04).unwrap();
    assert_eq!(report.mean("dense", "pca", "recall", 0), Some(1.0));
    let clean = report.mean(CLEAN, "wrmf", "HR", 10).unwrap();
    let defended = report.mean("dense", "wrmf+pca", "HR", 10).unwrap();
    let attacked = report.mean("dense", "wrmf", "HR", 10).unwrap();
    assert!(attacked.is_finite());
    assert!((defended - clean).abs() <= (attacked - clean).abs(), "{clean} {defended} {attacked}");
}
