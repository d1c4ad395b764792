use rand::seq::index::sample;

use super::profiles::FakeProfiles;
use super::sharpap::AttackConfig;
use crate::data::InteractionMatrix;
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

/// Targets plus uniformly random fillers up to `N`.
pub fn baseline_random(real: &InteractionMatrix, targets: &[usize], cfg: &AttackConfig, seed: u64) -> Result<FakeProfiles> {
    heuristic(real, targets, cfg, seed, 0.0)
}

/// Targets, then `⌈10%⌉` of the remaining slots from the globally most
/// popular items, the rest uniformly random.
pub fn baseline_popular(real: &InteractionMatrix, targets: &[usize], cfg: &AttackConfig, seed: u64) -> Result<FakeProfiles> {
    heuristic(real, targets, cfg, seed, 0.1)
}

fn heuristic(real: &InteractionMatrix, targets: &[usize], cfg: &AttackConfig, seed: u64, popular_share: f64) -> Result<FakeProfiles> {
    let mut targets = targets.to_vec();
    targets.sort_unstable();
    targets.dedup();
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    let num_fake = cfg.num_fake(real.num_users())?;
    let n = cfg.resolve_profile_size(real);
    if n < targets.len() {
        return Err(Error::ProfileTooSmall {
            n,
            targets: targets.len(),
        });
    }
    let others: Vec<usize> = (0..real.num_items()).filter(|i| targets.binary_search(i).is_err()).collect();
    let slots = (n - targets.len()).min(others.len());
    let popular_slots = ((popular_share * slots as f64).ceil() as usize).min(slots);

    let counts = real.item_counts(None);
    let mut by_popularity = others.clone();
    by_popularity.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let popular: Vec<usize> = by_popularity[..popular_slots].to_vec();
    let pool: Vec<usize> = others.into_iter().filter(|i| !popular.contains(i)).collect();

    let mut rng = seeded(derive_seed(seed, 13));
    let rows = (0..num_fake)
        .map(|_| {
            let mut row = targets.clone();
            row.extend_from_slice(&popular);
            row.extend(sample(&mut rng, pool.len(), slots - popular_slots).into_iter().map(|k| pool[k]));
            row
        })
        .collect();
    FakeProfiles::from_discrete(real.num_items(), rows, targets, n)
}
