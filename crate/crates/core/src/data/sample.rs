use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::InteractionMatrix;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopularityBand {
    Uniform,
    PopularTop20,
    UnpopularBottom80,
}

/// Splits items into the top 20% (rounded up) and the remaining 80% by
/// interaction count, optionally counted over `group` only. Ties are broken by
/// ascending item index. Both lists are returned in popularity order.
pub fn popularity_bands(m: &InteractionMatrix, group: Option<&[usize]>) -> (Vec<usize>, Vec<usize>) {
    let counts = m.item_counts(group);
    let mut order: Vec<usize> = (0..m.num_items()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let cut = (m.num_items() as f64 * 0.2).ceil() as usize;
    let unpopular = order.split_off(cut.min(order.len()));
    (order, unpopular)
}

/// Samples `count` distinct target items from a popularity band. The result is
/// sorted by item index.
pub fn sample_target_items(
    m: &InteractionMatrix,
    count: usize,
    band: PopularityBand,
    group: Option<&[usize]>,
    seed: u64,
) -> Result<Vec<usize>> {
    let candidates = match band {
        PopularityBand::Uniform => (0..m.num_items()).collect(),
        PopularityBand::PopularTop20 => popularity_bands(m, group).0,
        PopularityBand::UnpopularBottom80 => popularity_bands(m, group).1,
    };
    if count == 0 {
        return Err(Error::EmptyTargets);
    }
    if count > candidates.len() {
        return Err(Error::BandTooSmall {
            requested: count,
            available: candidates.len(),
        });
    }
    let mut rng = rng::seeded(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, candidates.len(), count)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Real users split by a binary attribute. Users without the attribute belong
/// to neither group.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserGroups {
    pub group0: Vec<usize>,
    pub group1: Vec<usize>,
}

impl UserGroups {
    pub fn require_nonempty(&self) -> Result<()> {
        if self.group0.is_empty() {
            return Err(Error::EmptyGroup(0));
        }
        if self.group1.is_empty() {
            return Err(Error::EmptyGroup(1));
        }
        Ok(())
    }

    /// Restricts both groups to members of `users`.
    pub fn restrict(&self, users: &[usize]) -> UserGroups {
        let keep = |g: &[usize]| g.iter().copied().filter(|u| users.binary_search(u).is_ok()).collect();
        UserGroups {
            group0: keep(&self.group0),
            group1: keep(&self.group1),
        }
    }
}

/// Reads a JSON object `{original_user_id: 0 | 1 | null}`.
pub fn group_users(path: &Path, m: &InteractionMatrix) -> Result<UserGroups> {
    let raw: HashMap<String, serde_json::Value> = serde_json::from_str(&fs::read_to_string(path)?)?;
    let attrs = raw
        .into_iter()
        .map(|(id, v)| {
            let a = match v.as_u64() {
                Some(a @ (0 | 1)) => Some(a as u8),
                _ if v.is_null() => None,
                _ => {
                    warn!("user {id}: attribute {v} is not 0/1, treated as missing");
                    None
                }
            };
            (id, a)
        })
        .collect();
    Ok(group_users_from_attributes(&attrs, m))
}

pub fn group_users_from_attributes(attrs: &HashMap<String, Option<u8>>, m: &InteractionMatrix) -> UserGroups {
    let index = m.user_index();
    let mut groups = UserGroups::default();
    let mut skipped = 0usize;
    for (id, attr) in attrs {
        let Some(&u) = index.get(id.as_str()) else {
            skipped += 1;
            continue;
        };
        match attr {
            Some(0) => groups.group0.push(u),
            Some(1) => groups.group1.push(u),
            _ => {}
        }
    }
    if skipped > 0 {
        warn!("{skipped} attribute ids are not users of the matrix and were skipped");
    }
    groups.group0.sort_unstable();
    groups.group1.sort_unstable();
    groups
}
