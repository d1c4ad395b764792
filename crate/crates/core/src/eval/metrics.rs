use serde::{Deserialize, Serialize};

use crate::data::UserGroups;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Hit ratio: at least one target in the top-K.
    Hr,
    Ndcg,
    /// Group-0 hit ratio minus group-1 hit ratio.
    D,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Hr => "HR",
            Metric::Ndcg => "NDCG",
            Metric::D => "D",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn hit(list: &[usize], targets: &[usize], k: usize) -> bool {
    list.iter().take(k).any(|i| targets.contains(i))
}

pub fn hit_ratio_at_k(lists: &[Vec<usize>], targets: &[usize], k: usize) -> Result<f64> {
    if lists.is_empty() {
        return Err(Error::EmptyUsers);
    }
    Ok(lists.iter().filter(|l| hit(l, targets, k)).count() as f64 / lists.len() as f64)
}

/// Binary-relevance NDCG with the targets as the only relevant items.
pub fn ndcg_at_k(lists: &[Vec<usize>], targets: &[usize], k: usize) -> Result<f64> {
    if lists.is_empty() {
        return Err(Error::EmptyUsers);
    }
    let mut distinct = targets.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let ideal: f64 = (1..=distinct.len().min(k)).map(|i| 1.0 / (i as f64 + 1.0).log2()).sum();
    if ideal == 0.0 {
        return Ok(0.0);
    }
    let total: f64 = lists
        .iter()
        .map(|l| {
            l.iter()
                .take(k)
                .enumerate()
                .filter(|(_, i)| targets.contains(i))
                .map(|(r, _)| 1.0 / (r as f64 + 2.0).log2())
                .sum::<f64>()
        })
        .sum();
    Ok(total / ideal / lists.len() as f64)
}

/// `HR_{U₀}@K − HR_{U₁}@K`; `groups` index into `lists_by_user`.
pub fn group_difference(lists_by_user: &[Vec<usize>], targets: &[usize], groups: &UserGroups, k: usize) -> Result<f64> {
    groups.require_nonempty()?;
    let pick = |users: &[usize]| -> Result<Vec<Vec<usize>>> {
        users
            .iter()
            .map(|&u| {
                lists_by_user
                    .get(u)
                    .cloned()
                    .ok_or_else(|| Error::Shape(format!("group user {u} has no ranked list")))
            })
            .collect()
    };
    Ok(hit_ratio_at_k(&pick(&groups.group0)?, targets, k)? - hit_ratio_at_k(&pick(&groups.group1)?, targets, k)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hit_ratio_examples() {
        let lists = vec![vec![3, 1, 2], vec![0, 1, 2]];
        assert_eq!(hit_ratio_at_k(&lists, &[3], 2).unwrap(), 0.5);
        assert_eq!(hit_ratio_at_k(&lists, &[9], 3).unwrap(), 0.0);
        assert_eq!(hit_ratio_at_k(&[vec![7, 1], vec![7, 2]], &[7], 1).unwrap(), 1.0);
        assert!(matches!(hit_ratio_at_k(&[], &[1], 1), Err(Error::EmptyUsers)));
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[vec![4, 0, 1]], &[4], 3).unwrap(), 1.0);
        assert!((ndcg_at_k(&[vec![0, 1, 4]], &[4], 3).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(ndcg_at_k(&[vec![0, 1, 2]], &[4], 3).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_with_two_targets_uses_ideal_of_two() {
        let v = ndcg_at_k(&[vec![5, 0, 6]], &[5, 6], 3).unwrap();
        let expected = (1.0 + 0.5) / (1.0 + 1.0 / 3f64.log2());
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn group_difference_examples() {
        let g = UserGroups {
            group0: vec![0, 1],
            group1: vec![2, 3],
        };
        let same = vec![vec![1, 2]; 4];
        assert_eq!(group_difference(&same, &[1], &g, 1).unwrap(), 0.0);
        let split = vec![vec![1], vec![1], vec![0], vec![0]];
        assert_eq!(group_difference(&split, &[1], &g, 1).unwrap(), 1.0);
        assert_eq!(group_difference(&split, &[0], &g, 1).unwrap(), -1.0);
        let empty = UserGroups {
            group0: vec![],
            group1: vec![0],
        };
        assert!(group_difference(&split, &[0], &empty, 1).is_err());
    }

    fn ranked_lists() -> impl Strategy<Value = Vec<Vec<usize>>> {
        prop::collection::vec(Just((0..15).collect::<Vec<usize>>()).prop_shuffle(), 1..8)
    }

    proptest! {
        #[test]
        fn monotone_in_k(lists in ranked_lists(), targets in prop::collection::btree_set(0usize..15, 1..4)) {
            let targets: Vec<usize> = targets.into_iter().collect();
            let mut prev = (0.0, 0.0);
            for k in 1..=15 {
                let hr = hit_ratio_at_k(&lists, &targets, k).unwrap();
                let nd = ndcg_at_k(&lists, &targets, k).unwrap();
                prop_assert!(hr >= prev.0);
                // The ideal DCG stops growing once K covers every target.
                if k > targets.len() {
                    prop_assert!(nd >= prev.1 - 1e-15);
                }
                prop_assert!((0.0..=1.0).contains(&hr) && (0.0..=1.0 + 1e-12).contains(&nd));
                prev = (hr, nd);
            }
        }

        #[test]
        fn single_target_ndcg_accumulates(lists in ranked_lists(), t in 0usize..15) {
            // The ideal DCG of a single target is constant, so NDCG only accumulates.
            let mut prev = 0.0;
            for k in 1..=15 {
                let nd = ndcg_at_k(&lists, &[t], k).unwrap();
                prop_assert!(nd >= prev);
                prev = nd;
            }
        }
    }
}
