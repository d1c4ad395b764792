use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::InteractionMatrix;
use crate::{Error, Result};

/// Fake-user rows: the continuous iterate and its top-N discretisation.
#[derive(Debug, Clone, PartialEq)]
pub struct FakeProfiles {
    pub continuous: Array2<f64>,
    /// Sorted item indices per fake user.
    pub discrete: Vec<Vec<usize>>,
    pub target_items: Vec<usize>,
    pub max_items: usize,
}

impl FakeProfiles {
    /// Continuous rows with an empty discrete part; call [`project_topn`] next.
    pub fn new(continuous: Array2<f64>, mut target_items: Vec<usize>, max_items: usize) -> Result<Self> {
        target_items.sort_unstable();
        target_items.dedup();
        if target_items.is_empty() {
            return Err(Error::EmptyTargets);
        }
        if let Some(&t) = target_items.iter().find(|&&t| t >= continuous.ncols()) {
            return Err(Error::Shape(format!("target item {t} outside {} items", continuous.ncols())));
        }
        if max_items < target_items.len() {
            return Err(Error::ProfileTooSmall {
                n: max_items,
                targets: target_items.len(),
            });
        }
        let discrete = vec![Vec::new(); continuous.nrows()];
        Ok(Self {
            continuous,
            discrete,
            target_items,
            max_items,
        })
    }

    /// Builds profiles directly from discrete rows (continuous = indicator).
    pub fn from_discrete(num_items: usize, rows: Vec<Vec<usize>>, target_items: Vec<usize>, max_items: usize) -> Result<Self> {
        let mut continuous = Array2::zeros((rows.len(), num_items));
        for (u, row) in rows.iter().enumerate() {
            for &i in row {
                if i >= num_items {
                    return Err(Error::Shape(format!("item {i} outside {num_items} items")));
                }
                continuous[[u, i]] = 1.0;
            }
        }
        let mut fp = Self::new(continuous, target_items, max_items)?;
        fp.discrete = rows
            .into_iter()
            .map(|mut r| {
                r.sort_unstable();
                r.dedup();
                r
            })
            .collect();
        fp.check_invariants()?;
        Ok(fp)
    }

    pub fn num_fake(&self) -> usize {
        self.continuous.nrows()
    }

    pub fn num_items(&self) -> usize {
        self.continuous.ncols()
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.continuous.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Shape("continuous fake entries outside [0, 1]".into()));
        }
        for (u, row) in self.discrete.iter().enumerate() {
            if row.len() > self.max_items {
                return Err(Error::Shape(format!("fake user {u} has {} > {} items", row.len(), self.max_items)));
            }
            if !self.target_items.iter().all(|t| row.binary_search(t).is_ok()) {
                return Err(Error::Shape(format!("fake user {u} is missing a target item")));
            }
        }
        Ok(())
    }

    /// The discrete rows appended to `real` as extra users.
    pub fn poison(&self, real: &InteractionMatrix) -> Result<InteractionMatrix> {
        real.append_users(&self.discrete)
    }

    /// Triplet CSV `fake_user_index,item_index,value` of the discrete rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "fake_user_index,item_index,value")?;
        for (u, row) in self.discrete.iter().enumerate() {
            for i in row {
                writeln!(w, "{u},{i},1")?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Top-`n` selection of one row with `targets` (sorted) forced in; the rest
/// by descending score, ties by ascending index. Returns sorted indices.
pub fn project_row(row: &[f64], targets: &[usize], n: usize) -> Vec<usize> {
    let mut fillers: Vec<usize> = (0..row.len()).filter(|i| targets.binary_search(i).is_err()).collect();
    let slots = n.saturating_sub(targets.len()).min(fillers.len());
    let by_score = |&a: &usize, &b: &usize| row[b].total_cmp(&row[a]).then(a.cmp(&b));
    if slots < fillers.len() && slots > 0 {
        fillers.select_nth_unstable_by(slots - 1, by_score);
    }
    fillers.truncate(slots);
    fillers.extend_from_slice(targets);
    fillers.sort_unstable();
    fillers
}

/// Recomputes the discrete part from the continuous rows.
pub fn project_topn(fp: &FakeProfiles) -> Result<FakeProfiles> {
    if fp.max_items < fp.target_items.len() {
        return Err(Error::ProfileTooSmall {
            n: fp.max_items,
            targets: fp.target_items.len(),
        });
    }
    let discrete = fp
        .continuous
        .rows()
        .into_iter()
        .map(|r| project_row(r.as_slice().expect("standard layout"), &fp.target_items, fp.max_items))
        .collect();
    Ok(FakeProfiles {
        discrete,
        ..fp.clone()
    })
}

/// Provenance written next to an exported profile CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSidecar<C> {
    pub attacker: String,
    pub seed: u64,
    pub config: C,
    pub target_items: Vec<usize>,
    pub max_items: usize,
    pub loss_log: Vec<f64>,
}

impl<C: Serialize> ProfileSidecar<C> {
    pub fn write(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn spec_rows() {
        let row = [0.9, 0.1, 0.5, 0.7];
        assert_eq!(project_row(&row, &[], 2), vec![0, 3]);
        assert_eq!(project_row(&row, &[1], 2), vec![0, 1]);
        assert_eq!(project_row(&[0.3; 4], &[], 2), vec![0, 1]);
    }

    #[test]
    fn n_larger_than_catalogue_takes_everything() {
        assert_eq!(project_row(&[0.1, 0.2, 0.0], &[2], 9), vec![0, 1, 2]);
    }

    #[test]
    fn too_small_n_rejected() {
        let err = FakeProfiles::new(array![[0.5, 0.5, 0.5]], vec![0, 1], 1).unwrap_err();
        assert!(matches!(err, Error::ProfileTooSmall { n: 1, targets: 2 }));
    }

    #[test]
    fn projection_satisfies_invariants() {
        let fp = FakeProfiles::new(array![[0.9, 0.1, 0.5, 0.7], [0.0, 0.0, 1.0, 0.2]], vec![1], 3).unwrap();
        let p = project_topn(&fp).unwrap();
        p.check_invariants().unwrap();
        assert_eq!(p.discrete, vec![vec![0, 1, 3], vec![1, 2, 3]]);
    }

    #[test]
    fn csv_lists_discrete_support() {
        let fp = FakeProfiles::from_discrete(4, vec![vec![0, 2], vec![2]], vec![2], 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fake.csv");
        fp.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "fake_user_index,item_index,value\n0,0,1\n0,2,1\n1,2,1\n");
    }

    proptest! {
        #[test]
        fn idempotent_and_bounded(
            row in prop::collection::vec(prop_oneof![Just(0.0), Just(0.5), 0.0f64..1.0], 1..12),
            n in 1usize..12,
            t in 0usize..12,
        ) {
            let targets: Vec<usize> = if t < row.len() && n >= 1 { vec![t] } else { vec![] };
            let once = project_row(&row, &targets, n);
            prop_assert!(once.len() <= n.max(targets.len()));
            prop_assert!(targets.iter().all(|t| once.contains(t)));
            let mut indicator = vec![0.0; row.len()];
            for &i in &once { indicator[i] = 1.0; }
            prop_assert_eq!(project_row(&indicator, &targets, n), once);
        }
    }
}
