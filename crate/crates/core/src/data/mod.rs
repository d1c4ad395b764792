//! Implicit-feedback interaction data.
//!
//! An [`InteractionMatrix`] is a sparse binary user × item matrix stored as one
//! sorted item list per user, together with the original string ids of every
//! dense index.

mod load;
mod sample;
mod split;
pub mod synthetic;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use load::{
    binarize_explicit, kcore_filter, load_interactions, load_with_vocabulary, read_ratings,
    write_triplets, InputFormat, RawRating,
};
pub use sample::{
    group_users, group_users_from_attributes, popularity_bands, sample_target_items,
    PopularityBand, UserGroups,
};
pub use split::{split_dataset, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    num_items: usize,
    rows: Vec<Vec<usize>>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl InteractionMatrix {
    /// Builds a matrix from per-user item lists, sorting and deduplicating each
    /// row. Ids are the decimal dense indices.
    pub fn from_rows(num_items: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let user_ids = (0..rows.len()).map(|u| u.to_string()).collect();
        let item_ids = (0..num_items).map(|v| v.to_string()).collect();
        Self::with_ids(user_ids, item_ids, rows)
    }

    pub fn with_ids(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        mut rows: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if user_ids.len() != rows.len() {
            return Err(Error::Shape(format!(
                "{} user ids for {} rows",
                user_ids.len(),
                rows.len()
            )));
        }
        let num_items = item_ids.len();
        for (u, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if let Some(&v) = row.last() {
                if v >= num_items {
                    return Err(Error::Shape(format!(
                        "user {u} references item {v} but there are {num_items} items"
                    )));
                }
            }
        }
        Ok(Self {
            num_items,
            rows,
            user_ids,
            item_ids,
        })
    }

    /// A matrix over the same id maps with different rows.
    pub fn with_rows(&self, rows: Vec<Vec<usize>>) -> Result<Self> {
        Self::with_ids(self.user_ids.clone(), self.item_ids.clone(), rows)
    }

    pub fn num_users(&self) -> usize {
        self.rows.len()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn row(&self, user: usize) -> &[usize] {
        &self.rows[user]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.rows[user].binary_search(&item).is_ok()
    }

    pub fn num_interactions(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn density(&self) -> f64 {
        let cells = self.num_users() * self.num_items;
        if cells == 0 {
            0.0
        } else {
            self.num_interactions() as f64 / cells as f64
        }
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_index(&self) -> HashMap<&str, usize> {
        index_map(&self.user_ids)
    }

    pub fn item_index(&self) -> HashMap<&str, usize> {
        index_map(&self.item_ids)
    }

    /// Interaction count per item, optionally restricted to a subset of users.
    pub fn item_counts(&self, users: Option<&[usize]>) -> Vec<usize> {
        let mut counts = vec![0; self.num_items];
        let mut add = |row: &[usize]| row.iter().for_each(|&v| counts[v] += 1);
        match users {
            Some(users) => users.iter().for_each(|&u| add(&self.rows[u])),
            None => self.rows.iter().for_each(|r| add(r)),
        }
        counts
    }

    /// Appends fake users after the real ones. Fake ids are `fake:<k>`.
    pub fn append_users(&self, extra: &[Vec<usize>]) -> Result<Self> {
        let mut user_ids = self.user_ids.clone();
        user_ids.extend((0..extra.len()).map(|k| format!("fake:{k}")));
        let mut rows = self.rows.clone();
        rows.extend(extra.iter().cloned());
        Self::with_ids(user_ids, self.item_ids.clone(), rows)
    }

    /// Keeps only the listed users (in the given order). Item indexing is unchanged.
    pub fn select_users(&self, keep: &[usize]) -> Self {
        Self {
            num_items: self.num_items,
            rows: keep.iter().map(|&u| self.rows[u].clone()).collect(),
            user_ids: keep.iter().map(|&u| self.user_ids[u].clone()).collect(),
            item_ids: self.item_ids.clone(),
        }
    }
}

fn index_map(ids: &[String]) -> HashMap<&str, usize> {
    ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_users: usize,
    pub num_items: usize,
    pub num_interactions: usize,
    pub avg_items_per_user: f64,
    pub density: f64,
}

pub fn dataset_stats(m: &InteractionMatrix) -> DatasetStats {
    let num_interactions = m.num_interactions();
    DatasetStats {
        num_users: m.num_users(),
        num_items: m.num_items(),
        num_interactions,
        avg_items_per_user: if m.num_users() == 0 {
            0.0
        } else {
            num_interactions as f64 / m.num_users() as f64
        },
        density: m.density(),
    }
}
