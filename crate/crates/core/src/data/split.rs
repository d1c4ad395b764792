use rand::seq::SliceRandom;

use super::InteractionMatrix;
use crate::{rng, Error, Result};

/// Train / validation / test partitions over the same id maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: InteractionMatrix,
    pub validation: InteractionMatrix,
    pub test: InteractionMatrix,
}

/// Per-user random partition of each row by `ratios` (train, validation, test).
///
/// Users with fewer than three interactions go entirely to train. Validation
/// and test sizes are the rounded shares; train takes the rest and always keeps
/// at least one item.
pub fn split_dataset(m: &InteractionMatrix, ratios: [f64; 3], seed: u64) -> Result<Split> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || ratios[0] <= 0.0 {
        return Err(Error::config("split.ratios", "weights must be non-negative with a positive train share"));
    }
    let total: f64 = ratios.iter().sum();
    let mut rng = rng::seeded(seed);
    let mut train = Vec::with_capacity(m.num_users());
    let mut validation = Vec::with_capacity(m.num_users());
    let mut test = Vec::with_capacity(m.num_users());
    for row in m.rows() {
        let n = row.len();
        if n < 3 {
            train.push(row.clone());
            validation.push(Vec::new());
            test.push(Vec::new());
            continue;
        }
        let mut n_test = (n as f64 * ratios[2] / total).round() as usize;
        let mut n_val = (n as f64 * ratios[1] / total).round() as usize;
        while n_test + n_val >= n {
            if n_val > 0 {
                n_val -= 1;
            } else {
                n_test -= 1;
            }
        }
        let mut items = row.clone();
        items.shuffle(&mut rng);
        let mut take = |k: usize| {
            let mut part: Vec<usize> = items.drain(..k).collect();
            part.sort_unstable();
            part
        };
        test.push(take(n_test));
        validation.push(take(n_val));
        train.push(take(n - n_test - n_val));
    }
    Ok(Split {
        train: m.with_rows(train)?,
        validation: m.with_rows(validation)?,
        test: m.with_rows(test)?,
    })
}
