//! Two-dimensional attack-loss landscapes around a trained surrogate.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::FlatObjective;
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandscapeConfig {
    /// Samples per axis.
    pub points: usize,
    /// Axis values span `[-range, range]`.
    pub range: f64,
    pub seed: u64,
    /// Zero directions; every cell then equals the loss at θ*.
    pub degenerate: bool,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            points: 20,
            range: 10.0,
            seed: 0,
            degenerate: false,
        }
    }
}

impl LandscapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::config("landscape.points", "need at least two samples per axis"));
        }
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::config("landscape.range", format!("must be > 0, got {}", self.range)));
        }
        Ok(())
    }

    pub fn axis(&self) -> Vec<f64> {
        // Symmetric by construction, so mirrored samples have equal magnitude.
        let last = (self.points - 1) as f64;
        (0..self.points).map(|i| self.range * (2.0 * i as f64 - last) / last).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub axis: Vec<f64>,
    /// `values[i][j] = L(θ* + axis[i]·w₁ + axis[j]·w₂)`; `+∞` marks failures.
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
    pub direction_checksums: [String; 2],
    pub theta_fingerprint: String,
    /// The cell closest to θ* (smallest |m| and |n|, lowest index on ties).
    pub center: (usize, usize),
}

impl LandscapeGrid {
    pub fn center_value(&self) -> f64 {
        self.values[self.center.0][self.center.1]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "m,n,loss")?;
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                writeln!(w, "{},{},{}", self.axis[i], self.axis[j], v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Seed, checksums and centre; the grid itself lives in the CSV.
    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "seed": self.seed,
            "points": self.axis.len(),
            "range": [self.axis[0], self.axis[self.axis.len() - 1]],
            "direction_checksums": self.direction_checksums,
            "theta_fingerprint": self.theta_fingerprint,
            "center": [self.center.0, self.center.1],
            "center_value": finite_or_null(self.center_value()),
            "sharpness": finite_or_null(sharpness_score(self)),
        });
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, &meta)?;
        Ok(())
    }
}

fn finite_or_null(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(x).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

/// SHA-256 over the little-endian bytes of `v`.
pub fn checksum(v: &[f64]) -> String {
    let mut h = Sha256::new();
    for x in v {
        h.update(x.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Standard-normal direction `index` (1 or 2) for `seed`.
pub fn direction(dim: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = seeded(derive_seed(seed, 40 + index));
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn loss_landscape_grid(theta_star: &[f64], objective: &dyn FlatObjective, cfg: &LandscapeConfig) -> Result<LandscapeGrid> {
    cfg.validate()?;
    let dim = theta_star.len();
    let (w1, w2) = if cfg.degenerate {
        (vec![0.0; dim], vec![0.0; dim])
    } else {
        (direction(dim, cfg.seed, 1), direction(dim, cfg.seed, 2))
    };
    let axis = cfg.axis();
    let p = axis.len();
    let flat: Vec<f64> = (0..p * p)
        .into_par_iter()
        .map(|cell| {
            let (m, n) = (axis[cell / p], axis[cell % p]);
            let point: Vec<f64> = (0..dim).map(|k| theta_star[k] + m * w1[k] + n * w2[k]).collect();
            let v = objective.value(&point);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let nearest = |a: &[f64]| {
        (0..a.len())
            .min_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()).then(i.cmp(&j)))
            .expect("non-empty axis")
    };
    let c = nearest(&axis);
    Ok(LandscapeGrid {
        values: flat.chunks(p).map(<[f64]>::to_vec).collect(),
        axis,
        seed: cfg.seed,
        direction_checksums: [checksum(&w1), checksum(&w2)],
        theta_fingerprint: checksum(theta_star),
        center: (c, c),
    })
}

/// `(max − min) / (1 + |centre value|)`; lower is flatter, `+∞` if any cell failed.
pub fn sharpness_score(grid: &LandscapeGrid) -> f64 {
    let all = grid.values.iter().flatten();
    if all.clone().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    (hi - lo) / (1.0 + grid.center_value().abs())
}
