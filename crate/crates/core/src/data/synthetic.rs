//! Synthetic explicit-rating data shaped like the MovieLens family.
//!
//! Users and items get Gaussian latent factors; items additionally get a
//! Zipf-like popularity weight. Each user rates a log-normally distributed
//! number of items drawn by Gumbel-top-k on `log popularity + affinity`, and
//! ratings are quantised affinities. A binary attribute correlated with the
//! first latent factor mimics a gender split.

use std::collections::HashMap;

use rand::Rng as _;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::RawRating;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub latent_dim: usize,
    pub mean_ratings_per_user: f64,
    pub min_ratings_per_user: usize,
    pub popularity_exponent: f64,
    /// Share of users with attribute 0.
    pub group0_share: f64,
    pub missing_attribute_share: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    /// MovieLens-100k shape: 943 users, 1,682 items, ~100k ratings.
    fn default() -> Self {
        Self {
            num_users: 943,
            num_items: 1682,
            latent_dim: 8,
            mean_ratings_per_user: 106.0,
            min_ratings_per_user: 20,
            popularity_exponent: 0.9,
            group0_share: 0.29,
            missing_attribute_share: 0.02,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub ratings: Vec<RawRating>,
    /// Original user id to attribute (`None` = missing).
    pub attributes: HashMap<String, Option<u8>>,
}

fn normal_vec(rng: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticData {
    let mut rng = rng::seeded(cfg.seed);
    let k = cfg.latent_dim.max(1);
    let scale = 1.0 / (k as f64).sqrt();
    let users: Vec<Vec<f64>> = (0..cfg.num_users).map(|_| normal_vec(&mut rng, k)).collect();
    let items: Vec<Vec<f64>> = (0..cfg.num_items).map(|_| normal_vec(&mut rng, k)).collect();
    let mut ranks: Vec<usize> = (1..=cfg.num_items).collect();
    ranks.shuffle(&mut rng);
    let log_pop: Vec<f64> = ranks.iter().map(|&r| -cfg.popularity_exponent * (r as f64).ln()).collect();

    let sigma = 0.6f64;
    let mu = cfg.mean_ratings_per_user.max(1.0).ln() - sigma * sigma / 2.0;
    let counts = LogNormal::new(mu, sigma).expect("valid log-normal");

    let mut ratings = Vec::new();
    let mut attributes = HashMap::new();
    for (u, pu) in users.iter().enumerate() {
        let id = (u + 1).to_string();
        let attr = if rng.random::<f64>() < cfg.missing_attribute_share {
            None
        } else {
            let z: f64 = StandardNormal.sample(&mut rng);
            // attribute 0 concentrates on low first-factor users
            let x = 0.8 * pu[0] + 0.6 * z;
            Some(if x < quantile(cfg.group0_share) { 0 } else { 1 })
        };
        attributes.insert(id.clone(), attr);

        let n = (counts.sample(&mut rng).round() as usize)
            .clamp(cfg.min_ratings_per_user, cfg.num_items);
        let affinity: Vec<f64> = items.iter().map(|q| dot(pu, q) * scale).collect();
        let mut keyed: Vec<(f64, usize)> = (0..cfg.num_items)
            .map(|v| {
                let g = -(-rng.random::<f64>().max(1e-300).ln()).ln();
                (log_pop[v] + 0.7 * affinity[v] + g, v)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, v) in keyed.iter().take(n) {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let z = affinity[v] + 0.5 * noise;
            let rating = match z {
                z if z >= 1.0 => 5.0,
                z if z >= 0.3 => 4.0,
                z if z >= -0.4 => 3.0,
                z if z >= -1.1 => 2.0,
                _ => 1.0,
            };
            ratings.push(RawRating {
                user: id.clone(),
                item: (v + 1).to_string(),
                rating: Some(rating),
            });
        }
    }
    SyntheticData { ratings, attributes }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard-normal quantile via bisection on the error function series; only
/// used to place the attribute threshold, so modest accuracy suffices.
fn quantile(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    let (mut lo, mut hi) = (-8.0f64, 8.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn normal_cdf(x: f64) -> f64 {
    // Abramowitz-Stegun 26.2.17
    let t = 1.0 / (1.0 + 0.231_641_9 * x.abs());
    let poly = t * (0.319_381_530 + t * (-0.356_563_782 + t * (1.781_477_937 + t * (-1.821_255_978 + t * 1.330_274_429))));
    let tail = (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt() * poly;
    if x >= 0.0 { 1.0 - tail } else { tail }
}
