//! A label-blind PCA detector for coordinated fake profiles, and evaluation
//! of attacks after the flagged users are removed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{InteractionMatrix, Split, UserGroups};
use crate::eval::{evaluate_cells, EvalConfig, EvalReport, RepeatInput, ReportRow, VictimSpec, CLEAN};
use crate::rng::seeded;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcaConfig {
    pub components: usize,
    /// Share of users to flag; `None` means twice the injected fraction.
    pub remove_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            components: 3,
            remove_fraction: None,
            seed: 0,
        }
    }
}

impl PcaConfig {
    pub fn resolve_fraction(&self, attack_delta: f64) -> f64 {
        self.remove_fraction.unwrap_or(2.0 * attack_delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    /// Flagged users, ascending.
    pub suspected: Vec<usize>,
    pub scores: Vec<f64>,
    /// Score of the lowest-ranked flagged user.
    pub threshold: f64,
    /// Components actually used after clamping to the numerical rank.
    pub components: usize,
}

impl DetectionResult {
    pub fn is_flagged(&self, user: usize) -> bool {
        self.suspected.binary_search(&user).is_ok()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "user_index,score,flagged")?;
        for (u, s) in self.scores.iter().enumerate() {
            writeln!(w, "{u},{s},{}", u8::from(self.is_flagged(u)))?;
        }
        w.flush()?;
        Ok(())
    }
}

const MAX_POWER_ITERS: usize = 2000;

/// Leading eigenvectors of `XᵀX` by power iteration with deflation, stopping
/// early once the residual spectrum is numerically zero.
fn principal_directions(x: &Array2<f64>, k: usize, seed: u64) -> Vec<Array1<f64>> {
    let mut rng = seeded(seed);
    let mut found: Vec<Array1<f64>> = Vec::with_capacity(k);
    let mut top = 0.0f64;
    let orthogonalise = |v: &mut Array1<f64>, found: &[Array1<f64>]| {
        for c in found {
            let p = v.dot(c);
            v.scaled_add(-p, c);
        }
    };
    for _ in 0..k {
        let mut v: Array1<f64> = (0..x.ncols()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        orthogonalise(&mut v, &found);
        let mut lambda = 0.0;
        for _ in 0..MAX_POWER_ITERS {
            let norm = v.dot(&v).sqrt();
            if norm == 0.0 {
                break;
            }
            v /= norm;
            let mut next = x.t().dot(&x.dot(&v));
            orthogonalise(&mut next, &found);
            lambda = v.dot(&next);
            let next_norm = next.dot(&next).sqrt();
            if next_norm == 0.0 {
                lambda = 0.0;
                break;
            }
            let change = (&next / next_norm - &v).mapv(f64::abs).sum();
            v = next;
            if change < 1e-13 {
                break;
            }
        }
        top = top.max(lambda);
        if lambda <= 1e-10 * top.max(1e-300) || lambda <= 0.0 {
            break;
        }
        let norm = v.dot(&v).sqrt();
        found.push(v / norm);
    }
    found
}

/// Scores every user by the squared norm of its centred row's projection onto
/// the top-`k` principal directions and flags the top `⌈fraction·|U|⌉`
/// (ties by user index).
pub fn pca_detect(r: &InteractionMatrix, components: usize, remove_fraction: f64, seed: u64) -> Result<DetectionResult> {
    if components == 0 {
        return Err(Error::config("defense.components", "must be >= 1"));
    }
    if !(remove_fraction > 0.0 && remove_fraction < 1.0) {
        return Err(Error::config("defense.remove_fraction", format!("must be in (0, 1), got {remove_fraction}")));
    }
    let nu = r.num_users();
    if nu == 0 {
        return Err(Error::EmptyUsers);
    }
    let mut x = Array2::zeros((nu, r.num_items()));
    for (u, row) in r.rows().iter().enumerate() {
        for &i in row {
            x[[u, i]] = 1.0;
        }
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    x -= &mean;
    let dirs = principal_directions(&x, components, seed);
    if dirs.len() < components {
        warn!("PCA detector: {components} components requested, data has numerical rank {}", dirs.len());
    }
    let mut scores = vec![0.0; nu];
    for d in &dirs {
        for (s, p) in scores.iter_mut().zip(x.dot(d)) {
            *s += p * p;
        }
    }
    let flag = ((remove_fraction * nu as f64).ceil() as usize).min(nu);
    let mut order: Vec<usize> = (0..nu).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let threshold = scores[order[flag - 1]];
    let mut suspected = order[..flag].to_vec();
    suspected.sort_unstable();
    Ok(DetectionResult {
        suspected,
        scores,
        threshold,
        components: dirs.len(),
    })
}

/// Undefended rows, rows for victims retrained after PCA removal (victim
/// names suffixed `+pca`), and detection precision / recall per attacker
/// (victim `pca`, K = 0).
pub fn evaluate_under_defense(
    split: &Split,
    repeats: &[RepeatInput],
    victims: &[VictimSpec],
    cfg: &EvalConfig,
    groups: Option<&UserGroups>,
    detector: &PcaConfig,
    remove_fraction: f64,
) -> Result<EvalReport> {
    let num_real = split.train.num_users();
    let mut removals = Vec::with_capacity(repeats.len());
    let mut quality: Vec<Vec<(f64, f64)>> = Vec::with_capacity(repeats.len());
    for rep in repeats {
        let mut per_attacker = vec![pca_detect(&split.train, detector.components, remove_fraction, detector.seed)?.suspected];
        let mut q = Vec::new();
        for a in &rep.attackers {
            let poisoned = a.profiles.poison(&split.train)?;
            let det = pca_detect(&poisoned, detector.components, remove_fraction, detector.seed)?;
            let caught = det.suspected.iter().filter(|&&u| u >= num_real).count() as f64;
            q.push((caught / det.suspected.len() as f64, caught / a.profiles.num_fake() as f64));
            per_attacker.push(det.suspected);
        }
        removals.push(per_attacker);
        quality.push(q);
    }
    let mut report = evaluate_cells(split, repeats, victims, cfg, groups, None, "")?;
    report.extend(evaluate_cells(split, repeats, victims, cfg, groups, Some(&removals), "+pca")?);
    if let Some(first) = repeats.first() {
        for (a, attacker) in first.attackers.iter().enumerate() {
            debug_assert_ne!(attacker.name, CLEAN);
            let precision = quality.iter().map(|q| Some(q[a].0)).collect();
            let recall = quality.iter().map(|q| Some(q[a].1)).collect();
            report.rows.push(ReportRow::new(&attacker.name, "pca", "precision", 0, precision));
            report.rows.push(ReportRow::new(&attacker.name, "pca", "recall", 0, recall));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_flag_lowest_indices() {
        let r = InteractionMatrix::from_rows(3, vec![vec![0, 2]; 5]).unwrap();
        let d = pca_detect(&r, 2, 0.3, 1).unwrap();
        assert_eq!(d.components, 0);
        assert_eq!(d.suspected, vec![0, 1]);
        assert!(d.scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn orthogonal_user_is_not_the_most_anomalous() {
        // dense user, empty user, and a user on a disjoint item; scores from a
        // dense eigendecomposition of the centred Gram matrix
        let r = InteractionMatrix::from_rows(5, vec![vec![0, 1, 2, 3], vec![], vec![4]]).unwrap();
        let d = pca_detect(&r, 1, 0.3, 7).unwrap();
        let expected = [1.8843531102705278, 0.2931861165618119, 0.6909778649889908];
        for (s, e) in d.scores.iter().zip(expected) {
            assert!((s - e).abs() < 1e-9, "{:?}", d.scores);
        }
        assert_eq!(d.suspected, vec![0]);
        let two = pca_detect(&r, 2, 0.3, 7).unwrap();
        let expected = [1.8888888888888895, 0.5555555555555558, 0.8888888888888893];
        for (s, e) in two.scores.iter().zip(expected) {
            assert!((s - e).abs() < 1e-9, "{:?}", two.scores);
        }
    }

    #[test]
    fn rank_clamps_components() {
        let r = InteractionMatrix::from_rows(5, vec![vec![0, 1, 2, 3], vec![], vec![4]]).unwrap();
        assert_eq!(pca_detect(&r, 4, 0.3, 7).unwrap().components, 2);
    }

    #[test]
    fn deterministic_and_validated() {
        let r = InteractionMatrix::from_rows(4, vec![vec![0, 1], vec![1], vec![2, 3], vec![0, 3]]).unwrap();
        assert_eq!(pca_detect(&r, 2, 0.5, 3).unwrap(), pca_detect(&r, 2, 0.5, 3).unwrap());
        assert!(pca_detect(&r, 0, 0.5, 3).is_err());
        assert!(pca_detect(&r, 1, 1.0, 3).is_err());
    }
}
