use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Result;

/// One (attacker, victim, metric, K) cell aggregated over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub attacker: String,
    pub victim: String,
    pub metric: String,
    pub k: usize,
    /// Mean over successful repeats; NaN when every repeat failed.
    pub mean: f64,
    /// Sample standard deviation over successful repeats (0 for fewer than two).
    pub std: f64,
    /// Per-repeat values; `None` marks a failed victim fit.
    pub values: Vec<Option<f64>>,
}

impl ReportRow {
    pub fn new(attacker: &str, victim: &str, metric: &str, k: usize, values: Vec<Option<f64>>) -> Self {
        let ok: Vec<f64> = values.iter().flatten().copied().collect();
        let n = ok.len() as f64;
        let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / n };
        let std = if ok.len() < 2 {
            0.0
        } else {
            (ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self {
            attacker: attacker.to_string(),
            victim: victim.to_string(),
            metric: metric.to_string(),
            k,
            mean,
            std,
            values,
        }
    }

    pub fn failed(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fingerprint: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn get(&self, attacker: &str, victim: &str, metric: &str, k: usize) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.attacker == attacker && r.victim == victim && r.metric == metric && r.k == k)
    }

    pub fn mean(&self, attacker: &str, victim: &str, metric: &str, k: usize) -> Option<f64> {
        self.get(attacker, victim, metric, k).map(|r| r.mean)
    }

    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "attacker,victim,metric,K,mean,std")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{:.6},{:.6}", r.attacker, r.victim, r.metric, r.k, r.mean, r.std)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Full report; non-finite means serialise as `null`.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregates_skip_failures() {
        let r = ReportRow::new("a", "v", "HR", 5, vec![Some(0.2), None, Some(0.4)]);
        assert!((r.mean - 0.3).abs() < 1e-15);
        assert!((r.std - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.failed(), 1);
        let all_failed = ReportRow::new("a", "v", "HR", 5, vec![None]);
        assert!(all_failed.mean.is_nan());
    }

    #[test]
    fn csv_layout() {
        let report = EvalReport {
            fingerprint: "x".into(),
            seeds: vec![1],
            rows: vec![ReportRow::new("clean", "wrmf", "HR", 20, vec![Some(0.125)])],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        report.write_csv(&p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "attacker,victim,metric,K,mean,std\nclean,wrmf,HR,20,0.125000,0.000000\n"
        );
        let j = dir.path().join("r.json");
        report.write_json(&j).unwrap();
        let back: EvalReport = serde_json::from_reader(File::open(j).unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
