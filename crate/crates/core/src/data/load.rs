//! Delimited interaction files.
//!
//! Accepted rows are `user,item[,rating[,timestamp]]`. Comma, tab and the
//! MovieLens `::` separator are recognised from the first line. A first row in
//! which no field parses as a number is treated as a header.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::InteractionMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// Every row is a positive interaction; any rating column is ignored.
    TripletCsv,
    /// Rows must carry a rating; binarization happens separately.
    RatingCsv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRating {
    pub user: String,
    pub item: String,
    pub rating: Option<f64>,
}

fn detect_delimiter(line: &str) -> &'static str {
    if line.contains("::") {
        "::"
    } else if line.contains('\t') {
        "\t"
    } else {
        ","
    }
}

/// Parses every data row of a delimited file.
pub fn read_ratings(path: &Path) -> Result<Vec<RawRating>> {
    Ok(read_records(path)?.into_iter().map(|(_, r)| r).collect())
}

fn read_records(path: &Path) -> Result<Vec<(usize, RawRating)>> {
    let text = fs::read_to_string(path)?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    let mut delimiter = None;
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let delim = *delimiter.get_or_insert_with(|| detect_delimiter(line));
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        if first {
            first = false;
            if fields.iter().all(|f| f.parse::<f64>().is_err()) {
                continue;
            }
        }
        if !(2..=4).contains(&fields.len()) {
            return Err(parse_err(
                i + 1,
                format!("expected 2 to 4 fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_err(i + 1, "empty user or item id".into()));
        }
        let rating = match fields.get(2) {
            Some(r) => Some(
                r.parse::<f64>()
                    .map_err(|_| parse_err(i + 1, format!("rating `{r}` is not a number")))?,
            ),
            None => None,
        };
        if let Some(ts) = fields.get(3) {
            ts.parse::<f64>()
                .map_err(|_| parse_err(i + 1, format!("timestamp `{ts}` is not a number")))?;
        }
        out.push((
            i + 1,
            RawRating {
                user: fields[0].to_string(),
                item: fields[1].to_string(),
                rating,
            },
        ));
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Loads a file into a dense, 0-based matrix. Indices are assigned in order of
/// first appearance; duplicate pairs collapse to one interaction.
pub fn load_interactions(path: &Path, format: InputFormat) -> Result<InteractionMatrix> {
    let records = read_records(path)?;
    if format == InputFormat::RatingCsv {
        if let Some((line, _)) = records.iter().find(|(_, r)| r.rating.is_none()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                msg: "rating-csv row has no rating column".into(),
            });
        }
    }
    Ok(build(records.iter().map(|(_, r)| (r.user.as_str(), r.item.as_str()))))
}

/// Loads a file using existing id maps, so persisted splits reload with the
/// indices they were written with. Unknown ids are an error; a file holding
/// only a header yields an empty matrix.
pub fn load_with_vocabulary(
    path: &Path,
    user_ids: &[String],
    item_ids: &[String],
) -> Result<InteractionMatrix> {
    let users: HashMap<&str, usize> = user_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let items: HashMap<&str, usize> = item_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut rows = vec![Vec::new(); user_ids.len()];
    let records = match read_records(path) {
        Err(Error::EmptyDataset) => Vec::new(),
        other => other?,
    };
    for (line, r) in &records {
        let unknown = |what: &str, id: &str| Error::Parse {
            path: path.to_path_buf(),
            line: *line,
            msg: format!("unknown {what} id `{id}`"),
        };
        let u = *users.get(r.user.as_str()).ok_or_else(|| unknown("user", &r.user))?;
        let v = *items.get(r.item.as_str()).ok_or_else(|| unknown("item", &r.item))?;
        rows[u].push(v);
    }
    InteractionMatrix::with_ids(user_ids.to_vec(), item_ids.to_vec(), rows)
}

fn build<'a>(pairs: impl Iterator<Item = (&'a str, &'a str)>) -> InteractionMatrix {
    let mut users: HashMap<&str, usize> = HashMap::new();
    let mut items: HashMap<&str, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::new();
    for (user, item) in pairs {
        let u = *users.entry(user).or_insert_with(|| {
            user_ids.push(user.to_string());
            rows.push(Vec::new());
            user_ids.len() - 1
        });
        let v = *items.entry(item).or_insert_with(|| {
            item_ids.push(item.to_string());
            item_ids.len() - 1
        });
        rows[u].push(v);
    }
    InteractionMatrix::with_ids(user_ids, item_ids, rows).expect("indices are in range by construction")
}

/// Keeps pairs rated at or above `threshold`. Users and items left without any
/// interaction disappear and the id maps are rebuilt.
pub fn binarize_explicit(ratings: &[RawRating], threshold: f64) -> InteractionMatrix {
    let observed = ratings.iter().filter_map(|r| r.rating);
    let (lo, hi) = observed.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo <= hi && (threshold < lo || threshold > hi) {
        warn!("binarization threshold {threshold} outside observed rating range [{lo}, {hi}]");
    }
    build(
        ratings
            .iter()
            .filter(|r| r.rating.is_none_or(|x| x >= threshold))
            .map(|r| (r.user.as_str(), r.item.as_str())),
    )
}

/// Iteratively drops items, then users, with fewer than `k` interactions until
/// every survivor has at least `k`.
pub fn kcore_filter(m: &InteractionMatrix, k: usize) -> InteractionMatrix {
    let mut rows: Vec<Vec<usize>> = m.rows().to_vec();
    let mut user_alive = vec![true; m.num_users()];
    let mut item_alive = vec![true; m.num_items()];
    loop {
        let mut changed = false;
        let mut counts = vec![0usize; m.num_items()];
        for row in &rows {
            row.iter().for_each(|&v| counts[v] += 1);
        }
        for (v, alive) in item_alive.iter_mut().enumerate() {
            if *alive && counts[v] < k {
                *alive = false;
                changed = true;
            }
        }
        for (u, row) in rows.iter_mut().enumerate() {
            row.retain(|&v| item_alive[v]);
            if user_alive[u] && row.len() < k {
                user_alive[u] = false;
                row.clear();
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut item_map = vec![usize::MAX; m.num_items()];
    let mut item_ids = Vec::new();
    for v in (0..m.num_items()).filter(|&v| item_alive[v]) {
        item_map[v] = item_ids.len();
        item_ids.push(m.item_ids()[v].clone());
    }
    let mut user_ids = Vec::new();
    let mut new_rows = Vec::new();
    for (u, row) in rows.into_iter().enumerate().filter(|(u, _)| user_alive[*u]) {
        user_ids.push(m.user_ids()[u].clone());
        new_rows.push(row.into_iter().map(|v| item_map[v]).collect());
    }
    InteractionMatrix::with_ids(user_ids, item_ids, new_rows).expect("remapped indices are in range")
}

/// Writes `user_id,item_id` rows ordered by user index then item index.
pub fn write_triplets(m: &InteractionMatrix, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "user_id,item_id")?;
    for (u, row) in m.rows().iter().enumerate() {
        for &v in row {
            writeln!(w, "{},{}", m.user_ids()[u], m.item_ids()[v])?;
        }
    }
    w.flush()?;
    Ok(())
}
