//! Headerless CSV matrices and the on-disk dataset layout.
//!
//! A dataset directory holds `group_<k>.counts.csv` for `k = 1, 2, ...` and
//! optionally `group_<k>.covariates.csv` and `group_<k>.offsets.csv`.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::metrics::{edge_set, EdgeSet, EDGE_THRESHOLD};
use crate::model::{CountDataset, GroupData};
use crate::scalar::Scalar;

pub fn counts_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("group_{k}.counts.csv"))
}

pub fn covariates_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("group_{k}.covariates.csv"))
}

pub fn offsets_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("group_{k}.offsets.csv"))
}

fn csv_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_records(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e.to_string()))?;
        rows.push(rec.iter().map(str::to_owned).collect::<Vec<_>>());
    }
    if let Some(first) = rows.first() {
        let width = first.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(csv_err(path, format!("row {} has {} fields, expected {width}", bad + 1, rows[bad].len())));
        }
    }
    Ok(rows)
}

fn to_array<T: Clone>(rows: Vec<Vec<T>>, path: &Path) -> Result<Array2<T>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Array2::from_shape_vec((nrows, ncols), rows.into_iter().flatten().collect())
        .map_err(|e| csv_err(path, e.to_string()))
}

/// Real-valued matrix.
pub fn read_matrix<F: Scalar>(path: &Path) -> Result<Array2<F>> {
    let rows = read_records(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .enumerate()
                .map(|(j, s)| {
                    s.parse::<f64>()
                        .map(F::lit)
                        .map_err(|_| csv_err(path, format!("row {}, column {}: {s:?} is not a number", i + 1, j + 1)))
                })
                .collect::<Result<Vec<F>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    to_array(rows, path)
}

/// Count matrix; negative, fractional or non-numeric entries are rejected.
/// `group` is only used in error messages.
pub fn read_counts(path: &Path, group: usize) -> Result<Array2<u64>> {
    let rows = read_records(path)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .enumerate()
                .map(|(j, s)| {
                    let bad = || Error::InvalidCount {
                        group,
                        row: i + 1,
                        col: j + 1,
                        value: s.clone(),
                    };
                    if let Ok(v) = s.parse::<u64>() {
                        return Ok(v);
                    }
                    match s.parse::<f64>() {
                        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 => Ok(v as u64),
                        _ => Err(bad()),
                    }
                })
                .collect::<Result<Vec<u64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    to_array(rows, path)
}

/// Writes `{}`-formatted entries, which round-trip exactly.
pub fn write_matrix<T: Display>(path: &Path, m: ArrayView2<'_, T>) -> Result<()> {
    let mut out = String::new();
    for row in m.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Number of consecutive `<prefix><k><suffix>` files starting at `k = 1`.
pub fn count_group_files(dir: &Path, prefix: &str, suffix: &str) -> usize {
    (1..)
        .take_while(|k| dir.join(format!("{prefix}{k}{suffix}")).is_file())
        .count()
}

pub fn load_dataset<F: Scalar>(dir: &Path) -> Result<CountDataset<F>> {
    let k = count_group_files(dir, "group_", ".counts.csv");
    if k == 0 {
        return Err(Error::Io {
            path: counts_path(dir, 1),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no group_<k>.counts.csv files"),
        });
    }
    let mut groups = Vec::with_capacity(k);
    for g in 1..=k {
        let counts = read_counts(&counts_path(dir, g), g)?;
        let (n, p) = counts.dim();
        let cov = covariates_path(dir, g);
        let covariates = if cov.is_file() {
            read_matrix(&cov)?
        } else {
            Array2::from_elem((n, 1), F::one())
        };
        let off = offsets_path(dir, g);
        let offsets = if off.is_file() {
            read_matrix(&off)?
        } else {
            Array2::zeros((n, p))
        };
        groups.push(GroupData::new(counts, covariates, offsets).map_err(|e| match e {
            Error::Shape(msg) => Error::Shape(format!("group {g}: {msg}")),
            other => other,
        })?);
    }
    CountDataset::new(groups)
}

pub fn save_dataset<F: Scalar>(dir: &Path, dataset: &CountDataset<F>) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (idx, g) in dataset.groups().iter().enumerate() {
        let k = idx + 1;
        write_matrix(&counts_path(dir, k), g.counts.view())?;
        write_matrix(&covariates_path(dir, k), g.covariates.view())?;
        write_matrix(&offsets_path(dir, k), g.offsets.view())?;
    }
    Ok(())
}

/// Tab-separated `i  j  omega_ij`, 1-based, upper triangle, one edge per line.
pub fn write_edges<F: Scalar>(path: &Path, omega: ArrayView2<'_, F>) -> Result<()> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = String::new();
    for (i, j) in edge_set(omega, F::lit(EDGE_THRESHOLD)) {
        out.push_str(&format!("{}\t{}\t{}\n", i + 1, j + 1, omega[[i, j]]));
    }
    file.write_all(out.as_bytes()).map_err(io_err(path))
}

/// Reads an edge file back as 0-based upper-triangle pairs.
pub fn read_edges(path: &Path) -> Result<EdgeSet> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut edges = EdgeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let mut index = || -> Result<usize> {
            fields
                .next()
                .and_then(|s| s.trim().parse::<usize>().ok())
                .filter(|&v| v >= 1)
                .ok_or_else(|| csv_err(path, format!("line {}: expected 1-based node indices", lineno + 1)))
        };
        let (a, b) = (index()? - 1, index()? - 1);
        if a == b {
            return Err(csv_err(path, format!("line {}: self loop", lineno + 1)));
        }
        edges.insert((a.min(b), a.max(b)));
    }
    Ok(edges)
}
