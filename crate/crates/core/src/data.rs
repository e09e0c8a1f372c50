//! CSV ingestion and emission.
//!
//! Long formats with a header row: `series_id,x,y` for curves,
//! `series_id,k,y` for time series and `series_id,k,label` for label
//! matrices. Indices `k` and labels are 1-based in files. Series keep the
//! order of their first appearance.

use crate::error::{Error, Result};
use crate::models::{FunctionalDataset, TimeSeriesDataset};
use crate::partition::ClusterMatrix;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Rows of a three-column file after header validation: (line, id, a, b).
fn rows<R: Read>(reader: R, header: [&str; 3]) -> Result<Vec<(usize, String, String, String)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if got != header {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}, found {}", header.join(","), got.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        out.push((line, rec[0].to_owned(), rec[1].to_owned(), rec[2].to_owned()));
    }
    if out.is_empty() {
        return Err(Error::Empty("no data rows".into()));
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {what} from {s:?}"),
    })
}

fn real(s: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = parse(s, line, what)?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("{what} is not finite"),
        });
    }
    Ok(v)
}

/// Groups rows by series in first-appearance order.
fn group<T>(items: Vec<(String, T)>) -> (Vec<String>, Vec<Vec<T>>) {
    let mut ids = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<Vec<T>> = Vec::new();
    for (id, item) in items {
        let g = *index.entry(id.clone()).or_insert_with(|| {
            ids.push(id);
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(item);
    }
    (ids, groups)
}

pub fn read_functional_csv<R: Read>(reader: R) -> Result<(Vec<String>, FunctionalDataset)> {
    let mut items = Vec::new();
    for (line, id, x, y) in rows(reader, ["series_id", "x", "y"])? {
        items.push((id, (real(&x, line, "x")?, real(&y, line, "y")?)));
    }
    let (ids, groups) = group(items);
    let curves = groups.into_iter().map(|g| g.into_iter().unzip()).collect();
    Ok((ids, FunctionalDataset::new(curves)?))
}

pub fn load_functional_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, FunctionalDataset)> {
    read_functional_csv(open(path.as_ref())?)
}

pub fn write_functional_csv<W: Write>(writer: W, ids: &[String], data: &FunctionalDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["series_id", "x", "y"])?;
    for (i, id) in ids.iter().enumerate().take(data.num_curves()) {
        for (x, y) in data.x(i).iter().zip(data.y(i)) {
            w.write_record([id.as_str(), &x.to_string(), &y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Index-keyed cells per series, checked to cover 1..=K exactly once.
fn indexed<T: Copy>(groups: Vec<Vec<(usize, usize, T)>>, ids: &[String]) -> Result<Vec<Vec<T>>> {
    let kk = groups.iter().flatten().map(|c| c.1).max().unwrap_or(0);
    groups
        .into_iter()
        .zip(ids)
        .map(|(cells, id)| {
            let mut row: Vec<Option<T>> = vec![None; kk];
            for (line, k, v) in cells {
                if k == 0 {
                    return Err(Error::Parse {
                        line,
                        msg: "index k is 1-based".into(),
                    });
                }
                if row[k - 1].replace(v).is_some() {
                    return Err(Error::Validation(format!("series {id}: duplicate index {k} (line {line})")));
                }
            }
            row.into_iter()
                .enumerate()
                .map(|(k, v)| v.ok_or_else(|| Error::Validation(format!("series {id}: index {} missing", k + 1))))
                .collect()
        })
        .collect()
}

pub fn read_timeseries_csv<R: Read>(reader: R) -> Result<(Vec<String>, TimeSeriesDataset)> {
    let mut items = Vec::new();
    for (line, id, k, y) in rows(reader, ["series_id", "k", "y"])? {
        items.push((id, (line, parse::<usize>(&k, line, "k")?, real(&y, line, "y")?)));
    }
    let (ids, groups) = group(items);
    let rows = indexed(groups, &ids)?;
    Ok((ids, TimeSeriesDataset::new(rows)?))
}

pub fn load_timeseries_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, TimeSeriesDataset)> {
    read_timeseries_csv(open(path.as_ref())?)
}

pub fn write_timeseries_csv<W: Write>(writer: W, ids: &[String], data: &TimeSeriesDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["series_id", "k", "y"])?;
    for (id, row) in ids.iter().zip(data.rows()) {
        for (k, y) in row.iter().enumerate() {
            w.write_record([id.as_str(), &(k + 1).to_string(), &y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Label matrix; labels are 1-based and canonicalized per column.
pub fn read_labels_csv<R: Read>(reader: R) -> Result<(Vec<String>, ClusterMatrix)> {
    let mut items = Vec::new();
    for (line, id, k, label) in rows(reader, ["series_id", "k", "label"])? {
        let l: usize = parse(&label, line, "label")?;
        if l == 0 {
            return Err(Error::Parse {
                line,
                msg: "labels are 1-based".into(),
            });
        }
        items.push((id, (line, parse::<usize>(&k, line, "k")?, l - 1)));
    }
    let (ids, groups) = group(items);
    let rows = indexed(groups, &ids)?;
    Ok((ids, ClusterMatrix::from_rows(&rows)?))
}

pub fn load_labels_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, ClusterMatrix)> {
    read_labels_csv(open(path.as_ref())?)
}

pub fn write_labels_csv<W: Write>(writer: W, ids: &[String], clusters: &ClusterMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["series_id", "k", "label"])?;
    for (i, id) in ids.iter().enumerate().take(clusters.num_units()) {
        for k in 0..clusters.num_indices() {
            w.write_record([id.as_str(), &(k + 1).to_string(), &(clusters.label(i, k) + 1).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows of `clusters` reordered to follow `ids`; every id must be present.
pub fn align_rows(clusters: &ClusterMatrix, from: &[String], ids: &[String]) -> Result<ClusterMatrix> {
    let pos: HashMap<&str, usize> = from.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let rows = clusters.to_rows();
    let reordered = ids
        .iter()
        .map(|id| {
            pos.get(id.as_str())
                .map(|&i| rows[i].clone())
                .ok_or_else(|| Error::Validation(format!("series {id} has no labels")))
        })
        .collect::<Result<Vec<_>>>()?;
    ClusterMatrix::from_rows(&reordered)
}

/// x ← x − shift for each listed series; others are left alone.
pub fn register_shift(data: &FunctionalDataset, ids: &[String], shifts: &HashMap<String, f64>) -> Result<FunctionalDataset> {
    if let Some(unknown) = shifts.keys().find(|k| !ids.contains(k)) {
        return Err(Error::Validation(format!("shift given for unknown series {unknown}")));
    }
    let per: Vec<f64> = ids.iter().map(|id| shifts.get(id).copied().unwrap_or(0.0)).collect();
    data.shifted(&per)
}

/// ⌈max_i M_i / 3⌉ basis functions, at least `degree + 1`.
pub fn default_knot_count(data: &FunctionalDataset, degree: usize) -> usize {
    data.max_points().div_ceil(3).max(degree + 1)
}
