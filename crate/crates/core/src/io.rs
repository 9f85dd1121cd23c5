//! CSV formats: point patterns, feature blocks, annotations, top-k lists,
//! posterior traces and moment reports.
//!
//! Point-pattern files have columns `sample_id, x1, .., xD` with one row per
//! point. A sample without points is written as one row whose coordinate
//! fields are empty, so that empty sets survive a round trip.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{DppError, Result};
use crate::kernels::{FeatureKernel, GroundSet, PointConfig};
use crate::moments::MomentReport;

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| DppError::Parse(format!("line {line}: {what} `{field}` is not a number")))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Point patterns keyed by sample id, in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPatterns {
    pub ids: Vec<String>,
    pub samples: Vec<PointConfig>,
    pub dim: usize,
}

pub fn read_point_patterns<R: Read>(reader: R) -> Result<PointPatterns> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("sample_id") || header.len() < 2 {
        return Err(DppError::Parse(
            "point-pattern CSV needs columns sample_id, x1, .., xD".into(),
        ));
    }
    let dim = header.len() - 1;
    let mut ids: Vec<String> = Vec::new();
    let mut points: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let id = rec[0].to_string();
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            ids.push(id);
            points.push(Vec::new());
            points.len() - 1
        });
        let coords: Vec<&str> = rec.iter().skip(1).collect();
        if coords.iter().all(|c| c.is_empty()) {
            continue;
        }
        let p = coords
            .iter()
            .map(|c| parse_f64(c, "coordinate", line))
            .collect::<Result<Vec<f64>>>()?;
        points[slot].push(p);
    }
    let samples = points
        .into_iter()
        .map(|p| PointConfig::new(p, dim))
        .collect::<Result<_>>()?;
    Ok(PointPatterns { ids, samples, dim })
}

pub fn write_point_patterns<W: Write>(writer: W, samples: &[PointConfig], dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["sample_id".to_string()];
    header.extend((1..=dim).map(|d| format!("x{d}")));
    w.write_record(&header)?;
    for (t, s) in samples.iter().enumerate() {
        if s.dim() != dim {
            return Err(DppError::DimensionMismatch {
                expected: dim,
                got: s.dim(),
            });
        }
        if s.is_empty() {
            let mut row = vec![t.to_string()];
            row.extend(std::iter::repeat_n(String::new(), dim));
            w.write_record(&row)?;
        }
        for p in s.points() {
            let mut row = vec![t.to_string()];
            row.extend(p.iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Map points to the indices of matching ground items (within `tol` in
/// every coordinate).
pub fn points_to_indices(samples: &[PointConfig], ground: &GroundSet, tol: f64) -> Result<Vec<Vec<usize>>> {
    samples
        .iter()
        .enumerate()
        .map(|(t, s)| {
            s.points()
                .iter()
                .map(|p| {
                    ground
                        .find(p, tol)
                        .ok_or_else(|| DppError::InvalidArgument(format!("sample {t}: point {p:?} is not a ground item")))
                })
                .collect()
        })
        .collect()
}

/// Feature vectors of one subcategory: item ids and one matrix per block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Subcategory {
    pub items: Vec<String>,
    /// `blocks[name][i]` is the feature vector of `items[i]`.
    pub blocks: BTreeMap<String, Vec<Vec<f64>>>,
}

impl Subcategory {
    pub fn index_of(&self, item: &str) -> Option<usize> {
        self.items.iter().position(|i| i == item)
    }

    /// Feature kernel family over this subcategory; blocks are in
    /// `block_names` order and optionally L2-normalized per item.
    pub fn feature_kernel(&self, block_names: &[String], normalize: bool) -> Result<FeatureKernel> {
        let blocks = block_names
            .iter()
            .map(|b| {
                let rows = self
                    .blocks
                    .get(b)
                    .ok_or_else(|| DppError::InvalidArgument(format!("feature block `{b}` missing")))?;
                let g = GroundSet::new(rows.clone())?;
                Ok(if normalize { g.l2_normalized() } else { g })
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureKernel::new(blocks, block_names.to_vec())
    }
}

/// All subcategories of a feature file, with the block names in order of
/// first appearance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub block_names: Vec<String>,
    pub subcategories: BTreeMap<String, Subcategory>,
}

/// Feature CSV: `item_id, subcategory, feature_block, v1, .., vK`. Every
/// item must have every block, and a block has the same length throughout.
pub fn read_features<R: Read>(reader: R) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().take(3).collect::<Vec<_>>() != ["item_id", "subcategory", "feature_block"] {
        return Err(DppError::Parse(
            "feature CSV needs columns item_id, subcategory, feature_block, v1, ..".into(),
        ));
    }
    let mut table = FeatureTable::default();
    let mut raw: BTreeMap<String, BTreeMap<String, BTreeMap<String, Vec<f64>>>> = BTreeMap::new();
    let mut order: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut lengths: BTreeMap<String, usize> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() < 4 {
            return Err(DppError::Parse(format!("line {line}: feature row has no values")));
        }
        let (item, sub, block) = (rec[0].to_string(), rec[1].to_string(), rec[2].to_string());
        let values = rec
            .iter()
            .skip(3)
            .filter(|v| !v.is_empty())
            .map(|v| parse_f64(v, "feature value", line))
            .collect::<Result<Vec<f64>>>()?;
        let len = *lengths.entry(block.clone()).or_insert(values.len());
        if len != values.len() {
            return Err(DppError::Parse(format!(
                "line {line}: block `{block}` has {} values, expected {len}",
                values.len()
            )));
        }
        if !table.block_names.contains(&block) {
            table.block_names.push(block.clone());
        }
        let items = order.entry(sub.clone()).or_default();
        if !items.contains(&item) {
            items.push(item.clone());
        }
        let prev = raw.entry(sub).or_default().entry(item.clone()).or_default().insert(block.clone(), values);
        if prev.is_some() {
            return Err(DppError::Parse(format!("line {line}: item `{item}` repeats block `{block}`")));
        }
    }
    for (sub, items) in order {
        let per_item = &raw[&sub];
        let mut s = Subcategory {
            items: items.clone(),
            blocks: BTreeMap::new(),
        };
        for b in &table.block_names {
            let rows = items
                .iter()
                .map(|i| {
                    per_item[i]
                        .get(b)
                        .cloned()
                        .ok_or_else(|| DppError::Parse(format!("item `{i}` in `{sub}` lacks block `{b}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            s.blocks.insert(b.clone(), rows);
        }
        table.subcategories.insert(sub, s);
    }
    Ok(table)
}

/// One human annotation: the items shown and the item added.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub subcategory: String,
    pub given: Vec<String>,
    pub added: String,
}

/// Annotation CSV: `subcategory, a1, .., a5, b`.
pub fn read_annotations<R: Read>(reader: R) -> Result<Vec<Annotation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("subcategory") || header.get(header.len() - 1) != Some("b") || header.len() < 3 {
        return Err(DppError::Parse("annotation CSV needs columns subcategory, a1, .., b".into()));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let n = rec.len();
            Ok(Annotation {
                subcategory: rec[0].to_string(),
                given: rec.iter().skip(1).take(n - 2).map(str::to_string).collect(),
                added: rec[n - 1].to_string(),
            })
        })
        .collect()
}

/// One ranked result list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopK {
    pub subcategory: String,
    pub items: Vec<String>,
}

/// Top-k CSV: `subcategory, i1, .., ik`.
pub fn read_top_k<R: Read>(reader: R) -> Result<Vec<TopK>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("subcategory") || header.len() < 2 {
        return Err(DppError::Parse("top-k CSV needs columns subcategory, i1, .., ik".into()));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(TopK {
                subcategory: rec[0].to_string(),
                items: rec.iter().skip(1).map(str::to_string).collect(),
            })
        })
        .collect()
}

/// Parameter draws read back from a chain CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub param_names: Vec<String>,
    pub samples: Vec<Vec<f64>>,
}

/// Read a trace written by [`Chain::write_csv`](crate::mcmc::Chain::write_csv):
/// columns between `iter` and `log_post` are parameters.
pub fn read_trace<R: Read>(reader: R) -> Result<Trace> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let end = header
        .iter()
        .position(|h| h == "log_post")
        .ok_or_else(|| DppError::Parse("trace CSV lacks a log_post column".into()))?;
    if header.get(0) != Some("iter") || end < 2 {
        return Err(DppError::Parse("trace CSV needs columns iter, <params>, log_post".into()));
    }
    let param_names: Vec<String> = header.iter().skip(1).take(end - 1).map(str::to_string).collect();
    let samples = rdr
        .records()
        .map(|rec| {
            let rec = rec?;
            let line = line_of(&rec);
            rec.iter()
                .skip(1)
                .take(end - 1)
                .map(|v| parse_f64(v, "parameter", line))
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(Trace { param_names, samples })
}

fn write_serialized<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_moment_reports<W: Write>(writer: W, reports: &[MomentReport]) -> Result<()> {
    write_serialized(writer, reports)
}
