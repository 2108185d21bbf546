use std::fmt::Write as _;
use std::io::BufRead;

use super::{feature_name, FeatureError, NormalizedTrace, RegionLayout};
use crate::scalar::Scalar;

/// A labeled feature vector as stored in a feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub source_id: String,
    pub label: String,
    pub values: Vec<f64>,
}

pub fn feature_csv_header(layout: &RegionLayout) -> String {
    let mut h = String::from("source_id,label");
    for i in 0..layout.feature_count() {
        h.push(',');
        h.push_str(&feature_name(layout, i));
    }
    h
}

/// One row per vector: `source_id,label,v0,...,vN`. Values are written in
/// shortest round-trip form.
pub fn write_feature_csv(layout: &RegionLayout, rows: &[FeatureRow]) -> String {
    let mut out = feature_csv_header(layout);
    out.push('\n');
    for row in rows {
        out.push_str(&row.source_id);
        out.push(',');
        out.push_str(&row.label);
        for v in &row.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Reads a table written by [`write_feature_csv`]; returns the column names
/// and the rows.
pub fn read_feature_csv<R: BufRead>(input: R) -> Result<(Vec<String>, Vec<FeatureRow>), FeatureError> {
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        Some((_, Err(e))) => return Err(FeatureError::Table(e.to_string())),
        None => return Err(FeatureError::Table("empty feature table".into())),
    };
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.len() < 3 || cols[0] != "source_id" || cols[1] != "label" {
        return Err(FeatureError::Table(
            "header must start with source_id,label and name at least one feature".into(),
        ));
    }
    let names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| FeatureError::Table(e.to_string()))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(FeatureError::Table(format!(
                "line {}: expected {} columns, found {}",
                idx + 1,
                cols.len(),
                fields.len()
            )));
        }
        let values = fields[2..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| FeatureError::Table(format!("line {}: bad value {f:?}", idx + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(FeatureRow {
            source_id: fields[0].to_string(),
            label: fields[1].to_string(),
            values,
        });
    }
    Ok((names, rows))
}

/// Lower edges of the four display bands over normalized power.
pub const COLOR_BAND_EDGES: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

/// Maps normalized power to band 0..=3: `[0,.25)`, `[.25,.5)`, `[.5,.75)`, `[.75,1]`.
pub fn band_code<T: Scalar>(power: T) -> u8 {
    let p = power.as_f64();
    COLOR_BAND_EDGES.iter().rposition(|&e| p >= e).unwrap_or(0) as u8
}

/// Time x frequency grid of band codes, one row per sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub timestamps_ms: Vec<f64>,
    pub frequencies_hz: Vec<f64>,
    pub cells: Vec<Vec<Option<u8>>>,
}

pub fn heatmap<T: Scalar>(trace: &NormalizedTrace<T>) -> Heatmap {
    let mut freqs: Vec<f64> = trace.samples.iter().map(|s| s.frequency_hz).collect();
    freqs.sort_by(f64::total_cmp);
    freqs.dedup();

    let mut timestamps_ms = Vec::new();
    let mut cells: Vec<Vec<Option<u8>>> = Vec::new();
    for slot in trace.samples.chunk_by(|a, b| a.timestamp_ms == b.timestamp_ms) {
        let mut row = vec![None; freqs.len()];
        for s in slot {
            let col = freqs
                .binary_search_by(|f| f.total_cmp(&s.frequency_hz))
                .expect("frequency collected above");
            row[col] = Some(band_code(s.power));
        }
        timestamps_ms.push(slot[0].timestamp_ms);
        cells.push(row);
    }
    Heatmap {
        timestamps_ms,
        frequencies_hz: freqs,
        cells,
    }
}

/// CSV with a `timestamp_ms` column followed by one column per frequency;
/// missing samples are left blank.
pub fn write_heatmap_csv(map: &Heatmap) -> String {
    let mut out = String::from("timestamp_ms");
    for f in &map.frequencies_hz {
        let _ = write!(out, ",{f}");
    }
    out.push('\n');
    for (t, row) in map.timestamps_ms.iter().zip(&map.cells) {
        let _ = write!(out, "{t}");
        for c in row {
            out.push(',');
            if let Some(code) = c {
                let _ = write!(out, "{code}");
            }
        }
        out.push('\n');
    }
    out
}
