//! Min-max normalization, region partitioning and per-region statistics.

mod export;
mod regions;
mod stats;

pub use export::{
    band_code, feature_csv_header, heatmap, read_feature_csv, write_feature_csv, write_heatmap_csv,
    FeatureRow, Heatmap, COLOR_BAND_EDGES,
};
pub use regions::{
    build_region_grid, Region, RegionGrid, RegionLayout, RegionLevel, BRAND_WINDOW_MS,
    DEFAULT_FREQUENCY_SPLITS, DEFAULT_TIME_SPLITS, UNIT_WINDOW_MS,
};
pub use stats::{compute_statistics, FiveStats, STAT_NAMES};

use thiserror::Error;

use crate::scalar::Scalar;
use crate::trace::{InstrumentFormat, SpectralTrace};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid region layout: {0}")]
    InvalidLayout(String),
    #[error("trace band [{trace_start}, {trace_stop}] Hz does not match layout band [{layout_start}, {layout_stop}] Hz")]
    LayoutBandMismatch {
        trace_start: f64,
        trace_stop: f64,
        layout_start: f64,
        layout_stop: f64,
    },
    #[error("sample at {timestamp_ms} ms, {frequency_hz} Hz lies outside the layout window")]
    SampleOutsideWindow { timestamp_ms: f64, frequency_hz: f64 },
    #[error("feature table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedSample<T> {
    pub timestamp_ms: f64,
    pub frequency_hz: f64,
    pub power: T,
}

/// A trace whose powers have been min-max scaled into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTrace<T> {
    pub samples: Vec<NormalizedSample<T>>,
    pub format: InstrumentFormat,
    pub label: Option<String>,
    pub source_id: String,
}

/// Scales powers by the observation's own extrema: `(x - min) / (max - min)`.
/// A constant observation maps to all zeros.
pub fn normalize<T: Scalar>(trace: &SpectralTrace) -> NormalizedTrace<T> {
    let powers: Vec<T> = trace.samples().iter().map(|s| T::of(s.power_dbm)).collect();
    let (lo, hi) = powers
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    let range = hi - lo;
    let samples = trace
        .samples()
        .iter()
        .zip(powers)
        .map(|(s, p)| NormalizedSample {
            timestamp_ms: s.timestamp_ms,
            frequency_hz: s.frequency_hz,
            power: if range > T::zero() { (p - lo) / range } else { T::zero() },
        })
        .collect();
    NormalizedTrace {
        samples,
        format: trace.format.clone(),
        label: trace.label.clone(),
        source_id: trace.source_id.clone(),
    }
}

/// Per-region statistics concatenated in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
    pub layout: RegionLayout,
    pub trace_source: String,
    pub label: Option<String>,
    /// Grid positions of regions that held no samples (their stats are 0).
    pub empty_regions: Vec<usize>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_row(&self) -> FeatureRow {
        FeatureRow {
            source_id: self.trace_source.clone(),
            label: self.label.clone().unwrap_or_default(),
            values: self.values.iter().map(|v| v.as_f64()).collect(),
        }
    }
}

/// Human-readable name of feature `index` under `layout`, e.g. `t2_f7_kurtosis`.
pub fn feature_name(layout: &RegionLayout, index: usize) -> String {
    let region = index / 5;
    let stat = STAT_NAMES[index % 5];
    let t = layout.time_splits;
    if region == 0 {
        format!("all_{stat}")
    } else if region <= t {
        format!("t{}_{stat}", region)
    } else {
        let cell = region - 1 - t;
        format!(
            "t{}_f{}_{stat}",
            cell / layout.frequency_splits + 1,
            cell % layout.frequency_splits + 1
        )
    }
}

/// Computes the feature vector of a windowed, normalized trace.
///
/// Every sample must lie in `[0, window_ms)` and inside the layout band,
/// which must equal the trace's instrument band.
pub fn extract_features<T: Scalar>(
    trace: &NormalizedTrace<T>,
    layout: &RegionLayout,
) -> Result<FeatureVector<T>, FeatureError> {
    if !layout.band_matches(&trace.format) {
        return Err(FeatureError::LayoutBandMismatch {
            trace_start: trace.format.start_hz,
            trace_stop: trace.format.stop_hz,
            layout_start: layout.start_hz,
            layout_stop: layout.stop_hz,
        });
    }
    let grid = build_region_grid(layout)?;
    let (nt, nf) = (layout.time_splits, layout.frequency_splits);

    let mut all = Vec::with_capacity(trace.samples.len());
    let mut by_time: Vec<Vec<T>> = vec![Vec::new(); nt];
    let mut by_cell: Vec<Vec<T>> = vec![Vec::new(); nt * nf];
    for s in &trace.samples {
        let (Some(r), Some(c)) = (grid.time_index(s.timestamp_ms), grid.freq_index(s.frequency_hz))
        else {
            return Err(FeatureError::SampleOutsideWindow {
                timestamp_ms: s.timestamp_ms,
                frequency_hz: s.frequency_hz,
            });
        };
        all.push(s.power);
        by_time[r].push(s.power);
        by_cell[r * nf + c].push(s.power);
    }

    let mut values = Vec::with_capacity(layout.feature_count());
    let mut empty_regions = Vec::new();
    let blocks = std::iter::once(&all).chain(by_time.iter()).chain(by_cell.iter());
    for (pos, block) in blocks.enumerate() {
        let stats = if block.is_empty() {
            empty_regions.push(pos);
            FiveStats::zero()
        } else {
            compute_statistics(block)
        };
        values.extend_from_slice(&stats.to_array());
    }
    debug_assert_eq!(values.len(), layout.feature_count());

    Ok(FeatureVector {
        values,
        layout: layout.clone(),
        trace_source: trace.source_id.clone(),
        label: trace.label.clone(),
        empty_regions,
    })
}
