use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::trace::InstrumentFormat;

/// Observation window used for brand/model identification with the SDR.
pub const BRAND_WINDOW_MS: f64 = 1080.0;
/// Observation window used for per-unit identification with the analyzer.
pub const UNIT_WINDOW_MS: f64 = 3350.0;
pub const DEFAULT_TIME_SPLITS: usize = 4;
pub const DEFAULT_FREQUENCY_SPLITS: usize = 15;

/// Three-level partition: the whole window, `time_splits` time regions, and
/// `time_splits * frequency_splits` time-frequency cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLayout {
    pub window_ms: f64,
    pub start_hz: f64,
    pub stop_hz: f64,
    pub time_splits: usize,
    pub frequency_splits: usize,
}

impl RegionLayout {
    pub fn new(
        window_ms: f64,
        start_hz: f64,
        stop_hz: f64,
        time_splits: usize,
        frequency_splits: usize,
    ) -> Result<Self, FeatureError> {
        let layout = Self {
            window_ms,
            start_hz,
            stop_hz,
            time_splits,
            frequency_splits,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// 4 x 15 split of `window_ms` over the instrument band (325 features).
    pub fn standard(window_ms: f64, instrument: &InstrumentFormat) -> Self {
        Self {
            window_ms,
            start_hz: instrument.start_hz,
            stop_hz: instrument.stop_hz,
            time_splits: DEFAULT_TIME_SPLITS,
            frequency_splits: DEFAULT_FREQUENCY_SPLITS,
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.time_splits == 0 || self.frequency_splits == 0 {
            return Err(FeatureError::InvalidLayout(
                "time and frequency splits must be >= 1".into(),
            ));
        }
        if !(self.window_ms > 0.0 && self.window_ms.is_finite()) {
            return Err(FeatureError::InvalidLayout(format!(
                "window must be positive and finite, got {} ms",
                self.window_ms
            )));
        }
        if !(self.start_hz.is_finite() && self.stop_hz.is_finite() && self.start_hz < self.stop_hz) {
            return Err(FeatureError::InvalidLayout(format!(
                "band [{}, {}] Hz is empty",
                self.start_hz, self.stop_hz
            )));
        }
        Ok(())
    }

    pub fn region_count(&self) -> usize {
        1 + self.time_splits + self.time_splits * self.frequency_splits
    }

    pub fn feature_count(&self) -> usize {
        5 * self.region_count()
    }

    pub fn band_matches(&self, format: &InstrumentFormat) -> bool {
        self.start_hz == format.start_hz && self.stop_hz == format.stop_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionLevel {
    Whole,
    Time(usize),
    Cell(usize, usize),
}

/// Half-open rectangle `[t_start, t_end) x [f_start, f_end)`; the last
/// frequency cell also contains `f_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub level: RegionLevel,
    pub t_start: f64,
    pub t_end: f64,
    pub f_start: f64,
    pub f_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrid {
    pub layout: RegionLayout,
    time_edges: Vec<f64>,
    freq_edges: Vec<f64>,
    regions: Vec<Region>,
}

fn edges(start: f64, stop: f64, parts: usize) -> Vec<f64> {
    let width = stop - start;
    let mut e: Vec<f64> = (0..=parts)
        .map(|i| start + width * i as f64 / parts as f64)
        .collect();
    e[parts] = stop;
    e
}

/// Index of the interval containing `x`, using the edges themselves so that
/// assignment agrees with the published region bounds.
fn locate(edges: &[f64], x: f64, close_last: bool) -> Option<usize> {
    let parts = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[parts]);
    if x < lo || x > hi || (x == hi && !close_last) {
        return None;
    }
    if x == hi {
        return Some(parts - 1);
    }
    let guess = (((x - lo) / (hi - lo)) * parts as f64) as usize;
    let mut i = guess.min(parts - 1);
    while i > 0 && x < edges[i] {
        i -= 1;
    }
    while i + 1 < parts && x >= edges[i + 1] {
        i += 1;
    }
    Some(i)
}

impl RegionGrid {
    pub fn time_edges(&self) -> &[f64] {
        &self.time_edges
    }

    pub fn freq_edges(&self) -> &[f64] {
        &self.freq_edges
    }

    /// Regions in feature order: whole window, time regions, then cells
    /// row-major by time region.
    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn time_index(&self, timestamp_ms: f64) -> Option<usize> {
        locate(&self.time_edges, timestamp_ms, false)
    }

    pub fn freq_index(&self, frequency_hz: f64) -> Option<usize> {
        locate(&self.freq_edges, frequency_hz, true)
    }

    /// Position of cell `(r, c)` in [`Self::regions`].
    pub fn cell_position(&self, time_region: usize, freq_cell: usize) -> usize {
        1 + self.layout.time_splits + time_region * self.layout.frequency_splits + freq_cell
    }
}

pub fn build_region_grid(layout: &RegionLayout) -> Result<RegionGrid, FeatureError> {
    layout.validate()?;
    let time_edges = edges(0.0, layout.window_ms, layout.time_splits);
    let freq_edges = edges(layout.start_hz, layout.stop_hz, layout.frequency_splits);
    let (t0, t1) = (0.0, layout.window_ms);
    let (f0, f1) = (layout.start_hz, layout.stop_hz);

    let mut regions = Vec::with_capacity(layout.region_count());
    regions.push(Region {
        level: RegionLevel::Whole,
        t_start: t0,
        t_end: t1,
        f_start: f0,
        f_end: f1,
    });
    for r in 0..layout.time_splits {
        regions.push(Region {
            level: RegionLevel::Time(r),
            t_start: time_edges[r],
            t_end: time_edges[r + 1],
            f_start: f0,
            f_end: f1,
        });
    }
    for r in 0..layout.time_splits {
        for c in 0..layout.frequency_splits {
            regions.push(Region {
                level: RegionLevel::Cell(r, c),
                t_start: time_edges[r],
                t_end: time_edges[r + 1],
                f_start: freq_edges[c],
                f_end: freq_edges[c + 1],
            });
        }
    }
    Ok(RegionGrid {
        layout: layout.clone(),
        time_edges,
        freq_edges,
        regions,
    })
}
