//! Spectral-trace data model: `(timestamp, frequency, power)` records as
//! delivered by a sweeping receiver, plus boot-onset alignment and windowing.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default length of the quiet lead-in used to estimate the noise floor.
pub const DEFAULT_BASELINE_MS: f64 = 200.0;
/// Default excursion multiplier for boot-onset detection.
pub const DEFAULT_K_SIGMA: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: frequency {frequency_hz} Hz outside band [{start_hz}, {stop_hz}] Hz")]
    OutOfBandFrequency {
        line: usize,
        frequency_hz: f64,
        start_hz: f64,
        stop_hz: f64,
    },
    #[error("trace contains no records")]
    EmptyTrace,
    #[error("trace spans {duration_ms} ms, baseline needs more than {baseline_ms} ms")]
    TraceTooShort { duration_ms: f64, baseline_ms: f64 },
    #[error("no samples in window [{start_ms}, {start_ms} + {duration_ms}) ms")]
    EmptyWindow { start_ms: f64, duration_ms: f64 },
    #[error("invalid instrument format: {0}")]
    InvalidFormat(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// One power reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub timestamp_ms: f64,
    pub frequency_hz: f64,
    pub power_dbm: f64,
}

impl SpectralSample {
    pub fn new(timestamp_ms: f64, frequency_hz: f64, power_dbm: f64) -> Self {
        Self {
            timestamp_ms,
            frequency_hz,
            power_dbm,
        }
    }
}

/// Receiver configuration a trace was captured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentFormat {
    pub name: String,
    pub start_hz: f64,
    pub stop_hz: f64,
    pub rbw_hz: f64,
    pub sweep_points: Option<usize>,
    pub sweep_time_ms: Option<f64>,
}

impl InstrumentFormat {
    pub fn new(
        name: impl Into<String>,
        start_hz: f64,
        stop_hz: f64,
        rbw_hz: f64,
    ) -> Result<Self, TraceError> {
        let f = Self {
            name: name.into(),
            start_hz,
            stop_hz,
            rbw_hz,
            sweep_points: None,
            sweep_time_ms: None,
        };
        f.validate()?;
        Ok(f)
    }

    /// Software-defined radio capturing a 10 MHz span at ~1 kHz resolution.
    pub fn hackrf_one() -> Self {
        Self {
            name: "hackrf".into(),
            start_hz: 0.0,
            stop_hz: 10e6,
            rbw_hz: 976.6,
            sweep_points: None,
            sweep_time_ms: None,
        }
    }

    /// Bench spectrum analyzer covering 0-200 MHz in 4001-point sweeps.
    pub fn fsw8() -> Self {
        Self {
            name: "fsw8".into(),
            start_hz: 0.0,
            stop_hz: 200e6,
            rbw_hz: 3e6,
            sweep_points: Some(4001),
            sweep_time_ms: Some(4.01),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "hackrf" => Some(Self::hackrf_one()),
            "fsw8" => Some(Self::fsw8()),
            _ => None,
        }
    }

    pub fn with_sweep(mut self, points: usize, sweep_time_ms: f64) -> Self {
        self.sweep_points = Some(points);
        self.sweep_time_ms = Some(sweep_time_ms);
        self
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if !(self.start_hz.is_finite() && self.stop_hz.is_finite()) || self.start_hz >= self.stop_hz
        {
            return Err(TraceError::InvalidFormat(format!(
                "start {} Hz must be below stop {} Hz",
                self.start_hz, self.stop_hz
            )));
        }
        if !(self.rbw_hz > 0.0 && self.rbw_hz.is_finite()) {
            return Err(TraceError::InvalidFormat(format!(
                "resolution bandwidth must be positive, got {}",
                self.rbw_hz
            )));
        }
        if self.sweep_points == Some(0) {
            return Err(TraceError::InvalidFormat("sweep_points must be > 0".into()));
        }
        if let Some(t) = self.sweep_time_ms {
            if !(t > 0.0 && t.is_finite()) {
                return Err(TraceError::InvalidFormat(format!(
                    "sweep_time_ms must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, frequency_hz: f64) -> bool {
        frequency_hz >= self.start_hz && frequency_hz <= self.stop_hz
    }
}

/// A recording: samples sorted by `(timestamp, frequency)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTrace {
    samples: Vec<SpectralSample>,
    pub format: InstrumentFormat,
    pub label: Option<String>,
    pub source_id: String,
}

fn sample_order(a: &SpectralSample, b: &SpectralSample) -> std::cmp::Ordering {
    a.timestamp_ms
        .total_cmp(&b.timestamp_ms)
        .then(a.frequency_hz.total_cmp(&b.frequency_hz))
}

impl SpectralTrace {
    /// Builds a trace, sorting samples and checking every invariant.
    pub fn new(
        mut samples: Vec<SpectralSample>,
        format: InstrumentFormat,
        label: Option<String>,
        source_id: impl Into<String>,
    ) -> Result<Self, TraceError> {
        format.validate()?;
        if samples.is_empty() {
            return Err(TraceError::EmptyTrace);
        }
        for (i, s) in samples.iter().enumerate() {
            check_sample(s, &format, i + 1)?;
        }
        if !samples.windows(2).all(|w| sample_order(&w[0], &w[1]).is_le()) {
            samples.sort_by(sample_order);
        }
        Ok(Self {
            samples,
            format,
            label,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[SpectralSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_timestamp(&self) -> f64 {
        self.samples[0].timestamp_ms
    }

    pub fn last_timestamp(&self) -> f64 {
        self.samples[self.samples.len() - 1].timestamp_ms
    }

    pub fn duration_ms(&self) -> f64 {
        self.last_timestamp() - self.first_timestamp()
    }

    /// Applies `f` to every power value, keeping everything else.
    pub fn map_power(&self, f: impl Fn(f64) -> f64) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| SpectralSample::new(s.timestamp_ms, s.frequency_hz, f(s.power_dbm)))
            .collect();
        Self {
            samples,
            format: self.format.clone(),
            label: self.label.clone(),
            source_id: self.source_id.clone(),
        }
    }

    /// Groups consecutive samples sharing a timestamp (one sweep each).
    pub fn timeslots(&self) -> impl Iterator<Item = &[SpectralSample]> {
        self.samples.chunk_by(|a, b| a.timestamp_ms == b.timestamp_ms)
    }
}

fn check_sample(s: &SpectralSample, format: &InstrumentFormat, line: usize) -> Result<(), TraceError> {
    if !(s.timestamp_ms.is_finite() && s.frequency_hz.is_finite() && s.power_dbm.is_finite()) {
        return Err(TraceError::MalformedRecord {
            line,
            reason: "non-finite value".into(),
        });
    }
    if s.timestamp_ms < 0.0 {
        return Err(TraceError::MalformedRecord {
            line,
            reason: format!("negative timestamp {}", s.timestamp_ms),
        });
    }
    if !format.contains(s.frequency_hz) {
        return Err(TraceError::OutOfBandFrequency {
            line,
            frequency_hz: s.frequency_hz,
            start_hz: format.start_hz,
            stop_hz: format.stop_hz,
        });
    }
    Ok(())
}

/// Metadata carried by `# key=value` header lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceHeader {
    pub instrument: Option<String>,
    pub start_hz: Option<f64>,
    pub stop_hz: Option<f64>,
    pub rbw_hz: Option<f64>,
    pub sweep_points: Option<usize>,
    pub sweep_time_ms: Option<f64>,
    pub label: Option<String>,
}

impl TraceHeader {
    fn apply(&self, base: &InstrumentFormat) -> InstrumentFormat {
        let mut f = match self.instrument.as_deref().and_then(InstrumentFormat::by_name) {
            Some(preset) if preset.name != base.name => preset,
            _ => base.clone(),
        };
        if let Some(name) = &self.instrument {
            f.name = name.clone();
        }
        if let Some(v) = self.start_hz {
            f.start_hz = v;
        }
        if let Some(v) = self.stop_hz {
            f.stop_hz = v;
        }
        if let Some(v) = self.rbw_hz {
            f.rbw_hz = v;
        }
        if self.sweep_points.is_some() {
            f.sweep_points = self.sweep_points;
        }
        if self.sweep_time_ms.is_some() {
            f.sweep_time_ms = self.sweep_time_ms;
        }
        f
    }
}

fn parse_header_line(body: &str, header: &mut TraceHeader, line: usize) -> Result<(), TraceError> {
    let Some((key, value)) = body.split_once('=') else {
        // free-form comment
        return Ok(());
    };
    let (key, value) = (key.trim(), value.trim());
    let num = |v: &str| {
        v.parse::<f64>().map_err(|_| TraceError::MalformedRecord {
            line,
            reason: format!("header {key}: not a number: {v:?}"),
        })
    };
    match key {
        "instrument" => header.instrument = Some(value.to_string()),
        "start_hz" => header.start_hz = Some(num(value)?),
        "stop_hz" => header.stop_hz = Some(num(value)?),
        "rbw_hz" => header.rbw_hz = Some(num(value)?),
        "sweep_time_ms" => header.sweep_time_ms = Some(num(value)?),
        "sweep_points" => {
            header.sweep_points = Some(value.parse().map_err(|_| TraceError::MalformedRecord {
                line,
                reason: format!("header sweep_points: not a count: {value:?}"),
            })?)
        }
        "label" => header.label = Some(value.to_string()),
        _ => {}
    }
    Ok(())
}

fn parse_field(field: &str, what: &str, line: usize) -> Result<f64, TraceError> {
    let field = field.trim();
    let v: f64 = field.parse().map_err(|_| TraceError::MalformedRecord {
        line,
        reason: format!("{what}: not a number: {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(TraceError::MalformedRecord {
            line,
            reason: format!("{what}: non-finite value {field:?}"),
        });
    }
    Ok(v)
}

/// Parses the line-oriented `timestamp_ms,frequency_hz,power_dbm` format.
///
/// `# key=value` lines override fields of `format` (keys `instrument`,
/// `start_hz`, `stop_hz`, `rbw_hz`, `sweep_points`, `sweep_time_ms`, `label`).
/// Out-of-band frequencies reject the whole trace.
pub fn parse_trace<R: BufRead>(
    input: R,
    format: &InstrumentFormat,
    source_id: impl Into<String>,
) -> Result<SpectralTrace, TraceError> {
    let mut header = TraceHeader::default();
    let mut records: Vec<(usize, SpectralSample)> = Vec::new();

    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| TraceError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(body) = trimmed.strip_prefix('#') {
            parse_header_line(body, &mut header, lineno)?;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(TraceError::MalformedRecord {
                line: lineno,
                reason: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let sample = SpectralSample::new(
            parse_field(fields[0], "timestamp_ms", lineno)?,
            parse_field(fields[1], "frequency_hz", lineno)?,
            parse_field(fields[2], "power_dbm", lineno)?,
        );
        records.push((lineno, sample));
    }

    let format = header.apply(format);
    format.validate()?;
    if records.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    for (lineno, s) in &records {
        check_sample(s, &format, *lineno)?;
    }
    let samples = records.into_iter().map(|(_, s)| s).collect();
    SpectralTrace::new(samples, format, header.label, source_id)
}

/// Serializes a trace to the text format read by [`parse_trace`].
pub fn write_trace(trace: &SpectralTrace) -> String {
    let mut out = String::with_capacity(trace.len() * 24 + 128);
    let f = &trace.format;
    let _ = writeln!(out, "# instrument={}", f.name);
    let _ = writeln!(out, "# start_hz={}", f.start_hz);
    let _ = writeln!(out, "# stop_hz={}", f.stop_hz);
    let _ = writeln!(out, "# rbw_hz={}", f.rbw_hz);
    if let Some(p) = f.sweep_points {
        let _ = writeln!(out, "# sweep_points={p}");
    }
    if let Some(t) = f.sweep_time_ms {
        let _ = writeln!(out, "# sweep_time_ms={t}");
    }
    if let Some(label) = &trace.label {
        let _ = writeln!(out, "# label={label}");
    }
    for s in trace.samples() {
        let _ = writeln!(out, "{},{},{}", s.timestamp_ms, s.frequency_hz, s.power_dbm);
    }
    out
}

/// Finds the timestamp at which boot activity starts.
///
/// Each sweep (all samples sharing a timestamp) is reduced to its mean power.
/// Sweeps inside the first `baseline_ms` of the trace give the noise-floor
/// mean and standard deviation; the onset is the first sweep whose level
/// exceeds `mean + k_sigma * std`. An excursion inside the baseline, or none
/// at all, yields 0. With a perfectly flat baseline the onset is the first
/// sweep whose level differs from it.
pub fn detect_boot_onset(
    trace: &SpectralTrace,
    baseline_ms: f64,
    k_sigma: f64,
) -> Result<f64, TraceError> {
    if !(k_sigma > 0.0) {
        return Err(TraceError::InvalidArgument(format!(
            "k_sigma must be positive, got {k_sigma}"
        )));
    }
    if !(baseline_ms >= 0.0) {
        return Err(TraceError::InvalidArgument(format!(
            "baseline duration must be non-negative, got {baseline_ms}"
        )));
    }
    let duration = trace.duration_ms();
    if !(duration > baseline_ms) {
        return Err(TraceError::TraceTooShort {
            duration_ms: duration,
            baseline_ms,
        });
    }

    let slots: Vec<(f64, f64)> = trace
        .timeslots()
        .map(|slot| {
            let level = slot.iter().map(|s| s.power_dbm).sum::<f64>() / slot.len() as f64;
            (slot[0].timestamp_ms, level)
        })
        .collect();

    let baseline_end = trace.first_timestamp() + baseline_ms;
    let n_base = slots.iter().take_while(|(t, _)| *t < baseline_end).count().max(1);
    let base = &slots[..n_base];

    let first_level = base[0].1;
    if base.iter().all(|(_, l)| *l == first_level) {
        return Ok(slots
            .iter()
            .find(|(_, l)| *l != first_level)
            .map_or(0.0, |(t, _)| *t));
    }

    let n = base.len() as f64;
    let mean = base.iter().map(|(_, l)| l).sum::<f64>() / n;
    let var = base.iter().map(|(_, l)| (l - mean).powi(2)).sum::<f64>() / n;
    let threshold = mean + k_sigma * var.sqrt();

    match slots.iter().position(|(_, l)| *l > threshold) {
        Some(i) if i >= n_base => Ok(slots[i].0),
        _ => Ok(0.0),
    }
}

/// Keeps samples with `start <= t < start + duration`, re-based to 0.
pub fn window_trace(
    trace: &SpectralTrace,
    start_ms: f64,
    duration_ms: f64,
) -> Result<SpectralTrace, TraceError> {
    if !(duration_ms > 0.0) {
        return Err(TraceError::InvalidArgument(format!(
            "window duration must be positive, got {duration_ms}"
        )));
    }
    let samples: Vec<SpectralSample> = trace
        .samples()
        .iter()
        .filter_map(|s| {
            let rebased = s.timestamp_ms - start_ms;
            (s.timestamp_ms >= start_ms && rebased < duration_ms)
                .then(|| SpectralSample::new(rebased, s.frequency_hz, s.power_dbm))
        })
        .collect();
    if samples.is_empty() {
        return Err(TraceError::EmptyWindow {
            start_ms,
            duration_ms,
        });
    }
    Ok(SpectralTrace {
        samples,
        format: trace.format.clone(),
        label: trace.label.clone(),
        source_id: trace.source_id.clone(),
    })
}
