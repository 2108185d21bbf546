//! Seeded generator of labeled synthetic recordings.
//!
//! A device archetype is a sequence of boot segments, each with a mean and
//! spread of power per frequency band, surrounded by an idle floor. A trace
//! is the idle floor for a random lead-in, then the boot sequence, then idle
//! again until the requested duration, all sampled on the instrument's sweep
//! grid with Gaussian power noise.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`). Archetypes use
//! `ChaCha8Rng::seed_from_u64(archetype_seed)`. Per-trace seeds for class `c`
//! are successive `next_u64()` draws of `ChaCha8Rng::seed_from_u64(corpus_seed)`
//! switched to stream `c + 1`, and each trace is rendered from
//! `ChaCha8Rng::seed_from_u64(trace_seed)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::features::{BRAND_WINDOW_MS, UNIT_WINDOW_MS};
use crate::trace::{write_trace, InstrumentFormat, SpectralSample, SpectralTrace, TraceError};

pub const SEGMENT_MEAN_DBM: (f64, f64) = (-80.0, -30.0);
pub const SEGMENT_STD_DBM: (f64, f64) = (0.5, 3.0);
pub const SEGMENT_DURATION_MS: (f64, f64) = (80.0, 320.0);
pub const IDLE_FLOOR_DBM: (f64, f64) = (-100.0, -90.0);

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("duration {duration_ms} ms is shorter than the {boot_ms} ms boot sequence")]
    DurationTooShort { duration_ms: f64, boot_ms: f64 },
    #[error("instrument {0:?} has no sweep geometry (sweep_points and sweep_time_ms)")]
    MissingSweepGeometry(String),
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootSegment {
    pub duration_ms: f64,
    pub mean_dbm: Vec<f64>,
    pub std_dbm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceArchetype {
    pub id: String,
    pub seed: u64,
    pub boot_segments: Vec<BootSegment>,
    pub idle_floor_dbm: f64,
    pub start_hz: f64,
    pub stop_hz: f64,
    pub band_count: usize,
}

impl DeviceArchetype {
    pub fn boot_duration_ms(&self) -> f64 {
        self.boot_segments.iter().map(|s| s.duration_ms).sum()
    }

    /// Band index of `frequency_hz`; the top edge belongs to the last band.
    pub fn band_of(&self, frequency_hz: f64) -> usize {
        let rel = (frequency_hz - self.start_hz) / (self.stop_hz - self.start_hz);
        ((rel * self.band_count as f64) as usize).min(self.band_count - 1)
    }

    /// Mean power per band sampled every `step_ms` across the boot sequence.
    pub fn mean_profile(&self, step_ms: f64) -> Vec<f64> {
        let total = self.boot_duration_ms();
        let steps = (total / step_ms).ceil() as usize;
        let mut out = Vec::with_capacity(steps * self.band_count);
        for k in 0..steps {
            let seg = self.segment_at(k as f64 * step_ms).unwrap_or(self.boot_segments.len() - 1);
            out.extend_from_slice(&self.boot_segments[seg].mean_dbm);
        }
        out
    }

    /// L2 distance between mean profiles on a common 10 ms grid; the shorter
    /// profile is padded with its idle floor.
    pub fn profile_distance(&self, other: &Self) -> f64 {
        let (a, b) = (self.mean_profile(10.0), other.mean_profile(10.0));
        let n = a.len().max(b.len());
        (0..n)
            .map(|i| {
                let x = a.get(i).copied().unwrap_or(self.idle_floor_dbm);
                let y = b.get(i).copied().unwrap_or(other.idle_floor_dbm);
                (x - y).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    fn segment_at(&self, t_ms: f64) -> Option<usize> {
        let mut end = 0.0;
        for (i, s) in self.boot_segments.iter().enumerate() {
            end += s.duration_ms;
            if t_ms < end {
                return Some(i);
            }
        }
        None
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn make_archetype(seed: u64, band: (f64, f64), band_count: usize, segment_count: usize) -> DeviceArchetype {
    assert!(segment_count >= 1 && band_count >= 1, "need at least one segment and band");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idle_floor_dbm = uniform(&mut rng, IDLE_FLOOR_DBM);
    let boot_segments = (0..segment_count)
        .map(|_| BootSegment {
            duration_ms: uniform(&mut rng, SEGMENT_DURATION_MS),
            mean_dbm: (0..band_count).map(|_| uniform(&mut rng, SEGMENT_MEAN_DBM)).collect(),
            std_dbm: (0..band_count).map(|_| uniform(&mut rng, SEGMENT_STD_DBM)).collect(),
        })
        .collect();
    DeviceArchetype {
        id: format!("A{seed}"),
        seed,
        boot_segments,
        idle_floor_dbm,
        start_hz: band.0,
        stop_hz: band.1,
        band_count,
    }
}

/// Copies the per-segment mean and spread of the first `bands` bands from
/// `common`; segments beyond `common`'s last reuse its last segment.
pub fn share_bands(archetype: &mut DeviceArchetype, common: &DeviceArchetype, bands: usize) {
    let bands = bands.min(archetype.band_count).min(common.band_count);
    for (i, seg) in archetype.boot_segments.iter_mut().enumerate() {
        let src = &common.boot_segments[i.min(common.boot_segments.len() - 1)];
        seg.mean_dbm[..bands].copy_from_slice(&src.mean_dbm[..bands]);
        seg.std_dbm[..bands].copy_from_slice(&src.std_dbm[..bands]);
    }
}

/// How a variant departs from its base archetype.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    /// Std of the additive change to each segment/band mean, dBm.
    pub mean_dbm: f64,
    /// Std of the relative change to each segment duration.
    pub duration_frac: f64,
    /// Leave the first (power-up) segment untouched.
    pub keep_first_segment: bool,
}

/// Derives a variant of `base`; means stay inside the segment-mean range.
pub fn perturb_archetype(base: &DeviceArchetype, seed: u64, p: Perturbation) -> DeviceArchetype {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = base.clone();
    out.id = format!("{}~{seed}", base.id);
    out.seed = seed;
    let skip = usize::from(p.keep_first_segment);
    for seg in out.boot_segments.iter_mut().skip(skip) {
        let z: f64 = StandardNormal.sample(&mut rng);
        seg.duration_ms = (seg.duration_ms * (1.0 + p.duration_frac * z)).max(SEGMENT_DURATION_MS.0 / 2.0);
        for m in seg.mean_dbm.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *m = (*m + p.mean_dbm * z).clamp(SEGMENT_MEAN_DBM.0, SEGMENT_MEAN_DBM.1);
        }
    }
    out
}

/// Per-trace rendering parameters beyond the archetype itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceVariation {
    /// Idle lead-in before the boot sequence starts.
    pub onset_ms: f64,
    /// Std of additive Gaussian power noise, dBm.
    pub noise_std: f64,
    /// Std of the per-trace relative stretch of each segment duration.
    pub timing_jitter: f64,
    /// Std of the per-trace, per-segment level offset (all bands), dBm.
    pub level_jitter_dbm: f64,
}

impl TraceVariation {
    pub fn onset_only(onset_ms: f64, noise_std: f64) -> Self {
        Self {
            onset_ms,
            noise_std,
            timing_jitter: 0.0,
            level_jitter_dbm: 0.0,
        }
    }
}

/// Renders one recording. Sweeps start every `sweep_time_ms` from 0; the
/// sweep count is `floor(duration / sweep_time)`.
pub fn synthesize_trace(
    archetype: &DeviceArchetype,
    instrument: &InstrumentFormat,
    duration_ms: f64,
    variation: TraceVariation,
    seed: u64,
) -> Result<SpectralTrace, SynthError> {
    let (Some(points), Some(sweep_ms)) = (instrument.sweep_points, instrument.sweep_time_ms) else {
        return Err(SynthError::MissingSweepGeometry(instrument.name.clone()));
    };
    instrument.validate()?;
    let boot_ms = archetype.boot_duration_ms();
    if duration_ms < boot_ms {
        return Err(SynthError::DurationTooShort { duration_ms, boot_ms });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Per-trace segment schedule.
    let mut ends = Vec::with_capacity(archetype.boot_segments.len());
    let mut offsets = Vec::with_capacity(archetype.boot_segments.len());
    let mut t_end = variation.onset_ms;
    for seg in &archetype.boot_segments {
        let stretch = if variation.timing_jitter > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            (1.0 + variation.timing_jitter * z).max(0.5)
        } else {
            1.0
        };
        t_end += seg.duration_ms * stretch;
        ends.push(t_end);
        offsets.push(if variation.level_jitter_dbm > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            variation.level_jitter_dbm * z
        } else {
            0.0
        });
    }

    let span = instrument.stop_hz - instrument.start_hz;
    let freqs: Vec<f64> = (0..points)
        .map(|j| {
            if points == 1 {
                instrument.start_hz
            } else if j + 1 == points {
                instrument.stop_hz
            } else {
                instrument.start_hz + span * j as f64 / (points - 1) as f64
            }
        })
        .collect();
    let bands: Vec<usize> = freqs.iter().map(|&f| archetype.band_of(f)).collect();

    let sweeps = (duration_ms / sweep_ms).floor() as usize;
    let noise_var = variation.noise_std * variation.noise_std;
    // Combined std per (segment, band): segment spread and instrument noise
    // are independent Gaussians.
    let spreads: Vec<Vec<f64>> = archetype
        .boot_segments
        .iter()
        .map(|s| s.std_dbm.iter().map(|sd| (sd * sd + noise_var).sqrt()).collect())
        .collect();

    let mut samples = Vec::with_capacity(sweeps * points);
    let mut seg = 0usize;
    for k in 0..sweeps {
        let t = k as f64 * sweep_ms;
        while seg < ends.len() && t >= ends[seg] {
            seg += 1;
        }
        let active = t >= variation.onset_ms && seg < ends.len();
        for (&f, &b) in freqs.iter().zip(&bands) {
            let z: f64 = StandardNormal.sample(&mut rng);
            let p = if active {
                let s = &archetype.boot_segments[seg];
                s.mean_dbm[b] + offsets[seg] + spreads[seg][b] * z
            } else {
                archetype.idle_floor_dbm + variation.noise_std * z
            };
            samples.push(SpectralSample::new(t, f, p));
        }
    }
    Ok(SpectralTrace::new(samples, instrument.clone(), Some(archetype.id.clone()), "")?)
}

/// Full description of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub archetypes: Vec<DeviceArchetype>,
    /// Class labels, parallel to `archetypes`.
    pub labels: Vec<String>,
    pub traces_per_class: usize,
    /// Range of the idle lead-in before boot onset.
    pub jitter_ms: (f64, f64),
    pub noise_std: f64,
    pub timing_jitter: f64,
    pub level_jitter_dbm: f64,
    pub seed: u64,
    pub instrument: InstrumentFormat,
    pub duration_ms: f64,
}

/// Identity of one trace within a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub label: String,
    pub class_index: usize,
    pub trace_index: usize,
    pub seed: u64,
    pub archetype_seed: u64,
}

impl CorpusItem {
    pub fn source_id(&self) -> String {
        format!("{}/trace_{:03}", self.label, self.trace_index)
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.archetypes.is_empty() {
            return bad("no archetypes".into());
        }
        if self.labels.len() != self.archetypes.len() {
            return bad(format!("{} labels for {} archetypes", self.labels.len(), self.archetypes.len()));
        }
        let mut sorted = self.labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.labels.len() {
            return bad("labels must be unique".into());
        }
        if self.traces_per_class == 0 {
            return bad("traces_per_class must be >= 1".into());
        }
        let (lo, hi) = self.jitter_ms;
        if !(lo >= 0.0 && hi >= lo) {
            return bad(format!("jitter range [{lo}, {hi}] must be non-negative and ordered"));
        }
        if !(self.noise_std >= 0.0 && self.timing_jitter >= 0.0 && self.level_jitter_dbm >= 0.0) {
            return bad("noise and jitter magnitudes must be non-negative".into());
        }
        Ok(())
    }

    /// Every trace of the corpus in `(class, trace)` order, with its seed.
    pub fn items(&self) -> Vec<CorpusItem> {
        let mut out = Vec::with_capacity(self.archetypes.len() * self.traces_per_class);
        for (c, arch) in self.archetypes.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(c as u64 + 1);
            for t in 0..self.traces_per_class {
                out.push(CorpusItem {
                    label: self.labels[c].clone(),
                    class_index: c,
                    trace_index: t,
                    seed: rng.next_u64(),
                    archetype_seed: arch.seed,
                });
            }
        }
        out
    }

    pub fn synthesize(&self, item: &CorpusItem) -> Result<SpectralTrace, SynthError> {
        let arch = &self.archetypes[item.class_index];
        // The lead-in comes from its own stream so the trace body does not
        // depend on the jitter range.
        let mut jitter_rng = ChaCha8Rng::seed_from_u64(item.seed);
        jitter_rng.set_stream(u64::MAX);
        let (lo, hi) = self.jitter_ms;
        let onset_ms = if hi > lo { uniform(&mut jitter_rng, (lo, hi)) } else { lo };
        let variation = TraceVariation {
            onset_ms,
            noise_std: self.noise_std,
            timing_jitter: self.timing_jitter,
            level_jitter_dbm: self.level_jitter_dbm,
        };
        let mut trace = synthesize_trace(arch, &self.instrument, self.duration_ms, variation, item.seed)?;
        trace.label = Some(item.label.clone());
        trace.source_id = item.source_id();
        Ok(trace)
    }

    fn base(archetypes: Vec<DeviceArchetype>, labels: Vec<String>, seed: u64) -> Self {
        Self {
            archetypes,
            labels,
            traces_per_class: 10,
            jitter_ms: (250.0, 450.0),
            noise_std: 1.0,
            timing_jitter: 0.03,
            level_jitter_dbm: 0.5,
            seed,
            instrument: InstrumentFormat::hackrf_one(),
            duration_ms: 0.0,
        }
    }

    /// Seventeen device models captured with the SDR. The lowest quarter of
    /// the bands carries a level profile common to all of them (host-side
    /// activity), so not every feature discriminates.
    pub fn brand_models(seed: u64) -> Self {
        let instrument = InstrumentFormat::hackrf_one().with_sweep(256, 5.0);
        let band = (instrument.start_hz, instrument.stop_hz);
        let common = make_archetype(seed.wrapping_mul(1000).wrapping_add(999), band, 24, 6);
        let archetypes: Vec<_> = (0..17)
            .map(|i| {
                let mut a = make_archetype(seed.wrapping_mul(1000).wrapping_add(i + 1), band, 24, 6);
                share_bands(&mut a, &common, 6);
                a
            })
            .collect();
        let labels = (1..=17).map(|i| format!("U{i}")).collect();
        let mut spec = Self::base(archetypes, labels, seed);
        spec.timing_jitter = 0.1;
        spec.level_jitter_dbm = 2.0;
        spec.duration_ms = spec.jitter_ms.1 + BRAND_WINDOW_MS + 100.0;
        spec.duration_ms = spec.duration_ms.max(spec.max_boot_ms() + spec.jitter_ms.1);
        spec.instrument = instrument;
        spec
    }

    /// Fifteen units of one model: small perturbations of a shared base,
    /// captured with the wideband analyzer.
    pub fn same_model_units(seed: u64) -> Self {
        Self::same_model_units_with(seed, InstrumentFormat::fsw8(), Perturbation {
            mean_dbm: 1.0,
            duration_frac: 0.02,
            keep_first_segment: false,
        })
    }

    pub fn same_model_units_with(seed: u64, instrument: InstrumentFormat, p: Perturbation) -> Self {
        let band = (instrument.start_hz, instrument.stop_hz);
        let base = make_archetype(seed.wrapping_mul(1000).wrapping_add(500), band, 40, 14);
        let archetypes: Vec<_> = (0..15)
            .map(|i| perturb_archetype(&base, seed.wrapping_mul(1000).wrapping_add(501 + i), p))
            .collect();
        let labels = (1..=15).map(|i| format!("S{i:02}")).collect();
        let mut spec = Self::base(archetypes, labels, seed);
        spec.instrument = instrument;
        spec.duration_ms = (spec.jitter_ms.1 + UNIT_WINDOW_MS + 50.0).max(spec.max_boot_ms() + spec.jitter_ms.1);
        spec
    }

    /// Seven firmware builds of one device: the power-up segment is shared,
    /// later segments differ slightly.
    pub fn firmware_variants(seed: u64) -> Self {
        let instrument = InstrumentFormat::hackrf_one().with_sweep(256, 5.0);
        let band = (instrument.start_hz, instrument.stop_hz);
        let base = make_archetype(seed.wrapping_mul(1000).wrapping_add(700), band, 24, 6);
        let p = Perturbation {
            mean_dbm: 1.5,
            duration_frac: 0.05,
            keep_first_segment: true,
        };
        let mut archetypes = vec![base.clone()];
        archetypes.extend((1..7).map(|i| perturb_archetype(&base, seed.wrapping_mul(1000).wrapping_add(700 + i), p)));
        let labels = (1..=7).map(|i| format!("F{i}")).collect();
        let mut spec = Self::base(archetypes, labels, seed);
        spec.instrument = instrument;
        spec.duration_ms = (spec.jitter_ms.1 + BRAND_WINDOW_MS + 100.0).max(spec.max_boot_ms() + spec.jitter_ms.1);
        spec
    }

    fn max_boot_ms(&self) -> f64 {
        self.archetypes
            .iter()
            .map(DeviceArchetype::boot_duration_ms)
            .fold(0.0, f64::max)
    }
}

/// Generates every trace of the corpus in `(class, trace)` order.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<SpectralTrace>, SynthError> {
    spec.validate()?;
    spec.items().iter().map(|item| spec.synthesize(item)).collect()
}

/// Writes one directory per class plus `manifest.csv`
/// (`file,label,seed,archetype_seed`). Traces are rendered one at a time.
pub fn write_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<Vec<CorpusItem>, SynthError> {
    spec.validate()?;
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let items = spec.items();
    let mut manifest = String::from("file,label,seed,archetype_seed\n");
    for item in &items {
        let class_dir = out_dir.join(&item.label);
        fs::create_dir_all(&class_dir).map_err(io(&class_dir))?;
        let rel = format!("{}.csv", item.source_id());
        let path = out_dir.join(&rel);
        let trace = spec.synthesize(item)?;
        fs::write(&path, write_trace(&trace)).map_err(io(&path))?;
        let _ = writeln!(manifest, "{rel},{},{},{}", item.label, item.seed, item.archetype_seed);
    }
    let mpath = out_dir.join("manifest.csv");
    fs::write(&mpath, manifest).map_err(io(&mpath))?;
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::detect_boot_onset;

    fn small_instrument() -> InstrumentFormat {
        InstrumentFormat::hackrf_one().with_sweep(32, 5.0)
    }

    #[test]
    fn archetypes_are_deterministic() {
        assert_eq!(make_archetype(7, (0.0, 10e6), 8, 3), make_archetype(7, (0.0, 10e6), 8, 3));
        let a = make_archetype(1, (0.0, 10e6), 8, 3);
        let b = make_archetype(2, (0.0, 10e6), 8, 3);
        assert_ne!(a.mean_profile(10.0), b.mean_profile(10.0));
        assert!(a.profile_distance(&b) > 0.0);
        for seg in &a.boot_segments {
            assert!(seg.mean_dbm.iter().all(|m| (-80.0..=-30.0).contains(m)));
            assert!(seg.std_dbm.iter().all(|s| (0.5..=3.0).contains(s)));
            assert!(seg.duration_ms > 0.0);
        }
    }

    #[test]
    fn noise_free_traces_repeat_per_seed() {
        let a = make_archetype(3, (0.0, 10e6), 8, 3);
        let v = TraceVariation::onset_only(0.0, 0.0);
        let dur = a.boot_duration_ms() + 50.0;
        let t1 = synthesize_trace(&a, &small_instrument(), dur, v, 42).unwrap();
        let t2 = synthesize_trace(&a, &small_instrument(), dur, v, 42).unwrap();
        let t3 = synthesize_trace(&a, &small_instrument(), dur, v, 43).unwrap();
        assert_eq!(t1, t2);
        assert_ne!(t1, t3);
        // Only the powers differ between seeds; the grid is shared.
        assert!(t1
            .samples()
            .iter()
            .zip(t3.samples())
            .all(|(x, y)| x.timestamp_ms == y.timestamp_ms && x.frequency_hz == y.frequency_hz));
    }

    #[test]
    fn onset_is_recovered_within_one_sweep() {
        let a = make_archetype(5, (0.0, 10e6), 8, 4);
        let inst = small_instrument();
        let v = TraceVariation::onset_only(300.0, 1.0);
        let t = synthesize_trace(&a, &inst, a.boot_duration_ms() + 400.0, v, 9).unwrap();
        let onset = detect_boot_onset(&t, 200.0, 5.0).unwrap();
        assert!((300.0..=305.0).contains(&onset), "onset {onset}");
    }

    #[test]
    fn analyzer_sweep_count() {
        let a = make_archetype(8, (0.0, 200e6), 4, 1);
        let inst = InstrumentFormat::fsw8().with_sweep(3, 4.01);
        let t = synthesize_trace(&a, &inst, 3350.0, TraceVariation::onset_only(0.0, 0.0), 1).unwrap();
        assert_eq!(t.timeslots().count(), (3350.0_f64 / 4.01).floor() as usize);
        assert_eq!(t.timeslots().count(), 835);
    }

    #[test]
    fn too_short_duration_is_rejected() {
        let a = make_archetype(8, (0.0, 10e6), 4, 3);
        assert!(matches!(
            synthesize_trace(&a, &small_instrument(), 10.0, TraceVariation::onset_only(0.0, 0.0), 1),
            Err(SynthError::DurationTooShort { .. })
        ));
        assert!(matches!(
            synthesize_trace(&a, &InstrumentFormat::hackrf_one(), 5000.0, TraceVariation::onset_only(0.0, 0.0), 1),
            Err(SynthError::MissingSweepGeometry(_))
        ));
    }

    #[test]
    fn firmware_variants_share_power_up() {
        let spec = CorpusSpec::firmware_variants(1);
        assert_eq!(spec.archetypes.len(), 7);
        let first = &spec.archetypes[0].boot_segments[0];
        for a in &spec.archetypes[1..] {
            assert_eq!(&a.boot_segments[0], first);
            assert_ne!(a.boot_segments[1], spec.archetypes[0].boot_segments[1]);
        }
    }

    #[test]
    fn corpus_geometry() {
        let mut spec = CorpusSpec::brand_models(1);
        spec.traces_per_class = 2;
        let items = spec.items();
        assert_eq!(items.len(), 34);
        assert_eq!(CorpusSpec::brand_models(1).items().len(), 170);
        assert_eq!(CorpusSpec::same_model_units(1).items().len(), 150);
        assert_eq!(items[0].source_id(), "U1/trace_000");
        let seeds: std::collections::HashSet<u64> = items.iter().map(|i| i.seed).collect();
        assert_eq!(seeds.len(), items.len());
    }

    #[test]
    fn corpus_is_reproducible() {
        let mut spec = CorpusSpec::firmware_variants(4);
        spec.traces_per_class = 1;
        spec.instrument = small_instrument();
        let a = generate_corpus(&spec).unwrap();
        let b = generate_corpus(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[3].label.as_deref(), Some("F4"));
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = CorpusSpec::firmware_variants(4);
        spec.jitter_ms = (10.0, 5.0);
        assert!(matches!(spec.validate(), Err(SynthError::InvalidSpec(_))));
        let mut spec = CorpusSpec::firmware_variants(4);
        spec.traces_per_class = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn seventeen_archetypes_are_pairwise_distinct() {
        let spec = CorpusSpec::brand_models(11);
        for i in 0..17 {
            for j in 0..i {
                assert!(spec.archetypes[i].profile_distance(&spec.archetypes[j]) > 0.0);
            }
        }
    }
}
