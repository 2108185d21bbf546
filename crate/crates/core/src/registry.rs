//! On-disk store of trained device profiles: one JSON document per class.
//!
//! Every floating-point value is written as a decimal string in shortest
//! round-trip form, so a reloaded model reproduces scores bit for bit.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::RegionLayout;
use crate::ocsvm::{OneClassModel, Standardizer};
use crate::trace::InstrumentFormat;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("profile {0:?} already exists (use replace to overwrite)")]
    DuplicateLabel(String),
    #[error("corrupt profile {}: {reason}", file.display())]
    CorruptProfile { file: PathBuf, reason: String },
    #[error("{}: format_version {found} is newer than supported {supported}", file.display())]
    UnsupportedFormatVersion {
        file: PathBuf,
        found: u64,
        supported: u32,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RegistryError + '_ {
    move |source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A trained model together with everything needed to reproduce its input.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceProfile {
    pub class_label: String,
    pub model: OneClassModel<f64>,
    pub layout: RegionLayout,
    pub instrument: InstrumentFormat,
    pub created_at: DateTime<Utc>,
    pub training_trace_ids: Vec<String>,
    pub format_version: u32,
}

impl DeviceProfile {
    pub fn new(
        model: OneClassModel<f64>,
        layout: RegionLayout,
        instrument: InstrumentFormat,
        created_at: DateTime<Utc>,
        training_trace_ids: Vec<String>,
    ) -> Self {
        Self {
            class_label: model.class_label.clone(),
            model,
            layout,
            instrument,
            created_at,
            training_trace_ids,
            format_version: FORMAT_VERSION,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LayoutDoc {
    window_ms: String,
    start_hz: String,
    stop_hz: String,
    time_splits: usize,
    frequency_splits: usize,
}

#[derive(Serialize, Deserialize)]
struct InstrumentDoc {
    name: String,
    start_hz: String,
    stop_hz: String,
    rbw_hz: String,
    sweep_points: Option<usize>,
    sweep_time_ms: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct StandardizerDoc {
    mean: Vec<String>,
    std: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SvmDoc {
    gamma: String,
    nu: String,
    rho: String,
    alphas: Vec<String>,
    support_vectors: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct ProfileDoc {
    format_version: u32,
    class_label: String,
    created_at: String,
    layout: LayoutDoc,
    instrument: InstrumentDoc,
    standardizer: StandardizerDoc,
    svm: SvmDoc,
    training_trace_ids: Vec<String>,
}

fn num(v: f64) -> String {
    v.to_string()
}

fn nums<'a>(v: impl IntoIterator<Item = &'a f64>) -> Vec<String> {
    v.into_iter().map(|x| num(*x)).collect()
}

impl From<&DeviceProfile> for ProfileDoc {
    fn from(p: &DeviceProfile) -> Self {
        let m = &p.model;
        ProfileDoc {
            format_version: p.format_version,
            class_label: p.class_label.clone(),
            created_at: p.created_at.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            layout: LayoutDoc {
                window_ms: num(p.layout.window_ms),
                start_hz: num(p.layout.start_hz),
                stop_hz: num(p.layout.stop_hz),
                time_splits: p.layout.time_splits,
                frequency_splits: p.layout.frequency_splits,
            },
            instrument: InstrumentDoc {
                name: p.instrument.name.clone(),
                start_hz: num(p.instrument.start_hz),
                stop_hz: num(p.instrument.stop_hz),
                rbw_hz: num(p.instrument.rbw_hz),
                sweep_points: p.instrument.sweep_points,
                sweep_time_ms: p.instrument.sweep_time_ms.map(num),
            },
            standardizer: StandardizerDoc {
                mean: nums(&m.standardizer.mean),
                std: nums(&m.standardizer.std),
            },
            svm: SvmDoc {
                gamma: num(m.gamma),
                nu: num(m.nu),
                rho: num(m.rho),
                alphas: nums(&m.alphas),
                support_vectors: m.support_vectors.outer_iter().map(|r| nums(&r)).collect(),
            },
            training_trace_ids: p.training_trace_ids.clone(),
        }
    }
}

fn parse_num(s: &str, what: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{what}: not a finite number: {s:?}"))
}

fn parse_nums(v: &[String], what: &str) -> Result<Vec<f64>, String> {
    v.iter().map(|s| parse_num(s, what)).collect()
}

impl TryFrom<ProfileDoc> for DeviceProfile {
    type Error = String;

    fn try_from(doc: ProfileDoc) -> Result<Self, String> {
        let created_at = DateTime::parse_from_rfc3339(&doc.created_at)
            .map_err(|e| format!("created_at: {e}"))?
            .with_timezone(&Utc);
        let layout = RegionLayout::new(
            parse_num(&doc.layout.window_ms, "layout.window_ms")?,
            parse_num(&doc.layout.start_hz, "layout.start_hz")?,
            parse_num(&doc.layout.stop_hz, "layout.stop_hz")?,
            doc.layout.time_splits,
            doc.layout.frequency_splits,
        )
        .map_err(|e| e.to_string())?;
        let instrument = InstrumentFormat {
            name: doc.instrument.name,
            start_hz: parse_num(&doc.instrument.start_hz, "instrument.start_hz")?,
            stop_hz: parse_num(&doc.instrument.stop_hz, "instrument.stop_hz")?,
            rbw_hz: parse_num(&doc.instrument.rbw_hz, "instrument.rbw_hz")?,
            sweep_points: doc.instrument.sweep_points,
            sweep_time_ms: doc
                .instrument
                .sweep_time_ms
                .as_deref()
                .map(|s| parse_num(s, "instrument.sweep_time_ms"))
                .transpose()?,
        };
        instrument.validate().map_err(|e| e.to_string())?;

        let mean = parse_nums(&doc.standardizer.mean, "standardizer.mean")?;
        let std = parse_nums(&doc.standardizer.std, "standardizer.std")?;
        let dim = mean.len();
        if std.len() != dim || dim != layout.feature_count() {
            return Err(format!(
                "standardizer has {} means and {} deviations for {} features",
                dim,
                std.len(),
                layout.feature_count()
            ));
        }
        let alphas = parse_nums(&doc.svm.alphas, "svm.alphas")?;
        if alphas.len() != doc.svm.support_vectors.len() || alphas.is_empty() {
            return Err(format!(
                "{} alphas for {} support vectors",
                alphas.len(),
                doc.svm.support_vectors.len()
            ));
        }
        let mut flat = Vec::with_capacity(alphas.len() * dim);
        for (i, row) in doc.svm.support_vectors.iter().enumerate() {
            if row.len() != dim {
                return Err(format!("support vector {i} has {} entries, expected {dim}", row.len()));
            }
            flat.extend(parse_nums(row, "svm.support_vectors")?);
        }
        let gamma = parse_num(&doc.svm.gamma, "svm.gamma")?;
        if gamma <= 0.0 {
            return Err(format!("svm.gamma must be positive, got {gamma}"));
        }
        let model = OneClassModel {
            class_label: doc.class_label.clone(),
            support_vectors: Array2::from_shape_vec((alphas.len(), dim), flat)
                .map_err(|e| e.to_string())?,
            alphas: Array1::from(alphas),
            rho: parse_num(&doc.svm.rho, "svm.rho")?,
            gamma,
            nu: parse_num(&doc.svm.nu, "svm.nu")?,
            standardizer: Standardizer {
                mean: Array1::from(mean),
                std: Array1::from(std),
            },
        };
        Ok(DeviceProfile {
            class_label: doc.class_label,
            model,
            layout,
            instrument,
            created_at,
            training_trace_ids: doc.training_trace_ids,
            format_version: doc.format_version,
        })
    }
}

/// File name for a label: unreserved characters kept, everything else
/// percent-encoded, so distinct labels never share a file.
pub fn profile_file_name(label: &str) -> String {
    let mut out = String::with_capacity(label.len() + 5);
    for b in label.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || b == b'.' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    if out.starts_with('.') {
        out.replace_range(0..1, "%2E");
    }
    out.push_str(".json");
    out
}

pub fn to_json(profile: &DeviceProfile) -> String {
    serde_json::to_string_pretty(&ProfileDoc::from(profile)).expect("profile document serializes")
}

/// Parses one profile document; `file` is only used in error reports.
pub fn from_json(text: &str, file: &Path) -> Result<DeviceProfile, RegistryError> {
    let corrupt = |reason: String| RegistryError::CorruptProfile {
        file: file.to_path_buf(),
        reason,
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| corrupt("missing format_version".into()))?;
    if version > u64::from(FORMAT_VERSION) {
        return Err(RegistryError::UnsupportedFormatVersion {
            file: file.to_path_buf(),
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let doc: ProfileDoc = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
    DeviceProfile::try_from(doc).map_err(corrupt)
}

/// Writes `profile` into `registry`, creating the directory if needed.
/// An existing profile with the same label is only overwritten when
/// `replace` is set.
pub fn store_profile(registry: &Path, profile: &DeviceProfile, replace: bool) -> Result<PathBuf, RegistryError> {
    fs::create_dir_all(registry).map_err(io_err(registry))?;
    let path = registry.join(profile_file_name(&profile.class_label));
    if path.exists() && !replace {
        return Err(RegistryError::DuplicateLabel(profile.class_label.clone()));
    }
    let tmp = registry.join(format!(".{}.tmp", profile_file_name(&profile.class_label)));
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(to_json(profile).as_bytes()).map_err(io_err(&tmp))?;
        f.write_all(b"\n").map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, &path).map_err(io_err(&path))?;
    Ok(path)
}

fn profile_paths(registry: &Path) -> Result<Vec<PathBuf>, RegistryError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(registry).map_err(io_err(registry))? {
        let path = entry.map_err(io_err(registry))?.path();
        let is_doc = path.extension().is_some_and(|e| e == "json")
            && !path.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.'));
        if is_doc && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Loads every profile, sorted by label. Any unreadable document fails the
/// whole load and names the file.
pub fn load_all(registry: &Path) -> Result<Vec<DeviceProfile>, RegistryError> {
    let mut profiles = Vec::new();
    for path in profile_paths(registry)? {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        profiles.push(from_json(&text, &path)?);
    }
    profiles.sort_by(|a, b| a.class_label.cmp(&b.class_label));
    if let Some(w) = profiles.windows(2).find(|w| w[0].class_label == w[1].class_label) {
        return Err(RegistryError::DuplicateLabel(w[0].class_label.clone()));
    }
    Ok(profiles)
}

pub fn list_profiles(registry: &Path) -> Result<Vec<String>, RegistryError> {
    Ok(load_all(registry)?.into_iter().map(|p| p.class_label).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocsvm::{train, SvmParams};
    use chrono::TimeZone;
    use ndarray::Array2;

    fn profile(label: &str, seed: u64) -> DeviceProfile {
        let layout = RegionLayout::new(10.0, 0.0, 10e6, 1, 1).unwrap();
        let x = Array2::from_shape_fn((8, 15), |(i, j)| {
            (((i * 31 + j * 7) as u64 ^ seed) % 97) as f64 / 97.0 + 1.0 / 3.0
        });
        let model = train(x.view(), &SvmParams::default(), label).unwrap();
        DeviceProfile::new(
            model,
            layout,
            InstrumentFormat::hackrf_one(),
            Utc.with_ymd_and_hms(2026, 1, 2, 3, 4, 5).unwrap(),
            vec!["a.csv".into(), "b.csv".into()],
        )
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = profile("U7", 1);
        store_profile(dir.path(), &p, false).unwrap();
        let back = load_all(dir.path()).unwrap();
        assert_eq!(back, vec![p.clone()]);
        let probe: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(
            p.model.score_slice(&probe).unwrap().to_bits(),
            back[0].model.score_slice(&probe).unwrap().to_bits()
        );
    }

    #[test]
    fn duplicate_needs_replace() {
        let dir = tempfile::tempdir().unwrap();
        store_profile(dir.path(), &profile("U1", 1), false).unwrap();
        assert!(matches!(
            store_profile(dir.path(), &profile("U1", 2), false),
            Err(RegistryError::DuplicateLabel(l)) if l == "U1"
        ));
        store_profile(dir.path(), &profile("U1", 2), true).unwrap();
        assert_eq!(load_all(dir.path()).unwrap()[0], profile("U1", 2));
    }

    #[test]
    fn empty_directory_loads_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_all(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn truncated_document_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = store_profile(dir.path(), &profile("U3", 1), false).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        match load_all(dir.path()) {
            Err(RegistryError::CorruptProfile { file, .. }) => assert_eq!(file, path),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn newer_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        store_profile(dir.path(), &profile("A", 1), false).unwrap();
        let mut newer = profile("B", 2);
        newer.format_version = 2;
        let path = store_profile(dir.path(), &newer, false).unwrap();
        match load_all(dir.path()) {
            Err(RegistryError::UnsupportedFormatVersion { file, found, .. }) => {
                assert_eq!(file, path);
                assert_eq!(found, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn file_names_are_injective() {
        assert_eq!(profile_file_name("U7"), "U7.json");
        assert_ne!(profile_file_name("a/b"), profile_file_name("a_b"));
        assert_eq!(profile_file_name("a/b"), "a%2Fb.json");
        assert_eq!(profile_file_name(".x"), "%2Ex.json");
    }

    #[test]
    fn document_uses_string_numbers() {
        let v: serde_json::Value = serde_json::from_str(&to_json(&profile("U2", 3))).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["created_at"], "2026-01-02T03:04:05Z");
        assert!(v["svm"]["rho"].is_string());
        assert!(v["svm"]["support_vectors"][0][0].is_string());
        assert!(v["standardizer"]["mean"][0].is_string());
    }
}
