use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use emf_core::features::{feature_name, read_feature_csv, FeatureRow, RegionLayout, BRAND_WINDOW_MS, UNIT_WINDOW_MS};
use emf_core::pipeline::{trace_features, PipelineConfig};
use emf_core::trace::{parse_trace, InstrumentFormat, SpectralTrace};
use rayon::prelude::*;

use crate::args::{Instrument, LayoutArgs};
use crate::Failure;

/// A trace file and the id it is reported under.
#[derive(Debug, Clone)]
pub struct TraceInput {
    pub path: PathBuf,
    pub source_id: String,
}

fn is_trace_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "csv") && path.file_name().is_some_and(|n| n != "manifest.csv")
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else if is_trace_file(&path) {
            out.push(path);
        }
    }
    Ok(())
}

fn strip_csv(path: &Path) -> String {
    path.with_extension("").to_string_lossy().replace('\\', "/")
}

/// Corpus order comes from `manifest.csv` when present, else sorted paths.
fn directory_traces(dir: &Path) -> Result<Vec<TraceInput>, Failure> {
    let manifest = dir.join("manifest.csv");
    let rels: Vec<PathBuf> = if manifest.is_file() {
        let text = fs::read_to_string(&manifest).map_err(|e| Failure::input(format!("{}: {e}", manifest.display())))?;
        text.lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| PathBuf::from(l.split(',').next().unwrap_or_default()))
            .collect()
    } else {
        let mut found = Vec::new();
        walk(dir, &mut found)?;
        found.sort();
        found
            .into_iter()
            .map(|p| p.strip_prefix(dir).map(Path::to_path_buf).unwrap_or(p))
            .collect()
    };
    Ok(rels
        .into_iter()
        .map(|rel| {
            let path = dir.join(&rel);
            TraceInput {
                source_id: strip_csv(&path),
                path,
            }
        })
        .collect())
}

pub fn collect_traces(inputs: &[PathBuf]) -> Result<Vec<TraceInput>, Failure> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            out.extend(directory_traces(input)?);
        } else {
            out.push(TraceInput {
                path: input.clone(),
                source_id: strip_csv(input),
            });
        }
    }
    Ok(out)
}

pub fn base_format(args: &LayoutArgs) -> InstrumentFormat {
    InstrumentFormat::by_name(args.instrument.name()).expect("every preset has a format")
}

pub fn read_trace(input: &TraceInput, format: &InstrumentFormat) -> Result<SpectralTrace, Failure> {
    let file = File::open(&input.path).map_err(|e| Failure::input(format!("{}: {e}", input.path.display())))?;
    let mut trace = parse_trace(BufReader::new(file), format, input.source_id.clone())
        .map_err(|e| Failure::input(format!("{}: {e}", input.path.display())))?;
    if trace.label.is_none() {
        trace.label = input
            .path
            .parent()
            .and_then(Path::file_name)
            .map(|n| n.to_string_lossy().into_owned());
    }
    Ok(trace)
}

fn window_ms(args: &LayoutArgs, format: &InstrumentFormat) -> f64 {
    args.window_ms.unwrap_or(if format.name == Instrument::Fsw8.name() {
        UNIT_WINDOW_MS
    } else {
        BRAND_WINDOW_MS
    })
}

/// Layout over the band of `format`; checked before any extraction.
pub fn layout_for(args: &LayoutArgs, format: &InstrumentFormat) -> Result<RegionLayout, Failure> {
    RegionLayout::new(
        window_ms(args, format),
        format.start_hz,
        format.stop_hz,
        args.time_splits,
        args.freq_splits,
    )
    .map_err(|e| Failure::input(e.to_string()))
}

pub fn pipeline_config(args: &LayoutArgs, layout: RegionLayout) -> Result<PipelineConfig, Failure> {
    if !(args.baseline_ms > 0.0 && args.baseline_ms.is_finite()) {
        return Err(Failure::input(format!("baseline-ms must be positive, got {}", args.baseline_ms)));
    }
    if !(args.k_sigma >= 0.0 && args.k_sigma.is_finite()) {
        return Err(Failure::input(format!("k-sigma must be non-negative, got {}", args.k_sigma)));
    }
    Ok(PipelineConfig {
        layout,
        baseline_ms: args.baseline_ms,
        k_sigma: args.k_sigma,
        align: !args.no_align,
    })
}

pub struct Extracted {
    pub layout: RegionLayout,
    /// Instrument of the first trace.
    pub format: InstrumentFormat,
    pub rows: Vec<FeatureRow>,
}

/// Parses and reduces every trace, one per worker at a time. The layout
/// band comes from the first trace; every other trace must match it.
pub fn extract_rows(inputs: &[TraceInput], args: &LayoutArgs) -> Result<Extracted, Failure> {
    let Some(first) = inputs.first() else {
        return Err(Failure::input("no trace files found"));
    };
    let format = base_format(args);
    let first_format = read_trace(first, &format)?.format;
    let layout = layout_for(args, &first_format)?;
    let config = pipeline_config(args, layout.clone())?;
    let rows = inputs
        .par_iter()
        .map(|input| {
            let trace = read_trace(input, &format)?;
            if !layout.band_matches(&trace.format) {
                return Err(Failure::input(format!(
                    "{}: band {}..{} Hz does not match {}..{} Hz",
                    input.path.display(),
                    trace.format.start_hz,
                    trace.format.stop_hz,
                    layout.start_hz,
                    layout.stop_hz
                )));
            }
            let features = trace_features::<f64>(&trace, &config)
                .map_err(|e| Failure::input(format!("{}: {e}", input.path.display())))?;
            Ok(FeatureRow {
                source_id: trace.source_id.clone(),
                label: trace.label.clone().unwrap_or_default(),
                values: features.values,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Extracted {
        layout,
        format: first_format,
        rows,
    })
}

fn is_feature_table(path: &Path) -> bool {
    let Ok(file) = File::open(path) else {
        return false;
    };
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).is_ok() && first.starts_with("source_id,label,")
}

/// Feature rows with their column names, from a feature table or traces.
pub fn load_rows(inputs: &[PathBuf], args: &LayoutArgs) -> Result<(Vec<String>, Vec<FeatureRow>), Failure> {
    if let [single] = inputs {
        if single.is_file() && is_feature_table(single) {
            let file = File::open(single).map_err(|e| Failure::input(format!("{}: {e}", single.display())))?;
            return read_feature_csv(BufReader::new(file))
                .map_err(|e| Failure::input(format!("{}: {e}", single.display())));
        }
    }
    let traces = collect_traces(inputs)?;
    let Extracted { layout, rows, .. } = extract_rows(&traces, args)?;
    let names = (0..layout.feature_count()).map(|i| feature_name(&layout, i)).collect();
    Ok((names, rows))
}
