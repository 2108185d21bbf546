//! Trace-to-features glue shared by training, classification and evaluation.

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::{extract_features, normalize, FeatureError, FeatureRow, FeatureVector, RegionLayout};
use crate::ocsvm::{train, OneClassModel, SvmError, SvmParams};
use crate::scalar::Scalar;
use crate::synth::{CorpusSpec, SynthError};
use crate::trace::{detect_boot_onset, window_trace, SpectralTrace, TraceError, DEFAULT_BASELINE_MS, DEFAULT_K_SIGMA};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{source_id}: {source}")]
    Trace {
        source_id: String,
        #[source]
        source: TraceError,
    },
    #[error("{source_id}: {source}")]
    Feature {
        source_id: String,
        #[source]
        source: FeatureError,
    },
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Alignment and layout settings applied to every trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub layout: RegionLayout,
    pub baseline_ms: f64,
    pub k_sigma: f64,
    /// Detect the boot onset; when false the window starts at the first sample.
    pub align: bool,
}

impl PipelineConfig {
    pub fn new(layout: RegionLayout) -> Self {
        Self {
            layout,
            baseline_ms: DEFAULT_BASELINE_MS,
            k_sigma: DEFAULT_K_SIGMA,
            align: true,
        }
    }
}

/// Onset alignment, windowing, normalization and feature extraction.
pub fn trace_features<T: Scalar>(
    trace: &SpectralTrace,
    config: &PipelineConfig,
) -> Result<FeatureVector<T>, PipelineError> {
    let trace_err = |source| PipelineError::Trace {
        source_id: trace.source_id.clone(),
        source,
    };
    let start = if config.align {
        detect_boot_onset(trace, config.baseline_ms, config.k_sigma).map_err(trace_err)?
    } else {
        trace.first_timestamp()
    };
    let windowed = window_trace(trace, start, config.layout.window_ms).map_err(trace_err)?;
    extract_features(&normalize::<T>(&windowed), &config.layout).map_err(|source| PipelineError::Feature {
        source_id: trace.source_id.clone(),
        source,
    })
}

/// Synthesizes each trace of `spec` and reduces it to a feature row, one
/// trace in memory per worker. Output order is the corpus order.
pub fn corpus_features(spec: &CorpusSpec, config: &PipelineConfig) -> Result<Vec<FeatureRow>, PipelineError> {
    spec.validate()?;
    spec.items()
        .par_iter()
        .map(|item| {
            let trace = spec.synthesize(item)?;
            Ok(trace_features::<f64>(&trace, config)?.to_row())
        })
        .collect()
}

/// Same as [`corpus_features`] with a transform applied to every trace's
/// powers before the pipeline.
pub fn corpus_features_mapped(
    spec: &CorpusSpec,
    config: &PipelineConfig,
    map: impl Fn(f64) -> f64 + Sync,
) -> Result<Vec<FeatureRow>, PipelineError> {
    spec.validate()?;
    spec.items()
        .par_iter()
        .map(|item| {
            let trace = spec.synthesize(item)?.map_power(&map);
            Ok(trace_features::<f64>(&trace, config)?.to_row())
        })
        .collect()
}

/// Trains one model on every row; rows must share a width.
pub fn train_on_rows(
    rows: &[FeatureRow],
    params: &SvmParams,
    class_label: impl Into<String>,
) -> Result<OneClassModel<f64>, SvmError> {
    let dim = rows.first().map_or(0, |r| r.values.len());
    if let Some(r) = rows.iter().find(|r| r.values.len() != dim) {
        return Err(SvmError::DimensionMismatch {
            expected: dim,
            found: r.values.len(),
        });
    }
    let x = Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i].values[j]);
    train(x.view(), params, class_label)
}
