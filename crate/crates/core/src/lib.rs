//! Device fingerprinting from unintentional-emission spectral traces.
//!
//! Pipeline: parse a `(timestamp, frequency, power)` recording, align it on
//! the boot onset, cut a fixed window, min-max normalize, compute five
//! statistics over a hierarchy of time/frequency regions, and score the
//! resulting vector against per-device one-class SVM profiles.
//!
//! The numeric core ([`features`], [`ocsvm`]) is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the precision used by the
//! registry, evaluation harness and CLI.

pub mod evaluation;
pub mod features;
pub mod ocsvm;
pub mod pipeline;
pub mod ranking;
pub mod registry;
pub mod scalar;
pub mod synth;
pub mod trace;

pub use scalar::Scalar;

pub type FiveStatsF64 = features::FiveStats<f64>;
pub type FiveStatsF32 = features::FiveStats<f32>;
pub type NormalizedTraceF64 = features::NormalizedTrace<f64>;
pub type NormalizedTraceF32 = features::NormalizedTrace<f32>;
pub type FeatureVectorF64 = features::FeatureVector<f64>;
pub type FeatureVectorF32 = features::FeatureVector<f32>;
pub type OneClassModelF64 = ocsvm::OneClassModel<f64>;
pub type OneClassModelF32 = ocsvm::OneClassModel<f32>;
pub type StandardizerF64 = ocsvm::Standardizer<f64>;
