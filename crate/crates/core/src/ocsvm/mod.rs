//! ν-one-class support vector machine with an RBF kernel.

mod smo;

pub use smo::{offset_from, smo_solve, DualSolution, KernelMatrix};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

use crate::scalar::Scalar;

pub const DEFAULT_NU: f64 = 0.1;
pub const DEFAULT_TOL: f64 = 1e-4;
/// Pair updates allowed per training point.
pub const MAX_ITER_PER_POINT: usize = 100_000;
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in training data at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("solver did not converge after {iterations} updates (violation {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },
    #[error("need at least 2 training samples, found {found}")]
    TooFewSamples { found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Per-feature z-scoring fitted on the training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Array1<T>,
    pub std: Array1<T>,
}

impl<T: Scalar> Standardizer<T> {
    /// Population mean and standard deviation per column; the deviation is
    /// floored at [`STD_FLOOR`].
    pub fn fit(x: ArrayView2<T>) -> Self {
        let n = T::of_usize(x.nrows());
        let floor = T::of(STD_FLOOR);
        let mean = x.sum_axis(Axis(0)) / n;
        let std = x
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, &m)| {
                let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n;
                var.sqrt().max(floor)
            })
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, x: ArrayView1<T>) -> Array1<T> {
        (&x - &self.mean) / &self.std
    }

    pub fn transform(&self, x: ArrayView2<T>) -> Array2<T> {
        (&x - &self.mean) / &self.std
    }
}

/// `exp(-gamma * |x - y|^2)`.
pub fn rbf_kernel<T: Scalar>(x: ArrayView1<T>, y: ArrayView1<T>, gamma: T) -> Result<T, SvmError> {
    if x.len() != y.len() {
        return Err(SvmError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(rbf_unchecked(x, y, gamma))
}

#[inline]
fn rbf_unchecked<T: Scalar>(x: ArrayView1<T>, y: ArrayView1<T>, gamma: T) -> T {
    let d2: T = x.iter().zip(y.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub nu: f64,
    /// `None` selects `1 / (d * mean per-feature variance)` of the
    /// standardized training matrix.
    pub gamma: Option<f64>,
    /// Multiplier on the default width; ignored when `gamma` is set.
    pub gamma_scale: f64,
    pub tol: f64,
    /// `None` means `MAX_ITER_PER_POINT * N`.
    pub max_iter: Option<usize>,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            nu: DEFAULT_NU,
            gamma: None,
            gamma_scale: 1.0,
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<(), SvmError> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(SvmError::InvalidParameter(format!("nu must be in (0, 1], got {}", self.nu)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(SvmError::InvalidParameter(format!("gamma must be positive, got {g}")));
            }
        }
        if !(self.gamma_scale > 0.0 && self.gamma_scale.is_finite()) {
            return Err(SvmError::InvalidParameter(format!(
                "gamma scale must be positive, got {}",
                self.gamma_scale
            )));
        }
        if !(self.tol > 0.0) {
            return Err(SvmError::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Trained one-class model; only points with positive weight are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct OneClassModel<T> {
    pub class_label: String,
    pub support_vectors: Array2<T>,
    pub alphas: Array1<T>,
    pub rho: T,
    pub gamma: T,
    pub nu: T,
    pub standardizer: Standardizer<T>,
}

/// Solver diagnostics returned alongside a model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<T> {
    /// Weight of every training point, including zeros.
    pub alphas: Vec<T>,
    /// Score of every training point under the fitted model.
    pub training_scores: Vec<T>,
    pub box_bound: T,
    pub iterations: usize,
    pub max_violation: T,
    pub objective: T,
}

/// Mean per-feature variance of an already standardized matrix, turned
/// into the default RBF width.
pub fn default_gamma<T: Scalar>(z: ArrayView2<T>) -> T {
    let d = z.ncols();
    let n = T::of_usize(z.nrows());
    let mean_var = z
        .axis_iter(Axis(1))
        .map(|col| {
            let m = col.sum() / n;
            col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n
        })
        .sum::<T>()
        / T::of_usize(d);
    let scale = if mean_var > T::zero() { mean_var } else { T::one() };
    T::one() / (T::of_usize(d) * scale)
}

pub fn train<T: Scalar>(
    features: ArrayView2<T>,
    params: &SvmParams,
    class_label: impl Into<String>,
) -> Result<OneClassModel<T>, SvmError> {
    fit(features, params, class_label).map(|(m, _)| m)
}

/// Trains a model and also returns the solver state for diagnostics.
pub fn fit<T: Scalar>(
    features: ArrayView2<T>,
    params: &SvmParams,
    class_label: impl Into<String>,
) -> Result<(OneClassModel<T>, FitReport<T>), SvmError> {
    params.validate()?;
    let (n, d) = features.dim();
    if n < 2 {
        return Err(SvmError::TooFewSamples { found: n });
    }
    if d == 0 {
        return Err(SvmError::DimensionMismatch { expected: 1, found: 0 });
    }
    if let Some(((row, col), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(SvmError::NonFinite { row, col });
    }

    let standardizer = Standardizer::fit(features);
    let z = standardizer.transform(features);
    let gamma = params
        .gamma
        .map(T::of)
        .unwrap_or_else(|| default_gamma(z.view()) * T::of(params.gamma_scale));

    let mut k = vec![T::zero(); n * n];
    for i in 0..n {
        k[i * n + i] = T::one();
        for j in 0..i {
            let v = rbf_unchecked(z.row(i), z.row(j), gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let kernel = KernelMatrix::new(n, k);
    let nu = T::of(params.nu);
    let c = T::one() / (nu * T::of_usize(n));
    let max_iter = params.max_iter.unwrap_or(MAX_ITER_PER_POINT * n);
    let sol = smo_solve(&kernel, c, T::of(params.tol), max_iter)?;

    let keep: Vec<usize> = (0..n).filter(|&i| sol.alphas[i] > T::zero()).collect();
    let support_vectors = z.select(Axis(0), &keep);
    let alphas = keep.iter().map(|&i| sol.alphas[i]).collect();

    let model = OneClassModel {
        class_label: class_label.into(),
        support_vectors,
        alphas,
        rho: sol.rho,
        gamma,
        nu,
        standardizer,
    };
    let training_scores = sol.gradient.iter().map(|&g| g - sol.rho).collect();
    let report = FitReport {
        objective: sol.objective(),
        alphas: sol.alphas,
        training_scores,
        box_bound: c,
        iterations: sol.iterations,
        max_violation: sol.max_violation,
    };
    Ok((model, report))
}

impl<T: Scalar> OneClassModel<T> {
    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    /// Signed similarity: `sum_i a_i k(sv_i, z(x)) - rho`; non-negative means
    /// the sample is inside the learned support.
    pub fn score(&self, x: ArrayView1<T>) -> Result<T, SvmError> {
        if x.len() != self.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let z = self.standardizer.transform_row(x);
        let s: T = self
            .support_vectors
            .axis_iter(Axis(0))
            .zip(self.alphas.iter())
            .map(|(sv, &a)| a * rbf_unchecked(sv, z.view(), self.gamma))
            .sum();
        Ok(s - self.rho)
    }

    pub fn score_slice(&self, x: &[T]) -> Result<T, SvmError> {
        self.score(ArrayView1::from(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Authorized,
    Rejected,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Authorized => "authorized",
            Verdict::Rejected => "rejected",
        }
    }
}

/// Authorized iff `score >= threshold`.
pub fn decide<T: PartialOrd>(score: T, threshold: T) -> Verdict {
    if score >= threshold {
        Verdict::Authorized
    } else {
        Verdict::Rejected
    }
}
