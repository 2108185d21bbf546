use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Mean, standard deviation, variance, skewness and kurtosis of one region.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FiveStats<T> {
    pub mean: T,
    pub std: T,
    pub variance: T,
    pub skewness: T,
    pub kurtosis: T,
}

impl<T: Scalar> FiveStats<T> {
    pub fn zero() -> Self {
        Self {
            mean: T::zero(),
            std: T::zero(),
            variance: T::zero(),
            skewness: T::zero(),
            kurtosis: T::zero(),
        }
    }

    /// Feature order within a region block.
    pub fn to_array(self) -> [T; 5] {
        [self.mean, self.std, self.variance, self.skewness, self.kurtosis]
    }
}

pub const STAT_NAMES: [&str; 5] = ["mean", "std", "variance", "skewness", "kurtosis"];

/// Computes the five region statistics.
///
/// Variance uses the `N-1` denominator (0 for a single sample). Skewness is
/// `(1/N) sum d^3 / [(1/(N-1)) sum d^2]^(3/2)`, mixing the two normalizations,
/// and kurtosis is `sum d^4 / [(1/N) (sum d^2)^2]`. When every sample is equal
/// both shape statistics are defined as 0.
///
/// Panics on an empty slice.
pub fn compute_statistics<T: Scalar>(samples: &[T]) -> FiveStats<T> {
    assert!(!samples.is_empty(), "statistics need at least one sample");
    let n = T::of_usize(samples.len());
    let mean = samples.iter().copied().sum::<T>() / n;

    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return FiveStats {
            mean,
            ..FiveStats::zero()
        };
    }

    let (mut s2, mut s3, mut s4) = (T::zero(), T::zero(), T::zero());
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        s2 += d2;
        s3 += d2 * d;
        s4 += d2 * d2;
    }
    if s2 == T::zero() {
        return FiveStats {
            mean,
            ..FiveStats::zero()
        };
    }

    let n_minus_1 = n - T::one();
    let variance = s2 / n_minus_1;
    let skewness = (s3 / n) / variance.powf(T::of(1.5));
    let kurtosis = s4 / (s2 * s2 / n);
    FiveStats {
        mean,
        std: variance.sqrt(),
        variance,
        skewness,
        kurtosis,
    }
}
