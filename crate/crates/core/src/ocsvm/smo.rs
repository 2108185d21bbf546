//! Sequential minimal optimization for the one-class dual
//!
//! ```text
//! minimize  1/2 a'Ka   subject to  0 <= a_i <= C,  sum a_i = 1
//! ```
//!
//! with `C = 1 / (nu * N)`. Each step moves mass between the maximal
//! violating pair: the point with the smallest gradient that can still grow
//! and the point with the largest gradient that can still shrink.

use super::SvmError;
use crate::scalar::Scalar;

/// Solution of the dual problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution<T> {
    pub alphas: Vec<T>,
    /// `(K a)_i`, i.e. the decision value of training point `i` before the offset.
    pub gradient: Vec<T>,
    pub rho: T,
    pub iterations: usize,
    pub max_violation: T,
}

impl<T: Scalar> DualSolution<T> {
    pub fn objective(&self) -> T {
        let half = T::of(0.5);
        self.alphas
            .iter()
            .zip(&self.gradient)
            .map(|(&a, &g)| half * a * g)
            .sum()
    }
}

/// Dense symmetric kernel matrix in row-major order.
pub struct KernelMatrix<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Scalar> KernelMatrix<T> {
    pub fn new(n: usize, values: Vec<T>) -> Self {
        assert_eq!(values.len(), n * n, "kernel matrix must be n x n");
        Self { n, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    #[inline]
    fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn size(&self) -> usize {
        self.n
    }
}

/// Offset placing free support vectors on the margin (mean of their
/// gradients). Without free vectors the midpoint of the feasible interval is
/// used, which keeps every point within the KKT tolerance.
pub fn offset_from<T: Scalar>(alphas: &[T], gradient: &[T], c: T) -> T {
    let (mut sum, mut count) = (T::zero(), 0usize);
    let mut ub = T::infinity();
    let mut lb = T::neg_infinity();
    for (&a, &g) in alphas.iter().zip(gradient) {
        if a > T::zero() && a < c {
            sum += g;
            count += 1;
        } else if a == T::zero() {
            ub = ub.min(g);
        } else {
            lb = lb.max(g);
        }
    }
    if count > 0 {
        sum / T::of_usize(count)
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) * T::of(0.5)
    } else if lb.is_finite() {
        lb
    } else {
        ub
    }
}

pub fn smo_solve<T: Scalar>(
    kernel: &KernelMatrix<T>,
    c: T,
    tol: T,
    max_iter: usize,
) -> Result<DualSolution<T>, SvmError> {
    let n = kernel.size();
    if n == 0 {
        return Err(SvmError::TooFewSamples { found: 0 });
    }
    if !(c * T::of_usize(n) >= T::one()) {
        return Err(SvmError::InvalidParameter(format!(
            "box bound {c} x {n} points cannot hold unit mass"
        )));
    }

    // Feasible start: fill the first floor(1/C) points to the bound and put
    // the remainder on the next one.
    // Residues below `snap` are rounding noise and are treated as exact
    // bounds, so no point becomes "free" with a weight of 1e-17.
    let snap = c * T::of(1e-12);
    let mut alphas = vec![T::zero(); n];
    let mut remaining = T::one();
    for a in alphas.iter_mut() {
        if remaining <= snap {
            break;
        }
        let take = remaining.min(c);
        *a = take;
        remaining -= take;
    }

    let mut gradient = vec![T::zero(); n];
    for (i, &a) in alphas.iter().enumerate() {
        if a != T::zero() {
            for (g, &k) in gradient.iter_mut().zip(kernel.row(i)) {
                *g += a * k;
            }
        }
    }

    let tiny = T::of(1e-12);
    let mut iterations = 0usize;
    loop {
        // i: can grow (a_i < C), smallest gradient; j: can shrink (a_j > 0), largest.
        let mut up: Option<usize> = None;
        let mut low: Option<usize> = None;
        for k in 0..n {
            if alphas[k] < c && up.is_none_or(|i| gradient[k] < gradient[i]) {
                up = Some(k);
            }
            if alphas[k] > T::zero() && low.is_none_or(|j| gradient[k] > gradient[j]) {
                low = Some(k);
            }
        }
        let violation = match (up, low) {
            (Some(i), Some(j)) => gradient[j] - gradient[i],
            _ => T::zero(),
        };
        if violation < tol {
            let rho = offset_from(&alphas, &gradient, c);
            return Ok(DualSolution {
                alphas,
                gradient,
                rho,
                iterations,
                max_violation: violation.max(T::zero()),
            });
        }
        if iterations >= max_iter {
            return Err(SvmError::NotConverged {
                iterations,
                violation: violation.as_f64(),
            });
        }
        let (i, j) = (up.unwrap(), low.unwrap());

        let eta = (kernel.get(i, i) + kernel.get(j, j) - T::of(2.0) * kernel.get(i, j)).max(tiny);
        let (old_i, old_j) = (alphas[i], alphas[j]);
        let delta = (violation / eta).min(c - old_i).min(old_j);
        let mut new_i = old_i + delta;
        let mut new_j = old_j - delta;
        if c - new_i <= snap {
            new_i = c;
        }
        if new_j <= snap {
            new_j = T::zero();
        }
        alphas[i] = new_i;
        alphas[j] = new_j;

        let (grow, shrink) = (new_i - old_i, old_j - new_j);
        let (row_i, row_j) = (kernel.row(i), kernel.row(j));
        for ((g, &ki), &kj) in gradient.iter_mut().zip(row_i).zip(row_j) {
            *g += grow * ki - shrink * kj;
        }
        iterations += 1;
    }
}
