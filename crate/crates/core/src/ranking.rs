//! Mutual-information feature ranking and top-k re-evaluation.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::evaluation::{best_common_threshold, class_order, cross_validate, CvConfig, EvalError, Rates};
use crate::features::FeatureRow;

pub const DEFAULT_BINS: usize = 8;
/// Upper bound on the cell count of a pairwise joint variable.
pub const MAX_JOINT_CELLS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("discretization needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("k = {k} exceeds the feature count {features}")]
    KTooLarge { k: usize, features: usize },
    #[error("no samples to rank")]
    Empty,
    #[error("row {row} has {found} features, expected {expected}")]
    RaggedFeatures { row: usize, expected: usize, found: usize },
    #[error("malformed ranking file line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RankMethod {
    /// Marginal relevance `I(f; y)`.
    Mim,
    /// Greedy joint relevance `sum_s I((f, f_s); y)` over already selected `s`.
    Jmi,
}

impl RankMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RankMethod::Mim => "mim",
            RankMethod::Jmi => "jmi",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mim" => Some(RankMethod::Mim),
            "jmi" => Some(RankMethod::Jmi),
            _ => None,
        }
    }
}

/// Top-k selection in rank order. `scores[i]` is the criterion value of
/// `ordering[i]` at the moment it was selected.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedFeatures {
    pub ordering: Vec<usize>,
    pub scores: Vec<f64>,
    pub method: RankMethod,
    pub bins: usize,
}

impl RankedFeatures {
    /// First `k` selected indices, ascending.
    pub fn top(&self, k: usize) -> Vec<usize> {
        let mut idx = self.ordering[..k.min(self.ordering.len())].to_vec();
        idx.sort_unstable();
        idx
    }

    /// `rank,feature_index,feature_name,score` with `names` looked up by index.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("rank,feature_index,feature_name,score\n");
        for (r, (&f, s)) in self.ordering.iter().zip(&self.scores).enumerate() {
            let name = names.get(f).map_or("", String::as_str);
            let _ = writeln!(out, "{},{f},{name},{s}", r + 1);
        }
        out
    }
}

/// Feature indices listed in a ranking file, in file order.
pub fn read_ranking_csv(reader: impl BufRead) -> Result<Vec<usize>, RankError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| RankError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let line = line.trim();
        if i == 0 || line.is_empty() {
            continue;
        }
        let field = line.split(',').nth(1).ok_or_else(|| RankError::Malformed {
            line: i + 1,
            reason: "missing feature_index column".into(),
        })?;
        out.push(field.trim().parse().map_err(|_| RankError::Malformed {
            line: i + 1,
            reason: format!("bad feature index {field:?}"),
        })?);
    }
    Ok(out)
}

/// Equal-frequency binning by rank: the sample at sorted position `r` goes
/// to bin `r * bins / n`. Tied values share the bin of their first position,
/// so a constant vector maps entirely to bin 0.
pub fn discretize(values: &[f64], bins: usize) -> Result<Vec<usize>, RankError> {
    if bins < 2 {
        return Err(RankError::TooFewBins(bins));
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    let mut bin = 0;
    for (r, &i) in order.iter().enumerate() {
        if r == 0 || values[i] != values[order[r - 1]] {
            bin = r * bins / n;
        }
        out[i] = bin;
    }
    Ok(out)
}

/// Plug-in mutual information in nats between two discrete variables.
pub fn mutual_information(x: &[usize], y: &[usize]) -> f64 {
    assert_eq!(x.len(), y.len(), "mutual information needs equal lengths");
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let nx = x.iter().max().map_or(0, |m| m + 1);
    let ny = y.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; nx * ny];
    let mut px = vec![0usize; nx];
    let mut py = vec![0usize; ny];
    for (&a, &b) in x.iter().zip(y) {
        joint[a * ny + b] += 1;
        px[a] += 1;
        py[b] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for a in 0..nx {
        for b in 0..ny {
            let c = joint[a * ny + b];
            if c > 0 {
                let pxy = c as f64 / nf;
                mi += pxy * ((c as f64 * nf) / (px[a] as f64 * py[b] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Empirical entropy in nats.
pub fn entropy(x: &[usize]) -> f64 {
    mutual_information(x, x)
}

/// Codes of the pair `(a, b)`, each side coarsened so the product has at most
/// [`MAX_JOINT_CELLS`] cells.
pub fn joint_codes(a: &[usize], b: &[usize], bins: usize) -> Vec<usize> {
    let side = (MAX_JOINT_CELLS as f64).sqrt() as usize;
    let levels = bins.min(side);
    let coarse = |v: usize| v * levels / bins;
    a.iter().zip(b).map(|(&p, &q)| coarse(p) * levels + coarse(q)).collect()
}

/// Class codes in order of first label appearance.
pub fn label_codes(rows: &[FeatureRow]) -> Vec<usize> {
    let classes = class_order(rows);
    rows.iter()
        .map(|r| classes.iter().position(|c| c == &r.label).unwrap_or(0))
        .collect()
}

fn discretize_columns(rows: &[FeatureRow], bins: usize) -> Result<Vec<Vec<usize>>, RankError> {
    let d = rows.first().ok_or(RankError::Empty)?.values.len();
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.values.len() != d) {
        return Err(RankError::RaggedFeatures {
            row,
            expected: d,
            found: r.values.len(),
        });
    }
    (0..d)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r.values[j]).collect();
            discretize(&col, bins)
        })
        .collect()
}

/// Index of the largest score, lower index on ties.
fn argmax(candidates: &[usize], score: impl Fn(usize) -> f64) -> (usize, f64) {
    let mut best = (candidates[0], score(candidates[0]));
    for &c in &candidates[1..] {
        let s = score(c);
        if s > best.1 || (s == best.1 && c < best.0) {
            best = (c, s);
        }
    }
    best
}

pub fn rank_features(rows: &[FeatureRow], method: RankMethod, bins: usize, k: usize) -> Result<RankedFeatures, RankError> {
    let columns = discretize_columns(rows, bins)?;
    let d = columns.len();
    if k > d {
        return Err(RankError::KTooLarge { k, features: d });
    }
    let labels = label_codes(rows);
    let relevance: Vec<f64> = columns.par_iter().map(|c| mutual_information(c, &labels)).collect();

    let (ordering, scores) = match method {
        RankMethod::Mim => {
            let mut idx: Vec<usize> = (0..d).collect();
            idx.sort_by(|&a, &b| relevance[b].total_cmp(&relevance[a]).then(a.cmp(&b)));
            idx.truncate(k);
            let scores = idx.iter().map(|&i| relevance[i]).collect();
            (idx, scores)
        }
        RankMethod::Jmi => {
            let mut ordering = Vec::with_capacity(k);
            let mut scores = Vec::with_capacity(k);
            let mut remaining: Vec<usize> = (0..d).collect();
            let mut joint_sum = vec![0.0; d];
            if k > 0 {
                let (first, s) = argmax(&remaining, |i| relevance[i]);
                ordering.push(first);
                scores.push(s);
                remaining.retain(|&i| i != first);
            }
            while ordering.len() < k {
                let last = *ordering.last().unwrap();
                let gains: Vec<f64> = remaining
                    .par_iter()
                    .map(|&i| mutual_information(&joint_codes(&columns[i], &columns[last], bins), &labels))
                    .collect();
                for (&i, g) in remaining.iter().zip(gains) {
                    joint_sum[i] += g;
                }
                let (next, s) = argmax(&remaining, |i| joint_sum[i]);
                ordering.push(next);
                scores.push(s);
                remaining.retain(|&i| i != next);
            }
            (ordering, scores)
        }
    };
    Ok(RankedFeatures {
        ordering,
        scores,
        method,
        bins,
    })
}

/// Copies of `rows` keeping only the columns in `indices`, in that order.
pub fn select_features(rows: &[FeatureRow], indices: &[usize]) -> Vec<FeatureRow> {
    rows.iter()
        .map(|r| FeatureRow {
            source_id: r.source_id.clone(),
            label: r.label.clone(),
            values: indices.iter().map(|&j| r.values[j]).collect(),
        })
        .collect()
}

/// `k` distinct indices below `d`, ascending, drawn uniformly with `seed`.
pub fn random_subset(d: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), d, k).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopKRow {
    pub k: usize,
    pub threshold: f64,
    pub rates: Rates,
}

/// Cross-validated common-threshold result on one column subset.
pub fn evaluate_subset(rows: &[FeatureRow], indices: &[usize], cv: &CvConfig, fpr_cap: f64) -> Result<TopKRow, RankError> {
    let matrix = cross_validate(&select_features(rows, indices), cv)?;
    let (threshold, rates) = best_common_threshold(&matrix, fpr_cap)?;
    Ok(TopKRow {
        k: indices.len(),
        threshold,
        rates,
    })
}

/// Re-runs cross-validation and threshold selection on the top `k` ranked
/// features for each `k`. Columns keep their original relative order, so
/// `k = d` reproduces the full-feature evaluation.
pub fn evaluate_top_k(
    rows: &[FeatureRow],
    ranked: &RankedFeatures,
    k_values: &[usize],
    cv: &CvConfig,
    fpr_cap: f64,
) -> Result<Vec<TopKRow>, RankError> {
    let available = ranked.ordering.len();
    if let Some(&k) = k_values.iter().find(|&&k| k > available) {
        return Err(RankError::KTooLarge { k, features: available });
    }
    k_values
        .iter()
        .map(|&k| evaluate_subset(rows, &ranked.top(k), cv, fpr_cap))
        .collect()
}

fn fmt_rate(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// `k,threshold,tpr,fpr` table.
pub fn top_k_table_csv(rows: &[TopKRow]) -> String {
    let mut out = String::from("k,threshold,tpr,fpr\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.k, r.threshold, fmt_rate(r.rates.tpr), fmt_rate(r.rates.fpr));
    }
    out
}
