//! Cross-validated scoring and threshold selection.
//!
//! Each class gets its own one-class model per fold, trained on that class's
//! training split only. Every held-out sample of the fold, whatever its
//! class, is scored against every class model; the union over folds forms
//! the score matrix from which TPR/FPR and thresholds are derived.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::FeatureRow;
use crate::ocsvm::{decide, train, OneClassModel, SvmError, SvmParams, Verdict};

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_FPR_CAP: f64 = 0.01;
pub const MIN_LATENCY_PROBES: usize = 30;
const WARMUP_DECISIONS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("k-fold needs k >= 2, got {0}")]
    InvalidFolds(usize),
    #[error("class {label:?} has {found} samples, fewer than k = {k}")]
    TooFewSamples { label: String, found: usize, k: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("row {row} has {found} features, expected {expected}")]
    RaggedFeatures { row: usize, expected: usize, found: usize },
    #[error("training class {label:?} in fold {fold}: {source}")]
    Training {
        label: String,
        fold: usize,
        #[source]
        source: SvmError,
    },
    #[error("scoring: {0}")]
    Scoring(SvmError),
    #[error("score matrix is empty")]
    EmptyMatrix,
    #[error("threshold selection needs both positive and negative entries")]
    MissingPopulation,
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("no threshold for class {0:?}")]
    MissingThreshold(String),
    #[error("no threshold satisfies the FPR cap {0}")]
    NoFeasibleThreshold(f64),
    #[error("latency measurement needs at least {MIN_LATENCY_PROBES} probes, got {0}")]
    TooFewProbes(usize),
}

/// One train/test partition of a class's sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and cuts it into `k` test folds whose sizes
/// differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFolds(k));
    }
    if n < k {
        return Err(EvalError::TooFewSamples {
            label: String::new(),
            found: n,
            k,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test = order[start..start + size].to_vec();
        test.sort_unstable();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        train.sort_unstable();
        folds.push(Fold { train, test });
        start += size;
    }
    Ok(folds)
}

/// Seed for the fold split of class `class_index`.
pub fn class_split_seed(seed: u64, class_index: usize) -> u64 {
    seed ^ (class_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub trace_id: String,
    pub label: String,
    /// Fold in which this sample was held out.
    pub fold: usize,
    /// One score per class, in [`ScoreMatrix::classes`] order.
    pub scores: Vec<f64>,
}

/// Held-out scores: rows are samples, columns are class models.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub classes: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

impl ScoreMatrix {
    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn entry_count(&self) -> usize {
        self.rows.len() * self.classes.len()
    }

    /// `(score, is_positive)` for every row of column `col`.
    pub fn column(&self, col: usize) -> Vec<(f64, bool)> {
        let class = &self.classes[col];
        self.rows.iter().map(|r| (r.scores[col], &r.label == class)).collect()
    }

    /// Every entry as `(score, is_positive)`, row-major.
    pub fn entries(&self) -> Vec<(f64, bool)> {
        self.rows
            .iter()
            .flat_map(|r| {
                r.scores
                    .iter()
                    .zip(&self.classes)
                    .map(move |(&s, c)| (s, &r.label == c))
            })
            .collect()
    }

    /// `trace_id,true_label,<class...>` with one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trace_id,true_label");
        for c in &self.classes {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.trace_id, r.label);
            for s in &r.scores {
                let _ = write!(out, ",{s}");
            }
            out.push('\n');
        }
        out
    }
}

/// Rows of the corpus used to train one class model in one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub fold: usize,
    pub class: usize,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub matrix: ScoreMatrix,
    pub training_sets: Vec<TrainingSet>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub k: usize,
    pub svm: SvmParams,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_FOLDS,
            svm: SvmParams::default(),
            seed: 0,
        }
    }
}

/// Class labels in order of first appearance.
pub fn class_order(rows: &[FeatureRow]) -> Vec<String> {
    let mut classes: Vec<String> = Vec::new();
    for r in rows {
        if !classes.contains(&r.label) {
            classes.push(r.label.clone());
        }
    }
    classes
}

pub fn cross_validate(rows: &[FeatureRow], config: &CvConfig) -> Result<ScoreMatrix, EvalError> {
    cross_validate_detailed(rows, config).map(|cv| cv.matrix)
}

/// Cross-validation that also reports which rows trained each model.
pub fn cross_validate_detailed(rows: &[FeatureRow], config: &CvConfig) -> Result<CrossValidation, EvalError> {
    if config.k < 2 {
        return Err(EvalError::InvalidFolds(config.k));
    }
    let Some(first) = rows.first() else {
        return Err(EvalError::EmptyCorpus);
    };
    let dim = first.values.len();
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.values.len() != dim) {
        return Err(EvalError::RaggedFeatures {
            row,
            expected: dim,
            found: r.values.len(),
        });
    }

    let classes = class_order(rows);
    let members: Vec<Vec<usize>> = classes
        .iter()
        .map(|c| (0..rows.len()).filter(|&i| &rows[i].label == c).collect())
        .collect();

    // Per class: fold splits over the class's own members.
    let mut splits = Vec::with_capacity(classes.len());
    for (c, idx) in members.iter().enumerate() {
        let folds = kfold_split(idx.len(), config.k, class_split_seed(config.seed, c)).map_err(|_| {
            EvalError::TooFewSamples {
                label: classes[c].clone(),
                found: idx.len(),
                k: config.k,
            }
        })?;
        splits.push(folds);
    }

    let training_sets: Vec<TrainingSet> = (0..config.k)
        .flat_map(|fold| (0..classes.len()).map(move |class| (fold, class)))
        .map(|(fold, class)| TrainingSet {
            fold,
            class,
            rows: splits[class][fold].train.iter().map(|&i| members[class][i]).collect(),
        })
        .collect();

    let models: Vec<OneClassModel<f64>> = training_sets
        .par_iter()
        .map(|set| {
            let x = Array2::from_shape_fn((set.rows.len(), dim), |(i, j)| rows[set.rows[i]].values[j]);
            train(x.view(), &config.svm, classes[set.class].clone()).map_err(|source| EvalError::Training {
                label: classes[set.class].clone(),
                fold: set.fold,
                source,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut fold_of = vec![0usize; rows.len()];
    for (c, folds) in splits.iter().enumerate() {
        for (f, fold) in folds.iter().enumerate() {
            for &i in &fold.test {
                fold_of[members[c][i]] = f;
            }
        }
    }

    let n_classes = classes.len();
    let score_rows: Vec<ScoreRow> = rows
        .par_iter()
        .zip(fold_of.par_iter())
        .map(|(row, &fold)| {
            let scores = (0..n_classes)
                .map(|c| models[fold * n_classes + c].score_slice(&row.values))
                .collect::<Result<Vec<f64>, _>>()
                .map_err(EvalError::Scoring)?;
            Ok(ScoreRow {
                trace_id: row.source_id.clone(),
                label: row.label.clone(),
                fold,
                scores,
            })
        })
        .collect::<Result<_, EvalError>>()?;

    Ok(CrossValidation {
        matrix: ScoreMatrix {
            classes,
            rows: score_rows,
        },
        training_sets,
    })
}

/// Acceptance thresholds: one for every class, or one per class.
#[derive(Debug, Clone, PartialEq)]
pub enum Thresholds {
    Common(f64),
    PerClass(BTreeMap<String, f64>),
}

impl Thresholds {
    pub fn for_class(&self, label: &str) -> Option<f64> {
        match self {
            Thresholds::Common(t) => Some(*t),
            Thresholds::PerClass(m) => m.get(label).copied(),
        }
    }
}

/// TPR/FPR with the counts they came from; a rate over an empty population
/// is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
    pub true_positives: usize,
    pub false_positives: usize,
}

impl Rates {
    fn from_counts(positives: usize, negatives: usize, tp: usize, fp: usize) -> Self {
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        Self {
            tpr: ratio(tp, positives),
            fpr: ratio(fp, negatives),
            positives,
            negatives,
            true_positives: tp,
            false_positives: fp,
        }
    }

    /// Rates of `entries` accepted at `threshold`.
    pub fn at(entries: &[(f64, bool)], threshold: f64) -> Self {
        let (mut p, mut n, mut tp, mut fp) = (0, 0, 0, 0);
        for &(s, pos) in entries {
            let accepted = decide(s, threshold) == Verdict::Authorized;
            if pos {
                p += 1;
                tp += usize::from(accepted);
            } else {
                n += 1;
                fp += usize::from(accepted);
            }
        }
        Self::from_counts(p, n, tp, fp)
    }
}

/// An entry `(sample, class)` is positive when the sample's label is the
/// class; it is accepted when its score reaches the class threshold.
pub fn tpr_fpr(matrix: &ScoreMatrix, thresholds: &Thresholds) -> Result<Rates, EvalError> {
    if matrix.entry_count() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let per_col: Vec<f64> = matrix
        .classes
        .iter()
        .map(|c| thresholds.for_class(c).ok_or_else(|| EvalError::MissingThreshold(c.clone())))
        .collect::<Result<_, _>>()?;
    let (mut p, mut n, mut tp, mut fp) = (0, 0, 0, 0);
    for row in &matrix.rows {
        for (col, &s) in row.scores.iter().enumerate() {
            let accepted = decide(s, per_col[col]) == Verdict::Authorized;
            if row.label == matrix.classes[col] {
                p += 1;
                tp += usize::from(accepted);
            } else {
                n += 1;
                fp += usize::from(accepted);
            }
        }
    }
    Ok(Rates::from_counts(p, n, tp, fp))
}

/// Candidate thresholds in descending order: a value above every score,
/// then each distinct score and the midpoint below it.
pub fn candidate_thresholds(entries: &[(f64, bool)]) -> Vec<f64> {
    let mut scores: Vec<f64> = entries.iter().map(|e| e.0).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.dedup();
    let mut out = Vec::with_capacity(2 * scores.len() + 1);
    if let Some(&top) = scores.first() {
        out.push(top + top.abs().max(1.0));
    }
    for (i, &s) in scores.iter().enumerate() {
        out.push(s);
        if let Some(&next) = scores.get(i + 1) {
            out.push(s + (next - s) / 2.0);
        }
    }
    out
}

/// Highest-TPR threshold whose FPR stays within `fpr_cap`; among equal TPRs
/// the highest threshold wins.
pub fn select_threshold(entries: &[(f64, bool)], fpr_cap: f64) -> Result<(f64, Rates), EvalError> {
    let positives = entries.iter().filter(|e| e.1).count();
    let negatives = entries.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::MissingPopulation);
    }
    let mut sorted: Vec<(f64, bool)> = entries.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut best: Option<(f64, Rates)> = None;
    let (mut tp, mut fp, mut cursor) = (0usize, 0usize, 0usize);
    for t in candidate_thresholds(entries) {
        while cursor < sorted.len() && sorted[cursor].0 >= t {
            if sorted[cursor].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            cursor += 1;
        }
        if fp as f64 / negatives as f64 > fpr_cap {
            break;
        }
        if best.as_ref().is_none_or(|(_, r)| tp > r.true_positives) {
            best = Some((t, Rates::from_counts(positives, negatives, tp, fp)));
        }
    }
    best.ok_or(EvalError::NoFeasibleThreshold(fpr_cap))
}

/// One threshold shared by every class column.
pub fn best_common_threshold(matrix: &ScoreMatrix, fpr_cap: f64) -> Result<(f64, Rates), EvalError> {
    if matrix.entry_count() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    select_threshold(&matrix.entries(), fpr_cap)
}

/// Threshold chosen on the column of `label` alone.
pub fn per_class_threshold(matrix: &ScoreMatrix, label: &str, fpr_cap: f64) -> Result<(f64, Rates), EvalError> {
    let col = matrix
        .class_index(label)
        .ok_or_else(|| EvalError::UnknownClass(label.to_string()))?;
    select_threshold(&matrix.column(col), fpr_cap)
}

pub fn per_class_thresholds(matrix: &ScoreMatrix, fpr_cap: f64) -> Result<BTreeMap<String, f64>, EvalError> {
    matrix
        .classes
        .iter()
        .map(|c| per_class_threshold(matrix, c, fpr_cap).map(|(t, _)| (c.clone(), t)))
        .collect()
}

/// Wall-clock cost of one full decision (every model scored and compared).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyReport {
    pub mean_ms: f64,
    pub ci_low_ms: f64,
    pub ci_high_ms: f64,
    pub probes: usize,
    /// No models were given; nothing was timed.
    pub degenerate: bool,
}

/// Mean and 95% normal-approximation interval `mean ± 1.96 s / sqrt(n)`
/// with the sample standard deviation. Needs at least two samples.
pub fn normal_interval(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = 1.96 * (var / n).sqrt();
    (mean, mean - half, mean + half)
}

/// Times one decision per probe after a short warm-up and reports the mean
/// with a normal-approximation 95% confidence interval.
pub fn measure_decision_latency(
    models: &[OneClassModel<f64>],
    thresholds: &[f64],
    probes: &[Vec<f64>],
) -> Result<LatencyReport, EvalError> {
    if probes.len() < MIN_LATENCY_PROBES {
        return Err(EvalError::TooFewProbes(probes.len()));
    }
    if models.is_empty() {
        return Ok(LatencyReport {
            mean_ms: 0.0,
            ci_low_ms: 0.0,
            ci_high_ms: 0.0,
            probes: probes.len(),
            degenerate: true,
        });
    }
    let threshold = |i: usize| thresholds.get(i).or(thresholds.last()).copied().unwrap_or(0.0);
    let decide_all = |probe: &[f64]| -> Result<bool, EvalError> {
        let mut any = false;
        for (i, m) in models.iter().enumerate() {
            let s = m.score_slice(probe).map_err(EvalError::Scoring)?;
            any |= decide(s, threshold(i)) == Verdict::Authorized;
        }
        Ok(any)
    };

    for probe in probes.iter().cycle().take(WARMUP_DECISIONS) {
        black_box(decide_all(black_box(probe))?);
    }
    let mut times = Vec::with_capacity(probes.len());
    for probe in probes {
        let start = Instant::now();
        black_box(decide_all(black_box(probe))?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let (mean, low, high) = normal_interval(&times);
    Ok(LatencyReport {
        mean_ms: mean,
        ci_low_ms: low,
        ci_high_ms: high,
        probes: probes.len(),
        degenerate: false,
    })
}

/// Outcome of one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rates: Rates,
    pub thresholds: Thresholds,
    pub fold_count: usize,
    pub seed: u64,
    pub latency: Option<LatencyReport>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl EvaluationReport {
    /// Flat `key=value` block: tpr, fpr, threshold, k, seed, mean_ms,
    /// ci_low_ms, ci_high_ms. Per-class thresholds add `threshold.<label>`
    /// lines. Missing values print as `NA`.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tpr={}", fmt_opt(self.rates.tpr));
        let _ = writeln!(out, "fpr={}", fmt_opt(self.rates.fpr));
        match &self.thresholds {
            Thresholds::Common(t) => {
                let _ = writeln!(out, "threshold={t}");
            }
            Thresholds::PerClass(m) => {
                let _ = writeln!(out, "threshold=per_class");
                for (label, t) in m {
                    let _ = writeln!(out, "threshold.{label}={t}");
                }
            }
        }
        let _ = writeln!(out, "k={}", self.fold_count);
        let _ = writeln!(out, "seed={}", self.seed);
        let lat = self.latency.filter(|l| !l.degenerate);
        let _ = writeln!(out, "mean_ms={}", fmt_opt(lat.map(|l| l.mean_ms)));
        let _ = writeln!(out, "ci_low_ms={}", fmt_opt(lat.map(|l| l.ci_low_ms)));
        let _ = writeln!(out, "ci_high_ms={}", fmt_opt(lat.map(|l| l.ci_high_ms)));
        out
    }
}
