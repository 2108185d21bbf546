//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! and then asserts. Tests take a shared lock so the wall-clock budgets are
//! measured without interference from one another.

use std::sync::Mutex;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use emf_core::evaluation::{
    best_common_threshold, cross_validate, measure_decision_latency, per_class_threshold, CvConfig,
    EvaluationReport, Thresholds,
};
use emf_core::features::{
    extract_features, normalize, write_feature_csv, FeatureRow, RegionLayout, BRAND_WINDOW_MS, UNIT_WINDOW_MS,
};
use emf_core::ocsvm::{decide, fit, train, OneClassModel, SvmParams};
use emf_core::pipeline::{corpus_features, trace_features, PipelineConfig};
use emf_core::ranking::{evaluate_subset, evaluate_top_k, rank_features, random_subset, top_k_table_csv, RankMethod};
use emf_core::registry::{load_all, store_profile, DeviceProfile};
use emf_core::synth::CorpusSpec;
use emf_core::trace::{InstrumentFormat, SpectralSample, SpectralTrace};

static SERIAL: Mutex<()> = Mutex::new(());

/// Width multiplier used by the end-to-end scenarios (see README).
const SCENARIO_GAMMA_SCALE: f64 = 0.1;
const CORPUS_SEED: u64 = 1;

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {id} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn scenario_cv() -> CvConfig {
    let mut cv = CvConfig {
        k: 10,
        seed: CORPUS_SEED,
        ..Default::default()
    };
    cv.svm.gamma_scale = SCENARIO_GAMMA_SCALE;
    cv
}

fn brand_rows() -> (PipelineConfig, Vec<FeatureRow>) {
    let spec = CorpusSpec::brand_models(CORPUS_SEED);
    let config = PipelineConfig::new(RegionLayout::standard(BRAND_WINDOW_MS, &spec.instrument));
    let rows = corpus_features(&spec, &config).expect("brand corpus features");
    (config, rows)
}

// ---------------------------------------------------------------------------
// 1. Feature extraction against a naive recomputation.

fn naive_moments(x: &[f64]) -> [f64; 5] {
    let n = x.len() as f64;
    let mut sum = 0.0;
    for v in x {
        sum += v;
    }
    let mean = sum / n;
    if x.iter().all(|&v| v == x[0]) {
        return [mean, 0.0, 0.0, 0.0, 0.0];
    }
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        m2 += d.powi(2);
        m3 += d.powi(3);
        m4 += d.powi(4);
    }
    let var = if x.len() > 1 { m2 / (n - 1.0) } else { 0.0 };
    let skew = (m3 / n) / (m2 / (n - 1.0)).powf(1.5);
    let kurt = m4 / (m2 * m2 / n);
    [mean, var.sqrt(), var, skew, kurt]
}

fn naive_features(trace: &SpectralTrace, layout: &RegionLayout) -> Vec<f64> {
    let powers: Vec<f64> = trace.samples().iter().map(|s| s.power_dbm).collect();
    let lo = powers.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = powers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let norm: Vec<f64> = powers
        .iter()
        .map(|p| if hi > lo { (p - lo) / (hi - lo) } else { 0.0 })
        .collect();

    let (t_n, f_n) = (layout.time_splits, layout.frequency_splits);
    let t_edge = |r: usize| {
        if r == t_n {
            layout.window_ms
        } else {
            layout.window_ms * r as f64 / t_n as f64
        }
    };
    let span = layout.stop_hz - layout.start_hz;
    let f_edge = |c: usize| {
        if c == f_n {
            layout.stop_hz
        } else {
            layout.start_hz + span * c as f64 / f_n as f64
        }
    };
    let in_time = |t: f64, r: usize| t >= t_edge(r) && t < t_edge(r + 1);
    let in_freq = |f: f64, c: usize| f >= f_edge(c) && (f < f_edge(c + 1) || (c + 1 == f_n && f <= layout.stop_hz));

    let mut out = Vec::new();
    let mut push = |sel: Vec<f64>| {
        if sel.is_empty() {
            out.extend_from_slice(&[0.0; 5]);
        } else {
            out.extend_from_slice(&naive_moments(&sel));
        }
    };
    push(norm.clone());
    for r in 0..t_n {
        push(
            trace
                .samples()
                .iter()
                .zip(&norm)
                .filter(|(s, _)| in_time(s.timestamp_ms, r))
                .map(|(_, &v)| v)
                .collect(),
        );
    }
    for r in 0..t_n {
        for c in 0..f_n {
            push(
                trace
                    .samples()
                    .iter()
                    .zip(&norm)
                    .filter(|(s, _)| in_time(s.timestamp_ms, r) && in_freq(s.frequency_hz, c))
                    .map(|(_, &v)| v)
                    .collect(),
            );
        }
    }
    out
}

fn random_trace(rng: &mut ChaCha8Rng) -> (SpectralTrace, RegionLayout) {
    let start_hz: f64 = rng.random_range(0.0..5e6);
    let stop_hz = start_hz + rng.random_range(1e5..2e7);
    let format = InstrumentFormat::new("random", start_hz, stop_hz, 1e3).unwrap();
    let points = rng.random_range(1..=64);
    let sweep_ms: f64 = rng.random_range(0.5..10.0);
    let window_ms: f64 = rng.random_range(50.0..1500.0);
    let sweeps = ((window_ms / sweep_ms).ceil() as usize).max(1);
    let layout = RegionLayout::new(
        window_ms,
        start_hz,
        stop_hz,
        rng.random_range(1..=6),
        rng.random_range(1..=20),
    )
    .unwrap();
    let level: f64 = rng.random_range(-100.0..-20.0);
    let spread: f64 = rng.random_range(0.0..15.0);
    let mut samples = Vec::new();
    for k in 0..sweeps {
        let t = k as f64 * sweep_ms;
        if t >= window_ms {
            break;
        }
        for j in 0..points {
            let f = if points == 1 {
                start_hz
            } else if j + 1 == points {
                stop_hz
            } else {
                start_hz + (stop_hz - start_hz) * j as f64 / (points - 1) as f64
            };
            let z: f64 = StandardNormal.sample(rng);
            samples.push(SpectralSample::new(t, f, level + spread * z));
        }
    }
    // Occasionally a flat trace, exercising the degenerate statistics.
    if rng.random_bool(0.05) {
        for s in &mut samples {
            s.power_dbm = level;
        }
    }
    (SpectralTrace::new(samples, format, None, "random").unwrap(), layout)
}

#[test]
fn feature_extraction_matches_naive_recomputation() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xFEA7);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let (trace, layout) = random_trace(&mut rng);
        let fast = extract_features(&normalize::<f64>(&trace), &layout).unwrap();
        let slow = naive_features(&trace, &layout);
        assert_eq!(fast.values.len(), slow.len());
        assert_eq!(fast.values.len(), 5 * (1 + layout.time_splits + layout.time_splits * layout.frequency_splits));
        for (a, b) in fast.values.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-10 && elapsed < 10.0;
    report(
        1,
        "feature oracle equivalence",
        pass,
        &format!("100 traces, max abs error {worst:.3e}, {elapsed:.2} s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 2. SMO against a dense projected-gradient solver.

/// Euclidean projection onto `{0 <= a_i <= c, sum a = 1}` by bisection on
/// the shift.
fn project_capped_simplex(v: &[f64], c: f64) -> Vec<f64> {
    let mass = |shift: f64| v.iter().map(|&x| (x - shift).clamp(0.0, c)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - c - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let shift = 0.5 * (lo + hi);
    v.iter().map(|&x| (x - shift).clamp(0.0, c)).collect()
}

/// Accelerated projected gradient on `1/2 a'Ka` over the capped simplex.
fn dense_reference(k: &Array2<f64>, c: f64) -> Vec<f64> {
    let n = k.nrows();
    let lipschitz = k.rows().into_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let mut x = project_capped_simplex(&vec![1.0 / n as f64; n], c);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    for _ in 0..200_000 {
        let grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[[i, j]] * y[j]).sum()).collect();
        let step_pt: Vec<f64> = y.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
        let next = project_capped_simplex(&step_pt, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let moved: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        y = next.iter().zip(&x).map(|(a, b)| a + (t - 1.0) / t_next * (a - b)).collect();
        x = next;
        t = t_next;
        if moved < 1e-15 {
            break;
        }
    }
    x
}

fn dense_objective(k: &Array2<f64>, a: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[i] * k[[i, j]] * a[j];
        }
    }
    0.5 * s
}

/// Offset from a reference solution: mean gradient over clearly free
/// points, else the midpoint of the feasible interval.
fn reference_offset(a: &[f64], g: &[f64], c: f64) -> f64 {
    let eps = 1e-7;
    let free: Vec<f64> = (0..a.len()).filter(|&i| a[i] > eps && a[i] < c - eps).map(|i| g[i]).collect();
    if !free.is_empty() {
        return free.iter().sum::<f64>() / free.len() as f64;
    }
    let ub = (0..a.len()).filter(|&i| a[i] <= eps).map(|i| g[i]).fold(f64::INFINITY, f64::min);
    let lb = (0..a.len()).filter(|&i| a[i] >= c - eps).map(|i| g[i]).fold(f64::NEG_INFINITY, f64::max);
    match (ub.is_finite(), lb.is_finite()) {
        (true, true) => 0.5 * (ub + lb),
        (true, false) => ub,
        _ => lb,
    }
}

/// Every training point satisfies the one-class KKT conditions at `tol`.
fn kkt_holds(model: &OneClassModel<f64>, x: &Array2<f64>, alphas: &[f64], c: f64, tol: f64) -> bool {
    x.axis_iter(Axis(0)).zip(alphas).all(|(row, &a)| {
        let s = model.score(row).unwrap();
        if a == 0.0 {
            s >= -tol
        } else if a == c {
            s <= tol
        } else {
            s.abs() <= tol
        }
    })
}

#[test]
fn smo_matches_dense_reference() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5E0);
    let (mut worst_obj, mut worst_score) = (0.0_f64, 0.0_f64);
    let mut kkt_ok = true;
    for _ in 0..20 {
        let n = rng.random_range(4..=20);
        let d = rng.random_range(1..=3);
        let x = Array2::from_shape_fn((n, d), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let params = SvmParams {
            nu: [0.1, 0.25, 0.5, 0.8, 1.0][rng.random_range(0..5)],
            gamma: Some(rng.random_range(0.1..2.0)),
            ..Default::default()
        };
        // Default tolerance: the KKT certificate. Tight tolerance: the
        // oracle comparison, whose bounds are finer than 1e-4.
        let (loose, loose_fit) = fit(x.view(), &params, "p").unwrap();
        kkt_ok &= kkt_holds(&loose, &x, &loose_fit.alphas, loose_fit.box_bound, 1e-4);
        let tight_params = SvmParams { tol: 1e-8, ..params };
        let (model, fitted) = fit(x.view(), &tight_params, "p").unwrap();
        let c = fitted.box_bound;

        let z = model.standardizer.transform(x.view());
        let gamma = model.gamma;
        let k = Array2::from_shape_fn((n, n), |(i, j)| {
            let d2: f64 = z.row(i).iter().zip(z.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
            (-gamma * d2).exp()
        });
        let reference = dense_reference(&k, c);
        let ref_grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[[i, j]] * reference[j]).sum()).collect();
        let ref_rho = reference_offset(&reference, &ref_grad, c);

        let og = (dense_objective(&k, &fitted.alphas) - dense_objective(&k, &reference)).abs();
        worst_obj = worst_obj.max(og);
        let mut sg = 0.0_f64;
        for i in 0..n {
            let s = model.score(x.row(i)).unwrap();
            sg = sg.max((s - (ref_grad[i] - ref_rho)).abs());
        }
        worst_score = worst_score.max(sg);
        kkt_ok &= kkt_holds(&model, &x, &fitted.alphas, c, 1e-4);
    }
    let pass = worst_obj <= 1e-6 && worst_score <= 1e-5 && kkt_ok;
    report(
        2,
        "SMO correctness",
        pass,
        &format!(
            "20 problems, tol 1e-8 vs reference: objective gap {worst_obj:.2e}, score gap {worst_score:.2e}; KKT at 1e-4 on all fits: {kkt_ok}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 3. Margin-error and support-vector fractions.

#[test]
fn nu_bounds_training_fractions() {
    let _g = serial();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_deficit = f64::NEG_INFINITY;
    for nu in [0.05, 0.1, 0.3] {
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let x = Array2::from_shape_fn((100, 3), |_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            });
            let params = SvmParams { nu, ..Default::default() };
            let (model, fitted) = fit(x.view(), &params, "g").unwrap();
            // Margin support vectors sit at score 0 only up to the solver
            // tolerance; a margin error lies beyond it.
            let errors = x
                .axis_iter(Axis(0))
                .filter(|r| model.score(*r).unwrap() < -params.tol)
                .count();
            let svs = fitted.alphas.iter().filter(|&&a| a > 0.0).count();
            worst_excess = worst_excess.max(errors as f64 / 100.0 - nu);
            worst_deficit = worst_deficit.max(nu - svs as f64 / 100.0);
        }
    }
    let pass = worst_excess <= 0.02 && worst_deficit <= 0.02;
    report(
        3,
        "nu-property",
        pass,
        &format!(
            "150 fits, max(margin errors - nu) = {worst_excess:+.3}, max(nu - SV fraction) = {worst_deficit:+.3}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 4. Brand-model scenario.

#[test]
fn brand_scenario_common_threshold() {
    let _g = serial();
    let start = Instant::now();
    let (config, rows) = brand_rows();
    assert_eq!(rows.len(), 170);
    assert_eq!(config.layout.feature_count(), 325);
    let matrix = cross_validate(&rows, &scenario_cv()).unwrap();
    let (threshold, rates) = best_common_threshold(&matrix, 0.01).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let tpr = rates.tpr.unwrap();
    let fpr = rates.fpr.unwrap();
    let pass = tpr >= 0.95 && fpr <= 0.01 && elapsed < 120.0;
    report(
        4,
        "brand-model end-to-end",
        pass,
        &format!("17x10 traces, 325 features, T={threshold:.4}, TPR={tpr:.4}, FPR={fpr:.4}, {elapsed:.1} s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 5. Same-model scenario.

#[test]
fn unit_scenario_per_class_thresholds() {
    let _g = serial();
    let start = Instant::now();
    let spec = CorpusSpec::same_model_units(CORPUS_SEED);
    let config = PipelineConfig::new(RegionLayout::standard(UNIT_WINDOW_MS, &spec.instrument));
    let rows = corpus_features(&spec, &config).unwrap();
    assert_eq!(rows.len(), 150);
    let matrix = cross_validate(&rows, &scenario_cv()).unwrap();
    let mut tprs = Vec::new();
    let mut max_fpr = 0.0_f64;
    for class in &matrix.classes {
        let (_, r) = per_class_threshold(&matrix, class, 0.05).unwrap();
        tprs.push(r.tpr.unwrap());
        max_fpr = max_fpr.max(r.fpr.unwrap());
    }
    let mean_tpr = tprs.iter().sum::<f64>() / tprs.len() as f64;
    let elapsed = start.elapsed().as_secs_f64();
    let pass = mean_tpr >= 0.85 && max_fpr <= 0.05 && elapsed < 120.0;
    report(
        5,
        "same-model end-to-end",
        pass,
        &format!("15x10 traces, mean per-class TPR={mean_tpr:.4}, max per-class FPR={max_fpr:.4}, {elapsed:.1} s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 6. Decision latency.

fn train_all(rows: &[FeatureRow], params: &SvmParams) -> Vec<OneClassModel<f64>> {
    let classes = emf_core::evaluation::class_order(rows);
    classes
        .iter()
        .map(|c| {
            let members: Vec<&FeatureRow> = rows.iter().filter(|r| &r.label == c).collect();
            let d = members[0].values.len();
            let x = Array2::from_shape_fn((members.len(), d), |(i, j)| members[i].values[j]);
            train(x.view(), params, c.clone()).unwrap()
        })
        .collect()
}

#[test]
fn decision_latency_with_seventeen_profiles() {
    let _g = serial();
    let (_, rows) = brand_rows();
    let models = train_all(&rows, &scenario_cv().svm);
    assert_eq!(models.len(), 17);
    let probes: Vec<Vec<f64>> = rows.iter().map(|r| r.values.clone()).collect();
    let lat = measure_decision_latency(&models, &[0.0], &probes).unwrap();
    let pass = lat.mean_ms < 50.0 && !lat.degenerate;
    report(
        6,
        "decision latency",
        pass,
        &format!(
            "17 profiles, {} probes, mean {:.4} ms, 95% CI [{:.4}, {:.4}] ms",
            lat.probes, lat.mean_ms, lat.ci_low_ms, lat.ci_high_ms
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 7. Feature-reduction trend.

#[test]
fn ranked_features_beat_random_subsets() {
    let _g = serial();
    let (_, rows) = brand_rows();
    let cv = scenario_cv();
    let ranked = rank_features(&rows, RankMethod::Mim, 8, 325).unwrap();
    let table = evaluate_top_k(&rows, &ranked, &[10, 20, 50, 100, 200, 300, 325], &cv, 0.01).unwrap();
    print!("{}", top_k_table_csv(&table));
    let tpr_at = |k: usize| table.iter().find(|r| r.k == k).unwrap().rates.tpr.unwrap();

    let random_mean = (0..10u64)
        .map(|s| {
            evaluate_subset(&rows, &random_subset(325, 20, s), &cv, 0.01)
                .unwrap()
                .rates
                .tpr
                .unwrap()
        })
        .sum::<f64>()
        / 10.0;
    let pass = tpr_at(20) > random_mean && tpr_at(325) >= tpr_at(10);
    report(
        7,
        "feature-reduction trend",
        pass,
        &format!(
            "TPR ranked k=20 {:.4} vs random-20 mean {random_mean:.4}; k=325 {:.4} vs k=10 {:.4}",
            tpr_at(20),
            tpr_at(325),
            tpr_at(10)
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 8. Determinism and persistence.

fn full_run() -> (String, String, String) {
    let (config, rows) = brand_rows();
    let cv = scenario_cv();
    let matrix = cross_validate(&rows, &cv).unwrap();
    let (threshold, rates) = best_common_threshold(&matrix, 0.01).unwrap();
    let summary = EvaluationReport {
        rates,
        thresholds: Thresholds::Common(threshold),
        fold_count: cv.k,
        seed: cv.seed,
        latency: None,
    }
    .summary();
    (write_feature_csv(&config.layout, &rows), matrix.to_csv(), summary)
}

#[test]
fn pipeline_is_deterministic_and_profiles_round_trip() {
    let _g = serial();
    let first = full_run();
    let second = full_run();
    let identical = first == second;

    let (config, rows) = brand_rows();
    let models = train_all(&rows, &scenario_cv().svm);
    let dir = tempfile::tempdir().unwrap();
    let created = chrono::DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z").unwrap().to_utc();
    for m in &models {
        let ids = rows.iter().filter(|r| r.label == m.class_label).map(|r| r.source_id.clone()).collect();
        let profile = DeviceProfile::new(
            m.clone(),
            config.layout.clone(),
            CorpusSpec::brand_models(CORPUS_SEED).instrument,
            created,
            ids,
        );
        store_profile(dir.path(), &profile, false).unwrap();
    }
    let loaded = load_all(dir.path()).unwrap();
    let mut bit_identical = loaded.len() == models.len();
    for p in &loaded {
        let original = models.iter().find(|m| m.class_label == p.class_label).unwrap();
        for r in &rows {
            let a = original.score_slice(&r.values).unwrap();
            let b = p.model.score_slice(&r.values).unwrap();
            bit_identical &= a.to_bits() == b.to_bits();
        }
    }
    let pass = identical && bit_identical;
    report(
        8,
        "determinism and persistence",
        pass,
        &format!(
            "two runs byte-identical: {identical} ({} + {} + {} bytes); {} profiles reload with bit-identical scores: {bit_identical}",
            first.0.len(),
            first.1.len(),
            first.2.len(),
            loaded.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 9. Affine invariance of the whole pipeline.

#[test]
fn affine_power_maps_leave_results_unchanged() {
    let _g = serial();
    let spec = CorpusSpec::brand_models(CORPUS_SEED);
    let config = PipelineConfig::new(RegionLayout::standard(BRAND_WINDOW_MS, &spec.instrument));
    let (_, rows) = brand_rows();
    let models = train_all(&rows, &scenario_cv().svm);
    let items = spec.items();
    let thresholds = [-0.3, -0.1, 0.0];

    // Powers on a 1/64 dB grid: every affine image below is exact, so the
    // pipeline must agree bit for bit.
    let exact_maps: [(f64, f64); 4] = [(2.0, -20.0), (0.5, 7.25), (3.0, -11.5), (4.0, 0.015625)];
    // Arbitrary reals: agreement up to rounding, identical verdicts.
    let real_maps: [(f64, f64); 3] = [(1.7, -13.3), (0.31, 42.0), (11.0, -0.9)];

    let (mut exact_ok, mut verdicts_ok) = (true, true);
    let mut worst_rel = 0.0_f64;
    let mut checked = 0;
    for item in items.iter().step_by(10) {
        let trace = spec.synthesize(item).unwrap().map_power(|p| (p * 64.0).round() / 64.0);
        let base = trace_features::<f64>(&trace, &config).unwrap().values;
        let base_scores: Vec<f64> = models.iter().map(|m| m.score_slice(&base).unwrap()).collect();
        for &(a, b) in &exact_maps {
            let mapped = trace_features::<f64>(&trace.map_power(|p| a * p + b), &config).unwrap().values;
            exact_ok &= mapped.iter().zip(&base).all(|(x, y)| x.to_bits() == y.to_bits());
            for (m, s) in models.iter().zip(&base_scores) {
                exact_ok &= m.score_slice(&mapped).unwrap().to_bits() == s.to_bits();
            }
        }
        let raw = spec.synthesize(item).unwrap();
        let raw_base = trace_features::<f64>(&raw, &config).unwrap().values;
        for &(a, b) in &real_maps {
            let mapped = trace_features::<f64>(&raw.map_power(|p| a * p + b), &config).unwrap().values;
            for (x, y) in mapped.iter().zip(&raw_base) {
                worst_rel = worst_rel.max((x - y).abs() / y.abs().max(1.0));
            }
            for m in &models {
                let (s0, s1) = (m.score_slice(&raw_base).unwrap(), m.score_slice(&mapped).unwrap());
                verdicts_ok &= thresholds.iter().all(|&t| decide(s0, t) == decide(s1, t));
            }
        }
        checked += 1;
    }
    let pass = exact_ok && verdicts_ok && worst_rel <= 1e-9;
    report(
        9,
        "affine invariance",
        pass,
        &format!(
            "{checked} traces; grid-exact maps bit-identical: {exact_ok}; real maps max rel. feature diff {worst_rel:.2e}, verdicts identical: {verdicts_ok}"
        ),
    );
    assert!(pass);
}
