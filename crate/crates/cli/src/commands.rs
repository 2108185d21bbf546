use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use chrono::Utc;
use emf_core::evaluation::{
    best_common_threshold, candidate_thresholds, class_order, cross_validate, measure_decision_latency,
    per_class_thresholds, tpr_fpr, CvConfig, EvalError, EvaluationReport, Rates, Thresholds, MIN_LATENCY_PROBES,
};
use emf_core::features::{self, normalize, write_feature_csv, write_heatmap_csv, FeatureRow, RegionLayout};
use emf_core::ocsvm::{decide, Verdict};
use emf_core::pipeline::{trace_features, train_on_rows};
use emf_core::ranking::{
    evaluate_subset, rank_features, read_ranking_csv, select_features, top_k_table_csv, RankError, RankMethod,
};
use emf_core::registry::{load_all, store_profile, DeviceProfile, RegistryError};
use emf_core::synth::{write_corpus, CorpusSpec};
use emf_core::trace::{detect_boot_onset, window_trace};

use crate::args::{ClassifyArgs, EvaluateArgs, ExtractArgs, HeatmapArgs, Method, Preset, RankArgs, SynthArgs, TrainArgs};
use crate::input::{base_format, collect_traces, extract_rows, Extracted, layout_for, load_rows, pipeline_config, read_trace};
use crate::{Failure, Log};

type Outcome = Result<u8, Failure>;

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Training { .. } => Failure::training(e.to_string()),
        _ => Failure::input(e.to_string()),
    }
}

fn rank_failure(e: RankError) -> Failure {
    match e {
        RankError::Eval(inner) => eval_failure(inner),
        _ => Failure::input(e.to_string()),
    }
}

pub fn train(args: TrainArgs, log: &Log) -> Outcome {
    let params = args.svm.params();
    params.validate().map_err(|e| Failure::input(e.to_string()))?;
    if args.label.is_empty() {
        return Err(Failure::input("label must not be empty"));
    }
    let inputs = collect_traces(&args.traces)?;
    if inputs.len() < 2 {
        return Err(Failure::training(format!("need ≥ 2 traces, found {}", inputs.len())));
    }
    if !args.replace && load_all(&args.registry).is_ok_and(|ps| ps.iter().any(|p| p.class_label == args.label)) {
        return Err(Failure::training(RegistryError::DuplicateLabel(args.label).to_string()));
    }
    log.info(format!("extracting features from {} traces", inputs.len()));
    let Extracted { layout, format, rows } = extract_rows(&inputs, &args.layout)?;
    let model = train_on_rows(&rows, &params, args.label.clone()).map_err(|e| Failure::training(e.to_string()))?;
    let ids = rows.iter().map(|r| r.source_id.clone()).collect();
    let profile = DeviceProfile::new(model, layout, format, Utc::now(), ids);
    let path = store_profile(&args.registry, &profile, args.replace).map_err(|e| match e {
        RegistryError::DuplicateLabel(_) => Failure::training(e.to_string()),
        _ => Failure::input(e.to_string()),
    })?;
    log.info(format!("wrote {}", path.display()));
    println!("stored {} training_size={}", profile.class_label, rows.len());
    Ok(0)
}

/// Reads `threshold.<label>=<value>` lines; a bare `threshold=<value>`
/// sets the fallback. Other keys are ignored.
fn read_thresholds(path: &Path) -> Result<(Option<f64>, BTreeMap<String, f64>), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let mut common = None;
    let mut per_class = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let Some((key, value)) = line.trim().split_once('=') else {
            continue;
        };
        let label = match key.trim() {
            "threshold" => None,
            k => match k.strip_prefix("threshold.") {
                Some(label) => Some(label.to_string()),
                None => continue,
            },
        };
        let value = value.trim();
        if label.is_none() && value == "per_class" {
            continue;
        }
        let t: f64 = value
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Failure::input(format!("{}:{}: bad threshold {value:?}", path.display(), i + 1)))?;
        match label {
            Some(l) => {
                per_class.insert(l, t);
            }
            None => common = Some(t),
        }
    }
    Ok((common, per_class))
}

pub fn classify(args: ClassifyArgs, log: &Log) -> Outcome {
    let (file_common, per_class) = match &args.thresholds {
        Some(p) => read_thresholds(p)?,
        None => (None, BTreeMap::new()),
    };
    let fallback = args.threshold.or(file_common).unwrap_or(0.0);
    if !args.registry.is_dir() {
        return Err(Failure::input(format!("no profiles: {} is not a directory", args.registry.display())));
    }
    let mut profiles = load_all(&args.registry).map_err(|e| Failure::input(e.to_string()))?;
    if profiles.is_empty() {
        return Err(Failure::input(format!("no profiles in {}", args.registry.display())));
    }
    if let Some(label) = &args.strict_label {
        profiles.retain(|p| &p.class_label == label);
        if profiles.is_empty() {
            return Err(Failure::input(format!("no profile labeled {label:?}")));
        }
    }

    let inputs = collect_traces(std::slice::from_ref(&args.trace))?;
    let [input] = inputs.as_slice() else {
        return Err(Failure::input(format!("{}: expected one trace file", args.trace.display())));
    };
    let trace = read_trace(input, &base_format(&args.layout))?;
    let mut cache: Vec<(RegionLayout, Vec<f64>)> = Vec::new();
    let mut authorized = false;
    for p in &profiles {
        if !p.layout.band_matches(&trace.format) {
            return Err(Failure::input(format!(
                "layout mismatch: profile {} covers {}..{} Hz, trace covers {}..{} Hz",
                p.class_label, p.layout.start_hz, p.layout.stop_hz, trace.format.start_hz, trace.format.stop_hz
            )));
        }
        if !cache.iter().any(|(l, _)| l == &p.layout) {
            let config = pipeline_config(&args.layout, p.layout.clone())?;
            let fv = trace_features::<f64>(&trace, &config)
                .map_err(|e| Failure::input(format!("{}: {e}", args.trace.display())))?;
            cache.push((p.layout.clone(), fv.values));
        }
        let values = &cache.iter().find(|(l, _)| l == &p.layout).expect("cached above").1;
        let score = p
            .model
            .score_slice(values)
            .map_err(|e| Failure::input(format!("layout mismatch: profile {}: {e}", p.class_label)))?;
        let threshold = per_class.get(&p.class_label).copied().unwrap_or(fallback);
        let verdict = decide(score, threshold);
        authorized |= verdict == Verdict::Authorized;
        println!("{} {score} {}", p.class_label, verdict.as_str());
    }
    let overall = if authorized { Verdict::Authorized } else { Verdict::Rejected };
    log.info(format!("overall {}", overall.as_str()));
    Ok(if authorized { 0 } else { 1 })
}

pub fn synth(args: SynthArgs, log: &Log) -> Outcome {
    let mut spec = match args.preset {
        Preset::Brand => CorpusSpec::brand_models(args.seed),
        Preset::Units => CorpusSpec::same_model_units(args.seed),
        Preset::Firmware => CorpusSpec::firmware_variants(args.seed),
    };
    if let Some(n) = args.traces_per_class {
        spec.traces_per_class = n;
    }
    if let Some(n) = args.classes {
        if n == 0 {
            return Err(Failure::input("classes must be >= 1"));
        }
        spec.archetypes.truncate(n);
        spec.labels.truncate(n);
    }
    let items = write_corpus(&spec, &args.out).map_err(|e| Failure::input(e.to_string()))?;
    log.info(format!(
        "wrote {} traces in {} classes to {}",
        items.len(),
        spec.labels.len(),
        args.out.display()
    ));
    Ok(0)
}

pub fn extract(args: ExtractArgs, log: &Log) -> Outcome {
    let inputs = collect_traces(&args.inputs)?;
    let Extracted { layout, rows, .. } = extract_rows(&inputs, &args.layout)?;
    write_file(&args.out, &write_feature_csv(&layout, &rows))?;
    log.info(format!("wrote {} vectors of {} features", rows.len(), layout.feature_count()));
    Ok(0)
}

fn read_ranking(path: &Path, features: usize) -> Result<Vec<usize>, Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let ordering = read_ranking_csv(BufReader::new(file)).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    if ordering.is_empty() {
        return Err(Failure::input(format!("{}: empty ranking", path.display())));
    }
    if let Some(&bad) = ordering.iter().find(|&&i| i >= features) {
        return Err(Failure::input(format!(
            "{}: feature index {bad} out of range for {features} features",
            path.display()
        )));
    }
    Ok(ordering)
}

fn sorted_prefix(ordering: &[usize], k: usize) -> Vec<usize> {
    let mut idx = ordering[..k].to_vec();
    idx.sort_unstable();
    idx
}

/// `threshold,tpr,fpr` over every candidate threshold, descending.
fn sweep_csv(entries: &[(f64, bool)]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    let mut out = String::from("threshold,tpr,fpr\n");
    for t in candidate_thresholds(entries) {
        let r = Rates::at(entries, t);
        let _ = writeln!(out, "{t},{},{}", fmt(r.tpr), fmt(r.fpr));
    }
    out
}

fn latency_probes(rows: &[FeatureRow]) -> Vec<Vec<f64>> {
    let n = rows.len().max(MIN_LATENCY_PROBES);
    rows.iter().cycle().take(n).map(|r| r.values.clone()).collect()
}

pub fn evaluate(args: EvaluateArgs, log: &Log) -> Outcome {
    let cv = CvConfig {
        k: args.folds,
        svm: args.svm.params(),
        seed: args.seed,
    };
    cv.svm.validate().map_err(|e| Failure::input(e.to_string()))?;
    if !(0.0..=1.0).contains(&args.fpr_cap) {
        return Err(Failure::input(format!("fpr-cap must be in [0, 1], got {}", args.fpr_cap)));
    }
    let (_, mut rows) = load_rows(&args.inputs, &args.layout)?;
    let dim = rows.first().map_or(0, |r| r.values.len());

    let mut top_k = None;
    if let Some(path) = &args.features {
        let ordering = read_ranking(path, dim)?;
        let ks = if args.top_k.is_empty() {
            vec![ordering.len()]
        } else {
            args.top_k.clone()
        };
        if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > ordering.len()) {
            return Err(Failure::input(format!("top-k {k} outside 1..={}", ordering.len())));
        }
        let table = ks
            .iter()
            .map(|&k| {
                log.info(format!("evaluating top {k} features"));
                evaluate_subset(&rows, &sorted_prefix(&ordering, k), &cv, args.fpr_cap)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(rank_failure)?;
        top_k = Some(table);
        rows = select_features(&rows, &sorted_prefix(&ordering, ordering.len()));
    }

    log.info(format!("cross-validating {} samples, k={}", rows.len(), cv.k));
    let matrix = cross_validate(&rows, &cv).map_err(eval_failure)?;
    let thresholds = if args.per_class {
        Thresholds::PerClass(per_class_thresholds(&matrix, args.fpr_cap).map_err(eval_failure)?)
    } else if let Some(t) = args.threshold {
        Thresholds::Common(t)
    } else {
        Thresholds::Common(best_common_threshold(&matrix, args.fpr_cap).map_err(eval_failure)?.0)
    };
    let rates = tpr_fpr(&matrix, &thresholds).map_err(eval_failure)?;

    let latency = if args.timing {
        let classes = class_order(&rows);
        let models = classes
            .iter()
            .map(|c| {
                let own: Vec<FeatureRow> = rows.iter().filter(|r| &r.label == c).cloned().collect();
                train_on_rows(&own, &cv.svm, c.clone()).map_err(|e| Failure::training(format!("{c}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let per_model: Vec<f64> = classes.iter().map(|c| thresholds.for_class(c).unwrap_or(0.0)).collect();
        Some(measure_decision_latency(&models, &per_model, &latency_probes(&rows)).map_err(eval_failure)?)
    } else {
        None
    };

    let report = EvaluationReport {
        rates,
        thresholds,
        fold_count: cv.k,
        seed: cv.seed,
        latency,
    };
    let summary = report.summary();
    if let Some(dir) = &args.out {
        write_file(&dir.join("summary.txt"), &summary)?;
        write_file(&dir.join("scores.csv"), &matrix.to_csv())?;
        write_file(&dir.join("sweep.csv"), &sweep_csv(&matrix.entries()))?;
        if let Some(table) = &top_k {
            write_file(&dir.join("topk.csv"), &top_k_table_csv(table))?;
        }
        log.info(format!("wrote reports to {}", dir.display()));
    }
    print!("{summary}");
    if let Some(table) = &top_k {
        print!("{}", top_k_table_csv(table));
    }
    Ok(0)
}

pub fn rank(args: RankArgs, log: &Log) -> Outcome {
    let (names, rows) = load_rows(&args.inputs, &args.layout)?;
    let method = match args.method {
        Method::Mim => RankMethod::Mim,
        Method::Jmi => RankMethod::Jmi,
    };
    let k = args.k.unwrap_or(names.len());
    log.info(format!("ranking {} features by {}", names.len(), method.as_str()));
    let ranked = rank_features(&rows, method, args.bins, k).map_err(rank_failure)?;
    write_file(&args.out, &ranked.to_csv(&names))?;
    Ok(0)
}

pub fn heatmap(args: HeatmapArgs, log: &Log) -> Outcome {
    let inputs = collect_traces(std::slice::from_ref(&args.trace))?;
    let [input] = inputs.as_slice() else {
        return Err(Failure::input(format!("{}: expected one trace file", args.trace.display())));
    };
    let trace = read_trace(input, &base_format(&args.layout))?;
    let fail = |e: emf_core::trace::TraceError| Failure::input(format!("{}: {e}", args.trace.display()));
    let shown = if args.full {
        trace
    } else {
        let layout = layout_for(&args.layout, &trace.format)?;
        let config = pipeline_config(&args.layout, layout)?;
        let start = if config.align {
            detect_boot_onset(&trace, config.baseline_ms, config.k_sigma).map_err(fail)?
        } else {
            trace.first_timestamp()
        };
        window_trace(&trace, start, config.layout.window_ms).map_err(fail)?
    };
    let map = features::heatmap(&normalize::<f64>(&shown));
    write_file(&args.out, &write_heatmap_csv(&map))?;
    log.info(format!("{} sweeps x {} frequencies", map.cells.len(), map.frequencies_hz.len()));
    Ok(0)
}
