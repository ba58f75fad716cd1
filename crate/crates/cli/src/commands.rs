//! Subcommand implementations: gen, extract, train, eval, bench.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;

use erl_core::domain::io::{
    write_events_csv, write_features_long, write_labels_csv, write_schedule_csv, FeatureManifest,
};
use erl_core::domain::{LabelSet, ParticipantId, SealedLabels, SensorEvent};
use erl_core::eval::{
    evaluate, generalizability_report, render_summary_md, EvalError, EvaluationInputs,
    EvaluationReport, ScoredPredictions,
};
use erl_core::features::{extract_cohort, ExtractorConfig};
use erl_core::learners::{one_rule_svm_fit, TrainConfig, ZeroRule};
use erl_core::pipelines::{
    fit_cnn_full, run_cnn_pipeline, run_lr_pipeline, run_mtl_pipeline, weekly_matrix,
    CnnPipelineInputs, LrPipelineConfig, MtlPipelineInputs, PipelineError, TensorSource,
};
use erl_core::synth::{generate_cohort, generate_cohort_pair, Cohort, CohortConfig, DistributionShift};

use crate::cohort_io::{
    load_cohort_dir, load_features_dir, load_place_map, predictions_csv, read_predictions_csv,
    EVENTS_FILE, FEATURES_FILE, FEATURES_MANIFEST_FILE, GROUND_TRUTH_FILE, LABELS_FILE,
    PLACES_FILE, PREDICTIONS_FILE, SCHEDULE_FILE, SELF_REPORTS_FILE,
};
use crate::errors::{CliError, CliResult};
use crate::manifest::ManifestBuilder;

fn parse_config<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<(T, Vec<u8>)> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8_lossy(&bytes);
    let is_json = path.extension().and_then(|e| e.to_str()) == Some("json")
        || text.trim_start().starts_with('{');
    let value: T = if is_json {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    };
    Ok((value, bytes))
}

fn pipeline_err(e: PipelineError) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenFile {
    cohort: CohortConfig,
}

fn flatten_events(cohort: &Cohort) -> Vec<SensorEvent> {
    cohort.events.values().flatten().cloned().collect()
}

fn write_cohort(builder: &mut ManifestBuilder, cohort: &Cohort) -> CliResult<()> {
    let mut buf = Vec::new();
    write_events_csv(&flatten_events(cohort), &mut buf)
        .map_err(|e| CliError::Data(e.to_string()))?;
    builder.write_output(EVENTS_FILE, &buf)?;

    let mut buf = Vec::new();
    write_labels_csv(&cohort.labels, &cohort.traits, &mut buf)
        .map_err(|e| CliError::Data(e.to_string()))?;
    builder.write_output(LABELS_FILE, &buf)?;

    let mut buf = Vec::new();
    write_schedule_csv(&cohort.schedule, &mut buf).map_err(|e| CliError::Data(e.to_string()))?;
    builder.write_output(SCHEDULE_FILE, &buf)?;

    let mut buf = Vec::new();
    cohort
        .self_reports
        .write_csv(&cohort.participants(), &mut buf)
        .map_err(|e| CliError::Data(e.to_string()))?;
    builder.write_output(SELF_REPORTS_FILE, &buf)?;

    builder.write_output(PLACES_FILE, cohort.place_map.to_json().as_bytes())?;
    let gt = serde_json::to_vec_pretty(&cohort.ground_truth)
        .map_err(|e| CliError::Data(e.to_string()))?;
    builder.write_output(GROUND_TRUTH_FILE, &gt)?;
    Ok(())
}

pub fn cmd_gen(config_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let (file, bytes) = parse_config::<GenFile>(config_path)?;
    let mut config = file.cohort;
    if let Some(s) = seed {
        config.seed = s;
    }
    let mut builder = ManifestBuilder::new("gen", &bytes, config.seed, out);
    builder.record_input(config_path)?;
    builder.start_stage("generate");
    let cohort = generate_cohort(&config).map_err(|e| CliError::Config(e.to_string()))?;
    builder.start_stage("write");
    write_cohort(&mut builder, &cohort)?;
    let manifest = builder.finish()?;
    log::info!(
        "generated cohort `{}` with {} participants (run {})",
        config.cohort_id,
        config.n_participants,
        manifest.run_id
    );
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExtractFile {
    extractor: ExtractorConfig,
}

fn events_day_span(events: &BTreeMap<ParticipantId, Vec<SensorEvent>>) -> CliResult<Vec<NaiveDate>> {
    let mut min: Option<NaiveDate> = None;
    let mut max: Option<NaiveDate> = None;
    for stream in events.values() {
        for e in stream {
            let d = e.date();
            min = Some(min.map_or(d, |m| m.min(d)));
            max = Some(max.map_or(d, |m| m.max(d)));
        }
    }
    let (Some(lo), Some(hi)) = (min, max) else {
        return Err(CliError::Data("cohort has no events".into()));
    };
    let mut days = Vec::new();
    let mut d = lo;
    while d <= hi {
        days.push(d);
        d += chrono::Duration::days(1);
    }
    Ok(days)
}

pub fn cmd_extract(
    cohort_dir: &Path,
    places: Option<&Path>,
    config_path: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let (config, config_bytes) = match config_path {
        Some(p) => parse_config::<ExtractFile>(p)?,
        None => (ExtractFile::default(), Vec::new()),
    };
    let mut builder = ManifestBuilder::new("extract", &config_bytes, 0, out);
    builder.record_input(&cohort_dir.join(EVENTS_FILE))?;

    let cohort = load_cohort_dir(cohort_dir)?;
    let places_path = places
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| cohort_dir.join(PLACES_FILE));
    let place_map = load_place_map(&places_path)?;
    builder.record_input(&places_path)?;

    let days = events_day_span(&cohort.events)?;
    let empty_participant_days: usize = cohort
        .events
        .values()
        .map(|stream| days.iter().filter(|d| !stream.iter().any(|e| e.date() == **d)).count())
        .sum();
    if empty_participant_days > 0 {
        log::warn!("{empty_participant_days} participant-days carry no events; their features are masked");
    }

    builder.start_stage("extract");
    let matrix = extract_cohort(&cohort.events, &place_map, &cohort.schedule, &days, &config.extractor);

    builder.start_stage("write");
    let manifest = FeatureManifest::of(&matrix);
    builder.write_output(
        FEATURES_MANIFEST_FILE,
        serde_json::to_vec_pretty(&manifest)
            .map_err(|e| CliError::Data(e.to_string()))?
            .as_slice(),
    )?;
    let mut buf = Vec::new();
    write_features_long(&matrix, &mut buf).map_err(|e| CliError::Data(e.to_string()))?;
    builder.write_output(FEATURES_FILE, &buf)?;
    let m = builder.finish()?;
    log::info!(
        "extracted {} features x {} days x {} participants (run {}, {} masked participant-days)",
        matrix.n_features(),
        matrix.n_days(),
        matrix.n_participants(),
        m.run_id,
        empty_participant_days
    );
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    lr: LrPipelineConfig,
    cnn: TrainConfig,
    cnn_repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Approach {
    Lr,
    Cnn,
    Mtl,
    ZeroRule,
    OneRuleSvm,
}

pub struct TrainArgs<'a> {
    pub features_dir: &'a Path,
    pub labels_path: &'a Path,
    pub self_reports_path: Option<&'a Path>,
    pub approach: Approach,
    pub config_path: Option<&'a Path>,
    pub features_b_dir: Option<&'a Path>,
    pub labels_b_path: Option<&'a Path>,
    pub out: &'a Path,
    pub seed: Option<u64>,
}

fn load_labels(path: &Path) -> CliResult<(LabelSet, erl_core::domain::ProtectedTraits)> {
    let file = fs::File::open(path).map_err(CliError::io(path))?;
    erl_core::domain::io::read_labels_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cohort_tag(labels: &LabelSet) -> String {
    labels
        .gpa_current
        .keys()
        .next()
        .and_then(|p| p.as_str().split_once("_p").map(|(c, _)| c.to_string()))
        .unwrap_or_else(|| "cohort".to_string())
}

fn loss_history_csv(history: &erl_core::learners::FitHistory) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in &history.losses {
        out.push_str(&format!(
            "{},{},{}\n",
            e.epoch,
            e.train_loss,
            e.val_loss.map(|v| v.to_string()).unwrap_or_default()
        ));
    }
    out
}

pub fn cmd_train(args: TrainArgs<'_>) -> CliResult<()> {
    let (config, config_bytes) = match args.config_path {
        Some(p) => parse_config::<TrainFile>(p)?,
        None => (TrainFile::default(), Vec::new()),
    };
    let repeats = if config.cnn_repeats == 0 { 5 } else { config.cnn_repeats };
    let seed = args.seed.unwrap_or(config.cnn.seed);
    let mut builder = ManifestBuilder::new("train", &config_bytes, seed, args.out);
    builder.record_input(&args.features_dir.join(FEATURES_FILE))?;
    builder.record_input(args.labels_path)?;

    let (labels, _) = load_labels(args.labels_path)?;
    let tag = cohort_tag(&labels);
    let daily = load_features_dir(args.features_dir)?;

    match args.approach {
        Approach::Lr => {
            let self_reports = match args.self_reports_path {
                Some(p) => {
                    builder.record_input(p)?;
                    let file = fs::File::open(p).map_err(CliError::io(p))?;
                    erl_core::synth::SelfReportTable::read_csv(std::io::BufReader::new(file))
                        .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
                }
                None => Default::default(),
            };
            builder.start_stage("weekly_matrix");
            let matrix = weekly_matrix(&daily, &self_reports);
            builder.start_stage("loso");
            let mut lr_cfg = config.lr.clone();
            if args.seed.is_some() {
                lr_cfg.seed = seed;
            }
            let result = run_lr_pipeline(&matrix, &labels.gpa_current, &lr_cfg).map_err(pipeline_err)?;
            builder.start_stage("write");
            for flag in &result.leakage_flags {
                builder.flag_leakage(flag);
            }
            let fold_of: BTreeMap<ParticipantId, String> = result
                .folds
                .iter()
                .flat_map(|f| f.held_out.iter().map(move |p| (p.clone(), f.fold_id.to_string())))
                .collect();
            builder.write_output(
                PREDICTIONS_FILE,
                predictions_csv(&result.predictions, Some(&labels), &fold_of).as_bytes(),
            )?;
            let mut sel = String::from("fold,feature,importance\n");
            for fold in &result.folds {
                for s in &fold.selected {
                    sel.push_str(&format!("{},{},{}\n", fold.fold_id, s.name, s.importance()));
                }
            }
            builder.write_output("selected_features.csv", sel.as_bytes())?;
            #[derive(serde::Serialize)]
            struct FoldLogEntry<'a> {
                fold_id: usize,
                held_out: &'a [ParticipantId],
                chosen_r: f64,
                cfs_fallback: bool,
                n_selected: usize,
            }
            let log_entries: Vec<FoldLogEntry> = result
                .folds
                .iter()
                .map(|f| FoldLogEntry {
                    fold_id: f.fold_id,
                    held_out: &f.held_out,
                    chosen_r: f.chosen_r,
                    cfs_fallback: f.cfs_fallback,
                    n_selected: f.selected.len(),
                })
                .collect();
            builder.write_output(
                "fold_log.json",
                serde_json::to_vec_pretty(&log_entries)
                    .map_err(|e| CliError::Data(e.to_string()))?
                    .as_slice(),
            )?;
            builder.write_output(
                "importance.json",
                serde_json::to_vec_pretty(&result.importance)
                    .map_err(|e| CliError::Data(e.to_string()))?
                    .as_slice(),
            )?;
            // deployment refit on the features most often selected
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for fold in &result.folds {
                for s in &fold.selected {
                    *counts.entry(s.name.as_str()).or_default() += 1;
                }
            }
            let meta = serde_json::json!({
                "approach": "lr",
                "trained_on": [tag],
                "loso_folds": result.folds.len(),
                "frequently_selected": counts.iter().filter(|(_, c)| **c * 2 >= result.folds.len()).map(|(n, _)| n).collect::<Vec<_>>(),
            });
            let artifact = serde_json::json!({
                "kind": "lr_loso_summary",
                "version": 1,
                "meta": meta,
            });
            builder.write_output(
                "model.json",
                serde_json::to_vec_pretty(&artifact)
                    .map_err(|e| CliError::Data(e.to_string()))?
                    .as_slice(),
            )?;
        }
        Approach::Cnn => {
            builder.start_stage("tensor");
            let source = TensorSource::build(&daily);
            builder.start_stage("cv");
            let cfg = TrainConfig { seed, ..config.cnn };
            let result = run_cnn_pipeline(
                &CnnPipelineInputs {
                    source: &source,
                    gpa: &labels.gpa_current,
                    cohort_id: &tag,
                },
                &cfg,
                repeats,
            )
            .map_err(pipeline_err)?;
            builder.start_stage("refit");
            let (model, history, ..) = fit_cnn_full(&source, &labels.gpa_current, &cfg).map_err(pipeline_err)?;
            builder.start_stage("write");
            let fold_of: BTreeMap<ParticipantId, String> = result
                .repeats
                .iter()
                .flat_map(|r| r.predictions.keys().map(move |p| (p.clone(), r.repeat.to_string())))
                .collect();
            builder.write_output(
                PREDICTIONS_FILE,
                predictions_csv(&result.predictions, Some(&labels), &fold_of).as_bytes(),
            )?;
            builder.write_output(
                "fold_log.json",
                serde_json::to_vec_pretty(&result.repeats)
                    .map_err(|e| CliError::Data(e.to_string()))?
                    .as_slice(),
            )?;
            builder.write_output("loss_history.csv", loss_history_csv(&history).as_bytes())?;
            let meta = serde_json::json!({
                "approach": "cnn",
                "trained_on": [tag],
                "features": source.features,
                "mean_auc": result.mean_auc,
            });
            builder.write_output("model.json", model.to_artifact(meta).to_json().as_bytes())?;
        }
        Approach::Mtl => {
            let (features_b, labels_b_path) = match (args.features_b_dir, args.labels_b_path) {
                (Some(f), Some(l)) => (f, l),
                _ => {
                    return Err(CliError::Config(
                        "approach mtl requires --features-b and --labels-b for the evaluation cohort".into(),
                    ))
                }
            };
            builder.record_input(&features_b.join(FEATURES_FILE))?;
            builder.record_input(labels_b_path)?;
            let (labels_b, _) = load_labels(labels_b_path)?;
            let tag_b = cohort_tag(&labels_b);
            // current labels of B go straight behind the seal
            let sealed = SealedLabels::seal(tag_b.clone(), labels_b.gpa_current.clone());
            let daily_b = load_features_dir(features_b)?;
            builder.start_stage("tensor");
            let source_a = TensorSource::build(&daily);
            let source_b = TensorSource::build(&daily_b);
            builder.start_stage("fit");
            let cfg = TrainConfig { seed, ..config.cnn };
            let result = run_mtl_pipeline(
                &MtlPipelineInputs {
                    source_a: &source_a,
                    gpa_a: &labels.gpa_current,
                    prior_a: &labels.gpa_prior,
                    cohort_a_id: &tag,
                    source_b: &source_b,
                    prior_b: &labels_b.gpa_prior,
                    sealed_b: &sealed,
                },
                &cfg,
            )
            .map_err(pipeline_err)?;
            if sealed.open_count() != 0 {
                return Err(CliError::Data("seal opened during training".into()));
            }
            builder.note(&format!(
                "cohort `{tag_b}` current labels sealed during training (opens: {})",
                sealed.open_count()
            ));
            for flag in &result.flags {
                builder.flag_leakage(flag);
            }
            builder.start_stage("write");
            // true labels stay sealed, so the predictions carry none
            builder.write_output(
                PREDICTIONS_FILE,
                predictions_csv(&result.predictions, None, &BTreeMap::new()).as_bytes(),
            )?;
            builder.write_output(
                "fold_log.json",
                serde_json::to_vec_pretty(&serde_json::json!({
                    "best_epoch": result.history_best_epoch,
                    "stopped_early": result.stopped_early,
                    "secondary_b_count": result.secondary_b_count,
                }))
                .map_err(|e| CliError::Data(e.to_string()))?
                .as_slice(),
            )?;
        }
        Approach::ZeroRule => {
            builder.start_stage("fit");
            let participants: Vec<ParticipantId> = labels.gpa_current.keys().cloned().collect();
            let y: Vec<_> = participants
                .iter()
                .map(|p| labels.binary_current(p).expect("label present"))
                .collect();
            let model = ZeroRule::fit(&y);
            let rows: BTreeMap<ParticipantId, erl_core::eval::PredictionRow> = participants
                .iter()
                .map(|p| {
                    (
                        p.clone(),
                        erl_core::eval::PredictionRow {
                            label: model.majority,
                            prob_low: model.train_low_fraction,
                        },
                    )
                })
                .collect();
            let preds = ScoredPredictions {
                approach: "zero-rule".into(),
                trained_on: [tag.clone()].into(),
                rows,
            };
            builder.start_stage("write");
            builder.write_output(
                PREDICTIONS_FILE,
                predictions_csv(&preds, Some(&labels), &BTreeMap::new()).as_bytes(),
            )?;
            builder.write_output(
                "model.json",
                model
                    .to_artifact(serde_json::json!({"trained_on": [tag]}))
                    .to_json()
                    .as_bytes(),
            )?;
        }
        Approach::OneRuleSvm => {
            builder.start_stage("fit");
            let participants: Vec<ParticipantId> = labels.gpa_current.keys().cloned().collect();
            let mut prior = Vec::new();
            let mut y = Vec::new();
            for p in &participants {
                let g = labels.gpa_prior.get(p).ok_or_else(|| {
                    CliError::Data(format!("one-rule-svm requires a prior GPA for every participant; `{p}` has none"))
                })?;
                prior.push(*g);
                y.push(labels.binary_current(p).expect("label present"));
            }
            let model = one_rule_svm_fit(&prior, &y).map_err(|e| CliError::Data(e.to_string()))?;
            let labels_pred = model.predict(&prior);
            let probs = model.predict_proba(&prior);
            let rows: BTreeMap<ParticipantId, erl_core::eval::PredictionRow> = participants
                .iter()
                .zip(labels_pred.iter().zip(&probs))
                .map(|(p, (l, prob))| {
                    (
                        p.clone(),
                        erl_core::eval::PredictionRow {
                            label: *l,
                            prob_low: *prob,
                        },
                    )
                })
                .collect();
            let preds = ScoredPredictions {
                approach: "one-rule-svm".into(),
                trained_on: [tag.clone()].into(),
                rows,
            };
            builder.start_stage("write");
            builder.write_output(
                PREDICTIONS_FILE,
                predictions_csv(&preds, Some(&labels), &BTreeMap::new()).as_bytes(),
            )?;
            builder.write_output(
                "model.json",
                model
                    .to_artifact(serde_json::json!({"trained_on": [tag]}))
                    .to_json()
                    .as_bytes(),
            )?;
        }
    }
    let manifest = builder.finish()?;
    log::info!("training complete (run {})", manifest.run_id);
    Ok(())
}

pub fn cmd_eval(
    predictions_path: &Path,
    labels_path: &Path,
    out: &Path,
    gate_fairness: bool,
) -> CliResult<()> {
    let mut builder = ManifestBuilder::new("eval", &[], 0, out);
    builder.record_input(predictions_path)?;
    builder.record_input(labels_path)?;

    let preds = read_predictions_csv(predictions_path)?;
    let (labels, traits) = load_labels(labels_path)?;
    builder.start_stage("evaluate");
    let report = evaluate(EvaluationInputs {
        approach: &preds.approach,
        cohort: &cohort_tag(&labels),
        predictions: &preds.rows,
        gpa_current: &labels.gpa_current,
        gpa_prior: &labels.gpa_prior,
        traits: &traits,
        importance: None,
        leakage_flags: Vec::new(),
    })
    .map_err(|e| match e {
        EvalError::ParticipantMismatch(_) => CliError::Data(e.to_string()),
        EvalError::BrokenLineage(_) => CliError::Data(e.to_string()),
    })?;

    builder.start_stage("write");
    write_report(&mut builder, "", &report)?;
    builder.finish()?;

    let unreasonable = report.fairness.iter().filter(|r| r.unreasonable()).count();
    if gate_fairness && unreasonable > 0 {
        return Err(CliError::FairnessGate(unreasonable));
    }
    Ok(())
}

fn write_report(builder: &mut ManifestBuilder, prefix: &str, report: &EvaluationReport) -> CliResult<()> {
    builder.write_output(
        &format!("{prefix}report.json"),
        serde_json::to_vec_pretty(report)
            .map_err(|e| CliError::Data(e.to_string()))?
            .as_slice(),
    )?;
    builder.write_output(&format!("{prefix}summary.md"), render_summary_md(report).as_bytes())?;
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchFile {
    pub seed: u64,
    pub n_participants_a: usize,
    pub n_participants_b: usize,
    pub n_days: usize,
    pub shift_magnitude: f64,
    pub cnn_repeats: usize,
    pub cnn_epochs: usize,
    pub n_noise_self_reports: usize,
}

impl Default for BenchFile {
    fn default() -> Self {
        Self {
            seed: 1,
            n_participants_a: 36,
            n_participants_b: 30,
            n_days: 7,
            shift_magnitude: 0.8,
            cnn_repeats: 2,
            cnn_epochs: 40,
            n_noise_self_reports: 15,
        }
    }
}

/// The whole battery end to end on a small paired cohort, every artifact
/// hashed into one manifest.
pub fn cmd_bench(config_path: Option<&Path>, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let (mut config, config_bytes) = match config_path {
        Some(p) => parse_config::<BenchFile>(p)?,
        None => (BenchFile::default(), Vec::new()),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    let mut builder = ManifestBuilder::new("bench", &config_bytes, config.seed, out);

    builder.start_stage("generate");
    let base = CohortConfig {
        n_days: config.n_days,
        n_noise_self_reports: config.n_noise_self_reports,
        ..Default::default()
    };
    let a_cfg = CohortConfig {
        cohort_id: "bench_a".into(),
        seed: config.seed,
        n_participants: config.n_participants_a,
        prior_persistence: 0.8,
        ..base.clone()
    };
    let b_cfg = CohortConfig {
        cohort_id: "bench_b".into(),
        seed: config.seed.wrapping_add(1000),
        n_participants: config.n_participants_b,
        prior_persistence: 0.8,
        ..base
    };
    let (a, b) = generate_cohort_pair(
        &a_cfg,
        &b_cfg,
        DistributionShift {
            magnitude: config.shift_magnitude,
            seed: config.seed.wrapping_add(7),
        },
    )
    .map_err(|e| CliError::Config(e.to_string()))?;

    builder.start_stage("write_cohorts");
    for (name, cohort) in [("a", &a), ("b", &b)] {
        let mut buf = Vec::new();
        write_events_csv(&flatten_events(cohort), &mut buf).map_err(|e| CliError::Data(e.to_string()))?;
        builder.write_output(&format!("cohort_{name}/{EVENTS_FILE}"), &buf)?;
        let mut buf = Vec::new();
        write_labels_csv(&cohort.labels, &cohort.traits, &mut buf)
            .map_err(|e| CliError::Data(e.to_string()))?;
        builder.write_output(&format!("cohort_{name}/{LABELS_FILE}"), &buf)?;
        let mut buf = Vec::new();
        write_schedule_csv(&cohort.schedule, &mut buf).map_err(|e| CliError::Data(e.to_string()))?;
        builder.write_output(&format!("cohort_{name}/{SCHEDULE_FILE}"), &buf)?;
        let mut buf = Vec::new();
        cohort
            .self_reports
            .write_csv(&cohort.participants(), &mut buf)
            .map_err(|e| CliError::Data(e.to_string()))?;
        builder.write_output(&format!("cohort_{name}/{SELF_REPORTS_FILE}"), &buf)?;
        builder.write_output(&format!("cohort_{name}/{PLACES_FILE}"), cohort.place_map.to_json().as_bytes())?;
        builder.write_output(
            &format!("cohort_{name}/{GROUND_TRUTH_FILE}"),
            serde_json::to_vec_pretty(&cohort.ground_truth)
                .map_err(|e| CliError::Data(e.to_string()))?
                .as_slice(),
        )?;
    }

    builder.start_stage("extract");
    let ext = ExtractorConfig::default();
    let daily_a = extract_cohort(&a.events, &a.place_map, &a.schedule, &a.days, &ext);
    let daily_b = extract_cohort(&b.events, &b.place_map, &b.schedule, &b.days, &ext);
    for (name, daily) in [("a", &daily_a), ("b", &daily_b)] {
        let manifest = FeatureManifest::of(daily);
        builder.write_output(
            &format!("features_{name}/{FEATURES_MANIFEST_FILE}"),
            serde_json::to_vec_pretty(&manifest)
                .map_err(|e| CliError::Data(e.to_string()))?
                .as_slice(),
        )?;
        let mut buf = Vec::new();
        write_features_long(daily, &mut buf).map_err(|e| CliError::Data(e.to_string()))?;
        builder.write_output(&format!("features_{name}/{FEATURES_FILE}"), &buf)?;
    }

    builder.start_stage("lr");
    let matrix = weekly_matrix(&daily_a, &a.self_reports);
    let lr_cfg = LrPipelineConfig {
        seed: config.seed,
        ..Default::default()
    };
    let lr = run_lr_pipeline(&matrix, &a.labels.gpa_current, &lr_cfg).map_err(pipeline_err)?;
    for flag in &lr.leakage_flags {
        builder.flag_leakage(flag);
    }
    builder.write_output(
        &format!("lr/{PREDICTIONS_FILE}"),
        predictions_csv(&lr.predictions, Some(&a.labels), &BTreeMap::new()).as_bytes(),
    )?;
    let lr_report = evaluate(EvaluationInputs {
        approach: "lr",
        cohort: "bench_a",
        predictions: &lr.predictions.rows,
        gpa_current: &a.labels.gpa_current,
        gpa_prior: &a.labels.gpa_prior,
        traits: &a.traits,
        importance: Some(lr.importance.clone()),
        leakage_flags: lr.leakage_flags.clone(),
    })
    .map_err(|e| CliError::Data(e.to_string()))?;
    write_report(&mut builder, "lr/", &lr_report)?;

    builder.start_stage("cnn");
    let source_a = TensorSource::build(&daily_a);
    let cnn_cfg = TrainConfig {
        seed: config.seed,
        epochs: config.cnn_epochs,
        ..Default::default()
    };
    let cnn = run_cnn_pipeline(
        &CnnPipelineInputs {
            source: &source_a,
            gpa: &a.labels.gpa_current,
            cohort_id: "bench_a",
        },
        &cnn_cfg,
        config.cnn_repeats,
    )
    .map_err(pipeline_err)?;
    builder.write_output(
        &format!("cnn/{PREDICTIONS_FILE}"),
        predictions_csv(&cnn.predictions, Some(&a.labels), &BTreeMap::new()).as_bytes(),
    )?;
    builder.note(&format!(
        "cnn mean auc over {} repeats: {:?}",
        config.cnn_repeats, cnn.mean_auc
    ));

    builder.start_stage("mtl");
    let source_b = TensorSource::build(&daily_b);
    let sealed = SealedLabels::seal("bench_b", b.labels.gpa_current.clone());
    let mtl = run_mtl_pipeline(
        &MtlPipelineInputs {
            source_a: &source_a,
            gpa_a: &a.labels.gpa_current,
            prior_a: &a.labels.gpa_prior,
            cohort_a_id: "bench_a",
            source_b: &source_b,
            prior_b: &b.labels.gpa_prior,
            sealed_b: &sealed,
        },
        &cnn_cfg,
    )
    .map_err(pipeline_err)?;
    builder.write_output(
        &format!("mtl/{PREDICTIONS_FILE}"),
        predictions_csv(&mtl.predictions, None, &BTreeMap::new()).as_bytes(),
    )?;
    builder.note(&format!("seal opens during training: {}", sealed.open_count()));

    builder.start_stage("generalizability");
    let report = generalizability_report(&mtl.predictions, &sealed, &b.labels.gpa_prior, &b.traits)
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_report(&mut builder, "mtl/", &report)?;

    let manifest = builder.finish()?;
    println!("bench run {} complete: {} outputs hashed", manifest.run_id, manifest.outputs.len());
    Ok(())
}
