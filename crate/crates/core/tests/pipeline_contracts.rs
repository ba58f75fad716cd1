//! End-to-end pipeline contracts on small planted cohorts: LOSO coverage
//! and order invariance, the no-leakage guarantees, and the sealed-label
//! mechanics of the MTL path.

use std::collections::BTreeMap;

use erl_core::domain::SealedLabels;
use erl_core::eval::generalizability_report;
use erl_core::features::{extract_cohort, ExtractorConfig, Family};
use erl_core::learners::TrainConfig;
use erl_core::pipelines::{
    run_cnn_pipeline, run_lr_fold, run_lr_pipeline, run_mtl_pipeline, weekly_matrix,
    CnnPipelineInputs, LrPipelineConfig, MtlPipelineInputs, TensorSource, WeeklyMatrix,
};
use erl_core::synth::{generate_cohort, generate_cohort_pair, Cohort, CohortConfig, DistributionShift};

fn test_cohort(seed: u64, n: usize) -> Cohort {
    let config = CohortConfig {
        cohort_id: format!("c{seed}"),
        seed,
        n_participants: n,
        n_noise_self_reports: 10,
        ..Default::default()
    };
    generate_cohort(&config).unwrap()
}

/// A lighter extraction for pipeline tests.
fn light_extract(cohort: &Cohort) -> erl_core::domain::DailyFeatureMatrix {
    let cfg = ExtractorConfig {
        families: [Family::Screen, Family::Steps, Family::Sleep, Family::Calls].into(),
        ..Default::default()
    };
    extract_cohort(&cohort.events, &cohort.place_map, &cohort.schedule, &cohort.days, &cfg)
}

#[test]
fn loso_covers_every_participant_exactly_once() {
    let cohort = test_cohort(41, 18);
    let daily = light_extract(&cohort);
    let matrix = weekly_matrix(&daily, &cohort.self_reports);
    let config = LrPipelineConfig {
        seed: 41,
        ..Default::default()
    };
    let result = run_lr_pipeline(&matrix, &cohort.labels.gpa_current, &config).unwrap();
    assert_eq!(result.folds.len(), 18);
    assert_eq!(result.predictions.rows.len(), 18);
    for p in cohort.participants() {
        assert!(result.predictions.rows.contains_key(&p));
    }
    assert!(result
        .leakage_flags
        .iter()
        .any(|f| f.contains("cfs_select")));
}

#[test]
fn loso_predictions_are_order_invariant() {
    let cohort = test_cohort(43, 14);
    let daily = light_extract(&cohort);
    let matrix = weekly_matrix(&daily, &cohort.self_reports);
    let config = LrPipelineConfig {
        seed: 7,
        ..Default::default()
    };
    let base = run_lr_pipeline(&matrix, &cohort.labels.gpa_current, &config).unwrap();

    // reverse the participant rows and rerun
    let mut order: Vec<usize> = (0..matrix.participants.len()).collect();
    order.reverse();
    let shuffled = WeeklyMatrix {
        participants: order.iter().map(|&i| matrix.participants[i].clone()).collect(),
        columns: matrix.columns.clone(),
        rows: order.iter().map(|&i| matrix.rows[i].clone()).collect(),
    };
    let swapped = run_lr_pipeline(&shuffled, &cohort.labels.gpa_current, &config).unwrap();
    for (p, row) in &base.predictions.rows {
        let other = &swapped.predictions.rows[p];
        assert_eq!(row.label, other.label, "label changed for {p}");
        assert_eq!(row.prob_low, other.prob_low, "probability changed for {p}");
    }
}

#[test]
fn perturbing_held_out_participant_leaves_training_stats_bit_identical() {
    let cohort = test_cohort(47, 14);
    let daily = light_extract(&cohort);
    let matrix = weekly_matrix(&daily, &cohort.self_reports);
    let config = LrPipelineConfig {
        seed: 47,
        ..Default::default()
    };
    let held_out = 3usize;
    let base = run_lr_fold(&matrix, &cohort.labels.gpa_current, &config, held_out).unwrap();

    let mut perturbed = matrix.clone_rows();
    for cell in perturbed.rows[held_out].iter_mut() {
        if let Some(v) = cell {
            *v = *v * 3.0 + 17.0;
        }
    }
    let touched = run_lr_fold(&perturbed, &cohort.labels.gpa_current, &config, held_out).unwrap();

    // training statistics are bit-identical: imputation means,
    // standardization parameters, and pruning decisions
    assert_eq!(base.stats, touched.stats);
}

trait CloneRows {
    fn clone_rows(&self) -> WeeklyMatrix;
}
impl CloneRows for WeeklyMatrix {
    fn clone_rows(&self) -> WeeklyMatrix {
        WeeklyMatrix {
            participants: self.participants.clone(),
            columns: self.columns.clone(),
            rows: self.rows.clone(),
        }
    }
}

#[test]
fn cnn_pipeline_keeps_test_split_out_of_cv() {
    let cohort = test_cohort(53, 30);
    let daily = light_extract(&cohort);
    let source = TensorSource::build(&daily);
    let cfg = TrainConfig {
        epochs: 8,
        patience: 4,
        learning_rate: 1e-3,
        seed: 53,
        ..Default::default()
    };
    let result = run_cnn_pipeline(
        &CnnPipelineInputs {
            source: &source,
            gpa: &cohort.labels.gpa_current,
            cohort_id: "c53",
        },
        &cfg,
        2,
    )
    .unwrap();
    assert_eq!(result.repeats.len(), 2);
    for repeat in &result.repeats {
        // every test participant got a prediction, none are double-counted
        assert_eq!(repeat.test_participants.len(), repeat.predictions.len());
        assert_eq!(repeat.fold_best_epochs.len(), 5);
    }
}

#[test]
fn mtl_pipeline_never_opens_the_seal_and_scores_through_evaluator() {
    let a_cfg = CohortConfig {
        cohort_id: "ta".into(),
        seed: 61,
        n_participants: 24,
        n_noise_self_reports: 5,
        ..Default::default()
    };
    let b_cfg = CohortConfig {
        cohort_id: "tb".into(),
        seed: 62,
        n_participants: 20,
        n_noise_self_reports: 5,
        ..Default::default()
    };
    let (a, b) = generate_cohort_pair(&a_cfg, &b_cfg, DistributionShift { magnitude: 0.5, seed: 3 }).unwrap();

    let extract_light = |c: &Cohort| {
        let cfg = ExtractorConfig {
            families: [Family::Screen, Family::Steps, Family::Sleep].into(),
            ..Default::default()
        };
        extract_cohort(&c.events, &c.place_map, &c.schedule, &c.days, &cfg)
    };
    let source_a = TensorSource::build(&extract_light(&a));
    let source_b = TensorSource::build(&extract_light(&b));

    let sealed = SealedLabels::seal("tb", b.labels.gpa_current.clone());
    let cfg = TrainConfig {
        epochs: 6,
        patience: 3,
        learning_rate: 1e-3,
        seed: 61,
        ..Default::default()
    };
    let result = run_mtl_pipeline(
        &MtlPipelineInputs {
            source_a: &source_a,
            gpa_a: &a.labels.gpa_current,
            prior_a: &a.labels.gpa_prior,
            cohort_a_id: "ta",
            source_b: &source_b,
            prior_b: &b.labels.gpa_prior,
            sealed_b: &sealed,
        },
        &cfg,
    )
    .unwrap();

    // the seal was never opened during training
    assert_eq!(sealed.open_count(), 0);
    // predictions cover all of B
    assert_eq!(result.predictions.rows.len(), 20);

    // the evaluator may open it, exactly once, after the lineage check
    let report = generalizability_report(&result.predictions, &sealed, &b.labels.gpa_prior, &b.traits).unwrap();
    assert_eq!(sealed.open_count(), 1);
    assert_eq!(report.n, 20);
    assert!(report.transitions.is_some());
}

#[test]
fn mtl_without_b_priors_degrades_to_a_only_with_flag() {
    let a_cfg = CohortConfig {
        cohort_id: "ua".into(),
        seed: 71,
        n_participants: 20,
        n_noise_self_reports: 5,
        ..Default::default()
    };
    let b_cfg = CohortConfig {
        cohort_id: "ub".into(),
        seed: 72,
        n_participants: 16,
        n_noise_self_reports: 5,
        prior_coverage: 0.0,
        ..Default::default()
    };
    let a = generate_cohort(&a_cfg).unwrap();
    let b = generate_cohort(&b_cfg).unwrap();
    assert!(b.labels.gpa_prior.is_empty());

    let extract_light = |c: &Cohort| {
        let cfg = ExtractorConfig {
            families: [Family::Screen, Family::Steps].into(),
            ..Default::default()
        };
        extract_cohort(&c.events, &c.place_map, &c.schedule, &c.days, &cfg)
    };
    let source_a = TensorSource::build(&extract_light(&a));
    let source_b = TensorSource::build(&extract_light(&b));
    let sealed = SealedLabels::seal("ub", b.labels.gpa_current.clone());
    let cfg = TrainConfig {
        epochs: 4,
        patience: 2,
        learning_rate: 1e-3,
        seed: 71,
        ..Default::default()
    };
    let result = run_mtl_pipeline(
        &MtlPipelineInputs {
            source_a: &source_a,
            gpa_a: &a.labels.gpa_current,
            prior_a: &a.labels.gpa_prior,
            cohort_a_id: "ua",
            source_b: &source_b,
            prior_b: &b.labels.gpa_prior,
            sealed_b: &sealed,
        },
        &cfg,
    )
    .unwrap();
    assert_eq!(result.secondary_b_count, 0);
    assert!(result.flags.iter().any(|f| f.contains("degraded")));
}
