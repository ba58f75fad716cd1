//! Small end-to-end demo: generate a planted cohort, extract features, run
//! the LR pipeline, and print the evaluation summary.
//!
//! Run with `cargo run --release -p erl-core --example end_to_end`.

use erl_core::eval::{evaluate, render_summary_md, EvaluationInputs};
use erl_core::features::{extract_cohort, ExtractorConfig};
use erl_core::pipelines::{run_lr_pipeline, weekly_matrix, LrPipelineConfig};
use erl_core::synth::{generate_cohort, CohortConfig};

fn main() {
    let config = CohortConfig {
        cohort_id: "demo".into(),
        seed: 42,
        n_participants: 60,
        n_noise_self_reports: 20,
        ..Default::default()
    };
    let cohort = generate_cohort(&config).expect("valid config");
    println!(
        "generated {} participants over {} days",
        config.n_participants,
        cohort.days.len()
    );

    let daily = extract_cohort(
        &cohort.events,
        &cohort.place_map,
        &cohort.schedule,
        &cohort.days,
        &ExtractorConfig::default(),
    );
    println!("extracted {} daily features", daily.n_features());

    let matrix = weekly_matrix(&daily, &cohort.self_reports);
    let lr = run_lr_pipeline(
        &matrix,
        &cohort.labels.gpa_current,
        &LrPipelineConfig {
            seed: 42,
            ..Default::default()
        },
    )
    .expect("pipeline runs");

    let report = evaluate(EvaluationInputs {
        approach: "lr",
        cohort: "demo",
        predictions: &lr.predictions.rows,
        gpa_current: &cohort.labels.gpa_current,
        gpa_prior: &cohort.labels.gpa_prior,
        traits: &cohort.traits,
        importance: Some(lr.importance),
        leakage_flags: lr.leakage_flags,
    })
    .expect("aligned predictions");
    println!("{}", render_summary_md(&report));
}
