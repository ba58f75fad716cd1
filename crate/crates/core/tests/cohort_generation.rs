//! Cohort-generator contracts: determinism down to bytes, realized label
//! fractions, trait prevalences, planted-sign recovery, and pair/persistence
//! behavior.

use std::collections::BTreeMap;

use erl_core::domain::{io, Performance};
use erl_core::synth::{
    default_planted_effects, generate_cohort, generate_cohort_pair, CohortConfig,
    DistributionShift, EffectFamily, PlantedEffect,
};

fn small_config(seed: u64, n: usize) -> CohortConfig {
    CohortConfig {
        cohort_id: format!("t{seed}"),
        seed,
        n_participants: n,
        n_noise_self_reports: 5,
        ..Default::default()
    }
}

fn point_biserial(values: &[f64], is_high: &[bool]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let n1 = is_high.iter().filter(|h| **h).count() as f64;
    let n0 = n - n1;
    if sd == 0.0 || n1 == 0.0 || n0 == 0.0 {
        return 0.0;
    }
    let m1 = values
        .iter()
        .zip(is_high)
        .filter(|(_, h)| **h)
        .map(|(v, _)| v)
        .sum::<f64>()
        / n1;
    let m0 = values
        .iter()
        .zip(is_high)
        .filter(|(_, h)| !**h)
        .map(|(v, _)| v)
        .sum::<f64>()
        / n0;
    (m1 - m0) / sd * (n1 * n0 / (n * n)).sqrt()
}

#[test]
fn same_config_twice_gives_byte_identical_output() {
    let config = small_config(11, 24);
    let a = generate_cohort(&config).unwrap();
    let b = generate_cohort(&config).unwrap();

    let dump = |c: &erl_core::synth::Cohort| -> Vec<u8> {
        let mut buf = Vec::new();
        let all_events: Vec<_> = c.events.values().flatten().cloned().collect();
        io::write_events_csv(&all_events, &mut buf).unwrap();
        io::write_labels_csv(&c.labels, &c.traits, &mut buf).unwrap();
        io::write_schedule_csv(&c.schedule, &mut buf).unwrap();
        c.self_reports
            .write_csv(&c.participants(), &mut buf)
            .unwrap();
        buf.extend(serde_json::to_vec(&c.ground_truth).unwrap());
        buf
    };
    assert_eq!(dump(&a), dump(&b));
}

#[test]
fn low_performer_count_matches_configured_fraction() {
    let mut config = small_config(1, 188);
    config.low_performer_fraction = 0.23;
    let cohort = generate_cohort(&config).unwrap();
    let lows = cohort
        .participants()
        .iter()
        .filter(|p| cohort.labels.binary_current(p) == Some(Performance::Low))
        .count();
    // 188 x 0.23 = 43.24: the generator realizes 43 +- 2
    assert!((41..=45).contains(&lows), "lows = {lows}");
}

#[test]
fn trait_prevalences_realized_within_three_points() {
    let config = small_config(3, 150);
    let cohort = generate_cohort(&config).unwrap();
    let n = cohort.participants().len() as f64;
    let count = |f: fn(&erl_core::domain::TraitSet) -> bool| {
        cohort.traits.values().filter(|t| f(t)).count() as f64 / n
    };
    let tp = &config.trait_prevalences;
    assert!((count(|t| t.underrepresented_minority) - tp.underrepresented_minority).abs() <= 0.03);
    assert!((count(|t| t.first_generation) - tp.first_generation).abs() <= 0.03);
    assert!((count(|t| t.gender_minority) - tp.gender_minority).abs() <= 0.03);
    assert!((count(|t| t.sexual_minority) - tp.sexual_minority).abs() <= 0.03);
}

#[test]
fn planted_signs_recovered_from_behavior_aggregates() {
    let mut config = small_config(5, 120);
    config.planted_effects = vec![
        PlantedEffect::new(EffectFamily::ClassAttendance, 1, 1.0),
        PlantedEffect::new(EffectFamily::WeekdayPhoneUse, -1, 1.0),
        PlantedEffect::new(EffectFamily::RestlessSleep, -1, 1.0),
        PlantedEffect::new(EffectFamily::WeekdayExercise, 1, 1.0),
        PlantedEffect::new(EffectFamily::GreensTime, 1, 1.0),
        PlantedEffect::new(EffectFamily::PartyTime, -1, 0.8),
    ];
    let cohort = generate_cohort(&config).unwrap();
    for effect in &config.planted_effects {
        if effect.strength < 0.5 {
            continue;
        }
        let means = &cohort.ground_truth.behavior_means[&effect.family];
        let mut values = Vec::new();
        let mut is_high = Vec::new();
        for (p, v) in means {
            values.push(*v);
            is_high.push(cohort.labels.binary_current(p) == Some(Performance::High));
        }
        assert!(values.len() >= 100, "{:?} has too few aggregates", effect.family);
        let r = point_biserial(&values, &is_high);
        assert!(
            r * effect.direction as f64 > 0.0,
            "{:?}: corr {r} does not match direction {}",
            effect.family,
            effect.direction
        );
    }
}

#[test]
fn gpa_anchor_shape() {
    let cohort = generate_cohort(&small_config(9, 188)).unwrap();
    let mut highs = Vec::new();
    let mut lows = Vec::new();
    for p in cohort.participants() {
        let gpa = cohort.labels.gpa_current[&p];
        match cohort.labels.binary_current(&p).unwrap() {
            Performance::High => highs.push(gpa),
            Performance::Low => lows.push(gpa),
        }
        assert!((0.0..=4.0).contains(&gpa));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&highs) - 3.69).abs() < 0.08, "high mean {}", mean(&highs));
    assert!((mean(&lows) - 2.76).abs() < 0.18, "low mean {}", mean(&lows));
    assert!(highs.iter().all(|g| *g > 3.2));
    assert!(lows.iter().all(|g| *g <= 3.2));
}

#[test]
fn full_persistence_copies_binary_labels() {
    let mut config = small_config(13, 60);
    config.prior_persistence = 1.0;
    let cohort = generate_cohort(&config).unwrap();
    for p in cohort.participants() {
        assert_eq!(
            cohort.labels.binary_prior(&p).unwrap(),
            cohort.labels.binary_current(&p).unwrap()
        );
    }
}

#[test]
fn mid_persistence_populates_all_transition_categories() {
    let mut config = small_config(17, 120);
    config.prior_persistence = 0.6;
    let cohort = generate_cohort(&config).unwrap();
    let mut counts: BTreeMap<(Performance, Performance), usize> = BTreeMap::new();
    for p in cohort.participants() {
        let prior = cohort.labels.binary_prior(&p).unwrap();
        let current = cohort.labels.binary_current(&p).unwrap();
        *counts.entry((prior, current)).or_default() += 1;
    }
    assert_eq!(counts.len(), 4, "transition categories: {counts:?}");
}

#[test]
fn pair_shares_signs_and_shifts_marginals() {
    let mut a_cfg = small_config(21, 80);
    a_cfg.cohort_id = "a".into();
    let mut b_cfg = small_config(22, 80);
    b_cfg.cohort_id = "b".into();
    let (a, b) = generate_cohort_pair(
        &a_cfg,
        &b_cfg,
        DistributionShift {
            magnitude: 1.0,
            seed: 99,
        },
    )
    .unwrap();
    assert_eq!(a.ground_truth.applied_effects, b.ground_truth.applied_effects);

    // at magnitude 1 at least one behavior family's population mean moves
    let mut any_shifted = false;
    for family in EffectFamily::ALL {
        let mean_of = |c: &erl_core::synth::Cohort| {
            let m = &c.ground_truth.behavior_means[&family];
            if m.is_empty() {
                return None;
            }
            Some(m.values().sum::<f64>() / m.len() as f64)
        };
        if let (Some(ma), Some(mb)) = (mean_of(&a), mean_of(&b)) {
            let spread = ma.abs().max(1.0);
            if (ma - mb).abs() / spread > 0.15 {
                any_shifted = true;
            }
        }
    }
    assert!(any_shifted, "shift of magnitude 1 should move some marginal");
}

#[test]
fn zero_shift_pair_is_exchangeable() {
    let mut a_cfg = small_config(31, 80);
    a_cfg.cohort_id = "a".into();
    let mut b_cfg = small_config(31, 80);
    b_cfg.cohort_id = "b".into();
    let (a, b) = generate_cohort_pair(&a_cfg, &b_cfg, DistributionShift::none()).unwrap();
    // same seed, no shift: identical behavior parameters per index
    for family in EffectFamily::ALL {
        let va: Vec<f64> = a.ground_truth.behavior_means[&family].values().copied().collect();
        let vb: Vec<f64> = b.ground_truth.behavior_means[&family].values().copied().collect();
        if va.is_empty() {
            continue;
        }
        let ma = va.iter().sum::<f64>() / va.len() as f64;
        let mb = vb.iter().sum::<f64>() / vb.len() as f64;
        let sd = (va.iter().map(|v| (v - ma) * (v - ma)).sum::<f64>() / va.len() as f64).sqrt();
        assert!(
            (ma - mb).abs() <= 0.5 * sd.max(0.1),
            "{family:?}: {ma} vs {mb} (sd {sd})"
        );
    }
}

#[test]
fn unknown_family_in_config_is_rejected_at_parse() {
    assert!(EffectFamily::parse("class_attendance").is_ok());
    assert!(EffectFamily::parse("mystery_behavior").is_err());
}

#[test]
fn default_effects_cover_the_published_signs() {
    let effects = default_planted_effects();
    let dir = |f: EffectFamily| effects.iter().find(|e| e.family == f).unwrap().direction;
    assert_eq!(dir(EffectFamily::ClassAttendance), 1);
    assert_eq!(dir(EffectFamily::WeekdayPhoneUse), -1);
    assert_eq!(dir(EffectFamily::RestlessSleep), -1);
    assert_eq!(dir(EffectFamily::WeekdayExercise), 1);
}
