//! Cohort generation: latent academic scores drive GPA labels, protected
//! traits, and behavior parameters; a per-day timeline simulator turns the
//! parameters into sensor event streams that the feature extractors can
//! consume.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Weekday};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::domain::io::{ClassBlock, Schedule};
use crate::domain::{
    ActivityKind, CallKind, LabelSet, ParticipantId, Payload, ProtectedTraits, ScreenEvent,
    SensorEvent, SleepStatus, TraitSet, GPA_CUTOFF,
};
use crate::features::PlaceMap;
use crate::rng::substream;

use super::campus;
use super::missing::inject_missingness;
use super::pair::DistributionShift;
use super::table::SelfReportTable;
use super::{Cohort, CohortConfig, EffectFamily, GroundTruth, SynthError};

const WALK_M_PER_MIN: f64 = 80.0;
const M_PER_DEG_LAT: f64 = 111_320.0;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Inverse CDF of a normal truncated to [lo, hi].
fn trunc_normal_inv(q: f64, mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let n = StatNormal::new(mu, sigma).expect("valid normal");
    let (a, b) = (n.cdf(lo), n.cdf(hi));
    n.inverse_cdf((a + q * (b - a)).clamp(1e-12, 1.0 - 1e-12))
}

/// Per-participant behavior parameters after planted effects and any
/// distribution shift have been applied.
struct Profile {
    home_place: usize,
    home: (f64, f64),
    frat_resident: bool,
    wake_min: u32,
    bed_min: u32,
    attend_prob: f64,
    weekday_sessions: f64,
    weekend_sessions: f64,
    restless_frac: f64,
    exercise_prob: f64,
    exercise_dur_min: f64,
    greens_base_min: f64,
    party_prob: f64,
    study_prob: f64,
    call_rate: f64,
    bt_own: [String; 2],
    /// Unplanted sociability multiplier applied to nearby-device rates.
    bt_social: f64,
    loc_phase_min: u32,
}

fn family_signal(config: &CohortConfig, family: EffectFamily, latent: f64) -> f64 {
    config
        .planted_effects
        .iter()
        .filter(|e| e.family == family)
        .map(|e| e.strength * e.direction as f64 * latent)
        .sum()
}

fn build_profile(
    config: &CohortConfig,
    shift: Option<&DistributionShift>,
    index: usize,
    latent: f64,
    place_map: &PlaceMap,
    rng: &mut ChaCha8Rng,
) -> Profile {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    // one idiosyncratic draw per family, in fixed family order
    let eta: std::collections::BTreeMap<EffectFamily, f64> = EffectFamily::ALL
        .iter()
        .map(|f| (*f, family_signal(config, *f, latent) + normal.sample(rng)))
        .collect();
    let eta = |fam: EffectFamily| eta[&fam];
    let off = |fam: EffectFamily| shift.map_or(0.0, |s| s.family_offset(fam));

    let attend_prob = sigmoid(0.5 + 1.4 * eta(EffectFamily::ClassAttendance) + 1.4 * off(EffectFamily::ClassAttendance));
    let weekday_sessions = ((22.0f64).ln() + 0.4 * eta(EffectFamily::WeekdayPhoneUse)
        + 0.4 * off(EffectFamily::WeekdayPhoneUse))
    .exp()
    .clamp(4.0, 70.0);
    let weekend_sessions = ((18.0f64).ln() + 0.33 * normal.sample(rng)).exp().clamp(4.0, 70.0);
    let restless_frac = sigmoid(-1.8 + 0.75 * eta(EffectFamily::RestlessSleep) + 0.75 * off(EffectFamily::RestlessSleep))
        .clamp(0.02, 0.85);
    let exercise_prob = sigmoid(-0.1 + 1.0 * eta(EffectFamily::WeekdayExercise) + 1.0 * off(EffectFamily::WeekdayExercise));
    let exercise_dur_min = 45.0 + 10.0 * normal.sample(rng).abs();
    let greens_base_min = (3.3 + 0.9 * eta(EffectFamily::GreensTime) + 0.9 * off(EffectFamily::GreensTime))
        .exp()
        .clamp(4.0, 150.0);
    let party_prob = sigmoid(-0.6 + 0.8 * eta(EffectFamily::PartyTime) + 0.8 * off(EffectFamily::PartyTime));

    let frat_resident = rng.gen::<f64>() < 0.04;
    let home_id: &str = if frat_resident {
        campus::frat_buildings()[rng.gen_range(0..campus::frat_buildings().len())]
    } else {
        campus::dorm_buildings()[rng.gen_range(0..campus::dorm_buildings().len())]
    };
    let home_place = place_map
        .places
        .iter()
        .position(|p| p.id == home_id)
        .expect("campus building");
    let c = place_map.places[home_place].centroid();
    // fixed within-building bed location
    let home = (
        c.0 + normal.sample(rng) * 8.0 / M_PER_DEG_LAT,
        c.1 + normal.sample(rng) * 8.0 / (M_PER_DEG_LAT * c.0.to_radians().cos()),
    );

    let timing_off = shift.map_or(0.0, |s| s.timing_offset_min());
    let wake_min = (465.0 + 45.0 * normal.sample(rng) + timing_off).clamp(330.0, 630.0) as u32;
    let bed_min = (1410.0 + 45.0 * normal.sample(rng) + timing_off).clamp(1290.0, 1438.0) as u32;

    Profile {
        home_place,
        home,
        frat_resident,
        wake_min,
        bed_min,
        attend_prob,
        weekday_sessions,
        weekend_sessions,
        restless_frac,
        exercise_prob,
        exercise_dur_min,
        greens_base_min,
        party_prob,
        study_prob: 0.45,
        call_rate: (0.3 * normal.sample(rng)).exp().clamp(0.3, 3.0),
        bt_own: [format!("own_{index}_a"), format!("own_{index}_b")],
        bt_social: (0.45 * normal.sample(rng)).exp().clamp(0.35, 3.0),
        loc_phase_min: rng.gen_range(0..5),
    }
}

fn gen_schedule(place_map: &PlaceMap, rng: &mut ChaCha8Rng) -> Vec<ClassBlock> {
    const SLOTS: [u32; 5] = [540, 630, 780, 870, 960];
    const WEEKDAYS: [Weekday; 5] = [
        Weekday::Mon,
        Weekday::Tue,
        Weekday::Wed,
        Weekday::Thu,
        Weekday::Fri,
    ];
    let n_classes = rng.gen_range(3..=5usize);
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut blocks = Vec::new();
    let studies = campus::study_buildings();
    while blocks.len() < n_classes {
        let wd = rng.gen_range(0..5);
        let slot = rng.gen_range(0..SLOTS.len());
        if taken.contains(&(wd, slot)) {
            continue;
        }
        taken.push((wd, slot));
        let duration = if rng.gen::<f64>() < 0.6 { 50 } else { 80 };
        let building = studies[rng.gen_range(0..studies.len())];
        debug_assert!(place_map.by_id(building).is_some());
        blocks.push(ClassBlock {
            weekday: WEEKDAYS[wd],
            start_min: SLOTS[slot],
            end_min: SLOTS[slot] + duration,
            building: building.to_string(),
        });
    }
    blocks.sort_by_key(|b| (b.weekday.num_days_from_monday(), b.start_min));
    blocks
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Spot {
    Home,
    Place(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StayKind {
    Rest,
    Class,
    Food,
    Study,
    Exercise,
    Greens,
    Party,
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Stay {
        from: u32,
        to: u32,
        spot: Spot,
        kind: StayKind,
    },
    Walk {
        from: u32,
        to: u32,
        a: Spot,
        b: Spot,
    },
}

struct DayPlan {
    segments: Vec<Segment>,
    sleep_start: u32,
    attendance: Option<f64>,
    phone_session_rate: f64,
    exercise_min: f64,
    greens_min: f64,
    party_min: f64,
}

struct Planned {
    start: u32,
    dur: u32,
    place: usize,
    kind: StayKind,
}

fn spot_point(spot: Spot, profile: &Profile, map: &PlaceMap) -> (f64, f64) {
    match spot {
        Spot::Home => profile.home,
        Spot::Place(i) => map.places[i].centroid(),
    }
}

fn walk_minutes(a: Spot, b: Spot, profile: &Profile, map: &PlaceMap) -> u32 {
    if a == b {
        return 0;
    }
    let d = crate::features::haversine_m(spot_point(a, profile, map), spot_point(b, profile, map));
    (d / WALK_M_PER_MIN).ceil() as u32
}

fn place_index(map: &PlaceMap, id: &str) -> usize {
    map.places.iter().position(|p| p.id == id).expect("campus id")
}

#[allow(clippy::too_many_arguments)]
fn build_day_plan(
    profile: &Profile,
    classes: &[ClassBlock],
    day: NaiveDate,
    map: &PlaceMap,
    rng: &mut ChaCha8Rng,
) -> DayPlan {
    let weekday = day.weekday();
    let is_weekday = weekday.num_days_from_monday() < 5;
    let day_end: u32 = 1439;
    let mut acts: Vec<Planned> = Vec::new();

    // classes
    let todays: Vec<&ClassBlock> = classes.iter().filter(|c| c.weekday == weekday).collect();
    let mut attended = 0usize;
    for class in &todays {
        if rng.gen::<f64>() < profile.attend_prob {
            attended += 1;
            let dur = class.end_min - class.start_min;
            let late = rng.gen_range(0..=(dur / 8).max(1));
            let cover = ((0.72 + 0.25 * rng.gen::<f64>()) * dur as f64) as u32;
            acts.push(Planned {
                start: class.start_min + late,
                dur: cover.min(dur + 8 - late),
                place: place_index(map, &class.building),
                kind: StayKind::Class,
            });
        }
    }
    let attendance = (!todays.is_empty()).then(|| attended as f64 / todays.len() as f64);

    // errands: short unplanted visits that keep mobility and dwell
    // entropy varying independently of the planted behaviors
    for (p_errand, window) in [
        (0.8, (600u32, 140u32)),
        (0.7, (810, 150)),
        (0.5, (1080, 120)),
    ] {
        if rng.gen::<f64>() < p_errand {
            let targets = [
                campus::food_buildings()[rng.gen_range(0..3)],
                campus::dorm_buildings()[rng.gen_range(0..6)],
            ];
            let place = targets[rng.gen_range(0..2)];
            acts.push(Planned {
                start: window.0 + rng.gen_range(0..window.1),
                dur: 10 + rng.gen_range(0..35),
                place: place_index(map, place),
                kind: StayKind::Rest,
            });
        }
    }

    // lunch
    if rng.gen::<f64>() < 0.7 {
        let foods = campus::food_buildings();
        acts.push(Planned {
            start: 725 + rng.gen_range(0..40),
            dur: 25 + rng.gen_range(0..20),
            place: place_index(map, foods[rng.gen_range(0..foods.len())]),
            kind: StayKind::Food,
        });
    }

    // greens stroll
    let greens_target = profile.greens_base_min * (0.2 * rand_normal(rng)).exp();
    if greens_target >= 8.0 {
        let greens = campus::greens_areas();
        let dur = greens_target.min(100.0) as u32;
        let windows = [(500u32, 120u32), (800, 140), (975, 105)];
        let (w0, span) = windows[rng.gen_range(0..windows.len())];
        acts.push(Planned {
            start: w0 + rng.gen_range(0..span),
            dur,
            place: place_index(map, greens[rng.gen_range(0..greens.len())]),
            kind: StayKind::Greens,
        });
    }

    // gym: the planted propensity drives weekdays; weekends see the same
    // propensity at a reduced base rate
    let gym_p = if is_weekday {
        profile.exercise_prob
    } else {
        0.4 * profile.exercise_prob
    };
    if rng.gen::<f64>() < gym_p {
        let gyms = campus::exercise_buildings();
        let dur = (profile.exercise_dur_min * (0.8 + 0.4 * rng.gen::<f64>())) as u32;
        acts.push(Planned {
            start: 990 + rng.gen_range(0..120),
            dur,
            place: place_index(map, gyms[rng.gen_range(0..gyms.len())]),
            kind: StayKind::Exercise,
        });
    }

    // party on Friday/Saturday evenings, otherwise maybe an evening study block
    let party_night = matches!(weekday, Weekday::Fri | Weekday::Sat);
    if party_night && rng.gen::<f64>() < profile.party_prob {
        let dur = 60 + rng.gen_range(0..90);
        let place = if profile.frat_resident {
            profile.home_place
        } else {
            let frats = campus::frat_buildings();
            place_index(map, frats[rng.gen_range(0..frats.len())])
        };
        acts.push(Planned {
            start: 1230 + rng.gen_range(0..120),
            dur,
            place,
            kind: StayKind::Party,
        });
    } else if rng.gen::<f64>() < profile.study_prob {
        let studies = campus::study_buildings();
        acts.push(Planned {
            start: 1140 + rng.gen_range(0..90),
            dur: 30 + rng.gen_range(0..60),
            place: place_index(map, studies[rng.gen_range(0..studies.len())]),
            kind: StayKind::Study,
        });
    }

    acts.sort_by_key(|a| a.start);

    // assemble: walk between stays, rest at home in long gaps
    let mut segments: Vec<Segment> = Vec::new();
    let mut cursor = profile.wake_min;
    let mut cur = Spot::Home;
    let mut realized_exercise = 0.0;
    let mut realized_greens = 0.0;
    let mut realized_party = 0.0;
    for act in &acts {
        let target = Spot::Place(act.place);
        let walk = walk_minutes(cur, target, profile, map);
        let depart = act.start.saturating_sub(walk).max(cursor);
        let arrive = depart + walk;
        let end = (arrive + act.dur).min(day_end);
        if arrive + 5 > end {
            continue;
        }
        if depart > cursor {
            segments.push(Segment::Stay {
                from: cursor,
                to: depart,
                spot: cur,
                kind: StayKind::Rest,
            });
        }
        if walk > 0 {
            segments.push(Segment::Walk {
                from: depart,
                to: arrive,
                a: cur,
                b: target,
            });
        }
        segments.push(Segment::Stay {
            from: arrive,
            to: end,
            spot: target,
            kind: act.kind,
        });
        match act.kind {
            StayKind::Exercise => realized_exercise += (end - arrive) as f64,
            StayKind::Greens => realized_greens += (end - arrive) as f64,
            StayKind::Party => realized_party += (end - arrive) as f64,
            _ => {}
        }
        cursor = end;
        cur = target;
    }
    // head home for the night
    if cur != Spot::Home {
        let walk = walk_minutes(cur, Spot::Home, profile, map);
        let arrive = (cursor + walk).min(day_end);
        segments.push(Segment::Walk {
            from: cursor,
            to: arrive,
            a: cur,
            b: Spot::Home,
        });
        cursor = arrive;
    }
    let sleep_start = profile.bed_min.max(cursor).min(day_end);
    if sleep_start > cursor {
        segments.push(Segment::Stay {
            from: cursor,
            to: sleep_start,
            spot: Spot::Home,
            kind: StayKind::Rest,
        });
    }

    DayPlan {
        segments,
        sleep_start,
        attendance,
        phone_session_rate: if is_weekday {
            profile.weekday_sessions
        } else {
            profile.weekend_sessions
        },
        exercise_min: realized_exercise,
        greens_min: realized_greens,
        party_min: realized_party,
    }
}

fn rand_normal(rng: &mut ChaCha8Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit").sample(rng)
}

fn jitter(point: (f64, f64), sd_m: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    (
        point.0 + rand_normal(rng) * sd_m / M_PER_DEG_LAT,
        point.1 + rand_normal(rng) * sd_m / (M_PER_DEG_LAT * point.0.to_radians().cos()),
    )
}

struct DayAggregates {
    attendance: Option<f64>,
    phone_min: Option<f64>,
    restless_min: f64,
    exercise_min: Option<f64>,
    greens_min: f64,
    party_min: Option<f64>,
}

/// Everything one participant contributes to the cohort.
struct ParticipantData {
    events: Vec<SensorEvent>,
    schedule: Vec<ClassBlock>,
    aggregates: Vec<DayAggregates>,
}

#[allow(clippy::too_many_arguments)]
fn generate_participant(
    config: &CohortConfig,
    shift: Option<&DistributionShift>,
    index: usize,
    pid: &ParticipantId,
    latent: f64,
    map: &PlaceMap,
    days: &[NaiveDate],
) -> ParticipantData {
    let mut rng = substream(config.seed, "participant", index as u64);
    let profile = build_profile(config, shift, index, latent, map, &mut rng);
    let classes = gen_schedule(map, &mut rng);

    let mut events: Vec<SensorEvent> = Vec::with_capacity(4096);
    let mut aggregates: Vec<DayAggregates> = Vec::with_capacity(days.len());
    let at = |day: NaiveDate, minute: u32| -> NaiveDateTime {
        day.and_hms_opt(minute / 60, minute % 60, 0).expect("minute in day")
    };
    let push = |events: &mut Vec<SensorEvent>, day: NaiveDate, minute: u32, payload: Payload| {
        events.push(SensorEvent::new(pid.clone(), at(day, minute), payload));
    };

    let mut sleep_starts: Vec<u32> = Vec::with_capacity(days.len());
    let mut restless_by_day: BTreeMap<NaiveDate, f64> = BTreeMap::new();

    for &day in days.iter() {
        let plan = build_day_plan(&profile, &classes, day, map, &mut rng);
        sleep_starts.push(plan.sleep_start);
        let is_weekday = day.weekday().num_days_from_monday() < 5;
        let party_night = matches!(day.weekday(), Weekday::Fri | Weekday::Sat);

        let spot_at = |minute: u32| -> Option<(Spot, StayKind, (f64, f64), bool)> {
            for seg in &plan.segments {
                match *seg {
                    Segment::Stay { from, to, spot, kind } if minute >= from && minute < to => {
                        return Some((spot, kind, spot_point(spot, &profile, map), false));
                    }
                    Segment::Walk { from, to, a, b } if minute >= from && minute < to => {
                        let t = (minute - from) as f64 / (to - from).max(1) as f64;
                        let pa = spot_point(a, &profile, map);
                        let pb = spot_point(b, &profile, map);
                        let point = (pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1));
                        return Some((b, StayKind::Rest, point, true));
                    }
                    _ => {}
                }
            }
            None
        };

        // location every 5 minutes, around the clock (home while asleep)
        let mut m = profile.loc_phase_min;
        while m < 1440 {
            let (point, _walking) = match spot_at(m) {
                Some((_, _, p, w)) => (p, w),
                None => (profile.home, false),
            };
            let sd = if spot_at(m).is_none() { 4.0 } else { 7.0 };
            let p = jitter(point, sd, &mut rng);
            push(&mut events, day, m, Payload::Location { lat: p.0, lon: p.1 });
            m += 5;
        }

        // activity every 2 minutes while awake
        let mut m = profile.wake_min;
        while m < plan.sleep_start {
            let kind = match spot_at(m) {
                Some((_, _, _, true)) => {
                    let r = rng.gen::<f64>();
                    if r < 0.1 {
                        ActivityKind::OnBicycle
                    } else if r < 0.25 {
                        ActivityKind::OnFoot
                    } else {
                        ActivityKind::Walking
                    }
                }
                Some((_, StayKind::Exercise, _, _)) => {
                    let r = rng.gen::<f64>();
                    if r < 0.2 {
                        ActivityKind::Running
                    } else if r < 0.45 {
                        ActivityKind::Walking
                    } else {
                        ActivityKind::Still
                    }
                }
                Some((_, StayKind::Greens, _, _)) => {
                    if rng.gen::<f64>() < 0.3 {
                        ActivityKind::Walking
                    } else {
                        ActivityKind::Still
                    }
                }
                _ => {
                    let r = rng.gen::<f64>();
                    if r < 0.84 {
                        ActivityKind::Still
                    } else if r < 0.94 {
                        ActivityKind::Tilting
                    } else if r < 0.985 {
                        ActivityKind::Walking
                    } else {
                        ActivityKind::Running
                    }
                }
            };
            push(&mut events, day, m, Payload::Activity { kind });
            m += 2;
        }

        // steps every minute while awake
        for m in profile.wake_min..plan.sleep_start {
            let steps: u32 = match spot_at(m) {
                Some((_, _, _, true)) => rng.gen_range(85..116),
                Some((_, StayKind::Exercise, _, _)) => {
                    let r = rng.gen::<f64>();
                    if r < 0.3 {
                        rng.gen_range(110..141)
                    } else if r < 0.7 {
                        rng.gen_range(60..91)
                    } else {
                        rng.gen_range(0..11)
                    }
                }
                Some((_, StayKind::Greens, _, _)) => {
                    if rng.gen::<f64>() < 0.3 {
                        rng.gen_range(50..81)
                    } else {
                        rng.gen_range(0..6)
                    }
                }
                _ => {
                    if rng.gen::<f64>() < 0.8 {
                        0
                    } else {
                        rng.gen_range(1..9)
                    }
                }
            };
            push(&mut events, day, m, Payload::StepMinute { steps });
        }

        // bluetooth every 6 minutes while awake
        let mut m = profile.wake_min + 1;
        while m < plan.sleep_start {
            for own in &profile.bt_own {
                if rng.gen::<f64>() < 0.45 {
                    push(&mut events, day, m, Payload::Bluetooth { address: own.clone() });
                }
            }
            let (density, pool) = match spot_at(m) {
                Some((Spot::Place(i), kind, _, _)) => {
                    let id = map.places[i].id.clone();
                    let dens = match kind {
                        StayKind::Party => 2.2,
                        StayKind::Food => 1.4,
                        StayKind::Class | StayKind::Study => 1.2,
                        StayKind::Exercise => 1.1,
                        StayKind::Greens => 1.0,
                        _ => 0.9,
                    };
                    (dens, Some(id))
                }
                Some((Spot::Home, ..)) => (0.9, Some(map.places[profile.home_place].id.clone())),
                _ => (0.6, None),
            };
            let n = Poisson::new(density * profile.bt_social)
                .expect("positive rate")
                .sample(&mut rng) as usize;
            for _ in 0..n.min(8) {
                let address = match &pool {
                    Some(b) => format!("btd_{}_{}", b, rng.gen_range(0..40)),
                    None => format!("btd_campus_{}", rng.gen_range(0..200)),
                };
                push(&mut events, day, m, Payload::Bluetooth { address });
            }
            m += 6;
        }

        // wifi every 10 minutes when at a building (and at home overnight)
        let mut m = profile.loc_phase_min + 2;
        while m < 1440 {
            let ap = match spot_at(m) {
                Some((Spot::Place(i), _, _, false)) => Some(map.places[i].id.clone()),
                Some((Spot::Home, _, _, false)) => Some(map.places[profile.home_place].id.clone()),
                None => Some(map.places[profile.home_place].id.clone()),
                _ => None,
            };
            if let Some(b) = ap {
                let chosen = if rng.gen::<f64>() < 0.92 {
                    b
                } else {
                    map.places[rng.gen_range(0..map.places.len())].id.clone()
                };
                push(&mut events, day, m, Payload::Wifi { ap: format!("ap_{chosen}") });
            }
            m += 10;
        }

        // screen sessions while awake
        let n_sessions = Poisson::new(plan.phone_session_rate.max(0.5))
            .expect("positive rate")
            .sample(&mut rng) as usize;
        let awake_span = plan.sleep_start.saturating_sub(profile.wake_min);
        let mut phone_minutes = 0.0;
        if awake_span > 30 {
            let mut starts: Vec<u32> = (0..n_sessions)
                .map(|_| profile.wake_min + rng.gen_range(0..awake_span))
                .collect();
            starts.sort_unstable();
            let dur_dist = LogNormal::new((6.0f64).ln(), 0.7).expect("valid lognormal");
            let mut cursor = 0u32;
            for s in starts {
                if s < cursor {
                    continue;
                }
                let dur = (dur_dist.sample(&mut rng).clamp(1.0, 40.0)) as u32;
                let end = (s + dur.max(1)).min(plan.sleep_start);
                if end <= s {
                    continue;
                }
                if rng.gen::<f64>() < 0.2 {
                    push(&mut events, day, s, Payload::Screen { event: ScreenEvent::On });
                    push(&mut events, day, end.min(s + 1), Payload::Screen { event: ScreenEvent::Off });
                    cursor = end.min(s + 1) + 1;
                } else {
                    push(&mut events, day, s, Payload::Screen { event: ScreenEvent::On });
                    push(&mut events, day, s, Payload::Screen { event: ScreenEvent::Unlock });
                    push(&mut events, day, end, Payload::Screen { event: ScreenEvent::Lock });
                    push(&mut events, day, end, Payload::Screen { event: ScreenEvent::Off });
                    phone_minutes += (end - s) as f64;
                    cursor = end + 1;
                }
            }
        }

        // calls
        let n_calls = Poisson::new(profile.call_rate).expect("positive rate").sample(&mut rng) as usize;
        for _ in 0..n_calls.min(6) {
            if awake_span == 0 {
                break;
            }
            let m = profile.wake_min + rng.gen_range(0..awake_span);
            let r = rng.gen::<f64>();
            let (kind, duration_min) = if r < 0.45 {
                (CallKind::Incoming, LogNormal::new((3.0f64).ln(), 0.8).expect("valid").sample(&mut rng).clamp(0.2, 60.0))
            } else if r < 0.9 {
                (CallKind::Outgoing, LogNormal::new((3.0f64).ln(), 0.8).expect("valid").sample(&mut rng).clamp(0.2, 60.0))
            } else {
                (CallKind::Missed, 0.0)
            };
            push(
                &mut events,
                day,
                m,
                Payload::Call {
                    kind,
                    duration_min: (duration_min * 10.0).round() / 10.0,
                },
            );
        }

        // optional midday battery top-up; the overnight charge is emitted
        // with the sleep session below
        if rng.gen::<f64>() < 0.3 && awake_span > 120 {
            let s = profile.wake_min + rng.gen_range(0..(awake_span - 90));
            let e = s + 30 + rng.gen_range(0..40);
            push(&mut events, day, s, Payload::Battery { charging: true });
            push(&mut events, day, e.min(1439), Payload::Battery { charging: false });
        }

        aggregates.push(DayAggregates {
            attendance: plan.attendance,
            phone_min: is_weekday.then_some(phone_minutes),
            restless_min: 0.0,
            exercise_min: is_weekday.then_some(plan.exercise_min),
            greens_min: plan.greens_min,
            party_min: party_night.then_some(plan.party_min),
        });
    }

    // sleep sessions: night n covers sleep_start of day n-1 through wake of
    // day n; day 0 starts asleep at midnight; the final evening runs to the
    // end of the last day. Charging spans each night.
    for n in 0..=days.len() {
        let (start_day, start_min) = if n == 0 {
            (days[0], 0u32)
        } else {
            (days[n - 1], sleep_starts[n - 1])
        };
        let end_excl: NaiveDateTime = if n < days.len() {
            at(days[n], profile.wake_min)
        } else {
            at(days[n - 1], 1439) + chrono::Duration::minutes(1)
        };
        let mut t = at(start_day, start_min);
        if t >= end_excl {
            continue;
        }
        // overnight charge
        let charge_on = t + chrono::Duration::minutes(rng.gen_range(0..15));
        let charge_off = end_excl - chrono::Duration::minutes(rng.gen_range(5..30));
        if charge_on < charge_off {
            if charge_on.date() >= days[0] && charge_on.date() <= days[days.len() - 1] {
                events.push(SensorEvent::new(pid.clone(), charge_on, Payload::Battery { charging: true }));
            }
            if charge_off.date() >= days[0] && charge_off.date() <= days[days.len() - 1] {
                events.push(SensorEvent::new(pid.clone(), charge_off, Payload::Battery { charging: false }));
            }
        }
        // two-state Markov chain over asleep/restless with rare awakenings
        let p_rs = 0.2; // leave restless
        let p_sr = (p_rs * profile.restless_frac / (1.0 - profile.restless_frac)).clamp(0.001, 0.9);
        let mut status = SleepStatus::Asleep;
        let mut awake_left = 0u32;
        while t < end_excl {
            if awake_left > 0 {
                awake_left -= 1;
                status = SleepStatus::Awake;
            } else {
                status = match status {
                    SleepStatus::Awake => SleepStatus::Asleep,
                    SleepStatus::Asleep => {
                        if rng.gen::<f64>() < 0.004 {
                            awake_left = rng.gen_range(1..4);
                            SleepStatus::Awake
                        } else if rng.gen::<f64>() < p_sr {
                            SleepStatus::Restless
                        } else {
                            SleepStatus::Asleep
                        }
                    }
                    SleepStatus::Restless => {
                        if rng.gen::<f64>() < p_rs {
                            SleepStatus::Asleep
                        } else {
                            SleepStatus::Restless
                        }
                    }
                };
            }
            if t.date() >= days[0] && t.date() <= days[days.len() - 1] {
                events.push(SensorEvent::new(pid.clone(), t, Payload::SleepMinute { status }));
                if status == SleepStatus::Restless {
                    *restless_by_day.entry(t.date()).or_default() += 1.0;
                }
            }
            t += chrono::Duration::minutes(1);
        }
    }

    for (d, &day) in days.iter().enumerate() {
        aggregates[d].restless_min = restless_by_day.get(&day).copied().unwrap_or(0.0);
    }

    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.sensor().cmp(&b.sensor())));
    ParticipantData {
        events,
        schedule: classes,
        aggregates,
    }
}

/// Rank-based GPA assignment: the bottom `low_fraction` of latent scores
/// become Low performers; within each group the GPA follows the observed
/// truncated-normal shape, monotone in the latent score.
fn assign_gpas(latents: &[f64], low_fraction: f64) -> Vec<f64> {
    let n = latents.len();
    let k = ((n as f64 * low_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| latents[a].partial_cmp(&latents[b]).expect("finite latents"));
    let mut gpas = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        let gpa = if rank < k {
            let q = (rank as f64 + 0.5) / k as f64;
            trunc_normal_inv(q, 2.76, 0.39, 0.0, GPA_CUTOFF)
        } else {
            let q = ((rank - k) as f64 + 0.5) / (n - k) as f64;
            trunc_normal_inv(q, 3.69, 0.21, GPA_CUTOFF, 4.0)
        };
        let rounded = (gpa * 100.0).round() / 100.0;
        gpas[i] = if rank < k {
            rounded.clamp(0.0, GPA_CUTOFF)
        } else {
            rounded.clamp(GPA_CUTOFF + 0.01, 4.0)
        };
    }
    gpas
}

/// Assign a trait to exactly `round(n * prevalence)` participants, chosen by
/// a latent-correlated score so protected groups carry the configured risk
/// association.
fn assign_trait(
    latents: &[f64],
    prevalence: f64,
    association: f64,
    seed: u64,
    label: &str,
) -> Vec<bool> {
    let n = latents.len();
    let k = ((n as f64 * prevalence).round() as usize).min(n);
    let mut scores: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let mut rng = substream(seed, label, i as u64);
            let noise = rand_normal(&mut rng);
            (association * (-latents[i]) + (1.0 - association * association).sqrt() * noise, i)
        })
        .collect();
    scores.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite"));
    let mut member = vec![false; n];
    for &(_, i) in scores.iter().take(k) {
        member[i] = true;
    }
    member
}

pub(super) fn generate_cohort_impl(
    config: &CohortConfig,
    shift: Option<&DistributionShift>,
) -> Result<Cohort, SynthError> {
    config.validate()?;
    let days = config.days();
    let place_map = campus::campus_map();
    let n = config.n_participants;
    let width = (n.max(10) - 1).to_string().len();
    let pids: Vec<ParticipantId> = (0..n)
        .map(|i| ParticipantId::new(format!("{}_p{:0width$}", config.cohort_id, i)))
        .collect();

    let latents: Vec<f64> = (0..n)
        .map(|i| rand_normal(&mut substream(config.seed, "latent", i as u64)))
        .collect();
    let gpas = assign_gpas(&latents, config.low_performer_fraction);

    // prior-term latent: persistence-weighted mix with fresh noise
    let rho = config.prior_persistence;
    let prior_latents: Vec<f64> = (0..n)
        .map(|i| {
            let noise = rand_normal(&mut substream(config.seed, "prior", i as u64));
            rho * latents[i] + (1.0 - rho * rho).sqrt() * noise
        })
        .collect();
    let prior_gpas = assign_gpas(&prior_latents, config.low_performer_fraction);

    let mut labels = LabelSet::default();
    for i in 0..n {
        let has_prior = config.prior_coverage >= 1.0
            || substream(config.seed, "prior_coverage", i as u64).gen::<f64>() < config.prior_coverage;
        labels
            .insert(pids[i].clone(), gpas[i], has_prior.then_some(prior_gpas[i]))
            .expect("generated gpas in range");
    }

    let tp = &config.trait_prevalences;
    let urm = assign_trait(&latents, tp.underrepresented_minority, 0.35, config.seed, "trait_urm");
    let firstgen = assign_trait(&latents, tp.first_generation, 0.30, config.seed, "trait_firstgen");
    let gender = assign_trait(&latents, tp.gender_minority, 0.08, config.seed, "trait_gender");
    let sexual = assign_trait(&latents, tp.sexual_minority, -0.15, config.seed, "trait_sexual");
    let traits: ProtectedTraits = (0..n)
        .map(|i| {
            (
                pids[i].clone(),
                TraitSet {
                    underrepresented_minority: urm[i],
                    first_generation: firstgen[i],
                    gender_minority: gender[i],
                    sexual_minority: sexual[i],
                },
            )
        })
        .collect();

    // per-participant streams, parallel and order-independent
    let generated: Vec<ParticipantData> = (0..n)
        .into_par_iter()
        .map(|i| generate_participant(config, shift, i, &pids[i], latents[i], &place_map, &days))
        .collect();

    let mut events: BTreeMap<ParticipantId, Vec<SensorEvent>> = BTreeMap::new();
    let mut schedule: Schedule = BTreeMap::new();
    let mut behavior_means: BTreeMap<EffectFamily, BTreeMap<ParticipantId, f64>> =
        EffectFamily::ALL.iter().map(|f| (*f, BTreeMap::new())).collect();
    for (i, data) in generated.into_iter().enumerate() {
        let pid = pids[i].clone();
        schedule.insert(pid.clone(), data.schedule);
        let mean_of = |values: Vec<f64>| -> Option<f64> {
            if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
        };
        let aggs = &data.aggregates;
        let entries: [(EffectFamily, Option<f64>); 6] = [
            (
                EffectFamily::ClassAttendance,
                mean_of(aggs.iter().filter_map(|a| a.attendance).collect()),
            ),
            (
                EffectFamily::WeekdayPhoneUse,
                mean_of(aggs.iter().filter_map(|a| a.phone_min).collect()),
            ),
            (
                EffectFamily::RestlessSleep,
                mean_of(aggs.iter().map(|a| a.restless_min).collect()),
            ),
            (
                EffectFamily::WeekdayExercise,
                mean_of(aggs.iter().filter_map(|a| a.exercise_min).collect()),
            ),
            (
                EffectFamily::GreensTime,
                mean_of(aggs.iter().map(|a| a.greens_min).collect()),
            ),
            (
                EffectFamily::PartyTime,
                mean_of(aggs.iter().filter_map(|a| a.party_min).collect()),
            ),
        ];
        for (family, value) in entries {
            if let Some(v) = value {
                behavior_means.get_mut(&family).expect("all families").insert(pid.clone(), v);
            }
        }
        events.insert(pid, data.events);
    }

    if !config.missing_rate_by_sensor.is_empty() {
        inject_missingness(&mut events, &config.missing_rate_by_sensor, config.seed);
    }

    // self-reports: noise scales plus one categorical survey answer
    let mut self_reports = SelfReportTable::default();
    for k in 0..config.n_noise_self_reports {
        let mut col = BTreeMap::new();
        for (i, pid) in pids.iter().enumerate() {
            let mut rng = substream(config.seed, "selfreport", (k * n + i) as u64);
            if rng.gen::<f64>() >= 0.02 {
                let v = rand_normal(&mut rng);
                col.insert(pid.clone(), (v * 1000.0).round() / 1000.0);
            }
        }
        self_reports.numeric.push((format!("sr_noise_{k:03}"), col));
    }
    let providers = ["alpha", "beta", "gamma", "delta", "epsilon"];
    let mut provider_col = BTreeMap::new();
    for (i, pid) in pids.iter().enumerate() {
        let mut rng = substream(config.seed, "provider", i as u64);
        provider_col.insert(pid.clone(), providers[rng.gen_range(0..providers.len())].to_string());
    }
    self_reports.categorical.push(("sr_provider".to_string(), provider_col));

    let ground_truth = GroundTruth {
        applied_effects: config.planted_effects.clone(),
        latent_academic: (0..n).map(|i| (pids[i].clone(), latents[i])).collect(),
        behavior_means,
    };

    Ok(Cohort {
        config: config.clone(),
        days,
        events,
        self_reports,
        labels,
        traits,
        schedule,
        place_map,
        ground_truth,
    })
}

/// Generate one cohort. Deterministic for a given config.
pub fn generate_cohort(config: &CohortConfig) -> Result<Cohort, SynthError> {
    generate_cohort_impl(config, None)
}
