//! CSV persistence for the cohort file formats: sensor event streams,
//! labels + protected traits, class schedules, and the long-format daily
//! feature matrix with its manifest.
//!
//! All floats are written with Rust's shortest round-trip formatting and all
//! rows in canonical (participant, timestamp) order, so identical inputs
//! produce byte-identical files.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::{NaiveDate, NaiveDateTime, Weekday};
use serde::{Deserialize, Serialize};

use super::{
    ActivityKind, CallKind, DailyFeatureMatrix, DomainError, LabelSet, ParticipantId, Payload,
    ProtectedTraits, ScreenEvent, Sensor, SensorEvent, SleepStatus, TraitSet,
};

pub const TIMESTAMP_FMT: &str = "%Y-%m-%dT%H:%M";
pub const DATE_FMT: &str = "%Y-%m-%d";

/// Parse failure with the 1-based line it occurred on.
#[derive(Debug, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

fn payload_to_string(p: &Payload) -> String {
    match p {
        Payload::Activity { kind } => format!("kind={}", kind.as_str()),
        Payload::Battery { charging } => format!("charging={}", u8::from(*charging)),
        Payload::Bluetooth { address } => format!("address={address}"),
        Payload::Call { kind, duration_min } => {
            format!("kind={};duration={}", kind.as_str(), duration_min)
        }
        Payload::Location { lat, lon } => format!("lat={lat};lon={lon}"),
        Payload::Screen { event } => format!("event={}", event.as_str()),
        Payload::Wifi { ap } => format!("ap={ap}"),
        Payload::SleepMinute { status } => format!("status={}", status.as_str()),
        Payload::StepMinute { steps } => format!("steps={steps}"),
    }
}

fn parse_kv(payload: &str) -> BTreeMap<&str, &str> {
    payload
        .split(';')
        .filter_map(|kv| kv.split_once('='))
        .collect()
}

fn payload_from_parts(sensor: Sensor, payload: &str) -> Result<Payload, DomainError> {
    let kv = parse_kv(payload);
    let need = |key: &str| {
        kv.get(key)
            .copied()
            .ok_or_else(|| DomainError::Malformed(format!("payload missing `{key}`: `{payload}`")))
    };
    let bad_num =
        |key: &str| DomainError::Malformed(format!("payload field `{key}` not numeric: `{payload}`"));
    Ok(match sensor {
        Sensor::Activity => Payload::Activity {
            kind: ActivityKind::parse(need("kind")?)?,
        },
        Sensor::Battery => Payload::Battery {
            charging: match need("charging")? {
                "1" => true,
                "0" => false,
                other => {
                    return Err(DomainError::Malformed(format!("charging must be 0/1, got `{other}`")))
                }
            },
        },
        Sensor::Bluetooth => Payload::Bluetooth {
            address: need("address")?.to_string(),
        },
        Sensor::Call => Payload::Call {
            kind: CallKind::parse(need("kind")?)?,
            duration_min: need("duration")?.parse().map_err(|_| bad_num("duration"))?,
        },
        Sensor::Location => Payload::Location {
            lat: need("lat")?.parse().map_err(|_| bad_num("lat"))?,
            lon: need("lon")?.parse().map_err(|_| bad_num("lon"))?,
        },
        Sensor::Screen => Payload::Screen {
            event: ScreenEvent::parse(need("event")?)?,
        },
        Sensor::Wifi => Payload::Wifi {
            ap: need("ap")?.to_string(),
        },
        Sensor::SleepMinute => Payload::SleepMinute {
            status: SleepStatus::parse(need("status")?)?,
        },
        Sensor::StepMinute => Payload::StepMinute {
            steps: need("steps")?.parse().map_err(|_| bad_num("steps"))?,
        },
    })
}

pub fn write_events_csv(events: &[SensorEvent], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "participant_id,timestamp,sensor,payload")?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{}",
            e.participant,
            e.timestamp.format(TIMESTAMP_FMT),
            e.sensor().as_str(),
            payload_to_string(&e.payload)
        )?;
    }
    Ok(())
}

pub fn read_events_csv(r: impl BufRead) -> Result<Vec<SensorEvent>, ParseError> {
    let mut events = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| ParseError::new(lineno, e.to_string()))?;
        if lineno == 1 || line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(4, ',');
        let (pid, ts, sensor, payload) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
            _ => return Err(ParseError::new(lineno, format!("expected 4 fields: `{line}`"))),
        };
        let timestamp = NaiveDateTime::parse_from_str(ts, TIMESTAMP_FMT)
            .map_err(|_| ParseError::new(lineno, format!("bad timestamp `{ts}`")))?;
        let sensor = Sensor::parse(sensor).map_err(|e| ParseError::new(lineno, e.to_string()))?;
        let payload =
            payload_from_parts(sensor, payload).map_err(|e| ParseError::new(lineno, e.to_string()))?;
        events.push(SensorEvent::new(ParticipantId::from(pid), timestamp, payload));
    }
    Ok(events)
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_labels_csv(
    labels: &LabelSet,
    traits: &ProtectedTraits,
    w: &mut impl Write,
) -> std::io::Result<()> {
    writeln!(
        w,
        "participant_id,gpa_current,gpa_prior,urm,firstgen,gender_min,sexual_min"
    )?;
    for (p, gpa) in &labels.gpa_current {
        let prior = labels
            .gpa_prior
            .get(p)
            .map(|g| g.to_string())
            .unwrap_or_default();
        let t = traits.get(p);
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p,
            gpa,
            prior,
            t.map_or("", |t| fmt_bool(t.underrepresented_minority)),
            t.map_or("", |t| fmt_bool(t.first_generation)),
            t.map_or("", |t| fmt_bool(t.gender_minority)),
            t.map_or("", |t| fmt_bool(t.sexual_minority)),
        )?;
    }
    Ok(())
}

pub fn read_labels_csv(r: impl BufRead) -> Result<(LabelSet, ProtectedTraits), ParseError> {
    let mut labels = LabelSet::default();
    let mut traits: ProtectedTraits = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| ParseError::new(lineno, e.to_string()))?;
        if lineno == 1 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(ParseError::new(lineno, format!("expected 7 fields: `{line}`")));
        }
        let p = ParticipantId::from(fields[0]);
        let gpa: f64 = fields[1]
            .parse()
            .map_err(|_| ParseError::new(lineno, format!("bad gpa `{}`", fields[1])))?;
        let prior: Option<f64> = if fields[2].is_empty() {
            None
        } else {
            Some(
                fields[2]
                    .parse()
                    .map_err(|_| ParseError::new(lineno, format!("bad prior gpa `{}`", fields[2])))?,
            )
        };
        labels
            .insert(p.clone(), gpa, prior)
            .map_err(|e| ParseError::new(lineno, e.to_string()))?;
        let parse_flag = |s: &str| match s {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(ParseError::new(lineno, format!("trait flag must be 0/1, got `{other}`"))),
        };
        if fields[3..].iter().any(|f| !f.is_empty()) {
            traits.insert(
                p,
                TraitSet {
                    underrepresented_minority: parse_flag(fields[3])?,
                    first_generation: parse_flag(fields[4])?,
                    gender_minority: parse_flag(fields[5])?,
                    sexual_minority: parse_flag(fields[6])?,
                },
            );
        }
    }
    Ok((labels, traits))
}

/// One scheduled class meeting, weekly recurring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassBlock {
    pub weekday: Weekday,
    /// Minutes from local midnight, half-open `[start, end)`.
    pub start_min: u32,
    pub end_min: u32,
    pub building: String,
}

pub type Schedule = BTreeMap<ParticipantId, Vec<ClassBlock>>;

fn weekday_str(w: Weekday) -> &'static str {
    match w {
        Weekday::Mon => "mon",
        Weekday::Tue => "tue",
        Weekday::Wed => "wed",
        Weekday::Thu => "thu",
        Weekday::Fri => "fri",
        Weekday::Sat => "sat",
        Weekday::Sun => "sun",
    }
}

fn parse_weekday(s: &str) -> Option<Weekday> {
    match s {
        "mon" => Some(Weekday::Mon),
        "tue" => Some(Weekday::Tue),
        "wed" => Some(Weekday::Wed),
        "thu" => Some(Weekday::Thu),
        "fri" => Some(Weekday::Fri),
        "sat" => Some(Weekday::Sat),
        "sun" => Some(Weekday::Sun),
        _ => None,
    }
}

fn fmt_hm(minute: u32) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}

fn parse_hm(s: &str) -> Option<u32> {
    let (h, m) = s.split_once(':')?;
    let h: u32 = h.parse().ok()?;
    let m: u32 = m.parse().ok()?;
    (h < 24 && m < 60).then_some(h * 60 + m)
}

pub fn write_schedule_csv(schedule: &Schedule, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "participant_id,weekday,start,end,building_id")?;
    for (p, blocks) in schedule {
        for b in blocks {
            writeln!(
                w,
                "{},{},{},{},{}",
                p,
                weekday_str(b.weekday),
                fmt_hm(b.start_min),
                fmt_hm(b.end_min),
                b.building
            )?;
        }
    }
    Ok(())
}

pub fn read_schedule_csv(r: impl BufRead) -> Result<Schedule, ParseError> {
    let mut schedule: Schedule = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| ParseError::new(lineno, e.to_string()))?;
        if lineno == 1 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(ParseError::new(lineno, format!("expected 5 fields: `{line}`")));
        }
        let weekday = parse_weekday(fields[1])
            .ok_or_else(|| ParseError::new(lineno, format!("bad weekday `{}`", fields[1])))?;
        let start_min = parse_hm(fields[2])
            .ok_or_else(|| ParseError::new(lineno, format!("bad time `{}`", fields[2])))?;
        let end_min = parse_hm(fields[3])
            .ok_or_else(|| ParseError::new(lineno, format!("bad time `{}`", fields[3])))?;
        if end_min <= start_min {
            return Err(ParseError::new(lineno, "class block must end after it starts"));
        }
        schedule
            .entry(ParticipantId::from(fields[0]))
            .or_default()
            .push(ClassBlock {
                weekday,
                start_min,
                end_min,
                building: fields[4].to_string(),
            });
    }
    Ok(schedule)
}

/// Axis lists of a persisted feature matrix; fully-missing features would
/// otherwise be unrecoverable from the long-format CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub participants: Vec<ParticipantId>,
    pub days: Vec<NaiveDate>,
    pub features: Vec<String>,
}

impl FeatureManifest {
    pub fn of(matrix: &DailyFeatureMatrix) -> Self {
        Self {
            participants: matrix.participants().to_vec(),
            days: matrix.days().to_vec(),
            features: matrix.features().to_vec(),
        }
    }
}

pub fn write_features_long(matrix: &DailyFeatureMatrix, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "participant_id,date,feature,value")?;
    for p in 0..matrix.n_participants() {
        for d in 0..matrix.n_days() {
            for f in 0..matrix.n_features() {
                if let Some(v) = matrix.get(p, d, f) {
                    writeln!(
                        w,
                        "{},{},{},{}",
                        matrix.participants()[p],
                        matrix.days()[d].format(DATE_FMT),
                        matrix.features()[f],
                        v
                    )?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_features_long(
    manifest: &FeatureManifest,
    r: impl BufRead,
) -> Result<DailyFeatureMatrix, ParseError> {
    let mut matrix = DailyFeatureMatrix::new(
        manifest.participants.clone(),
        manifest.days.clone(),
        manifest.features.clone(),
    )
    .map_err(|e| ParseError::new(0, e.to_string()))?;
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| ParseError::new(lineno, e.to_string()))?;
        if lineno == 1 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, ',').collect();
        if fields.len() != 4 {
            return Err(ParseError::new(lineno, format!("expected 4 fields: `{line}`")));
        }
        let p = matrix
            .participant_pos(&ParticipantId::from(fields[0]))
            .ok_or_else(|| ParseError::new(lineno, format!("unknown participant `{}`", fields[0])))?;
        let date = NaiveDate::parse_from_str(fields[1], DATE_FMT)
            .map_err(|_| ParseError::new(lineno, format!("bad date `{}`", fields[1])))?;
        let d = matrix
            .day_pos(date)
            .ok_or_else(|| ParseError::new(lineno, format!("date `{}` outside manifest", fields[1])))?;
        let f = matrix
            .feature_pos(fields[2])
            .ok_or_else(|| ParseError::new(lineno, format!("unknown feature `{}`", fields[2])))?;
        let v: f64 = fields[3]
            .parse()
            .map_err(|_| ParseError::new(lineno, format!("bad value `{}`", fields[3])))?;
        matrix.set(p, d, f, v);
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn sample_events() -> Vec<SensorEvent> {
        let p = ParticipantId::from("p01");
        let t = |hm: &str| {
            NaiveDateTime::parse_from_str(&format!("2018-04-02T{hm}"), TIMESTAMP_FMT).unwrap()
        };
        vec![
            SensorEvent::new(p.clone(), t("08:00"), Payload::Location { lat: 47.65321, lon: -122.30421 }),
            SensorEvent::new(p.clone(), t("08:01"), Payload::Screen { event: ScreenEvent::Unlock }),
            SensorEvent::new(p.clone(), t("08:02"), Payload::Call { kind: CallKind::Incoming, duration_min: 2.5 }),
            SensorEvent::new(p.clone(), t("08:03"), Payload::StepMinute { steps: 37 }),
            SensorEvent::new(p.clone(), t("08:04"), Payload::SleepMinute { status: SleepStatus::Restless }),
            SensorEvent::new(p.clone(), t("08:05"), Payload::Bluetooth { address: "d3".into() }),
            SensorEvent::new(p.clone(), t("08:06"), Payload::Wifi { ap: "ap1".into() }),
            SensorEvent::new(p.clone(), t("08:07"), Payload::Battery { charging: true }),
            SensorEvent::new(p, t("08:08"), Payload::Activity { kind: ActivityKind::Walking }),
        ]
    }

    #[test]
    fn events_roundtrip() {
        let events = sample_events();
        let mut buf = Vec::new();
        write_events_csv(&events, &mut buf).unwrap();
        let back = read_events_csv(buf.as_slice()).unwrap();
        assert_eq!(events, back);
    }

    #[test]
    fn corrupt_timestamp_reports_line() {
        let csv = "participant_id,timestamp,sensor,payload\np01,2018-13-99T99:99,screen,event=on\n";
        let err = read_events_csv(csv.as_bytes()).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("timestamp"));
    }

    #[test]
    fn labels_roundtrip_with_optional_prior() {
        let mut labels = LabelSet::default();
        labels.insert(ParticipantId::from("p01"), 3.5, Some(3.1)).unwrap();
        labels.insert(ParticipantId::from("p02"), 2.9, None).unwrap();
        let mut traits: ProtectedTraits = BTreeMap::new();
        traits.insert(
            ParticipantId::from("p01"),
            TraitSet {
                underrepresented_minority: true,
                first_generation: false,
                gender_minority: true,
                sexual_minority: false,
            },
        );
        traits.insert(
            ParticipantId::from("p02"),
            TraitSet {
                underrepresented_minority: false,
                first_generation: true,
                gender_minority: false,
                sexual_minority: false,
            },
        );
        let mut buf = Vec::new();
        write_labels_csv(&labels, &traits, &mut buf).unwrap();
        let (l2, t2) = read_labels_csv(buf.as_slice()).unwrap();
        assert_eq!(labels.gpa_current, l2.gpa_current);
        assert_eq!(labels.gpa_prior, l2.gpa_prior);
        assert_eq!(traits, t2);
    }

    #[test]
    fn schedule_roundtrip() {
        let mut s: Schedule = BTreeMap::new();
        s.insert(
            ParticipantId::from("p01"),
            vec![ClassBlock {
                weekday: Weekday::Tue,
                start_min: 9 * 60 + 30,
                end_min: 10 * 60 + 20,
                building: "study_1".into(),
            }],
        );
        let mut buf = Vec::new();
        write_schedule_csv(&s, &mut buf).unwrap();
        assert_eq!(s, read_schedule_csv(buf.as_slice()).unwrap());
    }

    #[test]
    fn features_long_roundtrip_preserves_missing() {
        let mut m = DailyFeatureMatrix::new(
            vec![ParticipantId::from("p01"), ParticipantId::from("p02")],
            vec![NaiveDate::from_ymd_opt(2018, 4, 2).unwrap()],
            vec!["f_a".to_string(), "f_empty".to_string()],
        )
        .unwrap();
        m.set(0, 0, 0, 1.25);
        let manifest = FeatureManifest::of(&m);
        let mut buf = Vec::new();
        write_features_long(&m, &mut buf).unwrap();
        let back = read_features_long(&manifest, buf.as_slice()).unwrap();
        assert_eq!(back.get(0, 0, 0), Some(1.25));
        assert_eq!(back.get(1, 0, 0), None);
        assert!(back.feature_fully_missing(1));
    }
}
