//! Directory layout for cohort artifacts and readers/writers for the file
//! formats the subcommands exchange: cohort CSVs, feature matrices,
//! and prediction tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use erl_core::domain::io::{
    read_events_csv, read_features_long, read_schedule_csv, FeatureManifest,
};
use erl_core::domain::{DailyFeatureMatrix, LabelSet, ParticipantId, Performance, SensorEvent};
use erl_core::eval::{PredictionRow, ScoredPredictions};
use erl_core::features::PlaceMap;

use crate::errors::{CliError, CliResult};

pub const EVENTS_FILE: &str = "events.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const SCHEDULE_FILE: &str = "schedule.csv";
pub const SELF_REPORTS_FILE: &str = "self_reports.csv";
pub const PLACES_FILE: &str = "places.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const FEATURES_MANIFEST_FILE: &str = "features_manifest.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

pub struct LoadedCohort {
    pub events: BTreeMap<ParticipantId, Vec<SensorEvent>>,
    pub schedule: erl_core::domain::io::Schedule,
}

fn open(path: &Path) -> CliResult<BufReader<fs::File>> {
    Ok(BufReader::new(fs::File::open(path).map_err(CliError::io(path))?))
}

pub fn load_cohort_dir(dir: &Path) -> CliResult<LoadedCohort> {
    let events_path = dir.join(EVENTS_FILE);
    let flat = read_events_csv(open(&events_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", events_path.display())))?;
    let mut events: BTreeMap<ParticipantId, Vec<SensorEvent>> = BTreeMap::new();
    for e in flat {
        events.entry(e.participant.clone()).or_default().push(e);
    }
    for stream in events.values_mut() {
        stream.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.sensor().cmp(&b.sensor())));
    }

    let schedule_path = dir.join(SCHEDULE_FILE);
    let schedule = if schedule_path.exists() {
        read_schedule_csv(open(&schedule_path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", schedule_path.display())))?
    } else {
        BTreeMap::new()
    };

    Ok(LoadedCohort { events, schedule })
}

pub fn load_place_map(path: &Path) -> CliResult<PlaceMap> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    PlaceMap::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_features_dir(dir: &Path) -> CliResult<DailyFeatureMatrix> {
    let manifest_path = dir.join(FEATURES_MANIFEST_FILE);
    let manifest: FeatureManifest = serde_json::from_str(
        &fs::read_to_string(&manifest_path).map_err(CliError::io(&manifest_path))?,
    )
    .map_err(|e| CliError::Data(format!("{}: {e}", manifest_path.display())))?;
    let features_path = dir.join(FEATURES_FILE);
    let mut matrix = read_features_long(&manifest, open(&features_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", features_path.display())))?;
    matrix.reindex();
    Ok(matrix)
}

pub fn predictions_csv(preds: &ScoredPredictions, truth: Option<&LabelSet>, fold_of: &BTreeMap<ParticipantId, String>) -> String {
    let mut out = String::from("participant_id,true_label,pred_label,prob_low,fold\n");
    for (p, row) in &preds.rows {
        let true_label = truth
            .and_then(|l| l.binary_current(p))
            .map(|l| l.as_str().to_string())
            .unwrap_or_default();
        let fold = fold_of.get(p).cloned().unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{p},{true_label},{},{},{fold}\n",
            row.label.as_str(),
            row.prob_low
        ));
    }
    out
}

pub fn read_predictions_csv(path: &Path) -> CliResult<ScoredPredictions> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut rows = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::Data(format!(
                "{} line {}: expected 5 fields",
                path.display(),
                i + 1
            )));
        }
        let label = match fields[2] {
            "low" => Performance::Low,
            "high" => Performance::High,
            other => {
                return Err(CliError::Data(format!(
                    "{} line {}: bad label `{other}`",
                    path.display(),
                    i + 1
                )))
            }
        };
        let prob_low: f64 = fields[3].parse().map_err(|_| {
            CliError::Data(format!("{} line {}: bad probability", path.display(), i + 1))
        })?;
        rows.insert(ParticipantId::from(fields[0]), PredictionRow { label, prob_low });
    }
    Ok(ScoredPredictions {
        approach: "from_file".to_string(),
        trained_on: Default::default(),
        rows,
    })
}
