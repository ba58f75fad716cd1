//! The per-participant self-report table: numeric scale items (noise in the
//! synthetic cohorts) plus categorical survey answers, persisted as wide
//! CSV.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::domain::io::ParseError;
use crate::domain::ParticipantId;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SelfReportTable {
    /// Column name -> participant -> value; a missing key is a missing cell.
    pub numeric: Vec<(String, BTreeMap<ParticipantId, f64>)>,
    pub categorical: Vec<(String, BTreeMap<ParticipantId, String>)>,
}

impl SelfReportTable {
    pub fn column_names(&self) -> Vec<&str> {
        self.numeric
            .iter()
            .map(|(n, _)| n.as_str())
            .chain(self.categorical.iter().map(|(n, _)| n.as_str()))
            .collect()
    }

    pub fn write_csv(&self, participants: &[ParticipantId], w: &mut impl Write) -> std::io::Result<()> {
        write!(w, "participant_id")?;
        for name in self.column_names() {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for p in participants {
            write!(w, "{p}")?;
            for (_, col) in &self.numeric {
                match col.get(p) {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            for (_, col) in &self.categorical {
                match col.get(p) {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Columns whose every non-missing cell parses as a number come back
    /// numeric; the rest stay categorical.
    pub fn read_csv(r: impl BufRead) -> Result<Self, ParseError> {
        let mut lines = r.lines().enumerate();
        let header = match lines.next() {
            Some((_, Ok(h))) => h,
            Some((i, Err(e))) => return Err(ParseError { line: i + 1, message: e.to_string() }),
            None => return Ok(SelfReportTable::default()),
        };
        let cols: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
        let mut raw: Vec<BTreeMap<ParticipantId, String>> = vec![BTreeMap::new(); cols.len()];
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.map_err(|e| ParseError { line: lineno, message: e.to_string() })?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() + 1 {
                return Err(ParseError {
                    line: lineno,
                    message: format!("expected {} fields, got {}", cols.len() + 1, fields.len()),
                });
            }
            let p = ParticipantId::from(fields[0]);
            for (k, value) in fields[1..].iter().enumerate() {
                if !value.is_empty() {
                    raw[k].insert(p.clone(), value.to_string());
                }
            }
        }
        let mut table = SelfReportTable::default();
        for (name, col) in cols.into_iter().zip(raw) {
            let all_numeric = !col.is_empty() && col.values().all(|v| v.parse::<f64>().is_ok());
            if all_numeric {
                table.numeric.push((
                    name,
                    col.into_iter()
                        .map(|(p, v)| (p, v.parse::<f64>().expect("checked numeric")))
                        .collect(),
                ));
            } else {
                table.categorical.push((name, col));
            }
        }
        Ok(table)
    }
}
