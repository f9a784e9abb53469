//! Centre CSV ingestion.
//!
//! Summary files carry one row per centre, `centre_id,open_time,count` (or
//! `centre_id,exposure,count`). Event files carry one row per recruit,
//! `centre_id,open_time,event_time`; a row with an empty `event_time` lists a
//! centre that has not recruited.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use clap::ValueEnum;
use recruit_core::model::{CentreRecord, TrialData};
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Summary,
    Events,
}

const SUMMARY_HEADER: [&str; 3] = ["centre_id", "open_time", "count"];
const SUMMARY_EXPOSURE_HEADER: [&str; 3] = ["centre_id", "exposure", "count"];
const EVENTS_HEADER: [&str; 3] = ["centre_id", "open_time", "event_time"];

/// One centre's opening time and recruitment times.
#[derive(Debug, Clone, PartialEq)]
pub struct CentreEvents {
    pub centre_id: String,
    pub open_time: f64,
    pub event_times: Vec<f64>,
}

pub fn parse_centre_csv(path: &Path, format: InputFormat, census: f64) -> Result<TrialData> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_centre_csv(file, &path.display().to_string(), format, census)
}

pub fn read_centre_csv<R: Read>(reader: R, label: &str, format: InputFormat, census: f64) -> Result<TrialData> {
    check_census(census)?;
    match format {
        InputFormat::Summary => read_summary(reader, label, census),
        InputFormat::Events => events_to_trial(&read_events(reader, label, census)?, census),
    }
}

pub fn parse_event_csv(path: &Path, census: f64) -> Result<Vec<CentreEvents>> {
    check_census(census)?;
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_events(file, &path.display().to_string(), census)
}

fn check_census(census: f64) -> Result<()> {
    if census > 0.0 && census.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("census time must be finite and > 0, got {census}")))
    }
}

/// Reader and header, or `None` for a file with no content at all.
fn open_csv<R: Read>(reader: R, label: &str, expected: &[&[&str; 3]]) -> Result<Option<(csv::Reader<R>, usize)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(None);
    }
    let found: Vec<&str> = headers.iter().collect();
    match expected.iter().position(|h| h[..] == found[..]) {
        Some(i) => Ok(Some((rdr, i))),
        None => Err(CliError::BadHeader {
            path: label.into(),
            expected: expected.iter().map(|h| h.join(",")).collect::<Vec<_>>().join("` or `"),
            found: found.join(","),
        }),
    }
}

fn no_centres(label: &str) -> CliError {
    CliError::Core(recruit_core::Error::InsufficientData(format!("{label}: no centres")))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, label: &str, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| CliError::MalformedRow {
        path: label.into(),
        line,
        reason: format!("cannot parse {name} from {raw:?}"),
    })
}

fn time_field(rec: &csv::StringRecord, i: usize, name: &str, label: &str, line: u64) -> Result<f64> {
    let x: f64 = field(rec, i, name, label, line)?;
    if x >= 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::MalformedRow { path: label.into(), line, reason: format!("{name} must be finite and >= 0, got {x}") })
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn read_summary<R: Read>(reader: R, label: &str, census: f64) -> Result<TrialData> {
    let Some((mut rdr, variant)) = open_csv(reader, label, &[&SUMMARY_HEADER, &SUMMARY_EXPOSURE_HEADER])? else {
        return Err(no_centres(label));
    };
    let mut seen = HashMap::new();
    let mut centres = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let malformed = |reason: String| CliError::MalformedRow { path: label.into(), line, reason };
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(malformed("empty centre_id".into()));
        }
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(malformed(format!("centre {id} already listed on line {first}")));
        }
        let count: u64 = field(&rec, 2, "count", label, line)?;
        let exposure = if variant == 0 {
            let open_time = time_field(&rec, 1, "open_time", label, line)?;
            if open_time > census {
                return Err(CliError::OpeningAfterCensus { path: label.into(), line, centre_id: id, open_time, census });
            }
            census - open_time
        } else {
            let exposure = time_field(&rec, 1, "exposure", label, line)?;
            if exposure > census {
                return Err(malformed(format!("exposure {exposure} exceeds the census time {census}")));
            }
            exposure
        };
        if exposure == 0.0 && count > 0 {
            return Err(malformed(format!("centre {id} has {count} recruits but opens at the census")));
        }
        centres.push(CentreRecord::new(id, exposure, count)?);
    }
    if centres.is_empty() {
        return Err(no_centres(label));
    }
    Ok(TrialData::new(census, centres)?)
}

fn read_events<R: Read>(reader: R, label: &str, census: f64) -> Result<Vec<CentreEvents>> {
    let Some((mut rdr, _)) = open_csv(reader, label, &[&EVENTS_HEADER])? else {
        return Err(no_centres(label));
    };
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut centres: Vec<CentreEvents> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(CliError::MalformedRow { path: label.into(), line, reason: "empty centre_id".into() });
        }
        let open_time = time_field(&rec, 1, "open_time", label, line)?;
        if open_time > census {
            return Err(CliError::OpeningAfterCensus { path: label.into(), line, centre_id: id, open_time, census });
        }
        let slot = match index.get(&id) {
            Some(&i) => {
                if centres[i].open_time != open_time {
                    return Err(CliError::MalformedRow {
                        path: label.into(),
                        line,
                        reason: format!("centre {id} opens at {open_time} here but at {} earlier", centres[i].open_time),
                    });
                }
                i
            }
            None => {
                index.insert(id.clone(), centres.len());
                centres.push(CentreEvents { centre_id: id.clone(), open_time, event_times: Vec::new() });
                centres.len() - 1
            }
        };
        if rec.get(2).unwrap_or("").is_empty() {
            continue;
        }
        let event_time = time_field(&rec, 2, "event_time", label, line)?;
        if event_time < open_time {
            return Err(CliError::EventBeforeOpening { path: label.into(), line, centre_id: id, open_time, event_time });
        }
        if event_time > census {
            return Err(CliError::EventAfterCensus { path: label.into(), line, event_time, census });
        }
        centres[slot].event_times.push(event_time);
    }
    if centres.is_empty() {
        return Err(no_centres(label));
    }
    Ok(centres)
}

pub fn events_to_trial(centres: &[CentreEvents], census: f64) -> Result<TrialData> {
    let records = centres
        .iter()
        .map(|c| CentreRecord::new(c.centre_id.clone(), census - c.open_time, c.event_times.len() as u64))
        .collect::<recruit_core::Result<Vec<_>>>()?;
    Ok(TrialData::new(census, records)?)
}

/// Writes the `centre_id,exposure,count` summary form, which reads back exactly.
pub fn write_summary_csv<W: Write>(data: &TrialData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_EXPOSURE_HEADER)?;
    for c in data.centres() {
        w.write_record([c.centre_id.clone(), c.exposure.to_string(), c.count.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io("<summary output>", e))?;
    Ok(())
}
