//! Measurement files: `experiment_id,sgrna_id,mouse_id,time_days,concentration`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};

pub const HEADER: [&str; 5] = [
    "experiment_id",
    "sgrna_id",
    "mouse_id",
    "time_days",
    "concentration",
];

/// Readings below this are raised to it on ingestion.
pub const DETECTION_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub rows: usize,
    pub floored: usize,
    pub experiments: usize,
    /// Distinct non-input days per experiment.
    pub output_days: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub datasets: BTreeMap<String, Dataset>,
    pub report: IngestionReport,
}

pub fn ingest(path: &Path) -> Result<Ingested> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(f, &path.display().to_string())
}

/// Parse measurements from any reader; `source` labels error locations.
pub fn ingest_reader<R: Read>(r: R, source: &str) -> Result<Ingested> {
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rd
        .headers()
        .map_err(|e| parse_err(source, 1, &e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(Error::EmptyInput(format!("{source} is empty")));
    }
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(parse_err(
            source,
            1,
            &format!(
                "expected header {}, found {}",
                HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut groups: BTreeMap<String, Vec<Record>> = BTreeMap::new();
    let mut seen: BTreeSet<(String, String, u64)> = BTreeSet::new();
    let mut report = IngestionReport::default();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(source, line, &e.to_string()))?;
        if rec.len() != HEADER.len() {
            return Err(parse_err(
                source,
                line,
                &format!("expected 5 fields, found {}", rec.len()),
            ));
        }
        let experiment = non_empty(&rec[0], "experiment_id", source, line)?;
        let mouse = non_empty(&rec[2], "mouse_id", source, line)?;
        let time = number(&rec[3], "time_days", source, line)?;
        let mut value = number(&rec[4], "concentration", source, line)?;
        if value > 1.0 {
            return Err(parse_err(
                source,
                line,
                &format!("concentration must be <= 1, got {value}"),
            ));
        }
        if value < DETECTION_FLOOR {
            value = DETECTION_FLOOR;
            report.floored += 1;
        }
        if !seen.insert((experiment.clone(), mouse.clone(), time.to_bits())) {
            return Err(Error::Validation(format!(
                "{source}:{line}: duplicate record for mouse {mouse} on day {time} in {experiment}"
            )));
        }
        let mut record = Record::new(time, value, mouse);
        if !rec[1].is_empty() {
            record = record.with_sgrna(&rec[1]);
        }
        groups.entry(experiment).or_default().push(record);
        report.rows += 1;
    }
    if report.rows == 0 {
        return Err(Error::EmptyInput(format!("{source} has no measurements")));
    }
    let mut datasets = BTreeMap::new();
    for (id, records) in groups {
        let ds = Dataset::new(records).map_err(|e| Error::Validation(format!("{id}: {e}")))?;
        report
            .output_days
            .insert(id.clone(), ds.design().output_days.clone());
        datasets.insert(id, ds);
    }
    report.experiments = datasets.len();
    Ok(Ingested { datasets, report })
}

fn parse_err(source: &str, line: usize, message: &str) -> Error {
    Error::Parse {
        location: format!("{source}:{line}"),
        message: message.to_string(),
    }
}

fn non_empty(s: &str, field: &str, source: &str, line: usize) -> Result<String> {
    if s.is_empty() {
        Err(parse_err(source, line, &format!("{field} is empty")))
    } else {
        Ok(s.to_string())
    }
}

fn number(s: &str, field: &str, source: &str, line: usize) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| parse_err(source, line, &format!("{field} is not a number: {s:?}")))?;
    if !v.is_finite() || v < 0.0 {
        return Err(parse_err(
            source,
            line,
            &format!("{field} must be finite and >= 0, got {s}"),
        ));
    }
    Ok(v)
}

/// Write one experiment, header included. Values use shortest round-trip
/// formatting so re-ingestion is lossless.
pub fn write_measurements<W: Write>(experiment_id: &str, data: &Dataset, w: W) -> Result<()> {
    write_experiments([(experiment_id, data)], w)
}

pub fn write_experiments<'a, W: Write>(
    items: impl IntoIterator<Item = (&'a str, &'a Dataset)>,
    w: W,
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(HEADER)?;
    for (id, data) in items {
        for r in data.records() {
            wr.write_record([
                id,
                r.sgrna_id.as_deref().unwrap_or(""),
                &r.mouse_id,
                &r.time.to_string(),
                &r.value.to_string(),
            ])?;
        }
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
