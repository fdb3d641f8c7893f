//! Readings CSV in and out.
//!
//! The header is required. The first four columns are time (minutes), level
//! (m), rainfall (mm/hr) and discharge (m^3/s); any further columns become
//! named extra parameters, in order.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use floodcast_core::Reading;
use thiserror::Error;

pub const HEADER: [&str; 4] = ["t_min", "level_m", "rainfall_mmhr", "discharge_m3s"];
const SHORT_HEADER: [&str; 4] = ["t", "level", "rainfall", "discharge"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },
    #[error("no readings in input")]
    EmptyInput,
    #[error("line {line}: time {t} does not come after {previous}")]
    NonMonotoneTime { line: u64, t: f64, previous: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub readings: Vec<Reading>,
    pub columns: Vec<String>,
}

impl Ingested {
    pub fn extra_names(&self) -> &[String] {
        &self.columns[4..]
    }
}

pub fn ingest_readings(path: &Path) -> Result<Ingested, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_readings(file)
}

pub fn parse_readings<R: Read>(input: R) -> Result<Ingested, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let parse_err = |e: csv::Error| {
        let line = e.position().map_or(1, |p| p.line());
        IngestError::Parse {
            line,
            column: 1,
            message: e.to_string(),
        }
    };
    let header = reader.headers().map_err(parse_err)?.clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(IngestError::EmptyInput);
    }
    let columns: Vec<String> = header.iter().map(str::to_string).collect();
    for (i, expected) in HEADER.iter().enumerate() {
        let found = columns.get(i).map(String::as_str);
        if found != Some(*expected) && found != Some(SHORT_HEADER[i]) {
            return Err(IngestError::Parse {
                line: 1,
                column: i + 1,
                message: format!("expected header column `{expected}`, found `{}`", found.unwrap_or("")),
            });
        }
    }

    let mut readings: Vec<Reading> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(parse_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != columns.len() {
            return Err(IngestError::Parse {
                line,
                column: record.len().min(columns.len()) + 1,
                message: format!("expected {} fields, found {}", columns.len(), record.len()),
            });
        }
        let mut values = Vec::with_capacity(record.len());
        for (i, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| IngestError::Parse {
                line,
                column: i + 1,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(IngestError::Parse {
                    line,
                    column: i + 1,
                    message: format!("`{field}` is not finite"),
                });
            }
            values.push(v);
        }
        if let Some(previous) = readings.last().map(|r| r.t) {
            if values[0] <= previous {
                return Err(IngestError::NonMonotoneTime {
                    line,
                    t: values[0],
                    previous,
                });
            }
        }
        let mut reading = Reading::new(values[0], values[1], values[2], values[3]);
        for (name, v) in columns[4..].iter().zip(&values[4..]) {
            reading = reading.with_extra(name.clone(), *v);
        }
        readings.push(reading);
    }
    if readings.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    Ok(Ingested { readings, columns })
}

/// Write readings in the ingestion layout; values round-trip exactly.
pub fn write_readings<W: Write>(out: W, readings: &[Reading]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = HEADER.iter().map(|s| s.to_string()).collect();
    if let Some(first) = readings.first() {
        header.extend(first.extra_names());
    }
    w.write_record(&header)?;
    for r in readings {
        let mut row = vec![r.t.to_string(), r.level.to_string(), r.rainfall.to_string(), r.discharge.to_string()];
        row.extend(r.extras.iter().map(|e| e.1.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
