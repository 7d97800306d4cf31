//! Versioned CSV output of experiment and benchmark rows.
//!
//! A file starts with the schema line, then a header row whose columns must
//! match [`COLUMNS`] exactly. Metrics not measured by a run are empty cells.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_LINE: &str = "# urban-abe metrics v1";

pub const COLUMNS: [&str; 17] = [
    "representation",
    "epsilon",
    "route_length_m",
    "users",
    "seed",
    "affected_pct_mean",
    "affected_pct_ci95",
    "key_attrs_road_mean",
    "key_attrs_time_mean",
    "key_bytes_mean",
    "key_bytes_road_mean",
    "key_bytes_time_mean",
    "devices",
    "gamma_mean",
    "gamma_road_mean",
    "ask_bytes_total",
    "seal_time_ms",
];

/// Wall-clock columns, excluded from determinism comparisons.
pub const TIMING_COLUMNS: [&str; 1] = ["seal_time_ms"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub representation: String,
    pub epsilon: u32,
    pub route_length_m: Option<f64>,
    pub users: Option<usize>,
    pub seed: u64,
    pub affected_pct_mean: Option<f64>,
    pub affected_pct_ci95: Option<f64>,
    pub key_attrs_road_mean: Option<f64>,
    pub key_attrs_time_mean: Option<f64>,
    pub key_bytes_mean: Option<f64>,
    pub key_bytes_road_mean: Option<f64>,
    pub key_bytes_time_mean: Option<f64>,
    pub devices: usize,
    pub gamma_mean: f64,
    pub gamma_road_mean: f64,
    pub ask_bytes_total: Option<u64>,
    pub seal_time_ms: Option<f64>,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("schema mismatch: expected {expected:?}, found {found:?}")]
    SchemaMismatch { expected: String, found: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn write_csv(rows: &[MetricsRow], out: impl Write) -> Result<(), MetricsError> {
    let mut out = out;
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[MetricsRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

pub fn read_csv(input: impl Read) -> Result<Vec<MetricsRow>, MetricsError> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let first = first.trim_end_matches(['\r', '\n']);
    if first != SCHEMA_LINE {
        return Err(MetricsError::SchemaMismatch {
            expected: SCHEMA_LINE.into(),
            found: first.into(),
        });
    }
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        return Err(MetricsError::SchemaMismatch {
            expected: COLUMNS.join(","),
            found: header.join(","),
        });
    }
    Ok(r.deserialize().collect::<Result<Vec<MetricsRow>, _>>()?)
}

/// Rewrites a metrics CSV with the timing columns blanked.
pub fn strip_timing(text: &str) -> Result<String, MetricsError> {
    let mut rows = read_csv(text.as_bytes())?;
    for r in &mut rows {
        r.seal_time_ms = None;
    }
    Ok(to_csv_string(&rows))
}
