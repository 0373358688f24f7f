//! Discrete distributions as CSV: one atom per row, coordinate columns
//! `x1, x2, …` followed by a `mass` column.

use std::io::{Read, Write};
use std::path::Path;

use lipgan_core::ot::{DiscreteDist, OtError};

use crate::output::fmt_f64;

#[derive(Debug)]
pub enum DistIoError {
    Io(std::io::Error),
    Csv(csv::Error),
    Format(String),
    Invalid(OtError),
}

impl std::fmt::Display for DistIoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistIoError::Io(e) => e.fmt(f),
            DistIoError::Csv(e) => e.fmt(f),
            DistIoError::Format(msg) => f.write_str(msg),
            DistIoError::Invalid(e) => write!(f, "invalid distribution: {e}"),
        }
    }
}

impl std::error::Error for DistIoError {}

impl From<csv::Error> for DistIoError {
    fn from(e: csv::Error) -> Self {
        DistIoError::Csv(e)
    }
}

pub fn read_dist<R: Read>(reader: R) -> Result<DiscreteDist, DistIoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let d = headers.len().saturating_sub(1);
    if d == 0 || headers.get(d) != Some("mass") {
        return Err(DistIoError::Format("expected columns x1, …, xd, mass".into()));
    }
    let mut atoms = Vec::new();
    let mut masses = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| DistIoError::Format(format!("row {}: {e}", line + 1)))?;
        masses.push(vals[d]);
        atoms.push(vals[..d].to_vec());
    }
    DiscreteDist::new(atoms, masses).map_err(DistIoError::Invalid)
}

pub fn load_dist(path: &Path) -> Result<DiscreteDist, DistIoError> {
    let file = std::fs::File::open(path).map_err(DistIoError::Io)?;
    read_dist(file)
}

pub fn write_dist<W: Write>(dist: &DiscreteDist, writer: W) -> Result<(), DistIoError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=dist.dim()).map(|i| format!("x{i}")).collect();
    header.push("mass".into());
    w.write_record(&header)?;
    for (a, m) in dist.atoms().iter().zip(dist.masses()) {
        w.write_record(a.iter().chain(std::iter::once(m)).map(|v| fmt_f64(*v)))?;
    }
    w.flush().map_err(DistIoError::Io)
}
