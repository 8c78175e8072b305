//! Flat-file formats.
//!
//! | file          | columns                                                      |
//! |---------------|--------------------------------------------------------------|
//! | path.csv      | `t, x1[, x2], regime`                                        |
//! | jumps.csv     | `t, regime` (regime entered at the jump)                     |
//! | posterior.csv | parameter names, `weight, distance`                          |
//! | populations.csv | `generation, threshold`, parameter names, `weight, distance` |
//! | ci_trace.csv  | `generation, budget, threshold`, then `<name>_q05/_q50/_q95` |
//! | densities.csv | `x, time_average, ensemble`                                  |
//!
//! Reals are written with 17 significant digits so they read back exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use pdifmp::HybridPath;
use serde::Serialize;

pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub struct CsvOut {
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner.write_record(header)?;
        Ok(CsvOut { inner })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.inner.write_record(fields)?;
        Ok(())
    }

    pub fn nums(&mut self, values: &[f64]) -> Result<()> {
        self.inner.write_record(values.iter().map(|&v| fmt_num(v)))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn write_path(path: &Path, p: &HybridPath) -> Result<()> {
    let mut names = vec!["t", "x1"];
    if p.dim == 2 {
        names.push("x2");
    }
    names.push("regime");
    let mut out = CsvOut::create(path, &header(&names))?;
    let regimes = p.regimes();
    let mut row = Vec::with_capacity(4);
    for i in 0..p.len() {
        row.clear();
        row.push(p.times[i]);
        row.extend_from_slice(p.state(i));
        row.push(regimes[i]);
        out.nums(&row)?;
    }
    out.finish()
}

pub fn write_jumps(path: &Path, p: &HybridPath) -> Result<()> {
    let mut out = CsvOut::create(path, &header(&["t", "regime"]))?;
    for (k, &t) in p.jump_times.iter().enumerate() {
        out.nums(&[t, p.z_values[k + 1]])?;
    }
    out.finish()
}

/// Columns of a numeric CSV file, addressed by header name.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Reads a headed numeric CSV; errors name the offending line.
pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let names: Vec<String> = rdr
        .headers()
        .with_context(|| format!("{}: reading header", path.display()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        bail!("{}: line 1: empty file or missing header", path.display());
    }
    let mut columns = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("{}: line {line}: malformed record", path.display()))?;
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().with_context(|| {
                format!(
                    "{}: line {line}, column {}: {field:?} is not a number",
                    path.display(),
                    c + 1
                )
            })?;
            columns[c].push(v);
        }
    }
    Ok(Table { names, columns })
}
