//! Per-iteration training scalars and their CSV form.
//!
//! Column order is fixed: `iter,train_loss,train_acc,test_acc,iiw,lr`, then
//! `temperature,energy` for runs that sample with SGLD. Missing values are
//! written as empty cells. Floats use Rust's shortest round-trip formatting,
//! so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::io::{self, Write};

pub const BASE_COLUMNS: [&str; 6] = ["iter", "train_loss", "train_acc", "test_acc", "iiw", "lr"];
pub const SAMPLER_COLUMNS: [&str; 2] = ["temperature", "energy"];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsRecord {
    pub iter: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub iiw: Option<f64>,
    pub lr: f64,
    pub temperature: Option<f64>,
    pub energy: Option<f64>,
}

fn cell(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        let _ = write!(out, "{v}");
    }
}

impl MetricsRecord {
    pub fn csv_row(&self, sampler: bool) -> String {
        let mut row = String::new();
        let _ = write!(row, "{},{},{},", self.iter, self.train_loss, self.train_acc);
        cell(&mut row, self.test_acc);
        row.push(',');
        cell(&mut row, self.iiw);
        let _ = write!(row, ",{}", self.lr);
        if sampler {
            row.push(',');
            cell(&mut row, self.temperature);
            row.push(',');
            cell(&mut row, self.energy);
        }
        row
    }
}

pub fn csv_header(sampler: bool) -> String {
    let mut cols: Vec<&str> = BASE_COLUMNS.to_vec();
    if sampler {
        cols.extend(SAMPLER_COLUMNS);
    }
    cols.join(",")
}

/// Append-only CSV sink: the header goes out on construction and every
/// record is flushed as soon as it is written.
pub struct MetricsWriter<W: Write> {
    out: W,
    sampler: bool,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W, sampler: bool) -> io::Result<Self> {
        writeln!(out, "{}", csv_header(sampler))?;
        out.flush()?;
        Ok(Self { out, sampler })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> io::Result<()> {
        writeln!(self.out, "{}", record.csv_row(self.sampler))?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Whole table as a string.
pub fn to_csv(records: &[MetricsRecord], sampler: bool) -> String {
    let mut s = csv_header(sampler);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row(sampler));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_for_no_records() {
        assert_eq!(
            to_csv(&[], false),
            "iter,train_loss,train_acc,test_acc,iiw,lr\n"
        );
    }

    #[test]
    fn missing_values_are_empty_cells() {
        let r = MetricsRecord {
            iter: 3,
            train_loss: 0.5,
            train_acc: 0.75,
            test_acc: None,
            iiw: Some(1.25),
            lr: 0.001,
            temperature: Some(1e-8),
            energy: None,
        };
        assert_eq!(r.csv_row(false), "3,0.5,0.75,,1.25,0.001");
        assert_eq!(r.csv_row(true), "3,0.5,0.75,,1.25,0.001,0.00000001,");
    }

    #[test]
    fn writer_streams_rows() {
        let mut w = MetricsWriter::new(Vec::new(), false).unwrap();
        w.write(&MetricsRecord::default()).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(text.lines().count(), 2);
    }
}
