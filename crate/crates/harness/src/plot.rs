//! Long-format plot data: one `series,x,y` row per metric and iteration.

use std::path::Path;

use crate::error::{HarnessError, Result};

pub const HEADER: [&str; 3] = ["series", "x", "y"];

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        context: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Appends the rows of one metrics CSV to `out`. Series are named
/// `<path>:<column>`; `x` is the `iter` cell and `y` is copied verbatim, so
/// empty cells stay empty.
fn append_file<W: std::io::Write>(path: &Path, out: &mut csv::Writer<W>) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| parse_error(path, 1, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    let iter_col = header
        .iter()
        .position(|h| h == "iter")
        .ok_or_else(|| parse_error(path, 1, "no `iter` column"))?;
    let label = path.display().to_string();
    let series: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != iter_col)
        .map(|(i, h)| (i, format!("{label}:{h}")))
        .collect();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let x = &record[iter_col];
        if x.parse::<u64>().is_err() {
            return Err(parse_error(
                path,
                line,
                format!("iteration `{x}` is not an integer"),
            ));
        }
        for (i, name) in &series {
            out.write_record([name.as_str(), x, &record[*i]])
                .map_err(|e| parse_error(path, line, e.to_string()))?;
            rows += 1;
        }
    }
    Ok(rows)
}

/// Merges metrics CSVs into one long table. No inputs give a header-only
/// table.
pub fn emit_plot_data<P: AsRef<Path>>(paths: &[P]) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(HEADER).expect("writing to memory");
    for p in paths {
        append_file(p.as_ref(), &mut out)?;
    }
    let bytes = out.into_inner().expect("writing to memory");
    Ok(String::from_utf8(bytes).expect("inputs were valid UTF-8"))
}
