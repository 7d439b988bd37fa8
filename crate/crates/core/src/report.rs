//! CSV output shared by every experiment.
//!
//! Numbers are written with 17 significant digits in scientific notation
//! (`{:.16e}`), `.` as decimal separator; text fields are quoted per RFC 4180
//! by the `csv` writer. An optional first line `# generated_at=<unix secs>`
//! carries the run timestamp; everything else is a pure function of the
//! experiment inputs.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// `# generated_at=...` comment line, or nothing when suppressed.
pub fn timestamp_line(enabled: bool) -> Option<String> {
    enabled.then(|| {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        format!("# generated_at={secs}")
    })
}

/// In-memory CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match header");
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, out: W, timestamp: Option<&str>) -> std::io::Result<()> {
        let mut out = out;
        if let Some(line) = timestamp {
            writeln!(out, "{line}")?;
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path, timestamp: Option<&str>) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file), timestamp)
    }
}

/// Builds a row from anything displayable.
#[macro_export]
macro_rules! csv_row {
    ($($x:expr),* $(,)?) => {
        vec![$($crate::report::Cell::cell(&$x)),*]
    };
}

/// Conversion of a value into a CSV field.
pub trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        fmt_f64(*self)
    }
}

macro_rules! plain_cell {
    ($($t:ty),*) => {$(
        impl Cell for $t {
            fn cell(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_cell!(usize, u64, i64, i32, u32, bool, String, &str);

/// Reads a numeric CSV (header line first, `#` lines ignored) into rows.
pub fn read_numeric_csv(path: &Path) -> std::io::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let invalid = |m: String| std::io::Error::new(std::io::ErrorKind::InvalidData, m);
    let header = reader.headers().map_err(|e| invalid(e.to_string()))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| invalid(e.to_string()))?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| invalid(format!("{f:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
