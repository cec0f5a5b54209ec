//! Diagnostics CSV: a header row, then one row per record with every value
//! written as `{:.16e}` (17 significant digits, enough to round-trip any
//! `f64`). A run that stops on an error appends a `# FAILED ...` line.

use std::io::{Read, Write};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{AggError, Result};

/// Prefix of the line written when a run aborts.
pub const FAILED_MARKER: &str = "# FAILED";

pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

/// Streams a table with a fixed header. Headers are plain identifiers and
/// values are numbers, so nothing ever needs quoting.
pub struct CsvSink<W: Write> {
    out: W,
    width: usize,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W, header: &[&str]) -> Result<Self> {
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out, width: header.len() })
    }

    /// Diagnostics table in the fixed column order.
    pub fn diagnostics(inner: W) -> Result<Self> {
        Self::new(inner, &DiagnosticsRecord::COLUMNS)
    }

    pub fn row(&mut self, values: &[f64]) -> Result<()> {
        assert_eq!(values.len(), self.width, "row width does not match the header");
        let line: Vec<String> = values.iter().map(|&x| format_value(x)).collect();
        writeln!(self.out, "{}", line.join(","))?;
        Ok(())
    }

    pub fn record(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        self.row(&r.to_array())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    /// Appends the failure marker: `# FAILED step=<n> kind=<Kind>: <message>`.
    pub fn failed(&mut self, step: u64, err: &AggError) -> Result<()> {
        let msg = err.to_string().replace('\n', " ");
        writeln!(self.out, "{FAILED_MARKER} step={step} kind={}: {msg}", err.kind())?;
        self.flush()
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.flush()?;
        Ok(self.out)
    }
}

/// A parsed table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Text after the failure marker, if the run aborted.
    pub failed: Option<String>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| AggError::InsufficientData(format!("no column `{name}` (have {})", self.columns.join(", "))))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Rows as diagnostics records; the header must be exactly ours.
    pub fn records(&self) -> Result<Vec<DiagnosticsRecord>> {
        if self.columns.iter().map(String::as_str).ne(DiagnosticsRecord::COLUMNS) {
            return Err(AggError::Parse { line: 1, msg: "header is not a diagnostics header".into() });
        }
        Ok(self
            .rows
            .iter()
            .map(|r| DiagnosticsRecord::from_array(r.as_slice().try_into().expect("width checked on read")))
            .collect())
    }
}

/// Reads a numeric CSV with a header row. Lines starting with `#` are
/// skipped, except that the failure marker is reported in
/// [`Table::failed`].
pub fn read_table(mut input: impl Read) -> Result<Table> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let failed = text
        .lines()
        .find_map(|l| l.strip_prefix(FAILED_MARKER))
        .map(|rest| rest.trim().to_string());
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| AggError::Parse { line: 1, msg: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if columns.is_empty() {
        return Err(AggError::Parse { line: 1, msg: "missing header".into() });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            AggError::Parse { line, msg: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row: Vec<f64> = rec
            .iter()
            .map(|s| s.parse().map_err(|_| AggError::Parse { line, msg: format!("not a number: `{s}`") }))
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Ok(Table { columns, rows, failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize) -> DiagnosticsRecord {
        let mut a = [0.0; 14];
        for (i, x) in a.iter_mut().enumerate() {
            *x = ((k * 14 + i) as f64 * 0.731).sin() / 3.0 * 10f64.powi(i as i32 - 7);
        }
        a[0] = k as f64 * 1e-3;
        DiagnosticsRecord::from_array(a)
    }

    #[test]
    fn own_output_parses_back_exactly() {
        let recs: Vec<_> = (0..20).map(rec).collect();
        let mut sink = CsvSink::diagnostics(Vec::new()).unwrap();
        recs.iter().for_each(|r| sink.record(r).unwrap());
        let bytes = sink.into_inner().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("t,mass,E_kin,E_free,E_total,D_visc,D_chem,R_energy,phi_min,phi_max,"));
        let table = read_table(bytes.as_slice()).unwrap();
        assert_eq!(table.failed, None);
        assert_eq!(table.records().unwrap(), recs);
        assert_eq!(table.column("E_free").unwrap()[3], recs[3].e_free);
    }

    #[test]
    fn values_carry_seventeen_digits() {
        assert_eq!(format_value(0.1), "1.0000000000000001e-1");
        assert_eq!(format_value(-2.0), "-2.0000000000000000e0");
        for x in [1.0 / 3.0, 6.02214076e23, -f64::MIN_POSITIVE, 5e-324] {
            assert_eq!(format_value(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn failure_marker_is_reported() {
        let mut sink = CsvSink::diagnostics(Vec::new()).unwrap();
        sink.record(&rec(0)).unwrap();
        sink.failed(17, &AggError::NewtonDiverged { iterations: 50, residual: 1e-3 }).unwrap();
        let bytes = sink.into_inner().unwrap();
        let table = read_table(bytes.as_slice()).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert!(table.failed.as_deref().unwrap().starts_with("step=17 kind=NewtonDiverged"));
    }

    #[test]
    fn bad_tables_are_errors() {
        assert!(read_table("t,y\n0,1\n1,x\n".as_bytes()).is_err());
        assert!(read_table("t,y\n0,1,2\n".as_bytes()).is_err());
        let t = read_table("t,y\n0,1\n".as_bytes()).unwrap();
        assert!(t.records().is_err());
        assert!(t.column("z").is_err());
    }
}
