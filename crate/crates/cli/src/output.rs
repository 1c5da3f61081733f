//! Deterministic CSV emission.

use std::io::Write;

/// Significant digits of every number written to CSV.
pub const SIG_DIGITS: usize = 10;

/// Format `v` with [`SIG_DIGITS`] significant digits, shortest form.
///
/// Magnitudes in [1e-5, 1e15) are written positionally, others in exponent
/// form; non-finite values are written as `inf`, `-inf` or `nan`.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", SIG_DIGITS - 1, v).parse().unwrap_or(v);
    let a = rounded.abs();
    if (1e-5..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

/// A CSV table with a fixed header, written with LF line endings.
pub struct Table<W: Write> {
    writer: csv::Writer<W>,
    width: usize,
}

impl<W: Write> Table<W> {
    pub fn new<S: AsRef<str>>(sink: W, header: &[S]) -> csv::Result<Self> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(sink);
        writer.write_record(header.iter().map(|h| h.as_ref()))?;
        Ok(Table {
            writer,
            width: header.len(),
        })
    }

    pub fn row(&mut self, cells: &[Cell]) -> csv::Result<()> {
        debug_assert_eq!(cells.len(), self.width);
        self.writer.write_record(cells.iter().map(Cell::render))
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.writer.flush()
    }
}

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_num(*v),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}
