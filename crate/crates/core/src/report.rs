//! Deterministic text serialization for experiment outputs. Floats are
//! written with 17 significant digits so reruns with the same seed produce
//! byte-identical payloads.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

/// 17-significant-digit scientific form, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

/// A small CSV builder with deterministic number formatting.
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        Self { buf, columns: header.len() }
    }

    pub fn row(&mut self, cells: &[CsvCell]) {
        debug_assert_eq!(cells.len(), self.columns);
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match cell {
                CsvCell::Float(x) => {
                    let _ = write!(self.buf, "{}", fmt_f64(*x));
                }
                CsvCell::Int(v) => {
                    let _ = write!(self.buf, "{v}");
                }
                CsvCell::Str(s) => {
                    let _ = write!(self.buf, "{s}");
                }
                CsvCell::Empty => {}
            }
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

pub enum CsvCell<'a> {
    Float(f64),
    Int(i64),
    Str(&'a str),
    Empty,
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_exact() {
        let x = 0.1 + 0.2;
        let s = fmt_f64(x);
        assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new(&["t", "mean", "verdict"]);
        csv.row(&[CsvCell::Float(0.5), CsvCell::Float(1.0), CsvCell::Str("satisfied")]);
        let s = csv.finish();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "t,mean,verdict");
        assert!(lines.next().unwrap().starts_with("5.0000000000000000e-1,"));
    }
}
