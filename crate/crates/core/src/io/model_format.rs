//! Plain-text Kruskal model format.
//!
//! ```text
//! # cgc-kruskal v1
//! ndims 3
//! rank 2
//! shape 4 5 6
//! weights
//! <rank values>
//! factor 1
//! <one line per row, rank values each>
//! ...
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a write/read
//! cycle reproduces the model bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::kruskal::KruskalModel;

pub const MODEL_FORMAT_HEADER: &str = "# cgc-kruskal v1";

pub fn write_model<W: Write>(model: &KruskalModel, mut out: W) -> Result<()> {
    writeln!(out, "{MODEL_FORMAT_HEADER}")?;
    writeln!(out, "ndims {}", model.ndims())?;
    writeln!(out, "rank {}", model.rank())?;
    writeln!(out, "shape {}", join(model.shape().iter()))?;
    writeln!(out, "weights")?;
    writeln!(out, "{}", join(model.weights().iter()))?;
    for (n, a) in model.factors().iter().enumerate() {
        writeln!(out, "factor {}", n + 1)?;
        for row in a.rows() {
            writeln!(out, "{}", join(row.iter()))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn join<T: std::fmt::Display>(values: impl Iterator<Item = T>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    lineno: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next non-blank line, trimmed.
    fn next(&mut self) -> Result<String> {
        loop {
            self.lineno += 1;
            match self.inner.next() {
                None => return Err(self.error("unexpected end of file")),
                Some(line) => {
                    let line = line?;
                    let t = line.trim();
                    if !t.is_empty() {
                        return Ok(t.to_string());
                    }
                }
            }
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::ParseError { line: self.lineno, message: message.into() }
    }

    fn keyword(&mut self, key: &str) -> Result<String> {
        let line = self.next()?;
        match line.strip_prefix(key) {
            Some(rest) if rest.is_empty() || rest.starts_with(' ') => Ok(rest.trim().to_string()),
            _ => Err(self.error(format!("expected `{key}`"))),
        }
    }

    fn numbers<T: std::str::FromStr>(&self, s: &str, expected: usize) -> Result<Vec<T>> {
        let values = s
            .split_ascii_whitespace()
            .map(|f| f.parse::<T>().map_err(|_| self.error(format!("bad number `{f}`"))))
            .collect::<Result<Vec<T>>>()?;
        if values.len() != expected {
            return Err(self.error(format!("expected {expected} values, found {}", values.len())));
        }
        Ok(values)
    }
}

pub fn read_model<R: BufRead>(reader: R) -> Result<KruskalModel> {
    let mut lines = Lines { inner: reader.lines(), lineno: 0 };
    let header = lines.next()?;
    if header != MODEL_FORMAT_HEADER {
        return Err(lines.error(format!("unsupported header `{header}`")));
    }
    let ndims_line = lines.keyword("ndims")?;
    let ndims: usize = lines.numbers::<usize>(&ndims_line, 1)?[0];
    let rank_line = lines.keyword("rank")?;
    let rank: usize = lines.numbers::<usize>(&rank_line, 1)?[0];
    let shape_line = lines.keyword("shape")?;
    let shape: Vec<usize> = lines.numbers(&shape_line, ndims)?;

    lines.keyword("weights")?;
    let w = lines.next()?;
    let weights = Array1::from(lines.numbers::<f64>(&w, rank)?);

    let mut factors = Vec::with_capacity(ndims);
    for (n, &rows) in shape.iter().enumerate() {
        let label = lines.keyword("factor")?;
        if label != (n + 1).to_string() {
            return Err(lines.error(format!("expected factor {}", n + 1)));
        }
        let mut data = Vec::with_capacity(rows * rank);
        for _ in 0..rows {
            let row = lines.next()?;
            data.extend(lines.numbers::<f64>(&row, rank)?);
        }
        factors.push(Array2::from_shape_vec((rows, rank), data).expect("row-major data"));
    }
    KruskalModel::new(weights, factors)
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<KruskalModel> {
    read_model(BufReader::new(File::open(path)?))
}

pub fn write_model_file(model: &KruskalModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}
