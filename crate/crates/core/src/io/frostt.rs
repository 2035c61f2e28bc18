//! FROSTT `.tns` coordinate format.
//!
//! One nonzero per line: `d` 1-based indices followed by the value, separated
//! by whitespace. Lines starting with `#` are comments and blank lines are
//! skipped. A comment of the form `# shape: I_1 ... I_d` fixes the
//! dimensions; otherwise each dimension is the largest index seen in that
//! mode. Values must be integers; reals with zero fractional part are
//! accepted and explicit zeros are dropped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::SparseCountTensor;

pub fn parse_frostt<R: BufRead>(reader: R) -> Result<SparseCountTensor> {
    let mut declared: Option<Vec<usize>> = None;
    let mut ndims: Option<usize> = None;
    let mut coords: Vec<Vec<usize>> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();

    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(shape) = parse_shape_comment(comment, lineno)? {
                declared = Some(shape);
            }
            continue;
        }

        let fields: Vec<&str> = trimmed.split_ascii_whitespace().collect();
        if fields.len() < 3 {
            return Err(parse_error(lineno, "expected at least two indices and a value"));
        }
        let d = fields.len() - 1;
        match ndims {
            None => ndims = Some(d),
            Some(prev) if prev != d => {
                return Err(parse_error(lineno, format!("expected {prev} indices, found {d}")));
            }
            _ => {}
        }
        let mut idx = Vec::with_capacity(d);
        for f in &fields[..d] {
            let i: usize = f
                .parse()
                .map_err(|_| parse_error(lineno, format!("bad index `{f}`")))?;
            if i == 0 {
                return Err(parse_error(lineno, "indices are 1-based"));
            }
            idx.push(i - 1);
        }
        let count = parse_count(fields[d], lineno)?;
        if count == 0 {
            continue;
        }
        coords.push(idx);
        counts.push(count);
    }

    let shape = match (declared, ndims) {
        (Some(shape), Some(d)) if shape.len() != d => {
            return Err(parse_error(0, format!("shape comment has {} modes, data has {d}", shape.len())));
        }
        (Some(shape), _) => shape,
        (None, Some(d)) => (0..d)
            .map(|k| coords.iter().map(|c| c[k] + 1).max().unwrap_or(1))
            .collect(),
        (None, None) => return Err(parse_error(0, "no entries and no shape comment")),
    };

    SparseCountTensor::new(shape, coords, counts).map_err(|e| match e {
        Error::IndexOutOfBounds { mode, index, size } => Error::ParseError {
            line: 0,
            message: format!("index {} exceeds declared size {size} in mode {}", index + 1, mode + 1),
        },
        other => other,
    })
}

fn parse_shape_comment(comment: &str, lineno: usize) -> Result<Option<Vec<usize>>> {
    let body = comment.trim();
    let rest = ["shape:", "shape", "dims:", "dims"]
        .iter()
        .find_map(|p| body.strip_prefix(p));
    let Some(rest) = rest else { return Ok(None) };
    let dims = rest
        .split_ascii_whitespace()
        .map(|f| f.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| parse_error(lineno, "bad shape comment"))?;
    if dims.is_empty() {
        return Err(parse_error(lineno, "empty shape comment"));
    }
    Ok(Some(dims))
}

fn parse_count(field: &str, lineno: usize) -> Result<u64> {
    if let Ok(v) = field.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = field
        .parse()
        .map_err(|_| parse_error(lineno, format!("bad value `{field}`")))?;
    if !v.is_finite() || v < 0.0 {
        return Err(parse_error(lineno, format!("value `{field}` is not a count")));
    }
    if v.fract() != 0.0 {
        return Err(Error::NonIntegerValue(lineno));
    }
    Ok(v as u64)
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::ParseError { line, message: message.into() }
}

/// Writes the tensor with a `# shape:` header and sorted 1-based entries.
pub fn write_frostt<W: Write>(x: &SparseCountTensor, mut out: W) -> Result<()> {
    let shape: Vec<String> = x.shape().iter().map(|s| s.to_string()).collect();
    writeln!(out, "# shape: {}", shape.join(" "))?;
    for (idx, count) in x.iter() {
        for &i in idx {
            write!(out, "{} ", i + 1)?;
        }
        writeln!(out, "{count}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_frostt_file(path: impl AsRef<Path>) -> Result<SparseCountTensor> {
    parse_frostt(BufReader::new(File::open(path)?))
}

pub fn write_frostt_file(x: &SparseCountTensor, path: impl AsRef<Path>) -> Result<()> {
    write_frostt(x, BufWriter::new(File::create(path)?))
}
