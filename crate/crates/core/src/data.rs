//! Sparse datasets and the LIBSVM text format.
//!
//! Each line is `label idx:val idx:val ...` with 1-based, strictly ascending
//! feature indices. Rows are stored with 0-based column indices.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type SparseRow = Vec<(usize, f64)>;

/// Design matrix with sparse rows plus a label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<SparseRow>,
    labels: Vec<f64>,
    features: usize,
}

impl Dataset {
    pub fn new(rows: Vec<SparseRow>, labels: Vec<f64>, features: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), got: labels.len() });
        }
        for (i, row) in rows.iter().enumerate() {
            for (k, &(j, v)) in row.iter().enumerate() {
                if j >= features {
                    return Err(Error::InvalidOracle(format!("row {}: feature index {} exceeds {features}", i + 1, j + 1)));
                }
                if k > 0 && row[k - 1].0 >= j {
                    return Err(Error::InvalidOracle(format!("row {}: feature indices not strictly ascending", i + 1)));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidOracle(format!("row {}: non-finite value", i + 1)));
                }
            }
        }
        if let Some(i) = labels.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidOracle(format!("row {}: non-finite label", i + 1)));
        }
        Ok(Self { rows, labels, features })
    }

    /// Dense rows as a dataset (zeros are dropped).
    pub fn from_dense(w: &DMatrix<f64>, labels: Vec<f64>) -> Result<Self> {
        let rows = (0..w.nrows()).map(|i| (0..w.ncols()).filter(|&j| w[(i, j)] != 0.0).map(|j| (j, w[(i, j)])).collect()).collect();
        Self::new(rows, labels, w.ncols())
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn samples(&self) -> usize {
        self.rows.len()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.samples(), self.features);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                w[(i, j)] = v;
            }
        }
        w
    }

    /// Divides each column by its max absolute value (all-zero columns untouched).
    pub fn scale_max_abs(&mut self) {
        let mut scale = DVector::<f64>::zeros(self.features);
        for row in &self.rows {
            for &(j, v) in row {
                scale[j] = scale[j].max(v.abs());
            }
        }
        for row in &mut self.rows {
            for (j, v) in row.iter_mut() {
                if scale[*j] > 0.0 {
                    *v /= scale[*j];
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Feature count; must be at least the largest index in the file.
    pub features: Option<usize>,
    /// Map labels `0 → −1` so `{0, 1}` files become `{−1, +1}`.
    pub binary_labels: bool,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

pub fn parse_libsvm<R: BufRead>(reader: R, options: ParseOptions) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let mut label: f64 = label_tok.parse().map_err(|_| parse_err(lineno, format!("invalid label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(parse_err(lineno, format!("non-finite label {label_tok:?}")));
        }
        if options.binary_labels && label == 0.0 {
            label = -1.0;
        }
        let mut row = SparseRow::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| parse_err(lineno, format!("malformed token {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| parse_err(lineno, format!("invalid feature index in {tok:?}")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "feature indices are 1-based"));
            }
            let val: f64 = val.parse().map_err(|_| parse_err(lineno, format!("invalid feature value in {tok:?}")))?;
            if !val.is_finite() {
                return Err(parse_err(lineno, format!("non-finite feature value in {tok:?}")));
            }
            if let Some(&(prev, _)) = row.last() {
                if idx - 1 <= prev {
                    return Err(parse_err(lineno, format!("feature index {idx} not ascending")));
                }
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        labels.push(label);
    }
    let features = match options.features {
        Some(d) if d < max_index => return Err(Error::InvalidConfig(format!("feature override {d} is smaller than largest index {max_index}"))),
        Some(d) => d,
        None => max_index,
    };
    Dataset::new(rows, labels, features)
}

/// Reads a LIBSVM file, decompressing transparently when it is gzip.
pub fn read_libsvm(path: &Path, options: ParseOptions) -> Result<Dataset> {
    let mut file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    drop(file);
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        parse_libsvm(BufReader::new(GzDecoder::new(file)), options)
    } else {
        parse_libsvm(BufReader::new(file), options)
    }
}

pub fn write_libsvm<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    for (row, y) in data.rows().iter().zip(data.labels()) {
        write!(out, "{y}")?;
        for &(j, v) in row {
            write!(out, " {}:{v}", j + 1)?;
        }
        writeln!(out)?;
    }
    Ok(())
}
