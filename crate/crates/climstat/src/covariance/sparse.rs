//! Sparse symmetric matrix over lag-expanded grid points, with
//! MatrixMarket-compatible import/export.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::BoxKey;

/// One matrix row/column: a grid box at a relative year offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MatrixPoint {
    pub box_key: BoxKey,
    pub year_offset: i32,
}

/// Symmetric matrix stored as its upper triangle (row <= col). Absent
/// entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    points: Vec<MatrixPoint>,
    index: BTreeMap<MatrixPoint, usize>,
    entries: BTreeMap<(usize, usize), f64>,
}

impl SparseSymmetric {
    /// Identity matrix over the given points; points must be sorted and
    /// unique.
    pub fn identity(points: Vec<MatrixPoint>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            if index.insert(*p, i).is_some() {
                return Err(Error::DuplicateEntry(i, i));
            }
        }
        let entries = (0..points.len()).map(|i| ((i, i), 1.0)).collect();
        Ok(SparseSymmetric { points, index, entries })
    }

    /// Identity matrix of a bare dimension, with synthetic point labels.
    pub fn identity_of_dim(dim: usize) -> Self {
        let points: Vec<MatrixPoint> = (0..dim)
            .map(|i| MatrixPoint {
                box_key: BoxKey { lon_index: i as u32, lat_index: 0, depth_index: 0, month_index: 0 },
                year_offset: 0,
            })
            .collect();
        SparseSymmetric::identity(points).expect("synthetic points are unique")
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[MatrixPoint] {
        &self.points
    }

    pub fn index_of(&self, p: &MatrixPoint) -> Option<usize> {
        self.index.get(p).copied()
    }

    /// Inserts a value at (i, j) and (j, i); a second insert at the same
    /// position is an error.
    pub fn insert(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if i >= self.dim() || j >= self.dim() {
            return Err(Error::OutOfRange(format!("entry ({}, {}) outside dimension {}", i, j, self.dim())));
        }
        let key = (i.min(j), i.max(j));
        // The unit diagonal is pre-set; overwriting it is a duplicate too.
        if self.entries.contains_key(&key) && key.0 != key.1 {
            return Err(Error::DuplicateEntry(key.0, key.1));
        }
        if key.0 == key.1 && value != 1.0 {
            return Err(Error::Config("diagonal entries are fixed at 1".to_string()));
        }
        self.entries.insert(key, value);
        Ok(())
    }

    pub(crate) fn set_unchecked(&mut self, i: usize, j: usize, value: f64) {
        self.entries.insert((i.min(j), i.max(j)), value);
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0)
    }

    /// Stored entries of the upper triangle, row <= col.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    pub fn off_diagonal_count(&self) -> usize {
        self.entries.keys().filter(|(i, j)| i != j).count()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let mut y = vec![0.0; self.dim()];
        for (&(i, j), &v) in &self.entries {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        Ok(y)
    }

    /// Writes coordinate-format symmetric real output; the lower triangle is
    /// emitted as MatrixMarket requires. Extra `%` comment lines may be
    /// passed through.
    pub fn write_matrix_market<W: Write>(&self, w: &mut W, comments: &[String]) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
        for c in comments {
            writeln!(w, "% {}", c)?;
        }
        writeln!(w, "{} {} {}", self.dim(), self.dim(), self.entry_count())?;
        for (&(i, j), &v) in &self.entries {
            writeln!(w, "{} {} {}", j + 1, i + 1, crate::twoscale::fmt_f64(v))?;
        }
        Ok(())
    }

    /// Reads coordinate-format symmetric real input with synthetic point
    /// labels. Diagonal entries must be present and equal to 1.
    pub fn read_matrix_market<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty matrix file".to_string()))??;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() != 5
            || tokens[0] != "%%MatrixMarket"
            || tokens[1] != "matrix"
            || tokens[2] != "coordinate"
            || tokens[3] != "real"
            || tokens[4] != "symmetric"
        {
            return Err(Error::Parse(format!("unsupported matrix header: {}", header)));
        }
        let mut size: Option<(usize, usize, usize)> = None;
        let mut matrix: Option<SparseSymmetric> = None;
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('%') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if size.is_none() {
                if f.len() != 3 {
                    return Err(Error::Parse(format!("bad size line: {}", line)));
                }
                let rows: usize = f[0].parse().map_err(|_| Error::Parse(line.to_string()))?;
                let cols: usize = f[1].parse().map_err(|_| Error::Parse(line.to_string()))?;
                let nnz: usize = f[2].parse().map_err(|_| Error::Parse(line.to_string()))?;
                if rows != cols {
                    return Err(Error::NotSymmetric(format!("{}x{}", rows, cols)));
                }
                size = Some((rows, cols, nnz));
                let mut m = SparseSymmetric::identity_of_dim(rows);
                m.entries.clear();
                matrix = Some(m);
                continue;
            }
            if f.len() != 3 {
                return Err(Error::Parse(format!("bad entry line: {}", line)));
            }
            let i: usize = f[0].parse().map_err(|_| Error::Parse(line.to_string()))?;
            let j: usize = f[1].parse().map_err(|_| Error::Parse(line.to_string()))?;
            let v: f64 = f[2].parse().map_err(|_| Error::Parse(line.to_string()))?;
            let m = matrix.as_mut().expect("size line precedes entries");
            if i == 0 || j == 0 || i > m.dim() || j > m.dim() {
                return Err(Error::OutOfRange(format!("entry ({}, {})", i, j)));
            }
            let key = (j.min(i) - 1, j.max(i) - 1);
            if m.entries.insert(key, v).is_some() {
                return Err(Error::DuplicateEntry(key.0, key.1));
            }
        }
        let m = matrix.ok_or_else(|| Error::Parse("missing size line".to_string()))?;
        let (_, _, nnz) = size.expect("set with matrix");
        if m.entry_count() != nnz {
            return Err(Error::Parse(format!(
                "entry count {} does not match declared {}",
                m.entry_count(),
                nnz
            )));
        }
        Ok(m)
    }
}
