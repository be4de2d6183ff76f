//! LDLᵀ factorization with a diagonal floor: off-diagonals of a failing
//! pivot row/column are uniformly shrunk toward zero until the pivot reaches
//! the floor, yielding a positive definite approximation and its factors.

use serde::Serialize;

use super::ordering::min_degree_order;
use super::sparse::SparseSymmetric;
use crate::error::{Error, Result};

/// P·A'·Pᵀ = L·D·Lᵀ with L unit lower triangular (unit diagonal implicit)
/// and every D entry at least the configured floor.
#[derive(Debug, Clone, PartialEq)]
pub struct LdlFactors {
    /// perm[k] = original index eliminated at step k.
    pub perm: Vec<usize>,
    /// Strictly-lower rows of L in permuted indices, columns ascending.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub diag: Vec<f64>,
}

/// How much conditioning changed the matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    /// Off-diagonal entries whose magnitude was reduced.
    pub modified: usize,
    pub total_off_diagonal: usize,
    /// Mean |A_ij| - |A'_ij| over the modified entries.
    pub mean_abs_reduction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub matrix: SparseSymmetric,
    pub factors: LdlFactors,
    pub summary: ConditionSummary,
}

const REPAIR_REL_TOL: f64 = 1e-9;

/// Produces a positive definite approximation A' of a unit-diagonal
/// symmetric matrix together with its exact LDLᵀ factors.
///
/// A fill-reducing ordering is applied first. Whenever a pivot d_i falls
/// below `delta_floor`, the off-diagonal entries of row/column i are scaled
/// by t = sqrt((A_ii - floor) / (A_ii - d_i)) in [0, 1) and the row is
/// refactored; rows before i are unaffected. With `preserve_diagonal`
/// cleared, the diagonal entry is raised instead of shrinking the
/// off-diagonals.
pub fn condition_pd(
    matrix: &SparseSymmetric,
    delta_floor: f64,
    preserve_diagonal: bool,
) -> Result<ConditionResult> {
    if !(delta_floor > 0.0 && delta_floor <= 1.0) {
        return Err(Error::Config(format!("delta_floor must lie in (0, 1], got {}", delta_floor)));
    }
    let n = matrix.dim();
    for i in 0..n {
        let d = matrix.get(i, i);
        if preserve_diagonal && d != 1.0 {
            return Err(Error::Config(format!("diagonal entry {} is {}, expected 1", i, d)));
        }
        if d <= 0.0 {
            return Err(Error::Config(format!("diagonal entry {} is not positive", i)));
        }
        if delta_floor > d {
            return Err(Error::Config(format!(
                "delta_floor {} exceeds diagonal entry {}",
                delta_floor, d
            )));
        }
    }

    let perm = min_degree_order(matrix);
    let mut inv = vec![0usize; n];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }

    // Working copy of the permuted matrix: per-row maps over both triangles,
    // diagonal separate.
    let mut a_rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    let mut a_diag = vec![0.0; n];
    for (i, j, v) in matrix.iter() {
        let (pi, pj) = (inv[i], inv[j]);
        if pi == pj {
            a_diag[pi] = v;
        } else {
            a_rows[pi].insert(pj, v);
            a_rows[pj].insert(pi, v);
        }
    }

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut diag = vec![0.0; n];
    for i in 0..n {
        let mut guard = 0usize;
        loop {
            // Up-looking step: y_j = A_ij - sum_{k<j} L_ik d_k L_jk,
            // L_ij = y_j / d_j, d_i = A_ii - sum_j L_ij y_j.
            let mut workspace = vec![0.0; i];
            let mut row: Vec<(usize, f64)> = Vec::new();
            let mut reduction = 0.0;
            for (&j, &aij) in a_rows[i].range(..i) {
                workspace[j] = aij;
            }
            for j in 0..i {
                let mut y = workspace[j];
                if y == 0.0 && rows[j].iter().all(|&(k, _)| workspace[k] == 0.0) {
                    continue;
                }
                for &(k, ljk) in &rows[j] {
                    y -= workspace[k] * diag[k] * ljk;
                }
                if y != 0.0 {
                    let lij = y / diag[j];
                    workspace[j] = lij;
                    row.push((j, lij));
                    reduction += lij * y;
                } else {
                    workspace[j] = 0.0;
                }
            }
            let d = a_diag[i] - reduction;
            if d >= delta_floor {
                rows.push(row);
                diag[i] = d;
                break;
            }
            guard += 1;
            if !preserve_diagonal {
                a_diag[i] += delta_floor - d;
                rows.push(row);
                diag[i] = delta_floor;
                break;
            }
            if guard > 60 || reduction <= 0.0 {
                // Round-off only: d is a hair under the floor by now.
                debug_assert!(d >= delta_floor * (1.0 - REPAIR_REL_TOL));
                rows.push(row);
                diag[i] = delta_floor;
                break;
            }
            let t = ((a_diag[i] - delta_floor) / reduction).sqrt();
            let cols: Vec<usize> = a_rows[i].keys().copied().collect();
            for j in cols {
                let v = a_rows[i][&j] * t;
                a_rows[i].insert(j, v);
                a_rows[j].insert(i, v);
            }
        }
    }

    // Back-permute the working copy into the result matrix and summarize the
    // damage against the input.
    let mut out = matrix.clone();
    let mut modified = 0usize;
    let mut total_off = 0usize;
    let mut reduction_sum = 0.0;
    for (i, j, v) in matrix.iter() {
        if i == j {
            let new = a_diag[inv[i]];
            if new != v {
                out.set_unchecked(i, j, new);
            }
            continue;
        }
        total_off += 1;
        let new = a_rows[inv[i]].get(&inv[j]).copied().unwrap_or(0.0);
        if new != v {
            out.set_unchecked(i, j, new);
            modified += 1;
            reduction_sum += v.abs() - new.abs();
        }
    }
    let summary = ConditionSummary {
        modified,
        total_off_diagonal: total_off,
        mean_abs_reduction: if modified > 0 { reduction_sum / modified as f64 } else { 0.0 },
    };
    Ok(ConditionResult { matrix: out, factors: LdlFactors { perm, rows, diag }, summary })
}

impl LdlFactors {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solves A'·x = rhs using the factors.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: rhs.len() });
        }
        let mut y: Vec<f64> = (0..n).map(|i| rhs[self.perm[i]]).collect();
        for i in 0..n {
            let mut v = y[i];
            for &(j, l) in &self.rows[i] {
                v -= l * y[j];
            }
            y[i] = v;
        }
        for i in 0..n {
            y[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let yi = y[i];
            for &(j, l) in &self.rows[i] {
                y[j] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        Ok(x)
    }

    /// Solves A'·x = rhs with a few steps of iterative refinement against
    /// `matrix` (the modified matrix the factors belong to). Keeps the
    /// iterate with the smallest residual: refinement diverges on nearly
    /// singular systems, and the first non-improving step ends it.
    pub fn solve_refined(&self, matrix: &SparseSymmetric, rhs: &[f64]) -> Result<Vec<f64>> {
        let residual = |x: &[f64]| -> Result<(Vec<f64>, f64)> {
            let ax = matrix.matvec(x)?;
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok((r, norm))
        };
        let mut x = self.solve(rhs)?;
        let (mut r, mut best_norm) = residual(&x)?;
        for _ in 0..3 {
            if !(best_norm > 0.0 && best_norm.is_finite()) {
                break;
            }
            let correction = self.solve(&r)?;
            let candidate: Vec<f64> =
                x.iter().zip(&correction).map(|(xi, c)| xi + c).collect();
            let (cr, cn) = residual(&candidate)?;
            if !(cn < best_norm) {
                break;
            }
            x = candidate;
            r = cr;
            best_norm = cn;
        }
        Ok(x)
    }

    /// Text export: permutation, D vector, then L triplets in permuted
    /// indices.
    pub fn write<W: std::io::Write>(&self, w: &mut W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {}", c)?;
        }
        writeln!(w, "n {}", self.dim())?;
        let perm: Vec<String> = self.perm.iter().map(|p| p.to_string()).collect();
        writeln!(w, "perm {}", perm.join(" "))?;
        let d: Vec<String> = self.diag.iter().map(|v| crate::twoscale::fmt_f64(*v)).collect();
        writeln!(w, "d {}", d.join(" "))?;
        let nnz: usize = self.rows.iter().map(|r| r.len()).sum();
        writeln!(w, "l {}", nnz)?;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                writeln!(w, "{} {} {}", i, j, crate::twoscale::fmt_f64(v))?;
            }
        }
        Ok(())
    }
}
