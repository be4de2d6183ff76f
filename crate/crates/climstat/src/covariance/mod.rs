//! Pointwise covariance/correlation estimation under annual-shift
//! invariance, and assembly into a sparse symmetric correlation matrix with
//! positive-definite conditioning.

mod ldl;
mod ordering;
mod sparse;

pub use ldl::{condition_pd, ConditionResult, ConditionSummary, LdlFactors};
pub use ordering::min_degree_order;
pub use sparse::{MatrixPoint, SparseSymmetric};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{wrapped_raw, BoxKey, GridSpec};
use crate::twoscale::{FieldKind, StatField, YearlyAggregate};

/// Canonical identifier of one covariance estimate: an ordered box pair and
/// a year lag (year of `box_b` minus year of `box_a`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CovKey {
    pub box_a: BoxKey,
    pub box_b: BoxKey,
    pub lag: i32,
}

impl CovKey {
    /// Orients the key so box_a <= box_b, adjusting the lag sign; a same-box
    /// key gets a non-negative lag.
    pub fn canonical(box_a: BoxKey, box_b: BoxKey, lag: i32) -> CovKey {
        if box_b < box_a || (box_a == box_b && lag < 0) {
            CovKey { box_a: box_b, box_b: box_a, lag: -lag }
        } else {
            CovKey { box_a, box_b, lag }
        }
    }

    pub fn is_variance(&self) -> bool {
        self.box_a == self.box_b && self.lag == 0
    }
}

/// One estimated covariance between two (box, year-offset) points, together
/// with its pair support |B| and, once scaled, its correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseCovEstimate {
    pub key: CovKey,
    pub covariance: f64,
    /// Set by [`to_correlations`]; clamped to [-1, 1].
    pub correlation: Option<f64>,
    pub support: usize,
}

/// Maximum box difference per axis for candidate pair enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Neighborhood {
    pub max_d_month: i64,
    pub max_d_lon: i64,
    pub max_d_lat: i64,
    pub max_d_depth: i64,
}

impl Default for Neighborhood {
    fn default() -> Self {
        Neighborhood { max_d_month: 1, max_d_lon: 1, max_d_lat: 1, max_d_depth: 1 }
    }
}

impl Neighborhood {
    fn admits(&self, diff: &[i64; 4]) -> bool {
        diff[0].abs() <= self.max_d_month
            && diff[1].abs() <= self.max_d_lon
            && diff[2].abs() <= self.max_d_lat
            && diff[3].abs() <= self.max_d_depth
    }
}

/// Estimates, for every admissible box pair and year lag, the sample
/// covariance of the per-year concentrations over all year pairs shared up
/// to an annual shift.
///
/// For key (box_a, box_b, lag) the pair set is
/// B = {(a, a + lag) : a in A(box_a), a + lag in A(box_b)}; the estimate is
/// sum (c_a - m)(c_b - m_hat) / (|B| - 1) with m, m_hat the B-restricted
/// means. Keys with |B| below `max(min_support, 2)` are skipped.
pub fn pointwise_covariances(
    aggregates: &[YearlyAggregate],
    spec: &GridSpec,
    min_support: usize,
    max_lag: i32,
    neighborhood: &Neighborhood,
) -> Vec<PointwiseCovEstimate> {
    let min_support = min_support.max(2);
    let mut series: BTreeMap<BoxKey, BTreeMap<i32, f64>> = BTreeMap::new();
    for a in aggregates {
        series.entry(a.key.box_key).or_default().insert(a.key.year, a.mean_c);
    }
    let boxes: Vec<&BoxKey> = series.keys().collect();

    let mut candidates: Vec<(usize, usize, i32)> = Vec::new();
    for i in 0..boxes.len() {
        for j in i..boxes.len() {
            if !neighborhood.admits(&wrapped_raw(boxes[i], boxes[j], spec)) {
                continue;
            }
            let lags = if i == j { 0..=max_lag } else { -max_lag..=max_lag };
            for lag in lags {
                candidates.push((i, j, lag));
            }
        }
    }

    candidates
        .par_iter()
        .filter_map(|&(i, j, lag)| {
            let sa = &series[boxes[i]];
            let sb = &series[boxes[j]];
            let mut ca = Vec::new();
            let mut cb = Vec::new();
            for (&year, &v) in sa {
                if let Some(&w) = sb.get(&(year + lag)) {
                    ca.push(v);
                    cb.push(w);
                }
            }
            let n = ca.len();
            if n < min_support {
                return None;
            }
            let ma = ca.iter().sum::<f64>() / n as f64;
            let mb = cb.iter().sum::<f64>() / n as f64;
            let cov = ca
                .iter()
                .zip(&cb)
                .map(|(a, b)| (a - ma) * (b - mb))
                .sum::<f64>()
                / (n - 1) as f64;
            Some(PointwiseCovEstimate {
                key: CovKey::canonical(*boxes[i], *boxes[j], lag),
                covariance: cov,
                correlation: None,
                support: n,
            })
        })
        .collect()
}

/// Scales covariances to correlations using climatological SDs floored at
/// `noise_floor`; estimates whose endpoints lack an SD are dropped and
/// counted.
pub fn to_correlations(
    estimates: &[PointwiseCovEstimate],
    sd_field: &StatField,
    noise_floor: f64,
) -> Result<(Vec<PointwiseCovEstimate>, usize)> {
    if sd_field.kind != FieldKind::SdConcentration {
        return Err(Error::Config(format!(
            "correlation scaling needs an sd_concentration field, got {}",
            sd_field.kind.as_str()
        )));
    }
    let mut out = Vec::with_capacity(estimates.len());
    let mut dropped = 0usize;
    for e in estimates {
        let (sa, sb) = match (sd_field.get(&e.key.box_a), sd_field.get(&e.key.box_b)) {
            (Some(a), Some(b)) => (a.max(noise_floor), b.max(noise_floor)),
            _ => {
                dropped += 1;
                continue;
            }
        };
        let corr = (e.covariance / (sa * sb)).clamp(-1.0, 1.0);
        out.push(PointwiseCovEstimate { correlation: Some(corr), ..e.clone() });
    }
    Ok((out, dropped))
}

/// All lag-expanded points referenced by the estimates, sorted and
/// deduplicated.
pub fn matrix_points(estimates: &[PointwiseCovEstimate]) -> Vec<MatrixPoint> {
    let mut set = std::collections::BTreeSet::new();
    for e in estimates {
        let (pa, pb) = expand_key(&e.key);
        set.insert(pa);
        set.insert(pb);
    }
    set.into_iter().collect()
}

/// Maps a canonical key to its two (box, year-offset) matrix points, with
/// non-negative offsets.
fn expand_key(key: &CovKey) -> (MatrixPoint, MatrixPoint) {
    if key.lag >= 0 {
        (
            MatrixPoint { box_key: key.box_a, year_offset: 0 },
            MatrixPoint { box_key: key.box_b, year_offset: key.lag },
        )
    } else {
        (
            MatrixPoint { box_key: key.box_a, year_offset: -key.lag },
            MatrixPoint { box_key: key.box_b, year_offset: 0 },
        )
    }
}

/// Builds the sparse symmetric correlation matrix over `points`: unit
/// diagonal, off-diagonals from the estimates, entries with magnitude below
/// `drop_below` omitted. Variance keys (same box, lag 0) are the diagonal
/// and are not re-inserted.
pub fn assemble_matrix(
    estimates: &[PointwiseCovEstimate],
    points: &[MatrixPoint],
    drop_below: f64,
) -> Result<SparseSymmetric> {
    let mut matrix = SparseSymmetric::identity(points.to_vec())?;
    for e in estimates {
        if e.key.is_variance() {
            continue;
        }
        let corr = e.correlation.ok_or_else(|| {
            Error::Config("matrix assembly needs correlation-scaled estimates".to_string())
        })?;
        let (pa, pb) = expand_key(&e.key);
        let i = matrix.index_of(&pa).ok_or_else(|| {
            Error::OutOfRange(format!("estimate references a point outside the matrix: {:?}", pa))
        })?;
        let j = matrix.index_of(&pb).ok_or_else(|| {
            Error::OutOfRange(format!("estimate references a point outside the matrix: {:?}", pb))
        })?;
        if corr.abs() < drop_below {
            continue;
        }
        matrix.insert(i, j, corr)?;
    }
    Ok(matrix)
}

/// Writes estimates as CSV. Lines starting with `#` may precede the header
/// when read back; the correlation column is empty for unscaled estimates.
pub fn write_estimates_csv<W: std::io::Write>(
    estimates: &[PointwiseCovEstimate],
    w: &mut W,
) -> Result<()> {
    writeln!(
        w,
        "lon_a,lat_a,depth_a,month_a,lon_b,lat_b,depth_b,month_b,lag,covariance,correlation,support"
    )?;
    for e in estimates {
        let (a, b) = (&e.key.box_a, &e.key.box_b);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            a.lon_index,
            a.lat_index,
            a.depth_index,
            a.month_index,
            b.lon_index,
            b.lat_index,
            b.depth_index,
            b.month_index,
            e.key.lag,
            crate::twoscale::fmt_f64(e.covariance),
            e.correlation.map(crate::twoscale::fmt_f64).unwrap_or_default(),
            e.support,
        )?;
    }
    Ok(())
}

/// Reads estimates written by [`write_estimates_csv`], skipping `#` comment
/// lines.
pub fn read_estimates_csv<R: std::io::BufRead>(r: R) -> Result<Vec<PointwiseCovEstimate>> {
    let mut out = Vec::new();
    let mut saw_header = false;
    for (line_no, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if !line.starts_with("lon_a,") {
                return Err(Error::Parse(format!(
                    "line {}: expected estimate CSV header, got {:?}",
                    line_no + 1,
                    line
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::Parse(format!(
                "line {}: expected 12 fields, got {}",
                line_no + 1,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<u32> {
            fields[i]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad index {:?}", line_no + 1, fields[i])))
        };
        let real = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad number {:?}", line_no + 1, fields[i])))
        };
        let box_a = BoxKey {
            lon_index: num(0)?,
            lat_index: num(1)?,
            depth_index: num(2)?,
            month_index: num(3)?,
        };
        let box_b = BoxKey {
            lon_index: num(4)?,
            lat_index: num(5)?,
            depth_index: num(6)?,
            month_index: num(7)?,
        };
        let lag: i32 = fields[8]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad lag {:?}", line_no + 1, fields[8])))?;
        let correlation = if fields[10].is_empty() { None } else { Some(real(10)?) };
        out.push(PointwiseCovEstimate {
            key: CovKey { box_a, box_b, lag },
            covariance: real(9)?,
            correlation,
            support: fields[11].parse().map_err(|_| {
                Error::Parse(format!("line {}: bad support {:?}", line_no + 1, fields[11]))
            })?,
        });
    }
    if !saw_header {
        return Err(Error::Parse("estimate CSV is missing its header".to_string()));
    }
    Ok(out)
}
