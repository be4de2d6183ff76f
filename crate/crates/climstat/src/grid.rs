//! Space-time grid: resolution, depth-level table, coordinate
//! canonicalization and box assignment.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default depth-level table in meters. Each value is the top depth of a
/// vertical box; a measurement is assigned to the deepest level not below it.
pub const DEFAULT_DEPTH_LEVELS: [f64; 34] = [
    0.0, 25.0, 50.0, 85.0, 120.0, 170.0, 220.0, 290.0, 360.0, 455.0, 550.0, 670.0, 790.0, 935.0,
    1080.0, 1250.0, 1420.0, 1615.0, 1810.0, 2030.0, 2250.0, 2495.0, 2740.0, 3010.0, 3280.0,
    3575.0, 3870.0, 4190.0, 4510.0, 4855.0, 5200.0, 6000.0, 8000.0, 10000.0,
];

/// Definition of the lon x lat x depth-level x month grid and the year range
/// covered by the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub lon_resolution_deg: f64,
    pub lat_resolution_deg: f64,
    /// Strictly ascending box-top depths in meters, first element 0.
    pub depth_levels: Vec<f64>,
    pub months_per_year: u32,
    /// Inclusive year interval.
    pub year_range: (i32, i32),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lon_resolution_deg: 1.0,
            lat_resolution_deg: 1.0,
            depth_levels: DEFAULT_DEPTH_LEVELS.to_vec(),
            months_per_year: 12,
            year_range: (1900, 2100),
        }
    }
}

fn divides_evenly(whole: f64, step: f64) -> bool {
    if !(step > 0.0) {
        return false;
    }
    let n = whole / step;
    (n - n.round()).abs() < 1e-9 && n.round() >= 1.0
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !divides_evenly(360.0, self.lon_resolution_deg) {
            return Err(Error::Config(format!(
                "lon_resolution_deg {} must divide 360 evenly",
                self.lon_resolution_deg
            )));
        }
        if !divides_evenly(180.0, self.lat_resolution_deg) {
            return Err(Error::Config(format!(
                "lat_resolution_deg {} must divide 180 evenly",
                self.lat_resolution_deg
            )));
        }
        if self.depth_levels.is_empty() || self.depth_levels[0] != 0.0 {
            return Err(Error::Config(
                "depth_levels must start at 0".to_string(),
            ));
        }
        if !self.depth_levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "depth_levels must be strictly ascending".to_string(),
            ));
        }
        if self.months_per_year == 0 {
            return Err(Error::Config("months_per_year must be positive".to_string()));
        }
        if self.year_range.0 > self.year_range.1 {
            return Err(Error::Config(format!(
                "year_range ({}, {}) is empty",
                self.year_range.0, self.year_range.1
            )));
        }
        Ok(())
    }

    pub fn lon_bins(&self) -> u32 {
        (360.0 / self.lon_resolution_deg).round() as u32
    }

    pub fn lat_bins(&self) -> u32 {
        (180.0 / self.lat_resolution_deg).round() as u32
    }

    pub fn depth_bins(&self) -> u32 {
        self.depth_levels.len() as u32
    }
}

/// One cell of the lon x lat x depth-level x month grid, the pair (s, t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BoxKey {
    pub lon_index: u32,
    pub lat_index: u32,
    pub depth_index: u32,
    pub month_index: u32,
}

impl BoxKey {
    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        if self.lon_index >= spec.lon_bins()
            || self.lat_index >= spec.lat_bins()
            || self.depth_index >= spec.depth_bins()
            || self.month_index >= spec.months_per_year
        {
            return Err(Error::OutOfRange(format!("box key {:?} outside grid", self)));
        }
        Ok(())
    }
}

/// A grid box in a specific calendar year, the triple (s, t, a).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearBoxKey {
    pub box_key: BoxKey,
    pub year: i32,
}

/// Assigns a measurement position and date to its grid box.
///
/// Longitude is normalized into [0, 360) first; depth maps to the deepest
/// level that is less than or equal to it; the month and year come from the
/// calendar date. Boundaries are half-open: a coordinate exactly on a box
/// edge belongs to the box whose lower edge it touches.
pub fn assign_box(
    lon: f64,
    lat: f64,
    depth: f64,
    date: NaiveDate,
    spec: &GridSpec,
) -> Result<YearBoxKey> {
    if !lon.is_finite() || !lat.is_finite() || !depth.is_finite() {
        return Err(Error::OutOfRange("non-finite coordinate".to_string()));
    }
    if !(-90.0..=90.0).contains(&lat) {
        return Err(Error::OutOfRange(format!("latitude {} outside [-90, 90]", lat)));
    }
    if depth < 0.0 {
        return Err(Error::OutOfRange(format!("negative depth {}", depth)));
    }
    let last = *spec.depth_levels.last().expect("validated spec");
    if depth > last {
        return Err(Error::OutOfRange(format!(
            "depth {} exceeds last depth level {}",
            depth, last
        )));
    }

    let lon_norm = lon.rem_euclid(360.0);
    let lon_index = ((lon_norm / spec.lon_resolution_deg).floor() as u32).min(spec.lon_bins() - 1);
    let lat_index =
        (((lat + 90.0) / spec.lat_resolution_deg).floor() as u32).min(spec.lat_bins() - 1);
    // Index of the deepest level <= depth.
    let depth_index = spec.depth_levels.partition_point(|&d| d <= depth) as u32 - 1;

    let year = date.year();
    if year < spec.year_range.0 || year > spec.year_range.1 {
        return Err(Error::OutOfRange(format!(
            "year {} outside year_range ({}, {})",
            year, spec.year_range.0, spec.year_range.1
        )));
    }
    let month_index = date.month0() * spec.months_per_year / 12;

    Ok(YearBoxKey {
        box_key: BoxKey {
            lon_index,
            lat_index,
            depth_index,
            month_index,
        },
        year,
    })
}

/// Signed per-axis separation between two grid boxes, wrapped on the
/// periodic axes (month, longitude) and sign-normalized so that the first
/// nonzero component is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BoxDiff {
    pub d_month: i32,
    pub d_lon: i32,
    pub d_lat: i32,
    pub d_depth: i32,
}

/// Wraps a signed difference into the minimal representative (-period/2, period/2].
pub(crate) fn wrap_periodic(d: i64, period: i64) -> i64 {
    let mut r = d.rem_euclid(period);
    if 2 * r > period {
        r -= period;
    }
    r
}

/// Raw (not sign-normalized) wrapped difference b - a per axis, ordered
/// (month, lon, lat, depth).
pub(crate) fn wrapped_raw(a: &BoxKey, b: &BoxKey, spec: &GridSpec) -> [i64; 4] {
    [
        wrap_periodic(
            b.month_index as i64 - a.month_index as i64,
            spec.months_per_year as i64,
        ),
        wrap_periodic(
            b.lon_index as i64 - a.lon_index as i64,
            spec.lon_bins() as i64,
        ),
        b.lat_index as i64 - a.lat_index as i64,
        b.depth_index as i64 - a.depth_index as i64,
    ]
}

/// Sign-normalizes a difference vector in place: if the first nonzero
/// component is negative the whole vector is negated, and periodic
/// components are re-wrapped into their canonical range. `periods[i]` is the
/// period of component `i`, or 0 for a non-periodic axis.
pub(crate) fn canonicalize_diff(v: &mut [i64], periods: &[i64]) {
    if let Some(&first) = v.iter().find(|&&c| c != 0) {
        if first < 0 {
            for (c, &p) in v.iter_mut().zip(periods) {
                *c = -*c;
                if p > 0 {
                    *c = wrap_periodic(*c, p);
                }
            }
        }
    }
}

/// Minimal signed periodic difference between two boxes, canonicalized so
/// that `wrapped_difference(a, b) == wrapped_difference(b, a)`.
pub fn wrapped_difference(a: &BoxKey, b: &BoxKey, spec: &GridSpec) -> BoxDiff {
    let mut v = wrapped_raw(a, b, spec);
    let periods = [spec.months_per_year as i64, spec.lon_bins() as i64, 0, 0];
    canonicalize_diff(&mut v, &periods);
    BoxDiff {
        d_month: v[0] as i32,
        d_lon: v[1] as i32,
        d_lat: v[2] as i32,
        d_depth: v[3] as i32,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::default()
    }

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn default_spec_valid_with_appendix_table() {
        let s = spec();
        s.validate().unwrap();
        assert_eq!(s.depth_levels.len(), 34);
        assert_eq!(s.depth_levels[0], 0.0);
        assert_eq!(*s.depth_levels.last().unwrap(), 10000.0);
    }

    #[test]
    fn depth_maps_to_largest_level_not_exceeding() {
        let k = assign_box(10.0, 0.0, 600.0, date(1990, 1, 1), &spec()).unwrap();
        assert_eq!(spec().depth_levels[k.box_key.depth_index as usize], 550.0);
        let k0 = assign_box(10.0, 0.0, 0.0, date(1990, 1, 1), &spec()).unwrap();
        assert_eq!(k0.box_key.depth_index, 0);
    }

    #[test]
    fn depth_beyond_last_level_is_rejected() {
        let err = assign_box(10.0, 0.0, 10000.5, date(1990, 1, 1), &spec());
        assert!(matches!(err, Err(Error::OutOfRange(_))));
        // Exactly on the last level is still inside.
        let k = assign_box(10.0, 0.0, 10000.0, date(1990, 1, 1), &spec()).unwrap();
        assert_eq!(k.box_key.depth_index, 33);
    }

    #[test]
    fn longitude_is_periodic() {
        let a = assign_box(-0.5, 10.0, 0.0, date(1990, 6, 1), &spec()).unwrap();
        let b = assign_box(359.5, 10.0, 0.0, date(1990, 6, 1), &spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.box_key.lon_index, 359);
    }

    #[test]
    fn assign_box_is_idempotent_under_renormalization() {
        let a = assign_box(370.25, -45.0, 100.0, date(2000, 3, 7), &spec()).unwrap();
        let b = assign_box(10.25, -45.0, 100.0, date(2000, 3, 7), &spec()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn month_and_year_come_from_calendar_date() {
        let k = assign_box(0.0, 0.0, 0.0, date(1988, 7, 15), &spec()).unwrap();
        assert_eq!(k.box_key.month_index, 6);
        assert_eq!(k.year, 1988);
    }

    #[test]
    fn depth_mapping_is_monotone() {
        let s = spec();
        let mut prev = 0;
        for d in 0..=1000 {
            let depth = d as f64 * 10.0;
            let k = assign_box(0.0, 0.0, depth, date(1990, 1, 1), &s).unwrap();
            assert!(k.box_key.depth_index >= prev);
            prev = k.box_key.depth_index;
        }
    }

    fn bk(lon: u32, lat: u32, depth: u32, month: u32) -> BoxKey {
        BoxKey {
            lon_index: lon,
            lat_index: lat,
            depth_index: depth,
            month_index: month,
        }
    }

    #[test]
    fn wrapped_difference_identity_and_periodicity() {
        let s = spec();
        let a = bk(3, 4, 5, 6);
        assert_eq!(
            wrapped_difference(&a, &a, &s),
            BoxDiff { d_month: 0, d_lon: 0, d_lat: 0, d_depth: 0 }
        );
        // Months 0 and 11 are one month apart.
        let m0 = bk(0, 0, 0, 0);
        let m11 = bk(0, 0, 0, 11);
        assert_eq!(wrapped_difference(&m0, &m11, &s).d_month, 1);
        // Longitudes 0 and 359 are one degree apart.
        let l0 = bk(0, 0, 0, 0);
        let l359 = bk(359, 0, 0, 0);
        assert_eq!(wrapped_difference(&l0, &l359, &s).d_lon, 1);
    }

    #[test]
    fn wrapped_difference_is_symmetric() {
        let s = spec();
        let cases = [
            (bk(0, 0, 0, 0), bk(359, 5, 2, 11)),
            (bk(10, 20, 3, 4), bk(15, 18, 1, 9)),
            (bk(0, 0, 0, 6), bk(0, 0, 0, 0)),
            (bk(180, 90, 0, 0), bk(0, 90, 0, 0)),
        ];
        for (a, b) in cases {
            assert_eq!(wrapped_difference(&a, &b, &s), wrapped_difference(&b, &a, &s));
        }
    }

    #[test]
    fn half_period_difference_is_positive() {
        let s = spec();
        let a = bk(0, 0, 0, 0);
        let b = bk(0, 0, 0, 6);
        assert_eq!(wrapped_difference(&a, &b, &s).d_month, 6);
        assert_eq!(wrapped_difference(&b, &a, &s).d_month, 6);
    }
}
