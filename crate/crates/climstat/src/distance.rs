//! Tests whether estimated correlations can be described as a function of
//! the coordinate difference alone: grouping by canonical difference vector,
//! group-spread verdicts, and per-axis profiles.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::covariance::PointwiseCovEstimate;
use crate::error::{Error, Result};
use crate::grid::{canonicalize_diff, wrapped_raw, GridSpec};
use crate::twoscale::quantile;

/// Correlations whose endpoints differ by the same canonical
/// (d_month, d_lon, d_lat, d_depth, d_year) vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferenceGroup {
    pub difference: [i64; 5],
    pub correlations: Vec<f64>,
    pub iqr: f64,
    pub mean: f64,
    pub count: usize,
}

/// Grouping output; groups below the size threshold are suppressed but
/// counted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupingResult {
    pub groups: Vec<DifferenceGroup>,
    pub suppressed_groups: usize,
    pub suppressed_correlations: usize,
}

/// Canonical difference vector between the endpoints of one estimate.
pub fn difference_vector(e: &PointwiseCovEstimate, spec: &GridSpec) -> [i64; 5] {
    let raw = wrapped_raw(&e.key.box_a, &e.key.box_b, spec);
    let mut v = [raw[0], raw[1], raw[2], raw[3], e.key.lag as i64];
    let periods = [spec.months_per_year as i64, spec.lon_bins() as i64, 0, 0, 0];
    canonicalize_diff(&mut v, &periods);
    v
}

/// Partitions correlation-scaled estimates by canonical difference vector;
/// each group carries its mean and interquartile range.
pub fn group_by_difference(
    estimates: &[PointwiseCovEstimate],
    spec: &GridSpec,
    min_group: usize,
) -> GroupingResult {
    let mut buckets: BTreeMap<[i64; 5], Vec<f64>> = BTreeMap::new();
    for e in estimates {
        let corr = match e.correlation {
            Some(c) => c,
            None => continue,
        };
        buckets.entry(difference_vector(e, spec)).or_default().push(corr);
    }
    let mut groups = Vec::new();
    let mut suppressed_groups = 0;
    let mut suppressed_correlations = 0;
    for (difference, correlations) in buckets {
        if correlations.len() < min_group.max(1) {
            suppressed_groups += 1;
            suppressed_correlations += correlations.len();
            continue;
        }
        let mut sorted = correlations.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let iqr = quantile(&sorted, 0.75).expect("nonempty") - quantile(&sorted, 0.25).expect("nonempty");
        let mean = correlations.iter().sum::<f64>() / correlations.len() as f64;
        let count = correlations.len();
        groups.push(DifferenceGroup { difference, correlations, iqr, mean, count });
    }
    GroupingResult { groups, suppressed_groups, suppressed_correlations }
}

/// Whether the grouped correlations leave room for a distance-only
/// description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceVerdict {
    pub group_count: usize,
    /// Fraction of groups with IQR at or above each threshold.
    pub fractions_at: Vec<(f64, f64)>,
    /// Quantiles (p, value) of the group IQRs at p in {0, 0.25, 0.5, 0.75, 1}.
    pub iqr_quantiles: Vec<(f64, f64)>,
    pub median_iqr: f64,
    pub iqr_threshold: f64,
    /// True when the median group IQR reaches the threshold: correlations
    /// vary too much within equal-difference groups for a distance-only
    /// description.
    pub distance_only_unlikely: bool,
}

pub const FRACTION_THRESHOLDS: [f64; 3] = [0.05, 0.10, 0.20];

/// Summarizes the group IQRs and issues the verdict at `iqr_threshold`
/// (0.05 is the restrictive conventional choice, 0.1 a lenient one).
pub fn distance_function_verdict(
    groups: &[DifferenceGroup],
    iqr_threshold: f64,
) -> Result<DistanceVerdict> {
    if groups.is_empty() {
        return Err(Error::Empty("no difference groups to judge".to_string()));
    }
    let mut iqrs: Vec<f64> = groups.iter().map(|g| g.iqr).collect();
    iqrs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let fractions_at = FRACTION_THRESHOLDS
        .iter()
        .map(|&t| {
            let n = iqrs.iter().filter(|&&v| v >= t).count();
            (t, n as f64 / iqrs.len() as f64)
        })
        .collect();
    let iqr_quantiles = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&p| (p, quantile(&iqrs, p).expect("nonempty")))
        .collect();
    let median_iqr = quantile(&iqrs, 0.5).expect("nonempty");
    Ok(DistanceVerdict {
        group_count: groups.len(),
        fractions_at,
        iqr_quantiles,
        median_iqr,
        iqr_threshold,
        distance_only_unlikely: median_iqr >= iqr_threshold,
    })
}

/// One plottable point of an axis profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub magnitude: i64,
    pub iqr: f64,
    pub mean: f64,
    pub count: usize,
}

/// Groups that differ along a single coordinate axis, as plottable rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisProfiles {
    /// Time separation in months, combining month and year components.
    pub time: Vec<ProfileRow>,
    pub lon: Vec<ProfileRow>,
    pub lat: Vec<ProfileRow>,
    pub depth: Vec<ProfileRow>,
}

/// Extracts, for each axis, the groups whose difference is nonzero only on
/// that axis; rows are sorted by separation magnitude. The all-zero group
/// belongs to no profile.
pub fn axis_profiles(groups: &[DifferenceGroup], spec: &GridSpec) -> AxisProfiles {
    let mut profiles = AxisProfiles { time: Vec::new(), lon: Vec::new(), lat: Vec::new(), depth: Vec::new() };
    for g in groups {
        let [d_month, d_lon, d_lat, d_depth, d_year] = g.difference;
        let row = |magnitude: i64| ProfileRow { magnitude, iqr: g.iqr, mean: g.mean, count: g.count };
        let time_sep = d_year * spec.months_per_year as i64 + d_month;
        if (d_lon, d_lat, d_depth) == (0, 0, 0) && time_sep != 0 {
            profiles.time.push(row(time_sep.abs()));
        } else if (d_month, d_lat, d_depth, d_year) == (0, 0, 0, 0) && d_lon != 0 {
            profiles.lon.push(row(d_lon.abs()));
        } else if (d_month, d_lon, d_depth, d_year) == (0, 0, 0, 0) && d_lat != 0 {
            profiles.lat.push(row(d_lat.abs()));
        } else if (d_month, d_lon, d_lat, d_year) == (0, 0, 0, 0) && d_depth != 0 {
            profiles.depth.push(row(d_depth.abs()));
        }
    }
    for p in [&mut profiles.time, &mut profiles.lon, &mut profiles.lat, &mut profiles.depth] {
        p.sort_by_key(|r| r.magnitude);
    }
    profiles
}

/// CSV rows for one profile, for plotting.
pub fn write_profile_csv<W: std::io::Write>(rows: &[ProfileRow], w: &mut W) -> Result<()> {
    writeln!(w, "magnitude,iqr,mean,count")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.magnitude,
            crate::twoscale::fmt_f64(r.iqr),
            crate::twoscale::fmt_f64(r.mean),
            r.count
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovKey;
    use crate::grid::BoxKey;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bk(lon: u32, lat: u32, depth: u32, month: u32) -> BoxKey {
        BoxKey { lon_index: lon, lat_index: lat, depth_index: depth, month_index: month }
    }

    fn est(a: BoxKey, b: BoxKey, lag: i32, corr: f64) -> PointwiseCovEstimate {
        PointwiseCovEstimate {
            key: CovKey::canonical(a, b, lag),
            covariance: corr,
            correlation: Some(corr),
            support: 40,
        }
    }

    #[test]
    fn constant_group_has_zero_iqr() {
        let spec = GridSpec::default();
        let ests: Vec<_> = (0..10)
            .map(|i| est(bk(i, 0, 0, 0), bk(i + 1, 0, 0, 0), 0, 0.5))
            .collect();
        let r = group_by_difference(&ests, &spec, 10);
        assert_eq!(r.groups.len(), 1);
        assert_eq!(r.groups[0].iqr, 0.0);
        assert_eq!(r.groups[0].mean, 0.5);
        assert_eq!(r.groups[0].count, 10);
    }

    #[test]
    fn four_value_group_quantiles() {
        let spec = GridSpec::default();
        let corrs = [0.1, 0.2, 0.3, 0.4];
        let ests: Vec<_> = corrs
            .iter()
            .enumerate()
            .map(|(i, &c)| est(bk(i as u32, 0, 0, 0), bk(i as u32 + 1, 0, 0, 0), 0, c))
            .collect();
        let r = group_by_difference(&ests, &spec, 4);
        assert_eq!(r.groups.len(), 1);
        assert_relative_eq!(r.groups[0].iqr, 0.15, epsilon = 1e-12);
        assert_relative_eq!(r.groups[0].mean, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn undersized_group_is_suppressed_but_counted() {
        let spec = GridSpec::default();
        let ests: Vec<_> = (0..9)
            .map(|i| est(bk(i, 0, 0, 0), bk(i + 1, 0, 0, 0), 0, 0.5))
            .collect();
        let r = group_by_difference(&ests, &spec, 10);
        assert!(r.groups.is_empty());
        assert_eq!(r.suppressed_groups, 1);
        assert_eq!(r.suppressed_correlations, 9);
    }

    #[test]
    fn verdict_fixtures() {
        let mk = |iqr: f64| DifferenceGroup {
            difference: [0, 0, 0, 0, 0],
            correlations: vec![],
            iqr,
            mean: 0.0,
            count: 10,
        };
        // All groups constant: every fraction 0, verdict negative.
        let constant = vec![mk(0.0), mk(0.0)];
        let v = distance_function_verdict(&constant, 0.05).unwrap();
        assert!(v.fractions_at.iter().all(|&(_, f)| f == 0.0));
        assert!(!v.distance_only_unlikely);

        let spread = vec![mk(0.0), mk(0.06), mk(0.12), mk(0.25)];
        let v = distance_function_verdict(&spread, 0.05).unwrap();
        assert_eq!(v.fractions_at[0], (0.05, 0.75));
        assert_eq!(v.fractions_at[1], (0.10, 0.50));
        assert_eq!(v.fractions_at[2], (0.20, 0.25));
        assert!(v.distance_only_unlikely); // median 0.09 >= 0.05

        assert!(distance_function_verdict(&[], 0.05).is_err());
    }

    #[test]
    fn profile_selection_rules() {
        let spec = GridSpec::default();
        let mk = |diff: [i64; 5]| DifferenceGroup {
            difference: diff,
            correlations: vec![],
            iqr: 0.1,
            mean: 0.2,
            count: 12,
        };
        let groups = vec![
            mk([0, 0, 0, 1, 0]),  // depth only
            mk([1, 0, 0, 1, 0]),  // mixed: nowhere
            mk([2, 0, 0, 0, 0]),  // time (months)
            mk([1, 0, 0, 0, 1]),  // time (months + year): 13 months
            mk([0, 3, 0, 0, 0]),  // lon only
            mk([0, 0, 0, 0, 0]),  // zero vector: nowhere
        ];
        let p = axis_profiles(&groups, &spec);
        assert_eq!(p.depth.len(), 1);
        assert_eq!(p.depth[0].magnitude, 1);
        assert_eq!(p.lon.len(), 1);
        assert_eq!(p.lon[0].magnitude, 3);
        assert!(p.lat.is_empty());
        let mags: Vec<i64> = p.time.iter().map(|r| r.magnitude).collect();
        assert_eq!(mags, vec![2, 13]); // sorted by magnitude
    }

    #[test]
    fn grouping_is_a_partition() {
        let spec = GridSpec::default();
        let mut ests = Vec::new();
        for i in 0..12u32 {
            ests.push(est(bk(i, 0, 0, 0), bk(i + 1 + (i % 2), 0, 0, 0), 0, 0.1 * i as f64));
        }
        let r = group_by_difference(&ests, &spec, 1);
        let total: usize = r.groups.iter().map(|g| g.count).sum();
        assert_eq!(total + r.suppressed_correlations, ests.len());
    }

    proptest! {
        #[test]
        fn canonical_vector_ignores_endpoint_order(
            lon_a in 0u32..6, lon_b in 0u32..6,
            month_a in 0u32..12, month_b in 0u32..12,
            lag in -2i32..=2,
        ) {
            let spec = GridSpec::default();
            let a = bk(lon_a, 3, 2, month_a);
            let b = bk(lon_b, 3, 2, month_b);
            let e1 = est(a, b, lag, 0.5);
            let e2 = est(b, a, -lag, 0.5);
            prop_assert_eq!(difference_vector(&e1, &spec), difference_vector(&e2, &spec));
        }

        #[test]
        fn group_stats_are_permutation_invariant(
            mut corrs in proptest::collection::vec(-1.0f64..1.0, 10..20),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let spec = GridSpec::default();
            let mk = |cs: &[f64]| {
                let ests: Vec<_> = cs
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| est(bk(i as u32, 0, 0, 0), bk(i as u32 + 1, 0, 0, 0), 0, c))
                    .collect();
                group_by_difference(&ests, &spec, 10)
            };
            let g1 = mk(&corrs);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            corrs.shuffle(&mut rng);
            let g2 = mk(&corrs);
            prop_assert_eq!(g1.groups.len(), g2.groups.len());
            for (a, b) in g1.groups.iter().zip(&g2.groups) {
                prop_assert!((a.mean - b.mean).abs() < 1e-12);
                prop_assert!((a.iqr - b.iqr).abs() < 1e-12);
                prop_assert_eq!(a.count, b.count);
            }
        }
    }
}
