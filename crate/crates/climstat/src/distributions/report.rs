//! Whole-store distribution diagnostics: runs the goodness-of-fit battery
//! on every sufficiently sampled series and aggregates rejection rates.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::normality::{run_test, test_lognormal, Target, TestKind, TestResult};
use super::summaries::{histogram, kde, HistogramSummary, KdeSummary};
use crate::grid::YearBoxKey;
use crate::ingest::BinnedStore;
use crate::twoscale::{extract_series, SeriesTarget, YearlyAggregate};

/// Which random variable of the model a series realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    /// Measurements of one box-year.
    Eta,
    /// Per-year concentrations of one box.
    Delta,
    /// Measurements of one box-year, centered on the year mean.
    Epsilon,
}

impl SeriesKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeriesKind::Eta => "eta",
            SeriesKind::Delta => "delta",
            SeriesKind::Epsilon => "epsilon",
        }
    }
}

/// Grid location a report entry belongs to; `year` is absent for per-box
/// (delta) series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PointLabel {
    pub lon_index: u32,
    pub lat_index: u32,
    pub depth_level: u32,
    pub month: u32,
    pub year: Option<i32>,
}

impl PointLabel {
    fn of(key: &YearBoxKey) -> Self {
        PointLabel {
            lon_index: key.box_key.lon_index,
            lat_index: key.box_key.lat_index,
            depth_level: key.box_key.depth_index,
            month: key.box_key.month_index,
            year: Some(key.year),
        }
    }
}

/// Diagnostics of one series at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesReport {
    pub series: SeriesKind,
    pub point: PointLabel,
    pub n: usize,
    pub tests: Vec<TestResult>,
    /// (test, target, reason) for tests that could not run.
    pub skipped: Vec<(TestKind, Target, String)>,
    pub histogram: Option<HistogramSummary>,
    pub kde: Option<KdeSummary>,
}

/// Rejection counts of one (series, test, target) combination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionRate {
    pub series: SeriesKind,
    pub test: TestKind,
    pub target: Target,
    pub total: usize,
    pub rejected: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionReport {
    pub alpha: f64,
    pub min_eta: usize,
    pub min_delta: usize,
    pub entries: Vec<SeriesReport>,
    pub rejection_rates: Vec<RejectionRate>,
}

const ALL_TESTS: [TestKind; 3] =
    [TestKind::ShapiroWilk, TestKind::AndersonDarling, TestKind::DagostinoPearson];

fn diagnose(
    series: SeriesKind,
    point: PointLabel,
    values: &[f64],
    alpha: f64,
    with_lognormal: bool,
) -> SeriesReport {
    let mut tests = Vec::new();
    let mut skipped = Vec::new();
    for test in ALL_TESTS {
        match run_test(values, test, alpha) {
            Ok(r) => tests.push(r),
            Err(e) => skipped.push((test, Target::Normal, e.to_string())),
        }
        if with_lognormal {
            match test_lognormal(values, test, alpha) {
                Ok(r) => tests.push(r),
                Err(e) => skipped.push((test, Target::Lognormal, e.to_string())),
            }
        }
    }
    SeriesReport {
        series,
        point,
        n: values.len(),
        tests,
        skipped,
        histogram: histogram(values).ok(),
        kde: kde(values).ok(),
    }
}

/// Runs the three tests (against normal, and lognormal where applicable)
/// with histogram/KDE summaries over every eta series with at least
/// `min_eta` measurements, every delta series with at least `min_delta`
/// years, and the epsilon series of the qualifying box-years (normal target
/// only).
pub fn distribution_report(
    store: &BinnedStore,
    aggregates: &[YearlyAggregate],
    min_eta: usize,
    min_delta: usize,
    alpha: f64,
) -> DistributionReport {
    let eta_keys: Vec<YearBoxKey> = aggregates
        .iter()
        .filter(|a| a.count >= min_eta.max(2))
        .map(|a| a.key)
        .collect();

    let mut delta_points: BTreeMap<crate::grid::BoxKey, usize> = BTreeMap::new();
    for a in aggregates {
        *delta_points.entry(a.key.box_key).or_insert(0) += 1;
    }
    let delta_keys: Vec<crate::grid::BoxKey> = delta_points
        .into_iter()
        .filter(|&(_, years)| years >= min_delta.max(2))
        .map(|(k, _)| k)
        .collect();

    let mut entries: Vec<SeriesReport> = eta_keys
        .par_iter()
        .flat_map(|key| {
            let values = extract_series(store, SeriesTarget::Eta(*key)).expect("key has values");
            let centered =
                extract_series(store, SeriesTarget::Epsilon(*key)).expect("key has values");
            let label = PointLabel::of(key);
            vec![
                diagnose(SeriesKind::Eta, label, &values, alpha, true),
                diagnose(SeriesKind::Epsilon, label, &centered, alpha, false),
            ]
        })
        .collect();
    entries.par_extend(delta_keys.par_iter().map(|key| {
        let values = extract_series(store, SeriesTarget::Delta(*key)).expect("key has years");
        let label = PointLabel {
            lon_index: key.lon_index,
            lat_index: key.lat_index,
            depth_level: key.depth_index,
            month: key.month_index,
            year: None,
        };
        diagnose(SeriesKind::Delta, label, &values, alpha, true)
    }));

    let mut counts: BTreeMap<(SeriesKind, TestKind, Target), (usize, usize)> = BTreeMap::new();
    for entry in &entries {
        for t in &entry.tests {
            let c = counts.entry((entry.series, t.test, t.target)).or_insert((0, 0));
            c.0 += 1;
            if t.rejected {
                c.1 += 1;
            }
        }
    }
    let rejection_rates = counts
        .into_iter()
        .map(|((series, test, target), (total, rejected))| RejectionRate {
            series,
            test,
            target,
            total,
            rejected,
            fraction: rejected as f64 / total as f64,
        })
        .collect();

    DistributionReport { alpha, min_eta, min_delta, entries, rejection_rates }
}

/// CSV summary of the rejection rates.
pub fn write_rejection_csv<W: std::io::Write>(
    report: &DistributionReport,
    w: &mut W,
) -> crate::error::Result<()> {
    writeln!(w, "series,test,target,total,rejected,fraction")?;
    for r in &report.rejection_rates {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.series.as_str(),
            r.test.as_str(),
            r.target.as_str(),
            r.total,
            r.rejected,
            crate::twoscale::fmt_f64(r.fraction)
        )?;
    }
    Ok(())
}
