//! Two-scale decomposition estimators: yearly aggregates, climatological
//! means and medians, climatological and noise variabilities, and relative
//! measures.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{BoxKey, GridSpec, YearBoxKey};
use crate::ingest::BinnedStore;

/// Linearly interpolated quantile at fractional rank (n - 1) * p.
///
/// `values` must be sorted ascending.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile of empty list".to_string()));
    }
    let p = p.clamp(0.0, 1.0);
    let rank = (values.len() - 1) as f64 * p;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        Ok(values[lo])
    } else {
        let frac = rank - lo as f64;
        Ok(values[lo] + (values[hi] - values[lo]) * frac)
    }
}

fn iqr_sorted(values: &[f64]) -> Result<f64> {
    Ok(quantile(values, 0.75)? - quantile(values, 0.25)?)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with divisor (n - 1); values summed in slice order.
fn sample_variance(values: &[f64], m: f64) -> f64 {
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Per box-year reductions: c(s,t,a), the median variant, and the per-year
/// noise statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct YearlyAggregate {
    pub key: YearBoxKey,
    /// Arithmetic mean of the year's measurements, c(s,t,a).
    pub mean_c: f64,
    /// Median of the year's measurements.
    pub median_c: f64,
    pub count: usize,
    /// Sample SD of the year's measurements; present only when count >= 2.
    pub noise_sd: Option<f64>,
    /// Interquartile range of the year's measurements.
    pub noise_iqr: f64,
}

/// Computes one aggregate per nonempty box-year.
pub fn yearly_aggregates(store: &BinnedStore) -> Vec<YearlyAggregate> {
    let bins: Vec<(&YearBoxKey, &[(chrono::NaiveDate, f64)])> = store.iter().collect();
    bins.par_iter()
        .map(|(key, list)| {
            let values: Vec<f64> = list.iter().map(|(_, v)| *v).collect();
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let m = mean(&values);
            let noise_sd = if values.len() >= 2 {
                Some(sample_variance(&values, m).sqrt())
            } else {
                None
            };
            YearlyAggregate {
                key: **key,
                mean_c: m,
                median_c: quantile(&sorted, 0.5).expect("nonempty"),
                count: values.len(),
                noise_sd,
                noise_iqr: iqr_sorted(&sorted).expect("nonempty"),
            }
        })
        .collect()
}

/// Which estimator a gridded field holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Mean,
    MedianMean,
    SdConcentration,
    SdNoise,
    IqrConcentration,
    IqrNoise,
    RelativeSd,
    Qcd,
}

impl FieldKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FieldKind::Mean => "mean",
            FieldKind::MedianMean => "median_mean",
            FieldKind::SdConcentration => "sd_concentration",
            FieldKind::SdNoise => "sd_noise",
            FieldKind::IqrConcentration => "iqr_concentration",
            FieldKind::IqrNoise => "iqr_noise",
            FieldKind::RelativeSd => "relative_sd",
            FieldKind::Qcd => "qcd",
        }
    }

    pub fn from_str(s: &str) -> Option<FieldKind> {
        [
            FieldKind::Mean,
            FieldKind::MedianMean,
            FieldKind::SdConcentration,
            FieldKind::SdNoise,
            FieldKind::IqrConcentration,
            FieldKind::IqrNoise,
            FieldKind::RelativeSd,
            FieldKind::Qcd,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

/// Where a box's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Estimated,
    Interpolated,
    FallbackAverage,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Estimated => "estimated",
            Provenance::Interpolated => "interpolated",
            Provenance::FallbackAverage => "fallback_average",
        }
    }

    pub fn from_str(s: &str) -> Option<Provenance> {
        match s {
            "estimated" => Some(Provenance::Estimated),
            "interpolated" => Some(Provenance::Interpolated),
            "fallback_average" => Some(Provenance::FallbackAverage),
            _ => None,
        }
    }
}

/// A per-(s,t) gridded statistic with a validity mask: absent boxes carry no
/// entry.
#[derive(Debug, Clone, PartialEq)]
pub struct StatField {
    pub spec: GridSpec,
    pub kind: FieldKind,
    values: BTreeMap<BoxKey, (f64, Provenance)>,
}

impl StatField {
    pub fn new(spec: GridSpec, kind: FieldKind) -> Self {
        StatField { spec, kind, values: BTreeMap::new() }
    }

    pub fn insert(&mut self, key: BoxKey, value: f64, provenance: Provenance) {
        self.values.insert(key, (value, provenance));
    }

    pub fn get(&self, key: &BoxKey) -> Option<f64> {
        self.values.get(key).map(|(v, _)| *v)
    }

    pub fn provenance(&self, key: &BoxKey) -> Option<Provenance> {
        self.values.get(key).map(|(_, p)| *p)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BoxKey, f64, Provenance)> {
        self.values.iter().map(|(k, (v, p))| (k, *v, *p))
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "lon_index,lat_index,depth_level,month,value,provenance")?;
        for (k, v, p) in self.iter() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                k.lon_index,
                k.lat_index,
                k.depth_index,
                k.month_index,
                fmt_f64(v),
                p.as_str()
            )?;
        }
        Ok(())
    }

    /// Parses the CSV produced by [`StatField::write_csv`]; `#` lines are
    /// skipped.
    pub fn read_csv<R: std::io::BufRead>(r: R, spec: GridSpec, kind: FieldKind) -> Result<Self> {
        let mut field = StatField::new(spec, kind);
        let mut saw_header = false;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "lon_index,lat_index,depth_level,month,value,provenance" {
                    return Err(Error::Parse(format!("bad field CSV header: {}", line)));
                }
                saw_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Parse(format!("bad field CSV row: {}", line)));
            }
            let key = BoxKey {
                lon_index: f[0].parse().map_err(|_| Error::Parse(line.to_string()))?,
                lat_index: f[1].parse().map_err(|_| Error::Parse(line.to_string()))?,
                depth_index: f[2].parse().map_err(|_| Error::Parse(line.to_string()))?,
                month_index: f[3].parse().map_err(|_| Error::Parse(line.to_string()))?,
            };
            let value: f64 = f[4].parse().map_err(|_| Error::Parse(line.to_string()))?;
            let provenance = Provenance::from_str(f[5])
                .ok_or_else(|| Error::Parse(format!("bad provenance: {}", f[5])))?;
            field.insert(key, value, provenance);
        }
        if !saw_header {
            return Err(Error::Parse("missing field CSV header".to_string()));
        }
        Ok(field)
    }

    /// Per-depth-level averages of the field, for profile plots.
    pub fn depth_profile(&self) -> Vec<(u32, f64)> {
        let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        for (k, v, _) in self.iter() {
            let e = sums.entry(k.depth_index).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
        sums.into_iter().map(|(d, (s, n))| (d, s / n as f64)).collect()
    }

    pub fn global_mean(&self) -> Option<f64> {
        if self.values.is_empty() {
            None
        } else {
            Some(self.values.values().map(|(v, _)| *v).sum::<f64>() / self.values.len() as f64)
        }
    }

    /// Average absolute change of the field after one month, per depth level
    /// and overall. Month pairs wrap across the year boundary.
    pub fn monthly_change_profile(&self) -> (Option<f64>, Vec<(u32, f64)>) {
        let months = self.spec.months_per_year;
        let mut per_depth: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        let mut total = (0.0, 0usize);
        for (k, v, _) in self.iter() {
            let next = BoxKey { month_index: (k.month_index + 1) % months, ..*k };
            if let Some(w) = self.get(&next) {
                let d = (w - v).abs();
                let e = per_depth.entry(k.depth_index).or_insert((0.0, 0));
                e.0 += d;
                e.1 += 1;
                total.0 += d;
                total.1 += 1;
            }
        }
        let overall = if total.1 > 0 { Some(total.0 / total.1 as f64) } else { None };
        (overall, per_depth.into_iter().map(|(d, (s, n))| (d, s / n as f64)).collect())
    }
}

/// JSON-facing summary of a field.
#[derive(Debug, Serialize)]
pub struct FieldSummary {
    pub kind: FieldKind,
    pub count: usize,
    pub global_mean: Option<f64>,
    pub depth_profile: Vec<(u32, f64)>,
}

impl FieldSummary {
    pub fn of(field: &StatField) -> Self {
        FieldSummary {
            kind: field.kind,
            count: field.len(),
            global_mean: field.global_mean(),
            depth_profile: field.depth_profile(),
        }
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    // Shortest representation that round-trips; keeps outputs byte-stable.
    format!("{}", v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMode {
    Mean,
    Median,
}

/// Groups aggregates by box; aggregates must be sorted by key (as produced
/// by [`yearly_aggregates`]).
fn per_box(aggregates: &[YearlyAggregate]) -> Vec<(BoxKey, &[YearlyAggregate])> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..aggregates.len() {
        if i + 1 == aggregates.len() || aggregates[i + 1].key.box_key != aggregates[i].key.box_key
        {
            out.push((aggregates[start].key.box_key, &aggregates[start..=i]));
            start = i + 1;
        }
    }
    out
}

/// Climatological mean per box: mean (or median) over years of the per-year
/// concentration estimates. Boxes with fewer than `min_years` years are
/// absent.
pub fn climatological_mean(
    aggregates: &[YearlyAggregate],
    spec: &GridSpec,
    min_years: usize,
    mode: MeanMode,
) -> StatField {
    let kind = match mode {
        MeanMode::Mean => FieldKind::Mean,
        MeanMode::Median => FieldKind::MedianMean,
    };
    let mut field = StatField::new(spec.clone(), kind);
    for (box_key, years) in per_box(aggregates) {
        if years.len() < min_years.max(1) {
            continue;
        }
        let value = match mode {
            MeanMode::Mean => {
                let cs: Vec<f64> = years.iter().map(|a| a.mean_c).collect();
                mean(&cs)
            }
            MeanMode::Median => {
                let mut cs: Vec<f64> = years.iter().map(|a| a.median_c).collect();
                cs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                quantile(&cs, 0.5).expect("nonempty")
            }
        };
        field.insert(box_key, value, Provenance::Estimated);
    }
    field
}

/// Sample SD over the per-year concentration estimates c(s,t,a); absent
/// below `min_years` years (at least 2).
pub fn climatological_sd(
    aggregates: &[YearlyAggregate],
    spec: &GridSpec,
    min_years: usize,
) -> StatField {
    let mut field = StatField::new(spec.clone(), FieldKind::SdConcentration);
    for (box_key, years) in per_box(aggregates) {
        if years.len() < min_years.max(2) {
            continue;
        }
        let cs: Vec<f64> = years.iter().map(|a| a.mean_c).collect();
        let m = mean(&cs);
        field.insert(box_key, sample_variance(&cs, m).sqrt(), Provenance::Estimated);
    }
    field
}

/// Interquartile range over the per-year concentration estimates.
pub fn climatological_iqr(
    aggregates: &[YearlyAggregate],
    spec: &GridSpec,
    min_years: usize,
) -> StatField {
    let mut field = StatField::new(spec.clone(), FieldKind::IqrConcentration);
    for (box_key, years) in per_box(aggregates) {
        if years.len() < min_years.max(1) {
            continue;
        }
        let mut cs: Vec<f64> = years.iter().map(|a| a.mean_c).collect();
        cs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        field.insert(box_key, iqr_sorted(&cs).expect("nonempty"), Provenance::Estimated);
    }
    field
}

/// Pooled noise SD per box: sqrt of the (count - 1)-weighted mean of the
/// per-year variances, over years with at least `max(min_count, 2)`
/// measurements. Boxes with no qualifying year are absent.
pub fn noise_sd_field(
    aggregates: &[YearlyAggregate],
    spec: &GridSpec,
    min_count: usize,
) -> StatField {
    let threshold = min_count.max(2);
    let mut field = StatField::new(spec.clone(), FieldKind::SdNoise);
    for (box_key, years) in per_box(aggregates) {
        let mut num = 0.0;
        let mut den = 0usize;
        for a in years {
            if a.count >= threshold {
                let sd = a.noise_sd.expect("count >= 2");
                num += (a.count - 1) as f64 * sd * sd;
                den += a.count - 1;
            }
        }
        if den > 0 {
            field.insert(box_key, (num / den as f64).sqrt(), Provenance::Estimated);
        }
    }
    field
}

/// Noise IQR per box: median over the per-year IQRs of years with at least
/// `max(min_count, 1)` measurements.
pub fn noise_iqr_field(
    aggregates: &[YearlyAggregate],
    spec: &GridSpec,
    min_count: usize,
) -> StatField {
    let threshold = min_count.max(1);
    let mut field = StatField::new(spec.clone(), FieldKind::IqrNoise);
    for (box_key, years) in per_box(aggregates) {
        let mut iqrs: Vec<f64> = years
            .iter()
            .filter(|a| a.count >= threshold)
            .map(|a| a.noise_iqr)
            .collect();
        if iqrs.is_empty() {
            continue;
        }
        iqrs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        field.insert(box_key, quantile(&iqrs, 0.5).expect("nonempty"), Provenance::Estimated);
    }
    field
}

/// spread / central per box, where both are present and central > 0.
pub fn relative_field(central: &StatField, spread: &StatField) -> StatField {
    let kind = match spread.kind {
        FieldKind::IqrConcentration | FieldKind::IqrNoise => FieldKind::Qcd,
        _ => FieldKind::RelativeSd,
    };
    let mut field = StatField::new(central.spec.clone(), kind);
    for (k, c, _) in central.iter() {
        if c > 0.0 {
            if let Some(s) = spread.get(k) {
                field.insert(*k, s / c, Provenance::Estimated);
            }
        }
    }
    field
}

/// Which value series to extract for distribution diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesTarget {
    /// Measurement results of one box-year.
    Eta(YearBoxKey),
    /// Per-year concentration estimates of one box.
    Delta(BoxKey),
    /// Measurement results of one box-year, centered on the year mean.
    Epsilon(YearBoxKey),
}

/// Extracts the values belonging to one random variable of the model.
pub fn extract_series(store: &BinnedStore, target: SeriesTarget) -> Result<Vec<f64>> {
    let series = match target {
        SeriesTarget::Eta(key) => store.values(&key),
        SeriesTarget::Epsilon(key) => {
            let values = store.values(&key);
            if values.is_empty() {
                Vec::new()
            } else {
                let c = mean(&values);
                values.into_iter().map(|v| v - c).collect()
            }
        }
        SeriesTarget::Delta(box_key) => store
            .available_years(&box_key)
            .into_iter()
            .map(|year| mean(&store.values(&YearBoxKey { box_key, year })))
            .collect(),
    };
    if series.is_empty() {
        return Err(Error::Empty("no values for requested series".to_string()));
    }
    Ok(series)
}
