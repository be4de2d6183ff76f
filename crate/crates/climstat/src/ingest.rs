//! Measurement ingestion: CSV parsing, validation, binning by grid box and
//! year, and binary persistence of the binned store.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::grid::{assign_box, BoxKey, GridSpec, YearBoxKey};

pub const CSV_HEADER: &str = "lon,lat,depth_m,date,value";

const STORE_MAGIC: &[u8; 8] = b"CLMSTOR1";
const STORE_VERSION: u32 = 1;

/// One observation: position, date and measured value.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub lon: f64,
    pub lat: f64,
    pub depth: f64,
    pub date: NaiveDate,
    pub value: f64,
}

/// Why a row was rejected during ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RejectReason {
    BadFieldCount,
    MalformedNumber,
    MalformedDate,
    NonFiniteValue,
    CoordinateOutOfRange,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::BadFieldCount => "bad field count",
            RejectReason::MalformedNumber => "malformed number",
            RejectReason::MalformedDate => "malformed date",
            RejectReason::NonFiniteValue => "non-finite value",
            RejectReason::CoordinateOutOfRange => "coordinate out of range",
        }
    }
}

/// Accounting of accepted and rejected rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct IngestReport {
    pub total_rows: u64,
    pub accepted: u64,
    pub rejected: BTreeMap<String, u64>,
}

impl IngestReport {
    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }

    fn reject(&mut self, reason: RejectReason) {
        *self.rejected.entry(reason.as_str().to_string()).or_insert(0) += 1;
    }
}

/// Immutable measurements indexed by grid box and year.
///
/// Per-box-year lists are sorted by (date, value) so that downstream
/// reductions are deterministic regardless of input order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedStore {
    spec: GridSpec,
    bins: BTreeMap<YearBoxKey, Vec<(NaiveDate, f64)>>,
}

impl BinnedStore {
    pub fn from_records<I>(spec: GridSpec, records: I) -> Result<(Self, IngestReport)>
    where
        I: IntoIterator<Item = MeasurementRecord>,
    {
        spec.validate()?;
        let mut bins: BTreeMap<YearBoxKey, Vec<(NaiveDate, f64)>> = BTreeMap::new();
        let mut report = IngestReport::default();
        for r in records {
            report.total_rows += 1;
            if !r.value.is_finite() {
                report.reject(RejectReason::NonFiniteValue);
                continue;
            }
            match assign_box(r.lon, r.lat, r.depth, r.date, &spec) {
                Ok(key) => {
                    bins.entry(key).or_default().push((r.date, r.value));
                    report.accepted += 1;
                }
                Err(_) => report.reject(RejectReason::CoordinateOutOfRange),
            }
        }
        for list in bins.values_mut() {
            list.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        }
        Ok((BinnedStore { spec, bins }, report))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// A(s, t): the set of years with at least one measurement in the box.
    pub fn available_years(&self, box_key: &BoxKey) -> std::collections::BTreeSet<i32> {
        let lo = YearBoxKey { box_key: *box_key, year: i32::MIN };
        let hi = YearBoxKey { box_key: *box_key, year: i32::MAX };
        self.bins.range(lo..=hi).map(|(k, _)| k.year).collect()
    }

    /// The measurement values of one box-year, in (date, value) order.
    pub fn values(&self, key: &YearBoxKey) -> Vec<f64> {
        self.bins
            .get(key)
            .map(|v| v.iter().map(|(_, x)| *x).collect())
            .unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&YearBoxKey, &[(NaiveDate, f64)])> {
        self.bins.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Distinct grid boxes holding any data.
    pub fn boxes(&self) -> Vec<BoxKey> {
        let mut out: Vec<BoxKey> = Vec::new();
        for k in self.bins.keys() {
            if out.last() != Some(&k.box_key) {
                out.push(k.box_key);
            }
        }
        out
    }

    pub fn total_values(&self) -> u64 {
        self.bins.values().map(|v| v.len() as u64).sum()
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(STORE_MAGIC)?;
        w.write_all(&STORE_VERSION.to_le_bytes())?;
        w.write_all(&self.spec.lon_resolution_deg.to_le_bytes())?;
        w.write_all(&self.spec.lat_resolution_deg.to_le_bytes())?;
        w.write_all(&self.spec.months_per_year.to_le_bytes())?;
        w.write_all(&self.spec.year_range.0.to_le_bytes())?;
        w.write_all(&self.spec.year_range.1.to_le_bytes())?;
        w.write_all(&(self.spec.depth_levels.len() as u32).to_le_bytes())?;
        for d in &self.spec.depth_levels {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&(self.bins.len() as u64).to_le_bytes())?;
        for (key, list) in &self.bins {
            w.write_all(&key.box_key.lon_index.to_le_bytes())?;
            w.write_all(&key.box_key.lat_index.to_le_bytes())?;
            w.write_all(&key.box_key.depth_index.to_le_bytes())?;
            w.write_all(&key.box_key.month_index.to_le_bytes())?;
            w.write_all(&key.year.to_le_bytes())?;
            w.write_all(&(list.len() as u64).to_le_bytes())?;
            for (date, value) in list {
                w.write_all(&date.num_days_from_ce().to_le_bytes())?;
                w.write_all(&value.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != STORE_MAGIC {
            return Err(Error::Parse("bad store magic".to_string()));
        }
        let version = read_u32(&mut r)?;
        if version != STORE_VERSION {
            return Err(Error::Parse(format!("unsupported store version {}", version)));
        }
        let lon_resolution_deg = read_f64(&mut r)?;
        let lat_resolution_deg = read_f64(&mut r)?;
        let months_per_year = read_u32(&mut r)?;
        let year_lo = read_i32(&mut r)?;
        let year_hi = read_i32(&mut r)?;
        let n_levels = read_u32(&mut r)? as usize;
        let mut depth_levels = Vec::with_capacity(n_levels);
        for _ in 0..n_levels {
            depth_levels.push(read_f64(&mut r)?);
        }
        let spec = GridSpec {
            lon_resolution_deg,
            lat_resolution_deg,
            depth_levels,
            months_per_year,
            year_range: (year_lo, year_hi),
        };
        spec.validate()?;
        let n_bins = read_u64(&mut r)? as usize;
        let mut bins = BTreeMap::new();
        for _ in 0..n_bins {
            let key = YearBoxKey {
                box_key: BoxKey {
                    lon_index: read_u32(&mut r)?,
                    lat_index: read_u32(&mut r)?,
                    depth_index: read_u32(&mut r)?,
                    month_index: read_u32(&mut r)?,
                },
                year: read_i32(&mut r)?,
            };
            let count = read_u64(&mut r)? as usize;
            let mut list = Vec::with_capacity(count);
            for _ in 0..count {
                let days = read_i32(&mut r)?;
                let date = NaiveDate::from_num_days_from_ce_opt(days)
                    .ok_or_else(|| Error::Parse("bad date in store".to_string()))?;
                list.push((date, read_f64(&mut r)?));
            }
            bins.insert(key, list);
        }
        Ok(BinnedStore { spec, bins })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_i32<R: Read>(r: &mut R) -> Result<i32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(i32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Parses the `lon,lat,depth_m,date,value` CSV schema into a binned store.
///
/// A missing or wrong header is fatal; malformed rows are counted per reason
/// and skipped.
pub fn ingest_csv<R: BufRead>(reader: R, spec: GridSpec) -> Result<(BinnedStore, IngestReport)> {
    spec.validate()?;
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("missing CSV header".to_string()))??;
    if header.trim() != CSV_HEADER {
        return Err(Error::Parse(format!(
            "bad CSV header: expected `{}`, got `{}`",
            CSV_HEADER,
            header.trim()
        )));
    }

    let mut bins: BTreeMap<YearBoxKey, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    let mut report = IngestReport::default();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.total_rows += 1;
        match parse_row(&line) {
            Ok(rec) => {
                if !rec.value.is_finite() {
                    report.reject(RejectReason::NonFiniteValue);
                    continue;
                }
                match assign_box(rec.lon, rec.lat, rec.depth, rec.date, &spec) {
                    Ok(key) => {
                        bins.entry(key).or_default().push((rec.date, rec.value));
                        report.accepted += 1;
                    }
                    Err(_) => report.reject(RejectReason::CoordinateOutOfRange),
                }
            }
            Err(reason) => report.reject(reason),
        }
    }
    for list in bins.values_mut() {
        list.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    }
    Ok((BinnedStore { spec, bins }, report))
}

fn parse_row(line: &str) -> std::result::Result<MeasurementRecord, RejectReason> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 5 {
        return Err(RejectReason::BadFieldCount);
    }
    let lon: f64 = fields[0].trim().parse().map_err(|_| RejectReason::MalformedNumber)?;
    let lat: f64 = fields[1].trim().parse().map_err(|_| RejectReason::MalformedNumber)?;
    let depth: f64 = fields[2].trim().parse().map_err(|_| RejectReason::MalformedNumber)?;
    let date = NaiveDate::parse_from_str(fields[3].trim(), "%Y-%m-%d")
        .map_err(|_| RejectReason::MalformedDate)?;
    let value: f64 = fields[4].trim().parse().map_err(|_| RejectReason::MalformedNumber)?;
    Ok(MeasurementRecord { lon, lat, depth, date, value })
}
