//! Histogram and kernel density summaries with literature binning rules:
//! Freedman-Diaconis bin widths and Scott bandwidths.

use serde::Serialize;

use crate::error::{Error, Result};

/// Grid points of the kernel density evaluation.
pub const KDE_GRID_SIZE: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramSummary {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub bin_width: f64,
}

/// Histogram with the Freedman-Diaconis rule: bin_width = 2·IQR·n^(-1/3).
/// A constant series (or one with zero IQR) degenerates to a single bin
/// spanning the data.
pub fn histogram(series: &[f64]) -> Result<HistogramSummary> {
    if series.is_empty() {
        return Err(Error::Empty("histogram of empty series".to_string()));
    }
    if series.len() < 2 {
        return Err(Error::InsufficientSample { given: series.len(), needed: 2 });
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len();
    let min = sorted[0];
    let max = sorted[n - 1];
    let iqr = crate::twoscale::quantile(&sorted, 0.75)? - crate::twoscale::quantile(&sorted, 0.25)?;
    let width = 2.0 * iqr * (n as f64).powf(-1.0 / 3.0);
    if width == 0.0 || max == min {
        // Degenerate: one bin holding everything.
        let span = if max > min { max - min } else { 1.0 };
        return Ok(HistogramSummary {
            bin_edges: vec![min, min + span],
            counts: vec![n as u64],
            bin_width: span,
        });
    }
    let bins = ((max - min) / width).ceil().max(1.0) as usize;
    let bin_edges: Vec<f64> = (0..=bins).map(|k| min + k as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &v in &sorted {
        let idx = (((v - min) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(HistogramSummary { bin_edges, counts, bin_width: width })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KdeSummary {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub densities: Vec<f64>,
}

/// Normal-kernel density estimate with Scott's bandwidth sd·n^(-1/5),
/// evaluated on a fixed 512-point grid over [min - 3h, max + 3h].
pub fn kde(series: &[f64]) -> Result<KdeSummary> {
    if series.len() < 2 {
        return Err(Error::InsufficientSample { given: series.len(), needed: 2 });
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let sd = (series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let h = sd * n.powf(-0.2);
    let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = min - 3.0 * h;
    let hi = max + 3.0 * h;
    let step = (hi - lo) / (KDE_GRID_SIZE - 1) as f64;
    let grid: Vec<f64> = (0..KDE_GRID_SIZE).map(|i| lo + i as f64 * step).collect();
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * n);
    let densities: Vec<f64> = grid
        .iter()
        .map(|&g| {
            series
                .iter()
                .map(|&v| {
                    let z = (g - v) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(KdeSummary { bandwidth: h, grid, densities })
}

impl KdeSummary {
    /// Trapezoid integral of the density over the grid; close to 1 by
    /// construction.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.densities.windows(2))
            .map(|(g, d)| (g[1] - g[0]) * (d[0] + d[1]) / 2.0)
            .sum()
    }
}

/// CSV rows (bin_start, bin_end, count) for plotting.
pub fn write_histogram_csv<W: std::io::Write>(h: &HistogramSummary, w: &mut W) -> Result<()> {
    writeln!(w, "bin_start,bin_end,count")?;
    for (i, &c) in h.counts.iter().enumerate() {
        writeln!(
            w,
            "{},{},{}",
            crate::twoscale::fmt_f64(h.bin_edges[i]),
            crate::twoscale::fmt_f64(h.bin_edges[i + 1]),
            c
        )?;
    }
    Ok(())
}

/// CSV rows (x, density) for plotting.
pub fn write_kde_csv<W: std::io::Write>(k: &KdeSummary, w: &mut W) -> Result<()> {
    writeln!(w, "x,density")?;
    for (x, d) in k.grid.iter().zip(&k.densities) {
        writeln!(w, "{},{}", crate::twoscale::fmt_f64(*x), crate::twoscale::fmt_f64(*d))?;
    }
    Ok(())
}
