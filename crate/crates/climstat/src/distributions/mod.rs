//! Distribution diagnostics: histograms, kernel density summaries, and
//! normality/log-normality tests over the model's eta, delta, and epsilon
//! series.

mod normality;
mod report;
mod summaries;

pub use normality::{
    anderson_darling, dagostino_pearson, run_test, shapiro_wilk, test_lognormal, Target, TestKind,
    TestResult,
};
pub use report::{
    distribution_report, write_rejection_csv, DistributionReport, PointLabel, RejectionRate,
    SeriesKind, SeriesReport,
};
pub use summaries::{
    histogram, kde, write_histogram_csv, write_kde_csv, HistogramSummary, KdeSummary,
    KDE_GRID_SIZE,
};
