//! Command-line front end: ingest → statistics → covariance → diagnostics →
//! export, driven by a TOML configuration file. Outputs are plot-ready
//! CSV/JSON/MatrixMarket files, each carrying the tool version and the
//! configuration hash so identical (input, config) pairs are recognizable as
//! byte-identical artifacts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use climstat::config::{InterpolationMode, RunConfig};
use climstat::covariance::{
    assemble_matrix, condition_pd, matrix_points, pointwise_covariances, read_estimates_csv,
    to_correlations, write_estimates_csv, PointwiseCovEstimate,
};
use climstat::distance::{
    axis_profiles, distance_function_verdict, group_by_difference, write_profile_csv,
};
use climstat::distributions::{distribution_report, write_rejection_csv};
use climstat::error::Error;
use climstat::grid::BoxKey;
use climstat::ingest::{ingest_csv, BinnedStore};
use climstat::interpolate::{fallback_average, interpolate_field, nearest_field};
use climstat::twoscale::{
    climatological_iqr, climatological_mean, climatological_sd, noise_iqr_field, noise_sd_field,
    relative_field, yearly_aggregates, FieldKind, FieldSummary, MeanMode, StatField,
};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "climstat", version, about = "Gridded concentration statistics pipeline")]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Size of the worker thread pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bin a measurement CSV (lon,lat,depth_m,date,value) into a store file.
    Ingest {
        /// Input measurement CSV.
        #[arg(long)]
        input: PathBuf,
        /// Output store file.
        #[arg(long)]
        store: PathBuf,
    },
    /// Export every per-box statistic field plus summary tables.
    Stats {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Estimate covariances/correlations and build the conditioned matrix.
    Cov {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Group correlations by box difference and judge distance dependence.
    Distance {
        /// Correlation estimate CSV written by `cov`.
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the normal/log-normal distribution tests over the store.
    Disttest {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fill absent boxes of an exported statistic field.
    Interpolate {
        /// Field CSV written by `stats`.
        #[arg(long)]
        field: PathBuf,
        /// Statistic kind stored in the field CSV (e.g. mean, sd_noise).
        #[arg(long)]
        kind: String,
        /// Output field CSV.
        #[arg(long)]
        out: PathBuf,
        /// Fill method; overrides the config value.
        #[arg(long)]
        interpolation: Option<InterpolationMode>,
    },
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            let kind = match err {
                Error::Config(_) => "config",
                _ => "data",
            };
            let record = serde_json::json!({
                "error": { "kind": kind, "message": err.to_string() },
                "tool_version": TOOL_VERSION,
            });
            eprintln!("{record}");
            if kind == "config" {
                2
            } else {
                3
            }
        }
    });
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let hash = config.hash();
    match cli.command {
        Command::Ingest { input, store } => cmd_ingest(&input, &store, &config, &hash),
        Command::Stats { store, out_dir } => cmd_stats(&store, &out_dir, &config, &hash),
        Command::Cov { store, out_dir } => cmd_cov(&store, &out_dir, &config, &hash),
        Command::Distance { estimates, out_dir } => {
            cmd_distance(&estimates, &out_dir, &config, &hash)
        }
        Command::Disttest { store, out_dir } => cmd_disttest(&store, &out_dir, &config, &hash),
        Command::Interpolate { field, kind, out, interpolation } => {
            cmd_interpolate(&field, &kind, &out, interpolation, &config, &hash)
        }
    }
}

/// Two-line provenance header carried by every CSV artifact.
fn write_header<W: Write>(w: &mut W, hash: &str) -> Result<(), Error> {
    writeln!(w, "# tool_version={TOOL_VERSION}")?;
    writeln!(w, "# config_hash={hash}")?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, hash: &str, payload: serde_json::Value) -> Result<(), Error> {
    let record = serde_json::json!({
        "tool_version": TOOL_VERSION,
        "config_hash": hash,
        "data": payload,
    });
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &record)
        .map_err(|e| Error::Parse(format!("JSON write: {e}")))?;
    writeln!(w)?;
    Ok(())
}

fn cmd_ingest(input: &Path, store: &Path, config: &RunConfig, hash: &str) -> Result<(), Error> {
    let reader = BufReader::new(File::open(input)?);
    let (binned, report) = ingest_csv(reader, config.grid.clone())?;
    binned.save(store)?;
    let record = serde_json::json!({
        "tool_version": TOOL_VERSION,
        "config_hash": hash,
        "report": report,
        "boxes": binned.boxes().len(),
        "values": binned.total_values(),
    });
    println!("{record}");
    Ok(())
}

fn cmd_stats(store: &Path, out_dir: &Path, config: &RunConfig, hash: &str) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    let store = BinnedStore::load(store)?;
    let spec = store.spec().clone();
    let aggregates = yearly_aggregates(&store);
    let t = &config.thresholds;

    let mean = climatological_mean(&aggregates, &spec, t.min_years, MeanMode::Mean);
    let median_mean = climatological_mean(&aggregates, &spec, t.min_years, MeanMode::Median);
    let sd_conc = climatological_sd(&aggregates, &spec, t.min_years);
    let iqr_conc = climatological_iqr(&aggregates, &spec, t.min_years);
    let sd_noise = noise_sd_field(&aggregates, &spec, t.min_count);
    let iqr_noise = noise_iqr_field(&aggregates, &spec, t.min_count);
    let relative_sd = relative_field(&mean, &sd_conc);
    let qcd = relative_field(&median_mean, &iqr_conc);
    let fields = [
        &mean, &median_mean, &sd_conc, &iqr_conc, &sd_noise, &iqr_noise, &relative_sd, &qcd,
    ];

    for field in fields {
        let mut w = create(&out_dir.join(format!("{}.csv", field.kind.as_str())))?;
        write_header(&mut w, hash)?;
        field.write_csv(&mut w)?;
    }

    let mut w = create(&out_dir.join("depth_profile.csv"))?;
    write_header(&mut w, hash)?;
    writeln!(w, "kind,depth_index,mean_value")?;
    for field in fields {
        for (depth, value) in field.depth_profile() {
            writeln!(w, "{},{},{}", field.kind.as_str(), depth, value)?;
        }
    }

    let mut w = create(&out_dir.join("monthly_change.csv"))?;
    write_header(&mut w, hash)?;
    writeln!(w, "kind,depth_index,mean_abs_change")?;
    let mut overall = Vec::new();
    for field in fields {
        let (global, per_depth) = field.monthly_change_profile();
        overall.push((field.kind, global));
        for (depth, value) in per_depth {
            writeln!(w, "{},{},{}", field.kind.as_str(), depth, value)?;
        }
    }

    let summaries: Vec<FieldSummary> = fields.iter().map(|f| FieldSummary::of(f)).collect();
    write_json(
        &out_dir.join("stats_summary.json"),
        hash,
        serde_json::json!({
            "fields": summaries,
            "monthly_mean_abs_change": overall
                .iter()
                .map(|(kind, v)| serde_json::json!({ "kind": kind.as_str(), "value": v }))
                .collect::<Vec<_>>(),
        }),
    )
}

/// Fixed-width histogram of correlation values (bin size 0.05 over [-1, 1]);
/// estimates below `drop_below` in absolute value are not counted.
fn correlation_histogram(estimates: &[PointwiseCovEstimate], drop_below: f64) -> Vec<(f64, f64, usize)> {
    let mut bins = vec![0usize; 40];
    for e in estimates {
        if let Some(c) = e.correlation {
            if c.abs() >= drop_below && !e.key.is_variance() {
                let idx = (((c + 1.0) / 0.05) as usize).min(39);
                bins[idx] += 1;
            }
        }
    }
    bins.into_iter()
        .enumerate()
        .map(|(i, n)| (-1.0 + 0.05 * i as f64, -1.0 + 0.05 * (i + 1) as f64, n))
        .collect()
}

fn cmd_cov(store: &Path, out_dir: &Path, config: &RunConfig, hash: &str) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    let store = BinnedStore::load(store)?;
    let spec = store.spec().clone();
    let aggregates = yearly_aggregates(&store);
    let t = &config.thresholds;

    let covariances = pointwise_covariances(
        &aggregates,
        &spec,
        t.min_support,
        t.max_lag,
        &config.neighborhood,
    );
    let mut w = create(&out_dir.join("covariances.csv"))?;
    write_header(&mut w, hash)?;
    write_estimates_csv(&covariances, &mut w)?;

    let sd_conc = climatological_sd(&aggregates, &spec, t.min_years);
    let (correlations, dropped) = to_correlations(&covariances, &sd_conc, t.noise_floor)?;
    let mut w = create(&out_dir.join("correlations.csv"))?;
    write_header(&mut w, hash)?;
    write_estimates_csv(&correlations, &mut w)?;

    let mut w = create(&out_dir.join("correlation_histogram.csv"))?;
    write_header(&mut w, hash)?;
    writeln!(w, "bin_start,bin_end,count")?;
    for (lo, hi, n) in correlation_histogram(&correlations, t.drop_below) {
        writeln!(w, "{lo},{hi},{n}")?;
    }

    let points = matrix_points(&correlations);
    let matrix = assemble_matrix(&correlations, &points, t.drop_below)?;
    let comments = [format!("tool_version={TOOL_VERSION}"), format!("config_hash={hash}")];
    let mut w = create(&out_dir.join("matrix.mtx"))?;
    matrix.write_matrix_market(&mut w, &comments)?;

    let conditioned = condition_pd(&matrix, t.delta_floor, t.preserve_diagonal)?;
    let mut w = create(&out_dir.join("conditioned.mtx"))?;
    conditioned.matrix.write_matrix_market(&mut w, &comments)?;
    let mut w = create(&out_dir.join("factors.txt"))?;
    conditioned.factors.write(&mut w, &comments)?;

    let s = &conditioned.summary;
    write_json(
        &out_dir.join("cov_summary.json"),
        hash,
        serde_json::json!({
            "estimates": covariances.len(),
            "correlations": correlations.len(),
            "dropped_noise_floor_scaling": dropped,
            "matrix_dim": matrix.dim(),
            "matrix_off_diagonal": matrix.off_diagonal_count(),
            "conditioning": s,
            "fraction_modified": if s.total_off_diagonal > 0 {
                s.modified as f64 / s.total_off_diagonal as f64
            } else {
                0.0
            },
        }),
    )
}

fn cmd_distance(
    estimates: &Path,
    out_dir: &Path,
    config: &RunConfig,
    hash: &str,
) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    let estimates = read_estimates_csv(BufReader::new(File::open(estimates)?))?;
    let t = &config.thresholds;
    let grouping = group_by_difference(&estimates, &config.grid, t.min_group);

    let mut w = create(&out_dir.join("difference_groups.csv"))?;
    write_header(&mut w, hash)?;
    writeln!(w, "d_month,d_lon,d_lat,d_depth,d_year,count,mean,iqr")?;
    for g in &grouping.groups {
        let [dm, dlon, dlat, dd, dy] = g.difference;
        writeln!(w, "{dm},{dlon},{dlat},{dd},{dy},{},{},{}", g.count, g.mean, g.iqr)?;
    }

    let profiles = axis_profiles(&grouping.groups, &config.grid);
    for (name, rows) in [
        ("time", &profiles.time),
        ("lon", &profiles.lon),
        ("lat", &profiles.lat),
        ("depth", &profiles.depth),
    ] {
        let mut w = create(&out_dir.join(format!("profile_{name}.csv")))?;
        write_header(&mut w, hash)?;
        write_profile_csv(rows, &mut w)?;
    }

    let verdict = distance_function_verdict(&grouping.groups, t.iqr_threshold)?;
    write_json(
        &out_dir.join("distance_verdict.json"),
        hash,
        serde_json::json!({
            "verdict": verdict,
            "suppressed_groups": grouping.suppressed_groups,
            "suppressed_correlations": grouping.suppressed_correlations,
        }),
    )
}

fn cmd_disttest(store: &Path, out_dir: &Path, config: &RunConfig, hash: &str) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    let store = BinnedStore::load(store)?;
    let aggregates = yearly_aggregates(&store);
    let t = &config.thresholds;
    let report = distribution_report(&store, &aggregates, t.min_eta, t.min_delta, t.alpha);

    let mut w = create(&out_dir.join("rejection_rates.csv"))?;
    write_header(&mut w, hash)?;
    write_rejection_csv(&report, &mut w)?;

    write_json(
        &out_dir.join("distribution_report.json"),
        hash,
        serde_json::to_value(&report).map_err(|e| Error::Parse(format!("JSON encode: {e}")))?,
    )
}

fn cmd_interpolate(
    field: &Path,
    kind: &str,
    out: &Path,
    mode: Option<InterpolationMode>,
    config: &RunConfig,
    hash: &str,
) -> Result<(), Error> {
    let kind = FieldKind::from_str(kind)
        .ok_or_else(|| Error::Config(format!("unknown field kind {kind:?}")))?;
    let reader = BufReader::new(File::open(field)?);
    let field = StatField::read_csv(reader, config.grid.clone(), kind)?;
    let mode = mode.unwrap_or(config.interpolation);

    let spec = &field.spec;
    let mut targets = Vec::new();
    for lon_index in 0..spec.lon_bins() {
        for lat_index in 0..spec.lat_bins() {
            for depth_index in 0..spec.depth_bins() {
                for month_index in 0..spec.months_per_year {
                    targets.push(BoxKey { lon_index, lat_index, depth_index, month_index });
                }
            }
        }
    }

    let filled = match mode {
        InterpolationMode::Triangulated => interpolate_field(&field, &targets)?,
        InterpolationMode::Nearest => nearest_field(&field, &targets)?,
        InterpolationMode::Average => fallback_average(&field)?,
        InterpolationMode::None => field,
    };
    let mut w = create(out)?;
    write_header(&mut w, hash)?;
    filled.write_csv(&mut w)?;
    Ok(())
}
