//! `qvol`: fit Zipf laws to query volumes, tabulate threshold estimates, and run
//! the sampling simulations.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qvol::experiments::{
    parse_config, run_monte_carlo, scatter_empirical_vs_estimated, volume_sensitivity_sweep,
    write_rank_distribution, write_scatter_csv, AggregateStats, ExperimentConfig, DEFAULT_SEED,
};
use qvol::fit::{fit_binned, fit_continuous, FitMethod, FitResult};
use qvol::io::{ingest_binned, ingest_continuous};
use qvol::json::to_string_sig17;
use qvol::model::ZipfParams;
use qvol::report::{format_table, report_table_with, ReportRow, DEFAULT_THRESHOLDS};
use qvol::sampling::build_population;
use qvol::uncertainty::{ParamErrors, Propagation};
use qvol::Error;

#[derive(Parser)]
#[command(name = "qvol", version, about = "Estimate query counts and search volumes with Zipf's law")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a `query,volume` CSV.
    FitContinuous {
        csv_path: PathBuf,
        #[arg(long, default_value = "nls", value_parser = parse_continuous_method)]
        method: FitMethod,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Fit a `query,reported_volume` CSV of bin upper edges.
    FitBinned {
        csv_path: PathBuf,
        #[arg(long, default_value = "chi2", value_parser = parse_binned_method)]
        method: FitMethod,
        /// Known sketch fraction; restricts the fit to volumes >= 10 * gamma * top volume.
        #[arg(long)]
        gamma: Option<f64>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Tabulate N_v and V_v for given parameters.
    Estimate {
        #[arg(long, allow_negative_numbers = true)]
        c: f64,
        #[arg(long, allow_negative_numbers = true)]
        beta: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        dc: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        dbeta: f64,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Run a Monte Carlo experiment described by a config file.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// One CSV row per cell instead of JSON.
        #[arg(long)]
        csv: bool,
    },
    /// Write plot data as CSV.
    ExportPlot {
        #[arg(long, value_enum, default_value_t = PlotKind::Scatter)]
        kind: PlotKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ReportArgs {
    /// Comma-separated yearly volume thresholds.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS)]
    thresholds: Vec<f64>,
    /// Combine errors in quadrature instead of as absolute sums.
    #[arg(long)]
    quadrature: bool,
    /// Report rows as CSV.
    #[arg(long, conflicts_with = "table")]
    csv: bool,
    /// Report rows as an aligned text table.
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Base seed; falls back to the config file, then QVOL_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    /// Estimated versus observed total volume, one row per replicate and method.
    Scatter,
    /// Population volumes by rank.
    RankDistribution,
    /// Total volume as a function of the fitted coefficient.
    Sensitivity,
}

fn parse_continuous_method(s: &str) -> Result<FitMethod, String> {
    match s.parse::<FitMethod>() {
        Ok(m) if !m.is_binned() => Ok(m),
        _ => Err(format!("expected nls or csn-max, got {s:?}")),
    }
}

fn parse_binned_method(s: &str) -> Result<FitMethod, String> {
    match s.parse::<FitMethod>() {
        Ok(m) if m.is_binned() => Ok(m),
        _ => Err(format!("expected chi2 or constrained, got {s:?}")),
    }
}

/// Input problems exit with 1, numerical failures with 2.
enum Failure {
    Input(String),
    Numerical(String),
    /// The reader of stdout went away; not an error worth reporting.
    Closed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let e = match e {
            Error::Io(io) => return io.into(),
            Error::Csv(c) => return c.into(),
            other => other,
        };
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            Failure::Closed
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == io::ErrorKind::BrokenPipe => Failure::Closed,
            _ => Failure::Input(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Serialize)]
struct Report {
    method: Option<FitMethod>,
    c: f64,
    beta: f64,
    delta_c: f64,
    delta_beta: f64,
    cutoff_rank: Option<usize>,
    ks: Option<f64>,
    rows: Vec<ReportRow>,
}

#[derive(Serialize)]
struct SimulationOutput<'a> {
    seed: u64,
    #[serde(flatten)]
    stats: &'a AggregateStats,
}

fn emit_json<T: Serialize>(value: &T) -> CliResult {
    let text = to_string_sig17(value)?;
    writeln!(io::stdout().lock(), "{text}")?;
    Ok(())
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::Writer::from_writer(out)
}

fn emit_report(report: &Report, args: &ReportArgs) -> CliResult {
    if args.table {
        print!("{}", format_table(&report.rows));
        return Ok(());
    }
    if args.csv {
        let mut w = csv_writer(io::stdout().lock());
        for row in &report.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        return Ok(());
    }
    emit_json(report)
}

fn fitted_report(fit: &FitResult, args: &ReportArgs) -> CliResult<Report> {
    if fit.fallback {
        eprintln!("warning: the solver did not converge; reporting its starting point");
    }
    Ok(Report {
        method: Some(fit.method),
        c: fit.params.c,
        beta: fit.params.beta,
        delta_c: fit.errors.delta_c,
        delta_beta: fit.errors.delta_beta,
        cutoff_rank: Some(fit.cutoff_rank),
        ks: Some(fit.ks_distance),
        rows: rows(fit.params, fit.errors, args)?,
    })
}

fn rows(params: ZipfParams, errs: ParamErrors, args: &ReportArgs) -> CliResult<Vec<ReportRow>> {
    let how = if args.quadrature {
        Propagation::Quadrature
    } else {
        Propagation::Absolute
    };
    Ok(report_table_with(params, errs, &args.thresholds, how)?)
}

/// Reads the experiment config and settles the seed: flag, then file, then
/// `QVOL_SEED`, then the default with a notice.
fn load_config(path: Option<&Path>, run: &RunArgs) -> CliResult<ExperimentConfig> {
    let (mut config, file_seed) = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            let file = parse_config(&text)?;
            (file.config, file.seed)
        }
        None => (ExperimentConfig::reference(), None),
    };
    let env_seed = match std::env::var("QVOL_SEED") {
        Ok(raw) => Some(
            raw.trim()
                .parse::<u64>()
                .map_err(|_| Failure::Input(format!("QVOL_SEED={raw:?} is not an unsigned integer")))?,
        ),
        Err(_) => None,
    };
    config.base_seed = match run.seed.or(file_seed).or(env_seed) {
        Some(s) => s,
        None => {
            eprintln!("note: no seed given; using default seed {DEFAULT_SEED}");
            DEFAULT_SEED
        }
    };
    if run.jobs.is_some() {
        config.jobs = run.jobs;
    }
    config.validate()?;
    Ok(config)
}

fn simulate(config: &ExperimentConfig, csv: bool) -> CliResult {
    let stats = run_monte_carlo(config)?;
    if !csv {
        return emit_json(&SimulationOutput {
            seed: config.base_seed,
            stats: &stats,
        });
    }
    let mut w = csv_writer(io::stdout().lock());
    w.write_record([
        "scheme",
        "sample_size",
        "method",
        "replicates",
        "failures",
        "fallbacks",
        "c_mean",
        "c_sd",
        "beta_mean",
        "beta_sd",
        "n_hat_mean",
        "n_hat_sd",
        "v_hat_mean",
        "v_hat_sd",
        "include_v1_fraction",
    ])
    ?;
    for cell in &stats.cells {
        w.write_record([
            cell.scheme.to_string(),
            cell.sample_size.to_string(),
            cell.method.to_string(),
            cell.replicates.to_string(),
            cell.failures.to_string(),
            cell.fallbacks.to_string(),
            cell.c.mean.to_string(),
            cell.c.sd.to_string(),
            cell.beta.mean.to_string(),
            cell.beta.sd.to_string(),
            cell.n_hat.mean.to_string(),
            cell.n_hat.sd.to_string(),
            cell.v_hat.mean.to_string(),
            cell.v_hat.sd.to_string(),
            cell.include_v1_fraction.to_string(),
        ])
        ?;
    }
    w.flush()?;
    Ok(())
}

fn export_plot<W: Write>(kind: PlotKind, config: &ExperimentConfig, out: W) -> CliResult {
    match kind {
        PlotKind::Scatter => write_scatter_csv(&scatter_empirical_vs_estimated(config)?, out)?,
        PlotKind::RankDistribution => write_rank_distribution(&build_population(&config.population)?, out)?,
        PlotKind::Sensitivity => {
            let truth = config.population.params;
            let grid: Vec<f64> = (-10..=10).map(|k| truth.beta + 0.01 * k as f64).collect();
            let sweep = volume_sensitivity_sweep(truth.c, config.population.n_queries, truth.beta, &grid)?;
            let mut w = csv_writer(out);
            w.write_record(["beta_hat", "total_volume"])?;
            for (b, v) in sweep {
                w.write_record([b.to_string(), v.to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::FitContinuous {
            csv_path,
            method,
            report,
        } => {
            let sample = ingest_continuous(&csv_path)?;
            let fit = fit_continuous(&sample, method)?;
            emit_report(&fitted_report(&fit, &report)?, &report)
        }
        Command::FitBinned {
            csv_path,
            method,
            gamma,
            report,
        } => {
            let sample = ingest_binned(&csv_path)?;
            let fit = fit_binned(&sample, method, gamma)?;
            emit_report(&fitted_report(&fit, &report)?, &report)
        }
        Command::Estimate {
            c,
            beta,
            dc,
            dbeta,
            report,
        } => {
            let params = ZipfParams::new(c, beta)?;
            let errs = ParamErrors::new(dc, dbeta)?;
            let out = Report {
                method: None,
                c,
                beta,
                delta_c: dc,
                delta_beta: dbeta,
                cutoff_rank: None,
                ks: None,
                rows: rows(params, errs, &report)?,
            };
            emit_report(&out, &report)
        }
        Command::Simulate { config, run, csv } => simulate(&load_config(config.as_deref(), &run)?, csv),
        Command::ExportPlot {
            kind,
            config,
            run,
            out,
        } => {
            let config = load_config(config.as_deref(), &run)?;
            match out {
                Some(path) => {
                    let file = fs::File::create(&path)
                        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
                    export_plot(kind, &config, io::BufWriter::new(file))
                }
                None => export_plot(kind, &config, io::stdout().lock()),
            }
        }
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            return fail("input", first.trim_start_matches("error: "), 1);
        }
    };
    match run(cli) {
        Ok(()) | Err(Failure::Closed) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => fail("input", &m, 1),
        Err(Failure::Numerical(m)) => fail("numerical", &m, 2),
    }
}
