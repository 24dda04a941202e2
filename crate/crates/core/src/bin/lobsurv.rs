//! Command-line front end. Exit status: 0 on success, 2 when validation
//! found problems in the input, 1 on any error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lobsurv::aft::FitOptions;
use lobsurv::covariates::{read_design_csv, standardize, write_design_csv, CovariateParams, EwlParams};
use lobsurv::deviation::{write_episodes, Threshold};
use lobsurv::ingest::{read_event_file, write_event_log, DEFAULT_SESSION_END, DEFAULT_SESSION_START};
use lobsurv::pipeline::{
    aggregate_days, extract_day, fit_full_model, load_day_reports, run_all, select_model, DayInput, RunConfig,
    SyntheticPlan, ThresholdMode,
};
use lobsurv::select::{write_selection_matrix, DEFAULT_MAX_COVARIATES};
use lobsurv::synth::{generate_synthetic_day, SyntheticConfig};

#[derive(Parser)]
#[command(name = "lobsurv", version, about = "Spread deviation durations from limit order book events")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and replay an event file, printing a validation report.
    IngestValidate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        session: Session,
    },
    /// Write a synthetic trading day as an event file.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        event_count: Option<usize>,
        /// JSON file with generator settings; `--seed` still applies.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Extract deviation episodes and the covariate design for one day.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        threshold: ThresholdArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        covariates: CovariateArgs,
        #[command(flatten)]
        session: Session,
    },
    /// Fit the censored AFT model on every covariate of a design file.
    Fit {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best-subset selection on a design file.
    Select {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_COVARIATES)]
        max_covariates: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Size-by-covariate absent/present/significant table.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Rebuild the multi-day tables from the day reports under a run directory.
    Report {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Full pipeline over several days.
    RunAll {
        /// Event files, one per day.
        #[arg(long, num_args = 1.., conflicts_with = "synthetic_days")]
        inputs: Vec<PathBuf>,
        /// Generate this many synthetic days instead.
        #[arg(long)]
        synthetic_days: Option<usize>,
        #[arg(long)]
        event_count: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        threshold: ThresholdArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_COVARIATES)]
        max_covariates: usize,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        covariates: CovariateArgs,
        #[command(flatten)]
        session: Session,
    },
}

#[derive(Args)]
struct Session {
    #[arg(long, default_value_t = DEFAULT_SESSION_START / 1000)]
    session_start_ms: i64,
    #[arg(long, default_value_t = DEFAULT_SESSION_END / 1000)]
    session_end_ms: i64,
}

impl Session {
    fn bounds(&self) -> (i64, i64) {
        (self.session_start_ms * 1000, self.session_end_ms * 1000)
    }
}

#[derive(Args)]
struct ThresholdArgs {
    /// Explicit threshold in ticks.
    #[arg(long, conflicts_with = "reference_day")]
    threshold: Option<i64>,
    /// Event file whose median spread sets the threshold.
    #[arg(long)]
    reference_day: Option<PathBuf>,
}

impl ThresholdArgs {
    fn mode(&self) -> Option<ThresholdMode> {
        match (&self.threshold, &self.reference_day) {
            (Some(c), _) => Some(ThresholdMode::Explicit(*c)),
            (None, Some(p)) => Some(ThresholdMode::ReferenceDay(DayInput::File(p.clone()))),
            (None, None) => None,
        }
    }
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long, default_value_t = 60_000)]
    t0_offset_ms: i64,
    #[arg(long, default_value_t = 60_000)]
    td_offset_ms: i64,
}

#[derive(Args)]
struct CovariateArgs {
    #[arg(long, default_value_t = 5)]
    levels: usize,
    #[arg(long, default_value_t = 0.75)]
    ewl_weight: f64,
    #[arg(long, default_value_t = 5)]
    ewl_lags: u32,
    #[arg(long, default_value_t = 1000)]
    ewl_spacing_ms: i64,
    #[arg(long, default_value_t = 1000)]
    prev_window_ms: i64,
}

impl CovariateArgs {
    fn params(&self) -> CovariateParams {
        CovariateParams {
            levels: self.levels,
            ewl: EwlParams {
                weight: self.ewl_weight,
                lags: self.ewl_lags,
                spacing_us: self.ewl_spacing_ms * 1000,
            },
            prev_window_us: self.prev_window_ms * 1000,
        }
    }
}

fn run_config(
    inputs: Vec<PathBuf>,
    out_dir: &Path,
    threshold: &ThresholdArgs,
    window: &WindowArgs,
    covariates: &CovariateArgs,
    session: &Session,
) -> RunConfig {
    let mut cfg = RunConfig::files(inputs, out_dir);
    if let Some(mode) = threshold.mode() {
        cfg.threshold = mode;
    }
    cfg.t0_offset_us = window.t0_offset_ms * 1000;
    cfg.td_offset_us = window.td_offset_ms * 1000;
    cfg.covariates = covariates.params();
    (cfg.session_start, cfg.session_end) = session.bounds();
    cfg
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Returns whether validation findings were reported.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::IngestValidate { input, session } => {
            let (start, end) = session.bounds();
            let (_, report) = read_event_file(&input, start, end)?;
            write_json(None, &report)?;
            for (line, reason) in &report.malformed {
                eprintln!("line {line}: {reason}");
            }
            Ok(report.has_findings())
        }
        Command::Synth {
            seed,
            out,
            event_count,
            config,
        } => {
            let mut cfg = match config {
                Some(p) => serde_json::from_reader(BufReader::new(File::open(&p)?))?,
                None => SyntheticConfig::with_seed(seed),
            };
            cfg.seed = seed;
            if let Some(n) = event_count {
                cfg.event_count = n;
            }
            let day = generate_synthetic_day(&cfg)?;
            let mut w = create(&out)?;
            write_event_log(&day, &mut w)?;
            w.flush()?;
            Ok(false)
        }
        Command::Extract {
            input,
            threshold,
            out_dir,
            window,
            covariates,
            session,
        } => {
            let mut cfg = run_config(vec![input.clone()], &out_dir, &threshold, &window, &covariates, &session);
            if threshold.mode().is_none() {
                cfg.threshold = ThresholdMode::ReferenceDay(DayInput::File(input.clone()));
            }
            cfg.validate()?;
            let t: Threshold = cfg.resolve_threshold()?;
            let (day, report) = read_event_file(&input, cfg.session_start, cfg.session_end)?;
            let (episodes, design) = extract_day(&day, t, &cfg)?;
            std::fs::create_dir_all(&out_dir)?;
            let mut w = create(&out_dir.join("episodes.csv"))?;
            write_episodes(&episodes, &mut w)?;
            w.flush()?;
            let mut w = create(&out_dir.join("design.csv"))?;
            write_design_csv(&design, &mut w)?;
            w.flush()?;
            eprintln!(
                "threshold {} ticks, {} episodes ({} censored)",
                t.c,
                episodes.len(),
                episodes.iter().filter(|e| e.censored).count()
            );
            Ok(report.has_findings())
        }
        Command::Fit { design, out } => {
            let m = read_design_csv(BufReader::new(File::open(&design)?))?;
            let std = standardize(&m)?;
            let (cols, fit) = fit_full_model(&std, FitOptions::default())?;
            #[derive(Serialize)]
            struct Out<'a> {
                columns: Vec<&'a str>,
                #[serde(flatten)]
                fit: lobsurv::aft::FitResult,
            }
            let columns = cols.iter().map(|&j| std.names[j].as_str()).collect();
            write_json(out.as_deref(), &Out { columns, fit })?;
            Ok(false)
        }
        Command::Select {
            design,
            max_covariates,
            out,
            matrix_out,
        } => {
            let m = read_design_csv(BufReader::new(File::open(&design)?))?;
            let std = standardize(&m)?;
            let report = select_model(&std, max_covariates, FitOptions::default())?;
            write_json(out.as_deref(), &report)?;
            if let Some(p) = matrix_out {
                let mut w = create(&p)?;
                write_selection_matrix(&report, &std.names, &mut w)?;
                w.flush()?;
            }
            Ok(false)
        }
        Command::Report { out_dir } => {
            let reports = load_day_reports(&out_dir)?;
            anyhow::ensure!(!reports.is_empty(), "no day reports under {}", out_dir.display());
            aggregate_days(&reports, &out_dir)?;
            eprintln!("aggregated {} days", reports.len());
            Ok(false)
        }
        Command::RunAll {
            inputs,
            synthetic_days,
            event_count,
            seed,
            threshold,
            out_dir,
            jobs,
            max_covariates,
            window,
            covariates,
            session,
        } => {
            let mut cfg = run_config(inputs, &out_dir, &threshold, &window, &covariates, &session);
            cfg.seed = seed;
            cfg.jobs = jobs;
            cfg.max_covariates = max_covariates;
            if let Some(days) = synthetic_days {
                let mut base = SyntheticConfig::default();
                if let Some(n) = event_count {
                    base.event_count = n;
                }
                cfg.synthetic = Some(SyntheticPlan { days, base });
            }
            let (summary, _) = run_all(&cfg)?;
            eprintln!(
                "{} days, threshold {} ticks, outputs in {}",
                summary.days.len(),
                summary.threshold,
                out_dir.display()
            );
            Ok(summary.validation_findings)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e:#}");
            ExitCode::from(1)
        }
    }
}
