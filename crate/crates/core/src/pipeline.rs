//! Per-day analysis and multi-day aggregation.
//!
//! [`run_all`] processes every day of a [`RunConfig`] on a bounded thread
//! pool and writes one directory per day plus aggregate tables:
//!
//! ```text
//! out/
//!   run.json
//!   adj_r2_series.csv  coefficient_series.csv  best_model_coefficients.csv
//!   selection_counts.csv  mean_correlations.csv
//!   <date>/
//!     validation.json  episodes.csv  design.csv  fit.json  selection.json
//!     selection_matrix.csv  correlations.csv  day_report.json
//! ```
//!
//! All outputs depend only on the configuration, never on scheduling.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aft::{fit_mle, FitOptions, FitResult, SurvivalData};
use crate::book::{Micros, Ticks};
use crate::covariates::{
    build_design_matrix, pairwise_correlations, standardize, write_design_csv, CovariateParams, DesignMatrix,
    COVARIATE_NAMES,
};
use crate::deviation::{compute_threshold, extract_episodes, spread_samples, write_episodes, DeviationEpisode, Threshold, Window};
use crate::error::{Error, Result};
use crate::ingest::{read_event_file, validate_log, DayLog, ValidationReport, DEFAULT_SESSION_END, DEFAULT_SESSION_START};
use crate::select::{best_subset_per_size, finalize_selection, write_selection_matrix, SelectionReport, DEFAULT_MAX_COVARIATES};
use crate::synth::{generate_synthetic_day, SyntheticConfig};

/// Where a day's events come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DayInput {
    File(PathBuf),
    Synthetic(SyntheticConfig),
}

impl DayInput {
    pub fn load(&self, session_start: Micros, session_end: Micros) -> Result<(DayLog, ValidationReport)> {
        match self {
            DayInput::File(path) => read_event_file(path, session_start, session_end),
            DayInput::Synthetic(cfg) => {
                let day = generate_synthetic_day(cfg)?;
                let report = validate_log(&day);
                Ok((day, report))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Median spread of this day.
    ReferenceDay(DayInput),
    /// Median spread of the first day of the run.
    FirstDay,
    Explicit(Ticks),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPlan {
    pub days: usize,
    /// Day `i` uses this config with seed `run seed + i`.
    pub base: SyntheticConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub synthetic: Option<SyntheticPlan>,
    pub threshold: ThresholdMode,
    pub t0_offset_us: Micros,
    pub td_offset_us: Micros,
    pub session_start: Micros,
    pub session_end: Micros,
    pub covariates: CovariateParams,
    pub max_covariates: usize,
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub seed: u64,
    #[serde(skip)]
    pub jobs: usize,
}

impl RunConfig {
    pub fn synthetic(days: usize, seed: u64, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            inputs: Vec::new(),
            synthetic: Some(SyntheticPlan {
                days,
                base: SyntheticConfig::default(),
            }),
            ..Self::files(Vec::new(), out_dir).with_seed(seed)
        }
    }

    pub fn files(inputs: Vec<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            inputs,
            synthetic: None,
            threshold: ThresholdMode::FirstDay,
            t0_offset_us: 60_000_000,
            td_offset_us: 60_000_000,
            session_start: DEFAULT_SESSION_START,
            session_end: DEFAULT_SESSION_END,
            covariates: CovariateParams::default(),
            max_covariates: DEFAULT_MAX_COVARIATES,
            out_dir: out_dir.into(),
            seed: 0,
            jobs: 1,
        }
    }

    fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        match (&self.synthetic, self.inputs.is_empty()) {
            (Some(_), false) => return bad("both input files and synthetic days given".into()),
            (None, true) => return bad("no input days".into()),
            (Some(p), true) if p.days == 0 => return bad("zero synthetic days".into()),
            _ => {}
        }
        if let ThresholdMode::Explicit(c) = self.threshold {
            Threshold::explicit(c)?;
        }
        if self.t0_offset_us < 0 || self.td_offset_us < 0 {
            return bad("window offsets must be non-negative".into());
        }
        if self.session_end - self.td_offset_us <= self.session_start + self.t0_offset_us {
            return bad("observation window is empty".into());
        }
        let cp = &self.covariates;
        if cp.levels == 0 || cp.ewl.lags == 0 || cp.ewl.spacing_us <= 0 || cp.prev_window_us <= 0 {
            return bad("covariate parameters must be positive".into());
        }
        if !(cp.ewl.weight > 0.0 && cp.ewl.weight <= 1.0) {
            return bad(format!("EWL weight {} outside (0, 1]", cp.ewl.weight));
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        Ok(())
    }

    /// Day inputs in processing order.
    pub fn days(&self) -> Vec<DayInput> {
        match &self.synthetic {
            Some(plan) => (0..plan.days as u64)
                .map(|i| {
                    let seed = self.seed.wrapping_add(i);
                    DayInput::Synthetic(SyntheticConfig {
                        seed,
                        date: format!("synth-{seed:04}"),
                        session_start: self.session_start,
                        session_end: self.session_end,
                        ..plan.base.clone()
                    })
                })
                .collect(),
            None => self.inputs.iter().cloned().map(DayInput::File).collect(),
        }
    }

    pub fn window(&self, day: &DayLog) -> Window {
        Window::with_offsets(day, self.t0_offset_us, self.td_offset_us)
    }

    pub fn resolve_threshold(&self) -> Result<Threshold> {
        let reference = match &self.threshold {
            ThresholdMode::Explicit(c) => return Threshold::explicit(*c),
            ThresholdMode::ReferenceDay(input) => input.clone(),
            ThresholdMode::FirstDay => self.days().into_iter().next().ok_or(Error::InvalidConfig("no input days".into()))?,
        };
        let (day, _) = reference.load(self.session_start, self.session_end)?;
        compute_threshold(&spread_samples(&day)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub date: String,
    pub events: u64,
    pub threshold: Ticks,
    pub episodes: usize,
    pub censored: usize,
    /// Episodes without a two-sided book at the exceedance.
    pub dropped_rows: usize,
    /// Zero-variance covariates left out of every fit.
    pub degenerate: Vec<String>,
    /// Covariates in the full model, in order after the intercept.
    pub full_columns: Vec<String>,
    /// Coefficients on the standardized scale.
    pub full_fit: Option<FitResult>,
    pub selection: Option<SelectionReport>,
    /// Pearson correlations of the raw covariates, row-major.
    pub correlations: Option<Vec<Vec<f64>>>,
    /// Why a stage produced no output.
    pub notes: Vec<String>,
}

impl DayReport {
    /// Full-model coefficient of a covariate, if it was fitted.
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        let fit = self.full_fit.as_ref()?;
        let k = self.full_columns.iter().position(|c| c == name)?;
        fit.beta.get(k + 1).copied()
    }
}

/// Episodes and the raw design matrix for one day.
pub fn extract_day(day: &DayLog, threshold: Threshold, cfg: &RunConfig) -> Result<(Vec<DeviationEpisode>, DesignMatrix)> {
    let episodes = extract_episodes(day, threshold, cfg.window(day))?;
    let design = build_design_matrix(day, &episodes, cfg.covariates)?;
    Ok((episodes, design))
}

/// Fits the censored AFT model on every non-degenerate column of a
/// standardized design.
pub fn fit_full_model(design: &DesignMatrix, opts: FitOptions) -> Result<(Vec<usize>, FitResult)> {
    let cols = design.active_columns();
    let data = SurvivalData::from_design(design, &cols)?;
    Ok((cols.clone(), fit_mle(&data, None, opts)?))
}

/// Best-subset search on the uncensored rows followed by censored refits.
pub fn select_model(design: &DesignMatrix, limit: usize, opts: FitOptions) -> Result<SelectionReport> {
    let cols = design.active_columns();
    let rows: Vec<usize> = (0..design.rows()).filter(|&i| !design.censored[i]).collect();
    let x = design.x.select_columns(&cols).select_rows(&rows);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| design.response[i]));
    let search = best_subset_per_size(&x, &y, limit)?;
    finalize_selection(&search, &cols, design, opts)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_matrix_csv(path: &Path, names: &[String], m: &[Vec<f64>]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "covariate,{}", names.join(","))?;
    for (name, row) in names.iter().zip(m) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{name},{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn names() -> Vec<String> {
    COVARIATE_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Runs every stage for one day and writes its artifacts under `out`.
///
/// Stages that cannot run on the day's data (no episodes, too few rows)
/// leave their outputs empty and add a note rather than failing.
pub fn run_daily_pipeline(
    day: &DayLog,
    validation: &ValidationReport,
    threshold: Threshold,
    cfg: &RunConfig,
    out: &Path,
) -> Result<DayReport> {
    fs::create_dir_all(out)?;
    write_json(&out.join("validation.json"), validation)?;

    let (episodes, design) = extract_day(day, threshold, cfg)?;
    let mut w = create(&out.join("episodes.csv"))?;
    write_episodes(&episodes, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("design.csv"))?;
    write_design_csv(&design, &mut w)?;
    w.flush()?;

    let mut report = DayReport {
        date: day.date.clone(),
        events: day.events.len() as u64,
        threshold: threshold.c,
        episodes: episodes.len(),
        censored: episodes.iter().filter(|e| e.censored).count(),
        dropped_rows: design.dropped_rows,
        ..Default::default()
    };

    let opts = FitOptions::default();
    match standardize(&design) {
        Err(e) => report.notes.push(format!("no fit: {e}")),
        Ok(std) => {
            report.degenerate = (0..std.x.ncols())
                .filter(|&j| std.degenerate[j])
                .map(|j| std.names[j].clone())
                .collect();
            match fit_full_model(&std, opts) {
                Ok((cols, fit)) => {
                    report.full_columns = cols.iter().map(|&j| std.names[j].clone()).collect();
                    report.full_fit = Some(fit);
                }
                Err(e) => report.notes.push(format!("no full fit: {e}")),
            }
            match select_model(&std, cfg.max_covariates, opts) {
                Ok(sel) => report.selection = Some(sel),
                Err(e) => report.notes.push(format!("no selection: {e}")),
            }
            if let Ok(r) = pairwise_correlations(&design) {
                report.correlations = Some(r.row_iter().map(|row| row.iter().copied().collect()).collect());
            }
        }
    }

    write_json(&out.join("fit.json"), &report.full_fit)?;
    write_json(&out.join("selection.json"), &report.selection)?;
    let mut w = create(&out.join("selection_matrix.csv"))?;
    match &report.selection {
        Some(sel) => write_selection_matrix(sel, &names(), &mut w)?,
        None => writeln!(w, "size,{}", names().join(","))?,
    }
    w.flush()?;
    write_matrix_csv(
        &out.join("correlations.csv"),
        &names(),
        report.correlations.as_deref().unwrap_or(&[]),
    )?;
    write_json(&out.join("day_report.json"), &report)?;
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the multi-day tables into `out`, folding reports in the given
/// order.
pub fn aggregate_days(reports: &[DayReport], out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let names = names();

    let mut w = create(&out.join("adj_r2_series.csv"))?;
    writeln!(w, "date,episodes,censored,full_adj_r2,best_adj_r2,best_size")?;
    for r in reports {
        let best = r.selection.as_ref().and_then(|s| s.best());
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.date,
            r.episodes,
            r.censored,
            opt(r.full_fit.as_ref().and_then(|f| f.adj_r2)),
            opt(best.and_then(|b| b.adj_r2())),
            best.map(|b| b.size.to_string()).unwrap_or_default(),
        )?;
    }
    w.flush()?;

    let mut w = create(&out.join("coefficient_series.csv"))?;
    writeln!(w, "date,intercept,{}", names.join(","))?;
    for r in reports {
        let intercept = r.full_fit.as_ref().map(|f| f.beta[0]);
        let cells: Vec<String> = names.iter().map(|n| opt(r.coefficient(n))).collect();
        writeln!(w, "{},{},{}", r.date, opt(intercept), cells.join(","))?;
    }
    w.flush()?;

    let mut w = create(&out.join("best_model_coefficients.csv"))?;
    writeln!(w, "date,size,overall_best,covariate,coefficient,std_error,significant")?;
    let mut counts = vec![0usize; names.len()];
    for r in reports {
        let Some(sel) = &r.selection else { continue };
        for s in &sel.per_size {
            let is_best = sel.overall_best == Some(s.size);
            for (k, name) in s.mask.iter().enumerate() {
                let se = s.fit.std_errors.as_ref().map(|se| se[k + 1]);
                let sig = s.fit.significant.get(k).copied().unwrap_or(false);
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    r.date,
                    s.size,
                    u8::from(is_best),
                    name,
                    s.fit.beta[k + 1],
                    opt(se),
                    u8::from(sig)
                )?;
            }
        }
        if let Some(best) = sel.best() {
            for name in &best.mask {
                if let Some(j) = names.iter().position(|n| n == name) {
                    counts[j] += 1;
                }
            }
        }
    }
    w.flush()?;

    let mut w = create(&out.join("selection_counts.csv"))?;
    writeln!(w, "covariate,count")?;
    for (name, c) in names.iter().zip(&counts) {
        writeln!(w, "{name},{c}")?;
    }
    w.flush()?;

    let with_corr: Vec<&Vec<Vec<f64>>> = reports.iter().filter_map(|r| r.correlations.as_ref()).collect();
    let mean: Vec<Vec<f64>> = if with_corr.is_empty() {
        Vec::new()
    } else {
        let p = names.len();
        (0..p)
            .map(|a| (0..p).map(|b| with_corr.iter().map(|m| m[a][b]).sum::<f64>() / with_corr.len() as f64).collect())
            .collect()
    };
    write_matrix_csv(&out.join("mean_correlations.csv"), &names, &mean)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub threshold: Ticks,
    pub days: Vec<String>,
    /// Some day had unknown ids, crossings or malformed lines.
    pub validation_findings: bool,
}

/// Every day of the run, then the aggregate tables.
pub fn run_all(cfg: &RunConfig) -> Result<(RunSummary, Vec<DayReport>)> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let threshold = cfg.resolve_threshold()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let days = cfg.days();
    let results: Vec<Result<(DayReport, bool)>> = pool.install(|| {
        days.par_iter()
            .map(|input| {
                let (day, validation) = input.load(cfg.session_start, cfg.session_end)?;
                let dir = cfg.out_dir.join(&day.date);
                let report = run_daily_pipeline(&day, &validation, threshold, cfg, &dir)?;
                Ok((report, validation.has_findings()))
            })
            .collect()
    });
    let mut reports = Vec::with_capacity(results.len());
    let mut findings = false;
    for r in results {
        let (report, f) = r?;
        findings |= f;
        reports.push(report);
    }
    aggregate_days(&reports, &cfg.out_dir)?;
    let summary = RunSummary {
        threshold: threshold.c,
        days: reports.iter().map(|r| r.date.clone()).collect(),
        validation_findings: findings,
    };
    write_json(&cfg.out_dir.join("run.json"), &summary)?;
    Ok((summary, reports))
}

/// Reads the `day_report.json` files below `dir`, ordered by date.
pub fn load_day_reports(dir: &Path) -> Result<Vec<DayReport>> {
    let mut reports = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path().join("day_report.json");
        if path.is_file() {
            reports.push(serde_json::from_reader::<_, DayReport>(fs::File::open(path)?)?);
        }
    }
    reports.sort_by(|a, b| a.date.cmp(&b.date));
    Ok(reports)
}
