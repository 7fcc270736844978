//! Command definitions and their implementations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use tiltfit_core::inference::{confidence_interval_given, lr_test_given};
use tiltfit_core::model::{linear_regression_model, mean_model, SemModel};
use tiltfit_core::optimizer::{fit_pet_blockwise, fit_with_kind, FitOptions};
use tiltfit_core::tuning::{default_grid, select_gamma_blockwise, select_gamma_with, TuningRule};
use tiltfit_core::{Dataset, DualKind, Error as CoreError, Hypothesis, ModelRef, PenaltyKind, PenaltySpec, PetFit};
use tiltfit_sim::runner::coverage_study;
use tiltfit_sim::{run_experiment, ExperimentConfig, MetricsTable};

use crate::archive::ResultsArchive;
use crate::boston::{report_tables, run_boston, BostonOptions, HOUSING_RESPONSE};
use crate::config::ConfigFile;
use crate::error::{CliError, Result};
use crate::ingest::{ingest_csv, read_numeric_csv};
use crate::render::{Cell, Format, Table};

#[derive(Debug, Parser)]
#[command(name = "tiltfit", version, about = "Penalized exponentially tilted estimation for moment models")]
pub struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a penalized model to a CSV file.
    Fit(FitArgs),
    /// Likelihood-ratio test that one coefficient equals a value.
    Test {
        #[command(flatten)]
        fit: FitArgs,
        /// Constraint of the form `j=2` (1-based coefficient index).
        #[arg(long)]
        contrast: String,
        /// Hypothesized value of the coefficient.
        #[arg(long, default_value_t = 0.0)]
        value: f64,
    },
    /// Likelihood-ratio confidence interval for one coefficient.
    Ci {
        #[command(flatten)]
        fit: FitArgs,
        /// 1-based coefficient index.
        #[arg(long)]
        coef: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Monte Carlo study described by a config file.
    Simulate(ConfigArgs),
    /// Confidence-interval coverage study described by a config file.
    Coverage(ConfigArgs),
    /// Housing-price analysis with pairwise interactions.
    Boston {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = HOUSING_RESPONSE)]
        response: String,
        #[arg(long, default_value_t = 40)]
        grid_len: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = "markdown")]
        format: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ModelKind {
    /// Every column is a coordinate of the mean.
    Mean,
    /// Columns `(x_1..x_p, y)`.
    Linreg,
    /// Columns `(z_1..z_p, u_1..u_p, y)`.
    Iv,
    /// `2q` indicator columns of a `q`-latent structural model.
    Sem,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Response column for regressions; defaults to the last column.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, default_value = "scad")]
    pub penalty: String,
    /// Penalty level, or `auto` to tune it.
    #[arg(long, default_value = "auto")]
    pub gamma: String,
    #[arg(long, default_value = "abic")]
    pub criterion: String,
    #[arg(long, default_value_t = 40)]
    pub grid_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "markdown")]
    pub format: String,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; overrides the config file and `TILTFIT_THREADS`.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Run one command, returning the archive and where it should be written.
pub fn execute(command: &Command) -> Result<(ResultsArchive, Option<PathBuf>, Format)> {
    match command {
        Command::Fit(a) => Ok((fit_command(a)?, a.out.clone(), a.format.parse()?)),
        Command::Test { fit, contrast, value } => Ok((test_command(fit, contrast, *value)?, fit.out.clone(), fit.format.parse()?)),
        Command::Ci { fit, coef, alpha } => Ok((ci_command(fit, *coef, *alpha)?, fit.out.clone(), fit.format.parse()?)),
        Command::Simulate(a) => simulate_command(a),
        Command::Coverage(a) => coverage_command(a),
        Command::Boston { input, out, response, grid_len, alpha, format } => {
            let format: Format = format.parse()?;
            let opts = BostonOptions { grid_len: *grid_len, alpha: *alpha, ..BostonOptions::default() };
            Ok((boston_command(input, response, &opts)?, out.clone(), format))
        }
    }
}

/// Execute, write outputs and print the report. Returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let outcome = execute(&cli.command).and_then(|(archive, out, format)| {
        if let Some(dir) = &out {
            for path in archive.write(dir, format)? {
                info!("wrote {}", path.display());
            }
        }
        print!("{}", archive.render(if format == Format::Csv { Format::Text } else { format }));
        Ok(())
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Prepared {
    model: Option<ModelRef>,
    sem: Option<SemModel>,
    data: Dataset,
    labels: Vec<String>,
}

impl Prepared {
    fn n_params(&self) -> usize {
        match (&self.model, &self.sem) {
            (Some(m), _) => m.n_params(),
            (None, Some(s)) => tiltfit_core::MomentModel::n_params(s),
            _ => unreachable!("one model is always set"),
        }
    }
}

fn prepare(a: &FitArgs) -> Result<Prepared> {
    let raw = read_numeric_csv(&a.input)?;
    let names = raw.column_names().map(<[String]>::to_vec).unwrap_or_default();
    let dim = raw.dim();
    match a.model {
        ModelKind::Mean => Ok(Prepared { model: Some(mean_model(dim)?), sem: None, data: raw, labels: names }),
        ModelKind::Sem => {
            if dim % 2 != 0 || dim < 4 {
                return Err(CliError::Data(format!("a structural model needs an even number (>= 4) of columns, got {dim}")));
            }
            let sem = SemModel::new(dim / 2)?;
            let labels = (0..tiltfit_core::MomentModel::n_params(&sem)).map(|j| format!("theta{}", j + 1)).collect();
            Ok(Prepared { model: None, sem: Some(sem), data: raw, labels })
        }
        ModelKind::Linreg | ModelKind::Iv => {
            let response = a.response.clone().unwrap_or_else(|| names[dim - 1].clone());
            let ing = ingest_csv(&a.input, &response, false)?;
            let k = ing.covariates.ncols();
            let instrumented = a.model == ModelKind::Iv;
            if instrumented && k % 2 != 0 {
                return Err(CliError::Data(format!("instrumented regression needs 2p covariate columns, got {k}")));
            }
            let p = if instrumented { k / 2 } else { k };
            let data = ing.regression_dataset(&ing.covariates)?;
            Ok(Prepared {
                model: Some(linear_regression_model(p, instrumented)?),
                sem: None,
                data,
                labels: ing.labels[..p].to_vec(),
            })
        }
    }
}

fn best_effort(r: tiltfit_core::Result<PetFit>) -> tiltfit_core::Result<PetFit> {
    match r {
        Err(CoreError::Stalled { best }) => Ok(*best),
        other => other,
    }
}

fn penalized_fit(a: &FitArgs, prep: &Prepared) -> Result<PetFit> {
    let kind: PenaltyKind = a.penalty.parse().map_err(|e: CoreError| CliError::Config(e.to_string()))?;
    let family = PenaltySpec::new(kind, 0.0).map_err(|e| CliError::Config(e.to_string()))?;
    let rule: TuningRule = a.criterion.parse().map_err(|e: CoreError| CliError::Config(e.to_string()))?;
    let opts = FitOptions::default();
    if a.gamma == "auto" {
        if a.grid_len == 0 {
            return Err(CliError::Config("grid_len must be at least 1".into()));
        }
        let grid = default_grid(prep.data.n(), prep.n_params(), a.grid_len);
        let path = match (&prep.model, &prep.sem) {
            (Some(m), _) => select_gamma_with(m.as_ref(), &prep.data, &family, &opts, &grid, rule, DualKind::ExponentialTilting, true)?,
            (None, Some(s)) => {
                let TuningRule::Info(c) = rule else {
                    return Err(CliError::Config("GCV applies to regressions only".into()));
                };
                select_gamma_blockwise(s, &prep.data, &family, &opts, &grid, c)?
            }
            _ => unreachable!("one model is always set"),
        };
        return Ok(path.chosen_fit().clone());
    }
    let gamma: f64 = a
        .gamma
        .parse()
        .ok()
        .filter(|g: &f64| *g >= 0.0 && g.is_finite())
        .ok_or_else(|| CliError::Config(format!("gamma must be 'auto' or a non-negative number, got '{}'", a.gamma)))?;
    let penalty = family.with_gamma(gamma);
    let fit = match (&prep.model, &prep.sem) {
        (Some(m), _) => fit_with_kind(m.as_ref(), &prep.data, &penalty, &opts, DualKind::ExponentialTilting),
        (None, Some(s)) => fit_pet_blockwise(s, &prep.data, &penalty, &opts),
        _ => unreachable!("one model is always set"),
    };
    Ok(best_effort(fit)?)
}

#[derive(Serialize)]
struct FitRecord<'a> {
    gamma: f64,
    theta: &'a [f64],
    objective: f64,
    converged: bool,
    adjusted: bool,
}

fn fit_record(fit: &PetFit) -> FitRecord<'_> {
    FitRecord {
        gamma: fit.gamma,
        theta: &fit.theta,
        objective: fit.objective_unpenalized,
        converged: fit.converged,
        adjusted: fit.adjusted,
    }
}

fn estimates_table(fit: &PetFit, labels: &[String]) -> Table {
    let mut t = Table::new("estimates", format!("Estimates (gamma = {:.4})", fit.gamma), vec!["term".into(), "estimate".into(), "selected".into()]);
    for (j, v) in fit.theta.iter().enumerate() {
        let label = labels.get(j).cloned().unwrap_or_else(|| format!("theta{}", j + 1));
        t.push(vec![Cell::text(label), Cell::num(*v), Cell::text(fit.active.contains(j).to_string())]);
    }
    t
}

pub fn fit_command(a: &FitArgs) -> Result<ResultsArchive> {
    let prep = prepare(a)?;
    let fit = penalized_fit(a, &prep)?;
    let mut archive = ResultsArchive::new("fit", a)?;
    archive.tables.push(estimates_table(&fit, &prep.labels));
    archive.record(&fit_record(&fit))?;
    Ok(archive)
}

/// 0-based coordinate from a `j=<index>` contrast.
pub fn parse_contrast(s: &str) -> Result<usize> {
    let bad = || CliError::Config(format!("contrast must look like 'j=2' (1-based index), got '{s}'"));
    let (key, value) = s.split_once('=').ok_or_else(bad)?;
    if key.trim() != "j" {
        return Err(bad());
    }
    let j: usize = value.trim().parse().map_err(|_| bad())?;
    j.checked_sub(1).ok_or_else(bad)
}

fn linear_model(prep: &Prepared) -> Result<&ModelRef> {
    prep.model
        .as_ref()
        .ok_or_else(|| CliError::Config("tests and intervals are available for mean and regression models".into()))
}

pub fn test_command(a: &FitArgs, contrast: &str, value: f64) -> Result<ResultsArchive> {
    let j = parse_contrast(contrast)?;
    let prep = prepare(a)?;
    let model = linear_model(&prep)?;
    let fit = penalized_fit(a, &prep)?;
    let hyp = Hypothesis::coordinate(j, model.n_params(), value).map_err(|e| CliError::Config(e.to_string()))?;
    let res = lr_test_given(model.as_ref(), &prep.data, &fit.penalty, &hyp, &FitOptions::default(), fit.clone())?;
    #[derive(Serialize)]
    struct Config<'a> {
        fit: &'a FitArgs,
        contrast: &'a str,
        value: f64,
    }
    let mut archive = ResultsArchive::new("test", &Config { fit: a, contrast, value })?;
    let mut t = Table::new("test", format!("Likelihood-ratio test of theta{} = {value}", j + 1), vec!["statistic".into(), "df".into(), "p value".into()]);
    t.push(vec![Cell::num(res.statistic), Cell::num(res.df as f64), Cell::num(res.p_value)]);
    archive.tables.push(t);
    archive.tables.push(estimates_table(&fit, &prep.labels));
    archive.record(&fit_record(&fit))?;
    Ok(archive)
}

pub fn ci_command(a: &FitArgs, coef: usize, alpha: f64) -> Result<ResultsArchive> {
    let j = coef.checked_sub(1).ok_or_else(|| CliError::Config("coef is a 1-based index".into()))?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let prep = prepare(a)?;
    let model = linear_model(&prep)?;
    let fit = penalized_fit(a, &prep)?;
    let hyp = Hypothesis::coordinate(j, model.n_params(), fit.theta.get(j).copied().unwrap_or(0.0))
        .map_err(|e| CliError::Config(e.to_string()))?;
    let ci = confidence_interval_given(model.as_ref(), &prep.data, &fit.penalty, &hyp, alpha, &FitOptions::default(), &fit)?;
    #[derive(Serialize)]
    struct Config<'a> {
        fit: &'a FitArgs,
        coef: usize,
        alpha: f64,
    }
    let mut archive = ResultsArchive::new("ci", &Config { fit: a, coef, alpha })?;
    let mut t = Table::new(
        "interval",
        format!("{:.0}% likelihood-ratio interval for theta{coef}", 100.0 * (1.0 - alpha)),
        vec!["estimate".into(), "lower".into(), "upper".into()],
    );
    t.push(vec![Cell::num(ci.estimate), Cell::num(ci.lower), Cell::num(ci.upper)]);
    archive.tables.push(t);
    archive.record(&ci)?;
    Ok(archive)
}

fn load_config(a: &ConfigArgs) -> Result<(ConfigFile, ExperimentConfig, Option<PathBuf>, Format)> {
    let file = ConfigFile::load(&a.config)?;
    let mut cfg = file.experiment_config()?;
    if a.threads.is_some() {
        cfg.threads = a.threads;
        cfg.validate()?;
    }
    let out = a.out.clone().or_else(|| file.output.dir.clone());
    let format = file.format()?;
    Ok((file, cfg, out, format))
}

/// Coefficients reported per method: the nonzero true coefficients among the
/// penalized ones, at most three.
pub fn reported_coordinates(table: &MetricsTable) -> Vec<usize> {
    table.selection.iter().copied().filter(|&j| table.truth[j] != 0.0).take(3).collect()
}

/// One row per method: RMS, SD and bias on the reported coefficients, then
/// the selection summaries.
pub fn metrics_table(table: &MetricsTable) -> Table {
    let coords = reported_coordinates(table);
    let mut columns = vec!["method".to_string()];
    for stat in ["RMS", "SD", "Bias"] {
        columns.extend(coords.iter().map(|j| format!("{stat}(theta{})", j + 1)));
    }
    columns.extend(["T", "F", "AMS", "PCIM", "successes", "failures", "converged", "adjusted"].map(String::from));
    let mut t = Table::new("metrics", format!("{:?} (n = {}, p = {}, {} reps)", table.config.experiment, table.config.n, table.config.p, table.config.reps), columns);
    for m in &table.methods {
        let mut row = vec![Cell::text(m.method.label())];
        for v in [&m.rms, &m.sd, &m.bias] {
            row.extend(coords.iter().map(|&j| Cell::num(v[j])));
        }
        row.extend([m.t, m.f, m.ams, m.pcim].map(Cell::num));
        row.extend([m.successes, m.failures, m.converged, m.adjusted].map(|c| Cell::num(c as f64)));
        t.push(row);
    }
    t
}

fn simulate_command(a: &ConfigArgs) -> Result<(ResultsArchive, Option<PathBuf>, Format)> {
    let (file, cfg, out, format) = load_config(a)?;
    let table = run_experiment(&cfg)?;
    let mut archive = ResultsArchive::new("simulate", &file)?;
    archive.tables.push(metrics_table(&table));
    archive.record(&table)?;
    Ok((archive, out, format))
}

fn coverage_command(a: &ConfigArgs) -> Result<(ResultsArchive, Option<PathBuf>, Format)> {
    let (file, cfg, out, format) = load_config(a)?;
    let cov = coverage_study(&cfg, &file.coverage.theta2, file.coverage.alpha)?;
    let mut archive = ResultsArchive::new("coverage", &file)?;
    let mut t = Table::new(
        "coverage",
        format!("Non-coverage of theta2 = {} at level {}", cov.reference, 1.0 - cov.alpha),
        ["theta2", "non-coverage %", "successes", "failures"].map(String::from).to_vec(),
    );
    for r in &cov.rows {
        t.push(vec![Cell::num(r.theta2), Cell::num(100.0 * r.non_coverage), Cell::num(r.successes as f64), Cell::num(r.failures as f64)]);
    }
    archive.tables.push(t);
    archive.record(&cov)?;
    Ok((archive, out, format))
}

pub fn boston_command(input: &Path, response: &str, opts: &BostonOptions) -> Result<ResultsArchive> {
    let data = ingest_csv(input, response, true)?;
    let report = run_boston(&data, opts)?;
    #[derive(Serialize)]
    struct Config<'a> {
        input: &'a Path,
        response: &'a str,
        options: &'a BostonOptions,
    }
    let mut archive = ResultsArchive::new("boston", &Config { input, response, options: opts })?;
    archive.tables.extend(report_tables(&report));
    archive.record(&report)?;
    Ok(archive)
}
