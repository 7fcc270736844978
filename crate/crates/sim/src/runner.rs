//! Replication engine: deterministic fan-out over replications and ordered reduction.

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tiltfit_core::baselines::{covariance_inverse, hard_threshold, mean_estimator, quadratic_loss, soft_threshold};
use tiltfit_core::dual::DualKind;
use tiltfit_core::inference::{chisq_quantile, lr_test, Hypothesis};
use tiltfit_core::model::{linear_regression_model, mean_model, restrict, SemModel};
use tiltfit_core::optimizer::{FitOptions, InitStrategy};
use tiltfit_core::tuning::{cv_threshold, default_grid, log_grid, select_gamma_blockwise, select_gamma_with, ThresholdKind, TuningRule};
use tiltfit_core::{ActiveSet, Dataset, ModelRef};

use crate::config::{Experiment, ExperimentConfig, Method};
use crate::error::{Result, SimError};
use crate::generators::{exp1_truth, gen_exp1_at, gen_exp2, gen_exp3};
use crate::metrics::{aggregate, is_zero, MetricsTable, Outcome};
use crate::rng::{data_rng, method_seed};

/// Worker count: explicit value, else `TILTFIT_THREADS`, else rayon's default.
pub fn resolve_threads(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var("TILTFIT_THREADS").ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&t| t > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::InvalidConfig(format!("cannot start {threads} workers: {e}")))?;
    Ok(pool.install(job))
}

/// One replication's data and every configured method's result on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub rep: usize,
    pub outcomes: Vec<Outcome>,
}

fn generate(config: &ExperimentConfig, theta: &[f64], rep: usize) -> Result<Dataset> {
    let mut rng = data_rng(config.seed, rep);
    match config.experiment {
        Experiment::Exp1 => gen_exp1_at(theta, config.n, config.rho, config.regime, config.standardize_z, &mut rng),
        Experiment::Exp2 => Ok(gen_exp2(config.n, config.p, &mut rng)?.0),
        Experiment::Exp3 => Ok(gen_exp3(config.n, config.p, &mut rng)?.0),
    }
}

/// True parameter vector of the configured design.
pub fn truth(config: &ExperimentConfig) -> Vec<f64> {
    match config.experiment {
        Experiment::Exp1 => exp1_truth(config.p),
        Experiment::Exp2 => crate::generators::exp2_truth(config.p),
        Experiment::Exp3 => crate::generators::exp3_truth(config.p).pack(),
    }
}

/// The moment model fitted in the configured design.
pub fn model_for(config: &ExperimentConfig) -> Result<ModelRef> {
    Ok(match config.experiment {
        Experiment::Exp1 => mean_model(config.p)?,
        Experiment::Exp2 => linear_regression_model(config.p, true)?,
        Experiment::Exp3 => tiltfit_core::model::sem_model(config.p)?,
    })
}

fn fit_options(config: &ExperimentConfig) -> FitOptions {
    let mut o = config.fit.clone();
    if let Some(init) = &config.init {
        o.init = InitStrategy::Explicit(init.clone());
    }
    o
}

fn gamma_grid(config: &ExperimentConfig, model: &ModelRef) -> Vec<f64> {
    default_grid(config.n, model.n_params(), config.grid_len)
}

fn penalized_path(
    config: &ExperimentConfig,
    model: &ModelRef,
    data: &Dataset,
    kind: DualKind,
) -> tiltfit_core::Result<Outcome> {
    let grid = gamma_grid(config, model);
    let opts = fit_options(config);
    let path = match config.experiment {
        Experiment::Exp3 => {
            let sem = SemModel::new(config.p)?;
            let TuningRule::Info(criterion) = config.criterion else {
                unreachable!("validated: the structural design uses an information criterion")
            };
            select_gamma_blockwise(&sem, data, &config.penalty, &opts, &grid, criterion)?
        }
        _ => select_gamma_with(model.as_ref(), data, &config.penalty, &opts, &grid, config.criterion, kind, true)?,
    };
    let fit = path.chosen_fit();
    Ok(Outcome::success(fit.theta.clone(), fit.converged, fit.adjusted, Some(path.chosen_gamma())))
}

/// `0` followed by log-spaced values up to `top`.
fn threshold_grid(top: f64, len: usize) -> Vec<f64> {
    let top = top.max(1e-8);
    let mut g = vec![0.0];
    g.extend(log_grid(1e-3 * top, top, len));
    g
}

fn threshold_method(method: Method, data: &Dataset, folds: usize, seed: u64) -> tiltfit_core::Result<Outcome> {
    let xbar = data.column_means();
    let top = xbar.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * 1.01;
    let est = match method {
        Method::HardThreshold => {
            let grid = threshold_grid(top, 30);
            let t = cv_threshold(data, ThresholdKind::Hard, &grid, folds, seed)?;
            hard_threshold(&xbar, t)?
        }
        Method::SoftThreshold => {
            let grid = threshold_grid(top, 30);
            let t = cv_threshold(data, ThresholdKind::Soft, &grid, folds, seed)?;
            soft_threshold(&xbar, t)?
        }
        Method::QuadraticLoss => {
            // with diagonal Q a coefficient is zeroed once γ ≥ 2Q_jj|x̄_j|; allow for correlation
            let (_, q) = covariance_inverse(data);
            let qmax = q.diagonal().iter().fold(0.0_f64, |m, v| m.max(*v));
            let grid = threshold_grid(8.0 * qmax * top, 30);
            let t = cv_threshold(data, ThresholdKind::Quadratic, &grid, folds, seed)?;
            quadratic_loss(data, t)?
        }
        _ => unreachable!("not a threshold method"),
    };
    let tuning = est.tuning.first().copied();
    Ok(Outcome::success(est.theta, true, false, tuning))
}

fn run_method(
    config: &ExperimentConfig,
    model: &ModelRef,
    method: Method,
    data: &Dataset,
    truth: &[f64],
    rep: usize,
) -> Outcome {
    let result = match method {
        Method::Oracle => Ok(Outcome::success(truth.to_vec(), true, false, None)),
        Method::Mean => Ok(Outcome::success(mean_estimator(data).theta, true, false, None)),
        Method::Pet => penalized_path(config, model, data, DualKind::ExponentialTilting),
        Method::Pel => penalized_path(config, model, data, DualKind::EmpiricalLikelihood),
        Method::HardThreshold | Method::SoftThreshold | Method::QuadraticLoss => {
            threshold_method(method, data, config.folds, method_seed(config.seed, rep))
        }
    };
    result.unwrap_or_else(|e| {
        debug!("replication {rep}: {} failed: {e}", method.label());
        Outcome::failure(e.to_string())
    })
}

/// Generate the data of replication `rep` and run every configured method on it.
pub fn replicate(config: &ExperimentConfig, rep: usize) -> Result<Replication> {
    let truth = truth(config);
    let model = model_for(config)?;
    let data = generate(config, &truth, rep)?;
    let outcomes = config.methods.iter().map(|&m| run_method(config, &model, m, &data, &truth, rep)).collect();
    Ok(Replication { rep, outcomes })
}

/// Run every replication and aggregate; the result does not depend on the worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsTable> {
    run_experiment_with_threads(config, resolve_threads(config.threads))
}

pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: usize) -> Result<MetricsTable> {
    let reps = run_replications(config, threads)?;
    summarize(config, &reps)
}

/// All replications, ordered by index.
pub fn run_replications(config: &ExperimentConfig, threads: usize) -> Result<Vec<Replication>> {
    config.validate()?;
    info!("running {} replications of {:?} on {threads} workers", config.reps, config.experiment);
    let results: Vec<Result<Replication>> =
        in_pool(threads, || (0..config.reps).into_par_iter().map(|rep| replicate(config, rep)).collect())?;
    results.into_iter().collect()
}

/// Aggregate ordered replications into a table.
pub fn summarize(config: &ExperimentConfig, reps: &[Replication]) -> Result<MetricsTable> {
    let truth = truth(config);
    let selection = model_for(config)?.penalized_indices();
    let mut methods = Vec::with_capacity(config.methods.len());
    for (k, &method) in config.methods.iter().enumerate() {
        let outcomes: Vec<&Outcome> = reps.iter().map(|r| &r.outcomes[k]).collect();
        let m = aggregate(method, &truth, &selection, &outcomes);
        if m.failures * 10 > reps.len() {
            return Err(SimError::TooManyFailures { method: method.label().into(), failed: m.failures, reps: reps.len() });
        }
        methods.push(m);
    }
    Ok(MetricsTable { config: config.clone(), truth, selection, methods })
}

/// Outcome of the post-selection test of `θ₂ = reference` in one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageDraw {
    pub statistic: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    /// True value of the second coefficient used to generate the data.
    pub theta2: f64,
    /// Fraction of replications whose interval excludes the reference value.
    pub non_coverage: f64,
    pub successes: usize,
    pub failures: usize,
    /// Statistics of the successful replications, in replication order.
    pub statistics: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub config: ExperimentConfig,
    pub alpha: f64,
    /// Value whose membership in the confidence interval is recorded.
    pub reference: f64,
    pub rows: Vec<CoverageRow>,
}

/// Select, restrict to the selected coefficients (always keeping θ₂), then test
/// `θ₂ = reference` by the likelihood ratio.
///
/// Membership of the reference in the `1 − α` interval is decided by the test
/// itself: the interval is exactly the set of values the test does not reject.
pub fn coverage_replication(
    config: &ExperimentConfig,
    theta: &[f64],
    reference: f64,
    alpha: f64,
    rep: usize,
) -> Result<CoverageDraw> {
    let model = model_for(config)?;
    let data = generate(config, theta, rep)?;
    let opts = fit_options(config);
    let grid = gamma_grid(config, &model);
    let path = select_gamma_with(
        model.as_ref(),
        &data,
        &config.penalty,
        &opts,
        &grid,
        config.criterion,
        DualKind::ExponentialTilting,
        true,
    )?;
    let fit = path.chosen_fit();
    let mut keep: Vec<usize> = (0..theta.len()).filter(|&j| !is_zero(fit.theta[j])).collect();
    if !keep.contains(&1) {
        keep.push(1);
    }
    let active = ActiveSet::new(keep, theta.len())?;
    let reduced = restrict(model, &active)?;
    let position = active.position(1).expect("coordinate 1 is kept");
    let hyp = Hypothesis::coordinate(position, active.len(), reference)?;
    let penalty = config.penalty.with_gamma(path.chosen_gamma());
    let mut o = config.fit.clone();
    o.init = InitStrategy::Explicit(active.gather(&fit.theta));
    let test = lr_test(reduced.as_ref(), &data, &penalty, &hyp, &o)?;
    let critical = chisq_quantile(1.0 - alpha, 1);
    Ok(CoverageDraw { statistic: test.statistic, rejected: test.statistic > critical })
}

/// Non-coverage of the reference value of θ₂ (its value in the default truth)
/// when data are generated at each of `theta2_values`.
///
/// Every θ₂ value reuses the same data streams (common random numbers), so rows
/// differ only through the shift in the second coordinate.
pub fn coverage_study(config: &ExperimentConfig, theta2_values: &[f64], alpha: f64) -> Result<CoverageTable> {
    coverage_study_with_threads(config, theta2_values, alpha, resolve_threads(config.threads))
}

pub fn coverage_study_with_threads(
    config: &ExperimentConfig,
    theta2_values: &[f64],
    alpha: f64,
    threads: usize,
) -> Result<CoverageTable> {
    config.validate()?;
    if config.experiment != Experiment::Exp1 {
        return Err(SimError::InvalidConfig("coverage studies use the mean design".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SimError::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if theta2_values.is_empty() {
        return Err(SimError::InvalidConfig("no values of theta2 given".into()));
    }
    let base = exp1_truth(config.p);
    let reference = base[1];
    let mut rows = Vec::with_capacity(theta2_values.len());
    for &theta2 in theta2_values {
        let mut theta = base.clone();
        theta[1] = theta2;
        let draws: Vec<Result<CoverageDraw>> = in_pool(threads, || {
            (0..config.reps)
                .into_par_iter()
                .map(|rep| coverage_replication(config, &theta, reference, alpha, rep))
                .collect()
        })?;
        let mut statistics = Vec::with_capacity(draws.len());
        let (mut rejected, mut failures) = (0usize, 0usize);
        for d in draws {
            match d {
                Ok(d) => {
                    statistics.push(d.statistic);
                    rejected += d.rejected as usize;
                }
                Err(SimError::Core(e)) => {
                    debug!("coverage replication failed: {e}");
                    failures += 1;
                }
                Err(e) => return Err(e),
            }
        }
        if failures * 10 > config.reps {
            return Err(SimError::TooManyFailures { method: "PET test".into(), failed: failures, reps: config.reps });
        }
        let successes = statistics.len();
        rows.push(CoverageRow {
            theta2,
            non_coverage: if successes > 0 { rejected as f64 / successes as f64 } else { f64::NAN },
            successes,
            failures,
            statistics,
        });
    }
    Ok(CoverageTable { config: config.clone(), alpha, reference, rows })
}
