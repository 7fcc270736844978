//! Housing-price pipeline: log response, standardized covariates, all pairwise
//! interactions, GCV-tuned SCAD fits by exponential tilting and by empirical
//! likelihood, then standard errors and Wald intervals for selected terms.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tiltfit_core::dual::DualKind;
use tiltfit_core::inference::{asymptotic_se, chisq_quantile};
use tiltfit_core::linalg::dependent_columns;
use tiltfit_core::model::{linear_regression_model, restrict};
use tiltfit_core::optimizer::{fit_with_kind, FitOptions, InitStrategy};
use tiltfit_core::tuning::{default_grid, select_gamma_with, TuningRule};
use tiltfit_core::{ActiveSet, Dataset, Error as CoreError, PenaltySpec, PetFit};

use crate::error::{CliError, Result};
use crate::ingest::{expand_interactions, standardize, Ingested};
use crate::render::{Cell, Table};

/// The expected file schema: 13 covariates followed by the median value.
pub const HOUSING_COLUMNS: [&str; 14] = [
    "CRIM", "ZN", "INDUS", "CHAS", "NOX", "RM", "AGE", "DIS", "RAD", "TAX", "PTRATIO", "B", "LSTAT", "MEDV",
];
pub const HOUSING_RESPONSE: &str = "MEDV";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BostonOptions {
    pub grid_len: usize,
    /// Intervals have coverage `1 − alpha`.
    pub alpha: f64,
    pub fit: FitOptions,
}

impl Default for BostonOptions {
    fn default() -> Self {
        BostonOptions { grid_len: 40, alpha: 0.05, fit: FitOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub gamma: f64,
    pub converged: bool,
    /// One entry per design column; `None` where the coefficient was not selected.
    pub estimates: Vec<Option<Estimate>>,
}

impl MethodSummary {
    pub fn selected(&self) -> usize {
        self.estimates.iter().flatten().count()
    }

    pub fn mean_ci_width(&self) -> f64 {
        let w: Vec<f64> = self.estimates.iter().flatten().map(|e| e.upper - e.lower).collect();
        w.iter().sum::<f64>() / w.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BostonReport {
    pub n: usize,
    pub design_labels: Vec<String>,
    /// `(label, mean, sd)` of each raw covariate; coefficients are on the standardized scale.
    pub standardization: Vec<(String, f64, f64)>,
    pub methods: Vec<MethodSummary>,
}

/// Standardize, expand, tune and fit both methods, then attach standard errors.
pub fn run_boston(data: &Ingested, opts: &BostonOptions) -> Result<BostonReport> {
    if data.labels.len() != HOUSING_COLUMNS.len() - 1 {
        return Err(CliError::Data(format!(
            "expected {} covariates, found {}",
            HOUSING_COLUMNS.len() - 1,
            data.labels.len()
        )));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
    }
    let (z, transform) = standardize(&data.covariates, &data.labels)?;
    let (design, labels) = expand_interactions(&z, &data.labels, true)?;
    let collinear = dependent_columns(&design, 1e-8);
    if !collinear.is_empty() {
        let names: Vec<&str> = collinear.iter().map(|&j| labels[j].as_str()).collect();
        return Err(CliError::Data(format!("design is rank deficient; collinear columns: {}", names.join(", "))));
    }
    let dataset = data.regression_dataset(&design)?;
    let p = design.ncols();
    let grid = default_grid(data.n(), p, opts.grid_len);
    let mut methods = Vec::new();
    for (name, kind) in [("PET", DualKind::ExponentialTilting), ("PEL", DualKind::EmpiricalLikelihood)] {
        methods.push(fit_method(name, kind, &dataset, p, &grid, opts)?);
    }
    Ok(BostonReport {
        n: data.n(),
        design_labels: labels,
        standardization: data.labels.iter().zip(transform).map(|(l, (m, s))| (l.clone(), m, s)).collect(),
        methods,
    })
}

fn best_effort(r: tiltfit_core::Result<PetFit>) -> tiltfit_core::Result<PetFit> {
    match r {
        Err(CoreError::Stalled { best }) => Ok(*best),
        other => other,
    }
}

fn fit_method(name: &str, kind: DualKind, data: &Dataset, p: usize, grid: &[f64], opts: &BostonOptions) -> Result<MethodSummary> {
    let model = linear_regression_model(p, false)?;
    let scad = PenaltySpec::scad(0.0)?;
    let path = select_gamma_with(model.as_ref(), data, &scad, &opts.fit, grid, TuningRule::Gcv, kind, true)?;
    let chosen = path.chosen_fit();
    let active = ActiveSet::support(&chosen.theta);
    if active.is_empty() {
        return Err(CliError::Numerical(format!("{name}: the selected model is empty")));
    }
    // re-fit on the selected coordinates so the information matrix is nonsingular
    let reduced = restrict(model, &active)?;
    let penalty = scad.with_gamma(path.chosen_gamma());
    let mut o = opts.fit.clone();
    o.init = InitStrategy::Explicit(active.gather(&chosen.theta));
    let refit = best_effort(fit_with_kind(reduced.as_ref(), data, &penalty, &o, kind))?;
    let se = asymptotic_se(&refit, reduced.as_ref(), data)?;
    let z = chisq_quantile(1.0 - opts.alpha, 1).sqrt();
    let mut estimates = vec![None; p];
    for (k, &j) in active.indices().iter().enumerate() {
        let (est, s) = (refit.theta[k], se[k]);
        estimates[j] = Some(Estimate { estimate: est, se: s, lower: est - z * s, upper: est + z * s });
    }
    Ok(MethodSummary { method: name.into(), gamma: path.chosen_gamma(), converged: refit.converged, estimates })
}

/// Coefficient table (one row per term selected by either method) and a
/// method summary table.
pub fn report_tables(report: &BostonReport) -> Vec<Table> {
    let mut columns = vec!["term".to_string()];
    for m in &report.methods {
        for c in ["Est", "SE", "CI lower", "CI upper"] {
            columns.push(format!("{} {c}", m.method));
        }
    }
    let mut coef = Table::new("coefficients", "Selected coefficients (standardized covariates, log response)", columns);
    for (j, label) in report.design_labels.iter().enumerate() {
        if report.methods.iter().all(|m| m.estimates[j].is_none()) {
            continue;
        }
        let mut row = vec![Cell::text(label)];
        for m in &report.methods {
            match m.estimates[j] {
                Some(e) => row.extend([e.estimate, e.se, e.lower, e.upper].map(Cell::num)),
                None => row.extend(std::iter::repeat_n(Cell::Empty, 4)),
            }
        }
        coef.push(row);
    }
    let mut summary = Table::new(
        "summary",
        "Method summary",
        ["method", "gamma", "selected", "mean CI width", "converged"].map(String::from).to_vec(),
    );
    for m in &report.methods {
        summary.push(vec![
            Cell::text(&m.method),
            Cell::num(m.gamma),
            Cell::num(m.selected() as f64),
            Cell::num(m.mean_ci_width()),
            Cell::text(m.converged.to_string()),
        ]);
    }
    vec![coef, summary]
}

/// Rows shaped like the housing data (`HOUSING_COLUMNS` order) drawn from a
/// fixed generative model in which the log median value depends on a handful
/// of covariates and one interaction.
pub fn synthetic_housing(n: usize, seed: u64) -> Vec<[f64; 14]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let urban: f64 = std.sample(&mut rng);
        let mut e = || std.sample(&mut rng);
        let crim = (-1.0 + 1.3 * urban + 0.9 * e()).exp();
        let zn = (12.0 - 18.0 * urban + 15.0 * e()).max(0.0);
        let indus = (11.0 + 5.0 * urban + 3.5 * e()).clamp(0.5, 28.0);
        let nox = (0.55 + 0.08 * urban + 0.05 * e()).clamp(0.38, 0.87);
        let rm = 6.3 - 0.2 * urban + 0.65 * e();
        let age = (68.0 + 18.0 * urban + 18.0 * e()).clamp(3.0, 100.0);
        let dis = (1.25 - 0.45 * urban + 0.3 * e()).exp();
        let rad = (9.5 + 6.0 * urban + 4.0 * e()).round().clamp(1.0, 24.0);
        let tax = (408.0 + 120.0 * urban + 80.0 * e()).clamp(187.0, 711.0);
        let ptratio = (18.5 + 1.2 * urban + 1.6 * e()).clamp(12.6, 22.0);
        let b = (357.0 - 40.0 * urban.max(0.0) + 30.0 * e()).clamp(0.3, 397.0);
        let lstat = (12.6 + 4.5 * urban - 3.0 * (rm - 6.3) + 4.0 * e()).clamp(1.7, 38.0);
        let chas = if rng.random::<f64>() < 0.07 { 1.0 } else { 0.0 };
        let (zr, zl) = ((rm - 6.3) / 0.7, (lstat - 12.6) / 7.0);
        let lmv = 3.03 + 0.12 * zr - 0.2 * zl - 0.08 * (crim.ln() + 1.0) - 0.04 * (ptratio - 18.5) + 0.05 * chas
            + 0.04 * zr * zl
            + 0.18 * std.sample(&mut rng);
        rows.push([crim, zn, indus, chas, nox, rm, age, dis, rad, tax, ptratio, b, lstat, lmv.exp()]);
    }
    rows
}

/// Write [`synthetic_housing`] rows as a CSV with the housing header.
pub fn write_synthetic_housing(path: &Path, n: usize, seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::output(path, e.into()))?;
    w.write_record(HOUSING_COLUMNS).map_err(|e| CliError::output(path, e.into()))?;
    for row in synthetic_housing(n, seed) {
        w.write_record(row.iter().map(|v| format!("{v:.6}"))).map_err(|e| CliError::output(path, e.into()))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}
