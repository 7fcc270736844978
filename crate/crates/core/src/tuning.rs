//! Choosing the penalty level: information criteria along a γ path, GCV for
//! linear regressions, and K-fold cross-validation for the threshold baselines.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{hard_threshold, quadratic_loss, soft_threshold};
use crate::data::Dataset;
use crate::dual::DualKind;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::MomentModel;
use crate::model::SemModel;
use crate::optimizer::{fit_pet_blockwise, fit_with_kind, FitOptions, InitStrategy, PetFit};
use crate::penalty::{lqa_coefficient, PenaltySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InfoCriterion {
    /// `C_n = max{ln ln p, 1}`.
    ABic,
    Bic,
    Aic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TuningRule {
    Info(InfoCriterion),
    Gcv,
}

impl std::str::FromStr for TuningRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "abic" => Ok(TuningRule::Info(InfoCriterion::ABic)),
            "bic" => Ok(TuningRule::Info(InfoCriterion::Bic)),
            "aic" => Ok(TuningRule::Info(InfoCriterion::Aic)),
            "gcv" => Ok(TuningRule::Gcv),
            other => Err(Error::InvalidArgument(format!("unknown tuning criterion '{other}'"))),
        }
    }
}

/// `max{ln ln p, 1}`.
pub fn scaling_factor(p: usize) -> f64 {
    let v = (p as f64).ln().ln();
    if v.is_nan() {
        1.0
    } else {
        v.max(1.0)
    }
}

/// `−2ℓ(θ̂_γ) + penalty(df)` with the per-observation profiled objective ℓ.
pub fn information_criterion(fit: &PetFit, n: usize, p: usize, kind: InfoCriterion) -> Result<f64> {
    let df = fit.df();
    if df > p {
        return Err(Error::InconsistentFit { df, p });
    }
    Ok(criterion_value(fit.objective_unpenalized, df, n, p, kind))
}

pub fn criterion_value(ell: f64, df: usize, n: usize, p: usize, kind: InfoCriterion) -> f64 {
    let nf = n as f64;
    let dff = df as f64;
    let per_df = match kind {
        InfoCriterion::ABic => scaling_factor(p) * nf.ln() / nf,
        InfoCriterion::Bic => nf.ln() / nf,
        InfoCriterion::Aic => 2.0 / nf,
    };
    -2.0 * ell + per_df * dff
}

/// `len` log-spaced points on `[0.01, 2]·√(ln p / n)`.
pub fn default_grid(n: usize, p: usize, len: usize) -> Vec<f64> {
    let base = ((p.max(2) as f64).ln() / n as f64).sqrt();
    log_grid(0.01 * base, 2.0 * base, len)
}

pub fn log_grid(lo: f64, hi: f64, len: usize) -> Vec<f64> {
    match len {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..len).map(|k| (a + (b - a) * k as f64 / (len - 1) as f64).exp()).collect()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaPath {
    pub grid: Vec<f64>,
    /// `None` where the fit failed.
    pub fits: Vec<Option<PetFit>>,
    /// `+∞` where the fit failed.
    pub scores: Vec<f64>,
    pub chosen: usize,
    pub failures: Vec<(f64, String)>,
}

impl GammaPath {
    pub fn chosen_fit(&self) -> &PetFit {
        self.fits[self.chosen].as_ref().expect("chosen index always holds a fit")
    }

    pub fn chosen_gamma(&self) -> f64 {
        self.grid[self.chosen]
    }
}

/// Index of the smallest finite score; ties go to the larger index.
fn argmin_last(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|b| s <= scores[b]) {
            best = Some(k);
        }
    }
    best
}

/// Fit along an increasing γ grid, warm-starting each fit from the previous
/// solution, and pick the γ minimizing the criterion.
pub fn select_gamma(
    model: &dyn MomentModel,
    data: &Dataset,
    family: &PenaltySpec,
    opts: &FitOptions,
    grid: &[f64],
    rule: TuningRule,
) -> Result<GammaPath> {
    select_gamma_with(model, data, family, opts, grid, rule, DualKind::ExponentialTilting, true)
}

#[allow(clippy::too_many_arguments)]
pub fn select_gamma_with(
    model: &dyn MomentModel,
    data: &Dataset,
    family: &PenaltySpec,
    opts: &FitOptions,
    grid: &[f64],
    rule: TuningRule,
    kind: DualKind,
    warm_start: bool,
) -> Result<GammaPath> {
    check_grid(grid)?;
    let design = match rule {
        TuningRule::Gcv => Some(model.regression_design(data).ok_or_else(|| {
            Error::InvalidArgument("GCV needs a linear regression model".into())
        })?),
        TuningRule::Info(_) => None,
    };
    run_path(data.n(), model.n_params(), family, grid, rule, design, opts, warm_start, |penalty, o| {
        fit_with_kind(model, data, penalty, o, kind)
    })
}

/// Information-criterion path for the structural equation model, fitting each
/// γ with the blockwise coordinate scheme.
pub fn select_gamma_blockwise(
    sem: &SemModel,
    data: &Dataset,
    family: &PenaltySpec,
    opts: &FitOptions,
    grid: &[f64],
    criterion: InfoCriterion,
) -> Result<GammaPath> {
    check_grid(grid)?;
    run_path(data.n(), sem.n_params(), family, grid, TuningRule::Info(criterion), None, opts, true, |penalty, o| {
        fit_pet_blockwise(sem, data, penalty, o)
    })
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("gamma grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidArgument("gamma grid must be non-negative and strictly increasing".into()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_path<F>(
    n: usize,
    p: usize,
    family: &PenaltySpec,
    grid: &[f64],
    rule: TuningRule,
    design: Option<(DMatrix<f64>, DVector<f64>)>,
    opts: &FitOptions,
    warm_start: bool,
    fit: F,
) -> Result<GammaPath>
where
    F: Fn(&PenaltySpec, &FitOptions) -> Result<PetFit>,
{
    let mut fits = Vec::with_capacity(grid.len());
    let mut scores = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    for &gamma in grid {
        let penalty = family.with_gamma(gamma);
        let mut o = opts.clone();
        if warm_start {
            if let Some(prev) = &previous {
                o.init = InitStrategy::Explicit(prev.clone());
            }
        }
        let result = match fit(&penalty, &o) {
            Err(Error::Stalled { best }) => {
                debug!("fit at gamma={gamma:.4e} stalled; using its best iterate");
                Ok(*best)
            }
            other => other,
        };
        match result {
            Ok(fit) => {
                let score = match (&design, rule) {
                    (Some((x, y)), TuningRule::Gcv) => gcv_score(&fit.theta, x, y, &penalty),
                    (_, TuningRule::Info(k)) => information_criterion(&fit, n, p, k),
                    (None, TuningRule::Gcv) => Err(Error::InvalidArgument("GCV needs a design".into())),
                };
                match score {
                    Ok(s) => scores.push(s),
                    Err(e) => {
                        failures.push((gamma, e.to_string()));
                        scores.push(f64::INFINITY);
                    }
                }
                previous = Some(fit.theta.clone());
                fits.push(Some(fit));
            }
            Err(e) => {
                debug!("fit at gamma={gamma:.4e} failed: {e}");
                failures.push((gamma, e.to_string()));
                fits.push(None);
                scores.push(f64::INFINITY);
            }
        }
    }
    let chosen = argmin_last(&scores).ok_or_else(|| Error::PathFailure(failures.clone()))?;
    Ok(GammaPath { grid: grid.to_vec(), fits, scores, chosen, failures })
}

/// `n⁻¹‖Y − Xθ‖² / (1 − e/n)²` with `e = tr{(X_AᵀX_A + nB)⁻¹X_AᵀX_A}` over the
/// nonzero coordinates `A` and `B = diag(p′(|θ_j|)/|θ_j|)`.
pub fn gcv_score(theta: &[f64], x: &DMatrix<f64>, y: &DVector<f64>, penalty: &PenaltySpec) -> Result<f64> {
    let (n, p) = x.shape();
    if theta.len() != p || y.len() != n {
        return Err(Error::InvalidDimension(format!(
            "GCV needs a {n}x{} design for {} coefficients",
            theta.len(),
            p
        )));
    }
    let residual = y - x * DVector::from_column_slice(theta);
    let rss = residual.norm_squared() / n as f64;
    let active: Vec<usize> = (0..p).filter(|&j| theta[j] != 0.0).collect();
    let e = if active.is_empty() {
        0.0
    } else {
        let xa = x.select_columns(&active);
        let xtx = linalg::gram(&xa);
        let mut lhs = xtx.clone();
        for (k, &j) in active.iter().enumerate() {
            lhs[(k, k)] += n as f64 * lqa_coefficient(penalty, theta[j]);
        }
        let solved = linalg::cholesky_with_ridge(&lhs, linalg::diag_scale(&lhs))
            .ok_or(Error::DegenerateDf { e: f64::NAN, n })?
            .solve(&xtx);
        solved.trace()
    };
    if !(e < n as f64) {
        return Err(Error::DegenerateDf { e, n });
    }
    let denom = 1.0 - e / n as f64;
    Ok(rss / (denom * denom))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThresholdKind {
    Hard,
    Soft,
    Quadratic,
}

/// Seeded K-fold cross-validation of a thresholded mean estimator.
///
/// Returns the grid value with the smallest held-out squared error
/// `Σ ‖x_test − θ̂_train‖²`; ties go to the larger value.
pub fn cv_threshold(data: &Dataset, kind: ThresholdKind, grid: &[f64], folds: usize, seed: u64) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("threshold grid is empty".into()));
    }
    let n = data.n();
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!("need 2 <= folds <= n, got folds={folds}, n={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut errors = vec![0.0; grid.len()];
    for f in 0..folds {
        let test: Vec<usize> = order.iter().enumerate().filter(|(k, _)| k % folds == f).map(|(_, &i)| i).collect();
        let train: Vec<usize> = order.iter().enumerate().filter(|(k, _)| k % folds != f).map(|(_, &i)| i).collect();
        if train.len() < 2 {
            return Err(Error::InvalidArgument("each training split needs at least 2 rows".into()));
        }
        let train_data = data.select_rows(&train)?;
        let xbar = train_data.column_means();
        for (k, &t) in grid.iter().enumerate() {
            let theta = match kind {
                ThresholdKind::Hard => hard_threshold(&xbar, t)?.theta,
                ThresholdKind::Soft => soft_threshold(&xbar, t)?.theta,
                ThresholdKind::Quadratic => match quadratic_loss(&train_data, t) {
                    Ok(est) => est.theta,
                    Err(Error::NoConvergence { best, .. }) => best,
                    Err(e) => return Err(e),
                },
            };
            errors[k] += test
                .iter()
                .map(|&i| data.row(i).iter().zip(&theta).map(|(x, t)| (x - t).powi(2)).sum::<f64>())
                .sum::<f64>();
        }
    }
    let chosen = argmin_last(&errors).ok_or_else(|| Error::NonFinite("cross-validation error"))?;
    Ok(grid[chosen])
}
