//! Likelihood-ratio tests of linear hypotheses `Bθ = ξ`, interval inversion and
//! plug-in standard errors.

use log::{debug, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

use crate::data::Dataset;
use crate::dual::DualKind;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::MomentModel;
use crate::optimizer::{fit_affine, fit_with_kind, FitOptions, InitStrategy, PetFit, Problem};
use crate::penalty::PenaltySpec;

/// `H₀: Bθ = ξ` with orthonormal rows in `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    b: DMatrix<f64>,
    target: Vec<f64>,
}

impl Hypothesis {
    pub fn new(b: DMatrix<f64>, target: Vec<f64>) -> Result<Self> {
        let (d, q) = b.shape();
        if d == 0 || d > q {
            return Err(Error::InvalidHypothesis(format!("need 1 <= d <= q, got d={d}, q={q}")));
        }
        if target.len() != d {
            return Err(Error::InvalidHypothesis(format!("target has length {} but d={d}", target.len())));
        }
        let bbt = &b * b.transpose();
        let err = (bbt - DMatrix::identity(d, d)).amax();
        if !(err <= 1e-10) {
            return Err(Error::InvalidHypothesis(format!("rows of B must be orthonormal (max deviation {err:.3e})")));
        }
        Ok(Hypothesis { b, target })
    }

    /// `θ_j = value` in a `q`-parameter model.
    pub fn coordinate(j: usize, q: usize, value: f64) -> Result<Self> {
        if j >= q {
            return Err(Error::InvalidHypothesis(format!("coordinate {j} out of range for q={q}")));
        }
        let mut b = DMatrix::zeros(1, q);
        b[(0, j)] = 1.0;
        Hypothesis::new(b, vec![value])
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn d(&self) -> usize {
        self.b.nrows()
    }

    pub fn q(&self) -> usize {
        self.b.ncols()
    }

    pub fn with_target(&self, target: Vec<f64>) -> Result<Self> {
        Hypothesis::new(self.b.clone(), target)
    }

    /// `Bθ`.
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        (&self.b * nalgebra::DVector::from_column_slice(theta)).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub unconstrained: PetFit,
    /// `None` when no point of the constraint set admits a feasible dual.
    pub constrained: Option<PetFit>,
}

fn check_model(model: &dyn MomentModel, hyp: &Hypothesis) -> Result<()> {
    if hyp.q() != model.n_params() {
        return Err(Error::InvalidHypothesis(format!(
            "hypothesis has {} columns but the model has {} parameters",
            hyp.q(),
            model.n_params()
        )));
    }
    Ok(())
}

fn fit_or_best(result: Result<PetFit>) -> Result<PetFit> {
    match result {
        Err(Error::Stalled { best }) => {
            warn!("optimization stalled; continuing with its best iterate");
            Ok(*best)
        }
        other => other,
    }
}

/// Maximize the penalized objective over `{θ : Bθ = ξ}` by writing
/// `θ = Bᵀξ + Nβ` with `N` an orthonormal basis of the null space of `B`.
///
/// The search starts from the projection of `reference` (or of the model's
/// default start) onto the constraint set.
#[allow(clippy::too_many_arguments)]
pub fn constrained_fit_from(
    model: &dyn MomentModel,
    data: &Dataset,
    penalty: &PenaltySpec,
    hyp: &Hypothesis,
    opts: &FitOptions,
    kind: DualKind,
    adjusted: bool,
    reference: Option<&[f64]>,
) -> Result<PetFit> {
    check_model(model, hyp)?;
    let (basis, rank) = linalg::null_space(hyp.matrix(), 1e-10);
    if rank != hyp.d() {
        return Err(Error::InvalidHypothesis(format!("B has rank {rank} but {} rows", hyp.d())));
    }
    let reference = match reference {
        Some(r) => r.to_vec(),
        None => match &opts.init {
            InitStrategy::Explicit(v) => v.clone(),
            InitStrategy::ModelDefault => model.default_init(data),
        },
    };
    let b = hyp.matrix();
    let xi = nalgebra::DVector::from_column_slice(hyp.target());
    let r = nalgebra::DVector::from_column_slice(&reference);
    let offset = b.transpose() * &xi + &basis * basis.tr_mul(&r);
    fit_affine(model, data, penalty, opts, kind, adjusted, offset.as_slice(), basis)
}

/// Constrained PET fit; the moment adjustment follows `opts.adjust` at the start.
pub fn constrained_fit(
    model: &dyn MomentModel,
    data: &Dataset,
    penalty: &PenaltySpec,
    hyp: &Hypothesis,
    opts: &FitOptions,
) -> Result<PetFit> {
    let adjusted = matches!(opts.adjust, crate::optimizer::AdjustPolicy::Always);
    constrained_fit_from(model, data, penalty, hyp, opts, DualKind::ExponentialTilting, adjusted, None)
}

/// `2n{ℓ_p(θ̂) − max_{Bθ=ξ} ℓ_p(θ)}` referred to `χ²_d`.
pub fn lr_test(
    model: &dyn MomentModel,
    data: &Dataset,
    penalty: &PenaltySpec,
    hyp: &Hypothesis,
    opts: &FitOptions,
) -> Result<TestResult> {
    check_model(model, hyp)?;
    let unconstrained = fit_or_best(fit_with_kind(model, data, penalty, opts, DualKind::ExponentialTilting))?;
    lr_test_given(model, data, penalty, hyp, opts, unconstrained)
}

/// As [`lr_test`], reusing an unconstrained fit (which fixes the adjustment).
pub fn lr_test_given(
    model: &dyn MomentModel,
    data: &Dataset,
    penalty: &PenaltySpec,
    hyp: &Hypothesis,
    opts: &FitOptions,
    unconstrained: PetFit,
) -> Result<TestResult> {
    check_model(model, hyp)?;
    let d = hyp.d();
    let kind = unconstrained.kind();
    let constrained = match constrained_fit_from(
        model,
        data,
        penalty,
        hyp,
        opts,
        kind,
        unconstrained.adjusted,
        Some(&unconstrained.theta),
    ) {
        Ok(f) => Some(f),
        Err(Error::Stalled { best }) => Some(*best),
        Err(e) if e.is_numerical() || matches!(e, Error::Domain(_)) => {
            debug!("constrained fit infeasible: {e}");
            None
        }
        Err(e) => return Err(e),
    };
    let Some(constrained) = constrained else {
        return Ok(TestResult { statistic: f64::INFINITY, df: d, p_value: 0.0, unconstrained, constrained: None });
    };
    let mut unconstrained = unconstrained;
    if constrained.objective_penalized > unconstrained.objective_penalized + 1e-12 {
        // the unconstrained search stopped short; restart it from the better point
        let mut o = opts.clone();
        o.init = InitStrategy::Explicit(constrained.theta.clone());
        o.adjust = if unconstrained.adjusted {
            crate::optimizer::AdjustPolicy::Always
        } else {
            crate::optimizer::AdjustPolicy::Never
        };
        if let Ok(refit) = fit_or_best(fit_with_kind(model, data, penalty, &o, kind)) {
            if refit.objective_penalized > unconstrained.objective_penalized {
                unconstrained = refit;
            }
        }
    }
    let n = data.n() as f64;
    let raw = 2.0 * n * (unconstrained.objective_penalized - constrained.objective_penalized);
    let statistic = raw.max(0.0);
    Ok(TestResult { statistic, df: d, p_value: 1.0 - chisq_cdf(statistic, d), unconstrained, constrained: Some(constrained) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
    /// The statistic decreased somewhere while moving away from the estimate.
    pub non_monotone: bool,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

const CI_TOL: f64 = 1e-4;
const MAX_EXPANSIONS: usize = 40;

/// Invert the likelihood-ratio test for a single linear combination `bᵀθ`.
pub fn confidence_interval(
    model: &dyn MomentModel,
    data: &Dataset,
    penalty: &PenaltySpec,
    hyp: &Hypothesis,
    alpha: f64,
    opts: &FitOptions,
) -> Result<ConfidenceInterval> {
    check_model(model, hyp)?;
    let unconstrained = fit_or_best(fit_with_kind(model, data, penalty, opts, DualKind::ExponentialTilting))?;
    confidence_interval_given(model, data, penalty, hyp, alpha, opts, &unconstrained)
}

#[allow(clippy::too_many_arguments)]
pub fn confidence_interval_given(
    model: &dyn MomentModel,
    data: &Dataset,
    penalty: &PenaltySpec,
    hyp: &Hypothesis,
    alpha: f64,
    opts: &FitOptions,
    unconstrained: &PetFit,
) -> Result<ConfidenceInterval> {
    if hyp.d() != 1 {
        return Err(Error::InvalidHypothesis("confidence intervals need a single constraint".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let critical = chisq_quantile(1.0 - alpha, 1);
    let estimate = hyp.apply(&unconstrained.theta)[0];
    let stat = |xi: f64| -> Result<f64> {
        let h = hyp.with_target(vec![xi])?;
        Ok(lr_test_given(model, data, penalty, &h, opts, unconstrained.clone())?.statistic)
    };

    // initial step from the plug-in standard error of bᵀθ̂
    let step0 = asymptotic_se(unconstrained, model, data)
        .ok()
        .map(|se| {
            let b = hyp.matrix();
            (0..se.len()).map(|j| (b[(0, j)] * se[j]).powi(2)).sum::<f64>().sqrt()
        })
        .filter(|s| s.is_finite() && *s > 0.0)
        .map(|s| s * critical.sqrt())
        .unwrap_or(0.1 * estimate.abs().max(1.0));

    let mut non_monotone = false;
    let mut ends = [estimate; 2];
    for (side, sign) in [-1.0_f64, 1.0].into_iter().enumerate() {
        let mut inside = estimate;
        let mut inside_stat = 0.0;
        let mut step = step0;
        let mut outside = None;
        for _ in 0..MAX_EXPANSIONS {
            let xi = estimate + sign * step;
            let s = stat(xi)?;
            if s < inside_stat - 1e-6 {
                non_monotone = true;
            }
            if s > critical {
                outside = Some(xi);
                break;
            }
            inside = xi;
            inside_stat = s;
            step *= 2.0;
        }
        let Some(mut out) = outside else {
            warn!("confidence bound not bracketed after {MAX_EXPANSIONS} expansions");
            ends[side] = inside;
            continue;
        };
        while (out - inside).abs() > CI_TOL {
            let mid = 0.5 * (inside + out);
            let s = stat(mid)?;
            if s > critical {
                out = mid;
            } else {
                if s < inside_stat - 1e-6 {
                    non_monotone = true;
                }
                inside = mid;
                inside_stat = s;
            }
        }
        ends[side] = inside;
    }
    if non_monotone {
        warn!("likelihood-ratio profile is not monotone; reporting the widest bracketing interval");
    }
    Ok(ConfidenceInterval { lower: ends[0], upper: ends[1], estimate, non_monotone })
}

/// `sqrt(diag((Γ̂ᵀΣ̂⁻¹Γ̂)⁻¹)/n)` at the fitted value.
pub fn asymptotic_se(fit: &PetFit, model: &dyn MomentModel, data: &Dataset) -> Result<Vec<f64>> {
    let p = model.n_params();
    if fit.theta.len() != p {
        return Err(Error::InvalidDimension(format!(
            "fit has {} parameters but the model has {p}",
            fit.theta.len()
        )));
    }
    let problem = Problem::new(model, data, fit.penalty, fit.kind(), fit.adjusted, crate::dual::DualOptions::default());
    let ev = problem.eval(&fit.theta, Some(&fit.dual.nu))?;
    let info = problem.information(&ev)?;
    let singular = || {
        let gamma_hat = crate::optimizer::weighted_jacobian(model, data, &fit.theta, &ev.dual.weights, fit.adjusted)
            .unwrap_or_else(|_| info.clone());
        let mut cols = linalg::dependent_columns(&gamma_hat, 1e-8);
        if cols.is_empty() {
            cols = (0..p).collect();
        }
        Error::SingularInformation(cols)
    };
    let max_diag = info.diagonal().amax();
    let ch = info.clone().cholesky().ok_or_else(singular)?;
    let min_pivot = ch.l().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if !(max_diag > 0.0) || min_pivot < 1e-12 * max_diag {
        return Err(singular());
    }
    let k = ch.inverse();
    let n = data.n() as f64;
    Ok(k.diagonal().iter().map(|v| (v / n).sqrt()).collect())
}

/// Lower tail of `χ²_d` at `x`.
pub fn chisq_cdf(x: f64, d: usize) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    ChiSquared::new(d as f64).expect("degrees of freedom >= 1").cdf(x)
}

/// Inverse of [`chisq_cdf`], refined by safeguarded Newton steps.
pub fn chisq_quantile(p: f64, d: usize) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
    let dist = ChiSquared::new(d as f64).expect("degrees of freedom >= 1");
    let mut x = dist.inverse_cdf(p);
    // bracket [lo, hi] with cdf(lo) <= p <= cdf(hi)
    let (mut lo, mut hi) = (0.0_f64, x.max(1.0));
    while dist.cdf(hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = dist.cdf(x) - p;
        if f.abs() <= 1e-14 {
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = dist.pdf(x);
        let newton = x - f / dens;
        x = if dens > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mean_model;
    use crate::optimizer::profiled_objective;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chisq_examples() {
        for d in 1..6 {
            assert_eq!(chisq_cdf(0.0, d), 0.0);
        }
        assert_abs_diff_eq!(chisq_cdf(2.0 * 2_f64.ln(), 2), 0.5, epsilon = 1e-12);
        let q = chisq_quantile(0.95, 1);
        assert_abs_diff_eq!(q, 3.84146, epsilon = 1e-5);
        assert!((chisq_cdf(q, 1) - 0.95).abs() < 1e-8);
    }

    #[test]
    fn hypothesis_validation() {
        assert!(Hypothesis::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), vec![0.0]).is_err());
        assert!(Hypothesis::new(DMatrix::from_row_slice(1, 2, &[0.6, 0.8]), vec![0.0]).is_ok());
        assert!(Hypothesis::coordinate(3, 3, 0.0).is_err());
    }

    fn small_mean_data() -> Dataset {
        Dataset::from_rows(&[
            vec![0.1, 1.3],
            vec![0.9, 0.4],
            vec![0.2, 1.1],
            vec![0.8, 1.6],
            vec![0.5, 0.6],
            vec![0.7, 1.2],
            vec![0.3, 0.8],
        ])
        .unwrap()
    }

    #[test]
    fn fully_constrained_fit_is_target() {
        let m = mean_model(2).unwrap();
        let d = small_mean_data();
        let h = Hypothesis::new(DMatrix::identity(2, 2), vec![0.4, 0.9]).unwrap();
        let fit = constrained_fit(m.as_ref(), &d, &PenaltySpec::none(), &h, &FitOptions::default()).unwrap();
        assert_eq!(fit.theta, vec![0.4, 0.9]);
    }

    #[test]
    fn constraint_at_estimate_gives_zero_statistic() {
        let m = mean_model(2).unwrap();
        let d = small_mean_data();
        let mean = d.column_means();
        let h = Hypothesis::coordinate(1, 2, mean[1]).unwrap();
        let t = lr_test(m.as_ref(), &d, &PenaltySpec::none(), &h, &FitOptions::default()).unwrap();
        assert!(t.statistic < 1e-8);
        assert!(t.p_value > 0.999);
    }

    #[test]
    fn constrained_coordinate_matches_grid_search() {
        let m = mean_model(2).unwrap();
        let d = small_mean_data();
        let h = Hypothesis::coordinate(0, 2, 0.3).unwrap();
        let fit = constrained_fit(m.as_ref(), &d, &PenaltySpec::none(), &h, &FitOptions::default()).unwrap();
        assert_abs_diff_eq!(fit.theta[0], 0.3, epsilon = 1e-12);
        let opts = crate::dual::DualOptions::default();
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut t = 0.5;
        while t <= 1.5 {
            if let Ok((v, _)) = profiled_objective(m.as_ref(), &d, &[0.3, t], &opts) {
                if v > best.0 {
                    best = (v, t);
                }
            }
            t += 1e-4;
        }
        assert!((fit.theta[1] - best.1).abs() < 2e-4);
    }

    #[test]
    fn mean_standard_error() {
        let m = mean_model(1).unwrap();
        let d = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![4.0], vec![7.0]]).unwrap();
        let fit = crate::optimizer::fit_pet(m.as_ref(), &d, &PenaltySpec::none(), &FitOptions::default()).unwrap();
        let se = asymptotic_se(&fit, m.as_ref(), &d).unwrap();
        let mean = 3.5;
        let s2 = [1.0, 2.0, 4.0, 7.0].iter().map(|x: &f64| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(se[0], (s2 / 4.0).sqrt(), epsilon = 1e-9);
    }
}
