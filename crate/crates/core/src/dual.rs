//! Inner convex problems over the Lagrange multiplier: exponential tilting and
//! empirical likelihood.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Objective below this value means the dual is unbounded.
const DIVERGENCE_OBJECTIVE: f64 = -50.0;
/// Multiplier norm above this value means the dual is unbounded.
const DIVERGENCE_NORM: f64 = 1e6;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualOptions {
    /// Tolerance on `‖Σ w_i g_i‖∞`.
    pub tol: f64,
    pub max_iter: usize,
    pub line_search_shrink: f64,
    pub max_backtracks: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions { tol: 1e-9, max_iter: 100, line_search_shrink: 0.5, max_backtracks: 50 }
    }
}

impl DualOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("dual tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("dual max_iter must be at least 1".into()));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(Error::InvalidArgument("line-search shrink factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualKind {
    ExponentialTilting,
    EmpiricalLikelihood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub kind: DualKind,
    /// Multiplier: `ν` for exponential tilting, `λ` for empirical likelihood.
    pub nu: Vec<f64>,
    /// Profiled value: `min_ν log mean exp(νᵀg_i)` or `min_λ −mean log(1 + λᵀg_i)`.
    pub objective: f64,
    /// Implied probabilities.
    pub weights: Vec<f64>,
    /// `‖Σ w_i g_i‖∞` at the solution.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_finite(g: &DMatrix<f64>) -> Result<()> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("moment matrix"))
    }
}

fn check_nu(g: &DMatrix<f64>, nu: &[f64]) -> Result<()> {
    if nu.len() != g.ncols() {
        return Err(Error::InvalidDimension(format!(
            "multiplier has length {} but there are {} moments",
            nu.len(),
            g.ncols()
        )));
    }
    if nu.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("multiplier"));
    }
    Ok(())
}

fn log_sum_exp(z: &DVector<f64>) -> f64 {
    let m = z.max();
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(z: &DVector<f64>) -> Vec<f64> {
    let m = z.max();
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `log[(1/n) Σ exp(νᵀg_i)]`, evaluated with a max shift.
pub fn et_objective(g: &DMatrix<f64>, nu: &[f64]) -> Result<f64> {
    check_finite(g)?;
    check_nu(g, nu)?;
    let z = g * DVector::from_column_slice(nu);
    Ok(log_sum_exp(&z) - (g.nrows() as f64).ln())
}

/// Softmax of `Gν`.
pub fn implied_weights(g: &DMatrix<f64>, nu: &[f64]) -> Result<Vec<f64>> {
    check_finite(g)?;
    check_nu(g, nu)?;
    Ok(softmax(&(g * DVector::from_column_slice(nu))))
}

/// `−Σ̂⁻¹ḡ` with `Σ̂` the centred sample covariance (divisor n).
///
/// Returns the zero vector and `true` when `Σ̂` is numerically singular.
pub fn lemma_warm_start(g: &DMatrix<f64>) -> (Vec<f64>, bool) {
    let n = g.nrows() as f64;
    let r = g.ncols();
    let mean = g.row_mean().transpose();
    let centered = DMatrix::from_fn(g.nrows(), r, |i, j| g[(i, j)] - mean[j]);
    let sigma = centered.tr_mul(&centered) / n;
    let max_diag = sigma.diagonal().max();
    let fallback = (vec![0.0; r], true);
    if !(max_diag > 0.0) || !max_diag.is_finite() {
        return fallback;
    }
    let Some(ch) = sigma.cholesky() else {
        return fallback;
    };
    let min_pivot = ch.l().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if min_pivot < 1e-12 * max_diag {
        return fallback;
    }
    let nu = -ch.solve(&mean);
    if nu.iter().any(|v| !v.is_finite()) {
        return fallback;
    }
    (nu.iter().copied().collect(), false)
}

/// Zero must lie between the smallest and largest entry of every moment column.
fn columnwise_hull_check(g: &DMatrix<f64>) -> Result<()> {
    for col in g.column_iter() {
        if col.min() > 0.0 || col.max() < 0.0 {
            return Err(Error::ConvexHullViolation);
        }
    }
    Ok(())
}

fn ridge_scale(g: &DMatrix<f64>) -> f64 {
    let n = g.nrows() as f64;
    let mean_sq = g.iter().map(|v| v * v).sum::<f64>() / (n * g.ncols().max(1) as f64);
    if mean_sq > 0.0 && mean_sq.is_finite() {
        mean_sq
    } else {
        1.0
    }
}

pub(crate) fn weighted_gram(g: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut wg = g.clone();
    for (i, mut row) in wg.row_iter_mut().enumerate() {
        row *= w[i];
    }
    g.tr_mul(&wg)
}

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Minimize the exponential-tilting dual, starting from the better of the lemma
/// warm start and zero.
pub fn solve_dual(g: &DMatrix<f64>, opts: &DualOptions) -> Result<DualSolution> {
    solve_dual_from(g, None, opts)
}

/// As [`solve_dual`], additionally considering `start` as an initial multiplier.
pub fn solve_dual_from(g: &DMatrix<f64>, start: Option<&[f64]>, opts: &DualOptions) -> Result<DualSolution> {
    opts.validate()?;
    check_finite(g)?;
    let (n, r) = g.shape();
    if r == 0 || n == 0 {
        return Err(Error::InvalidDimension("moment matrix must have at least one row and column".into()));
    }
    columnwise_hull_check(g)?;

    let ln_n = (n as f64).ln();
    let eval = |nu: &DVector<f64>| -> (f64, DVector<f64>) {
        let z = g * nu;
        (log_sum_exp(&z) - ln_n, z)
    };

    // choose the start with the smallest objective
    let (lemma, _) = lemma_warm_start(g);
    let mut candidates = vec![DVector::zeros(r), DVector::from_vec(lemma)];
    if let Some(s) = start {
        check_nu(g, s)?;
        candidates.push(DVector::from_column_slice(s));
    }
    let mut nu = DVector::zeros(r);
    let (mut f, mut z) = eval(&nu);
    for c in candidates.into_iter().skip(1) {
        let (fc, zc) = eval(&c);
        if fc.is_finite() && fc < f {
            nu = c;
            f = fc;
            z = zc;
        }
    }

    let scale = ridge_scale(g);
    let mut w = softmax(&z);
    let mut grad = g.tr_mul(&DVector::from_column_slice(&w));
    let mut grad_norm = sup_norm(&grad);
    let mut iterations = 0;
    while grad_norm > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let hess = weighted_gram(g, &w) - &grad * grad.transpose();
        let ch = linalg::cholesky_with_ridge(&hess, scale).ok_or(Error::Conditioning)?;
        let dir = -ch.solve(&grad);
        let slope = grad.dot(&dir);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let cand = &nu + &dir * t;
            let (fc, zc) = eval(&cand);
            if fc.is_finite() {
                if fc <= f + ARMIJO * t * slope {
                    accepted = Some((cand, fc, zc));
                    break;
                }
                // near the optimum the decrease drowns in rounding: accept a
                // step that shrinks the gradient without raising the objective
                if fc - f <= 4.0 * f64::EPSILON * f.abs().max(1.0) {
                    let wc = softmax(&zc);
                    let gc = g.tr_mul(&DVector::from_column_slice(&wc));
                    if sup_norm(&gc) < grad_norm {
                        accepted = Some((cand, fc.min(f), zc));
                        break;
                    }
                }
            }
            t *= opts.line_search_shrink;
        }
        let Some((cand, fc, zc)) = accepted else {
            debug!("ET dual line search failed at iteration {iterations}, grad {grad_norm:.3e}");
            break;
        };
        nu = cand;
        f = fc;
        z = zc;
        if f < DIVERGENCE_OBJECTIVE || nu.norm() > DIVERGENCE_NORM {
            return Err(Error::ConvexHullViolation);
        }
        w = softmax(&z);
        grad = g.tr_mul(&DVector::from_column_slice(&w));
        grad_norm = sup_norm(&grad);
    }

    Ok(DualSolution {
        kind: DualKind::ExponentialTilting,
        nu: nu.iter().copied().collect(),
        objective: f,
        weights: w,
        grad_norm,
        iterations,
        converged: grad_norm <= opts.tol,
    })
}

/// Empirical-likelihood dual: minimize `−(1/n) Σ log(1 + λᵀg_i)` keeping every
/// `1 + λᵀg_i ≥ 1/n`. The returned `objective` is the profiled log EL ratio
/// divided by n (non-positive).
pub fn el_dual(g: &DMatrix<f64>, opts: &DualOptions) -> Result<DualSolution> {
    el_dual_from(g, None, opts)
}

pub fn el_dual_from(g: &DMatrix<f64>, start: Option<&[f64]>, opts: &DualOptions) -> Result<DualSolution> {
    opts.validate()?;
    check_finite(g)?;
    let (n, r) = g.shape();
    if r == 0 || n == 0 {
        return Err(Error::InvalidDimension("moment matrix must have at least one row and column".into()));
    }
    columnwise_hull_check(g)?;
    let nf = n as f64;
    let floor = 1.0 / nf;

    // objective, or None when some 1 + λᵀg_i drops below the floor
    let eval = |lam: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        let s = g * lam;
        if s.iter().any(|v| 1.0 + v < floor || !v.is_finite()) {
            return None;
        }
        let f = -s.iter().map(|v| (1.0 + v).ln()).sum::<f64>() / nf;
        Some((f, s))
    };
    let derivs = |s: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let inv: Vec<f64> = s.iter().map(|v| 1.0 / (1.0 + v)).collect();
        let grad = -g.tr_mul(&DVector::from_column_slice(&inv)) / nf;
        let sq: Vec<f64> = inv.iter().map(|v| v * v / nf).collect();
        (grad, weighted_gram(g, &sq))
    };

    let mut lam = DVector::zeros(r);
    let (mut f, mut s) = eval(&lam).expect("zero multiplier is always feasible");
    if let Some(st) = start {
        check_nu(g, st)?;
        let c = DVector::from_column_slice(st);
        if let Some((fc, sc)) = eval(&c) {
            if fc < f {
                lam = c;
                f = fc;
                s = sc;
            }
        }
    }

    let scale = ridge_scale(g);
    let (mut grad, mut hess) = derivs(&s);
    let mut grad_norm = sup_norm(&grad);
    let mut iterations = 0;
    while grad_norm > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let ch = linalg::cholesky_with_ridge(&hess, scale).ok_or(Error::Conditioning)?;
        let dir = -ch.solve(&grad);
        let slope = grad.dot(&dir);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let cand = &lam + &dir * t;
            if let Some((fc, sc)) = eval(&cand) {
                if fc <= f + ARMIJO * t * slope {
                    accepted = Some((cand, fc, sc));
                    break;
                }
                if fc - f <= 4.0 * f64::EPSILON * f.abs().max(1.0) {
                    let (gc, _) = derivs(&sc);
                    if sup_norm(&gc) < grad_norm {
                        accepted = Some((cand, fc.min(f), sc));
                        break;
                    }
                }
            }
            t *= opts.line_search_shrink;
        }
        let Some((cand, fc, sc)) = accepted else {
            debug!("EL dual line search failed at iteration {iterations}, grad {grad_norm:.3e}");
            break;
        };
        lam = cand;
        f = fc;
        s = sc;
        if f < DIVERGENCE_OBJECTIVE || lam.norm() > DIVERGENCE_NORM {
            return Err(Error::ConvexHullViolation);
        }
        (grad, hess) = derivs(&s);
        grad_norm = sup_norm(&grad);
    }

    let raw: Vec<f64> = s.iter().map(|v| 1.0 / (nf * (1.0 + v))).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // report ‖Σ w_i g_i‖∞ with the normalized weights
    let wg = g.tr_mul(&DVector::from_column_slice(&weights));
    let moment_norm = sup_norm(&wg).max(grad_norm);
    Ok(DualSolution {
        kind: DualKind::EmpiricalLikelihood,
        nu: lam.iter().copied().collect(),
        objective: f,
        weights,
        grad_norm: moment_norm,
        iterations,
        converged: grad_norm <= opts.tol,
    })
}

/// Dispatch on the dual kind.
pub fn solve(kind: DualKind, g: &DMatrix<f64>, start: Option<&[f64]>, opts: &DualOptions) -> Result<DualSolution> {
    match kind {
        DualKind::ExponentialTilting => solve_dual_from(g, start, opts),
        DualKind::EmpiricalLikelihood => el_dual_from(g, start, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn objective_examples() {
        let g = col(&[-1.0, 1.0]);
        assert_eq!(et_objective(&g, &[0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(et_objective(&g, &[0.5]).unwrap(), 0.5_f64.cosh().ln(), epsilon = 1e-15);
        let shifted = col(&[-1.0 + 0.3, 1.0 + 0.3]);
        let d = et_objective(&shifted, &[0.5]).unwrap() - et_objective(&g, &[0.5]).unwrap();
        assert_abs_diff_eq!(d, 0.15, epsilon = 1e-14);
    }

    #[test]
    fn objective_survives_huge_exponents() {
        let g = col(&[-1.0, 1000.0]);
        let v = et_objective(&g, &[1.0]).unwrap();
        assert_abs_diff_eq!(v, 1000.0 - 2.0_f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(et_objective(&col(&[f64::NAN, 1.0]), &[0.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn weights_examples() {
        let g = col(&[3.0_f64.ln(), 0.0]);
        let w = implied_weights(&g, &[1.0]).unwrap();
        assert_abs_diff_eq!(w[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.25, epsilon = 1e-15);
        let u = implied_weights(&g, &[0.0]).unwrap();
        assert_eq!(u, vec![0.5, 0.5]);
    }

    #[test]
    fn dual_examples() {
        let opts = DualOptions::default();
        let s = solve_dual(&col(&[-1.0, 1.0]), &opts).unwrap();
        assert_eq!(s.nu, vec![0.0]);
        assert_eq!(s.objective, 0.0);

        let s = solve_dual(&col(&[-1.2, 0.8]), &opts).unwrap();
        assert!(s.converged);
        assert_abs_diff_eq!(s.nu[0], 0.5 * 1.5_f64.ln(), epsilon = 1e-9);

        assert!(matches!(solve_dual(&col(&[0.5, 1.0, 2.0]), &opts), Err(Error::ConvexHullViolation)));
    }

    #[test]
    fn multivariate_hull_violation_detected() {
        // each column straddles zero, but every row has positive coordinate sum
        let g = DMatrix::from_row_slice(3, 2, &[2.0, -1.0, -1.0, 2.0, 1.0, 1.0]);
        assert!(matches!(solve_dual(&g, &DualOptions::default()), Err(Error::ConvexHullViolation)));
    }

    #[test]
    fn warm_start_examples() {
        let (nu, singular) = lemma_warm_start(&col(&[0.0, 2.0]));
        assert!(!singular);
        assert_abs_diff_eq!(nu[0], -1.0, epsilon = 1e-15);
        let (nu, _) = lemma_warm_start(&col(&[-1.0, 1.0]));
        assert_eq!(nu, vec![0.0]);
        let (nu, singular) = lemma_warm_start(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(singular);
        assert_eq!(nu, vec![0.0, 0.0]);
    }

    #[test]
    fn el_examples() {
        let opts = DualOptions::default();
        let s = el_dual(&col(&[-1.0, 1.0]), &opts).unwrap();
        assert_eq!(s.nu, vec![0.0]);
        assert_eq!(s.weights, vec![0.5, 0.5]);
        let s = el_dual(&col(&[-1.2, 0.8]), &opts).unwrap();
        assert!(s.converged);
        assert_abs_diff_eq!(s.nu[0], -0.4 / 1.92, epsilon = 1e-9);
        assert!(matches!(el_dual(&col(&[0.5, 1.0]), &opts), Err(Error::ConvexHullViolation)));
    }
}
