//! Comparison estimators: sample mean, hard/soft thresholding, the L1-penalized
//! quadratic-loss estimator and penalized empirical likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dual::DualKind;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::MomentModel;
use crate::optimizer::{fit_with_kind, FitOptions, PetFit};
use crate::penalty::PenaltySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineMethod {
    Mean,
    HardThreshold,
    SoftThreshold,
    QuadraticLoss,
    PenalizedEl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    pub theta: Vec<f64>,
    pub method: BaselineMethod,
    /// Threshold or penalty level; empty for the plain mean.
    pub tuning: Vec<f64>,
}

pub fn mean_estimator(data: &Dataset) -> BaselineEstimate {
    BaselineEstimate { theta: data.column_means(), method: BaselineMethod::Mean, tuning: Vec::new() }
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be >= 0, got {t}")));
    }
    Ok(())
}

/// Keep `X̄_j` when `|X̄_j| > γ₁`, zero otherwise.
pub fn hard_threshold(xbar: &[f64], gamma1: f64) -> Result<BaselineEstimate> {
    check_threshold(gamma1)?;
    Ok(BaselineEstimate {
        theta: xbar.iter().map(|&v| if v.abs() > gamma1 { v } else { 0.0 }).collect(),
        method: BaselineMethod::HardThreshold,
        tuning: vec![gamma1],
    })
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// `sign(X̄_j)(|X̄_j| − γ₂)₊`.
pub fn soft_threshold(xbar: &[f64], gamma2: f64) -> Result<BaselineEstimate> {
    check_threshold(gamma2)?;
    Ok(BaselineEstimate {
        theta: xbar.iter().map(|&v| soft(v, gamma2)).collect(),
        method: BaselineMethod::SoftThreshold,
        tuning: vec![gamma2],
    })
}

pub const QL_MAX_SWEEPS: usize = 10_000;
const QL_TOL: f64 = 1e-8;

/// Sample covariance (divisor n) of the rows and its inverse, with a ridge fallback.
pub fn covariance_inverse(data: &Dataset) -> (Vec<f64>, DMatrix<f64>) {
    let mean = data.column_means();
    let p = data.dim();
    let n = data.n() as f64;
    let mut w = DMatrix::zeros(p, p);
    for row in data.rows() {
        let d = DVector::from_iterator(p, row.iter().zip(&mean).map(|(x, m)| x - m));
        w += &d * d.transpose();
    }
    w /= n;
    let inv = linalg::inverse_spd(&w).unwrap_or_else(|| {
        let mut ridged = w.clone();
        for j in 0..p {
            ridged[(j, j)] += 1e-8;
        }
        linalg::inverse_spd(&ridged).unwrap_or_else(|| linalg::pinv_symmetric(&w, 1e-12))
    });
    (mean, inv)
}

/// `argmin (X̄−θ)ᵀ W⁻¹ (X̄−θ) + γ₃ Σ|θ_j|` with `W` the sample covariance.
pub fn quadratic_loss(data: &Dataset, gamma3: f64) -> Result<BaselineEstimate> {
    check_threshold(gamma3)?;
    let (xbar, q) = covariance_inverse(data);
    let theta = lasso_quadratic(&xbar, &q, gamma3)?;
    Ok(BaselineEstimate { theta, method: BaselineMethod::QuadraticLoss, tuning: vec![gamma3] })
}

/// Cyclic coordinate descent for `(x̄−θ)ᵀQ(x̄−θ) + γ Σ|θ_j|`, `Q` symmetric positive definite.
pub fn lasso_quadratic(xbar: &[f64], q: &DMatrix<f64>, gamma: f64) -> Result<Vec<f64>> {
    let p = xbar.len();
    if q.nrows() != p || q.ncols() != p {
        return Err(Error::InvalidDimension(format!("weight matrix must be {p}x{p}")));
    }
    if gamma == 0.0 {
        return Ok(xbar.to_vec());
    }
    let mut theta = xbar.to_vec();
    // residual r = Q(θ − x̄), kept up to date
    let mut r = vec![0.0; p];
    for sweep in 1..=QL_MAX_SWEEPS {
        let mut max_change = 0.0_f64;
        for j in 0..p {
            let qjj = q[(j, j)];
            if !(qjj > 0.0) {
                return Err(Error::InvalidArgument("weight matrix must have a positive diagonal".into()));
            }
            let cross = r[j] - qjj * (theta[j] - xbar[j]);
            let u = xbar[j] - cross / qjj;
            let new = soft(u, gamma / (2.0 * qjj));
            let delta = new - theta[j];
            if delta != 0.0 {
                for k in 0..p {
                    r[k] += q[(k, j)] * delta;
                }
                theta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < QL_TOL * 1e-2 && kkt_residual(&r, &theta, gamma) <= QL_TOL {
            return Ok(theta);
        }
        if sweep == QL_MAX_SWEEPS {
            break;
        }
    }
    Err(Error::NoConvergence { sweeps: QL_MAX_SWEEPS, best: theta })
}

/// Largest violation of the lasso optimality conditions, given `r = Q(θ − x̄)`.
fn kkt_residual(r: &[f64], theta: &[f64], gamma: f64) -> f64 {
    r.iter()
        .zip(theta)
        .map(|(&rj, &tj)| {
            let g = 2.0 * rj;
            if tj != 0.0 {
                (g + gamma * tj.signum()).abs()
            } else {
                (g.abs() - gamma).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Penalized empirical likelihood: the same outer loop with the EL inner problem.
pub fn pel_fit(model: &dyn MomentModel, data: &Dataset, penalty: &PenaltySpec, opts: &FitOptions) -> Result<PetFit> {
    fit_with_kind(model, data, penalty, opts, DualKind::EmpiricalLikelihood)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_examples() {
        let d = Dataset::from_rows(&[vec![0.0, 0.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(mean_estimator(&d).theta, vec![1.0, 2.0]);
    }

    #[test]
    fn threshold_examples() {
        let x = [1.0, 0.6, 0.3, 0.05];
        assert_eq!(hard_threshold(&x, 0.2).unwrap().theta, vec![1.0, 0.6, 0.3, 0.0]);
        assert_eq!(hard_threshold(&x, 0.0).unwrap().theta, x.to_vec());
        assert_eq!(hard_threshold(&x, 2.0).unwrap().theta, vec![0.0; 4]);
        let s = soft_threshold(&[1.0, -0.6], 0.3).unwrap().theta;
        assert_abs_diff_eq!(s[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], -0.3, epsilon = 1e-15);
        assert_eq!(soft_threshold(&[0.2, -0.3], 0.3).unwrap().theta, vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_identity_weight_is_soft_threshold() {
        let q = DMatrix::identity(3, 3);
        let x = [1.0, -0.4, 0.05];
        let t = lasso_quadratic(&x, &q, 0.3).unwrap();
        let s = soft_threshold(&x, 0.15).unwrap().theta;
        for (a, b) in t.iter().zip(&s) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn quadratic_limits() {
        let d = Dataset::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.5], vec![1.0, 3.0]]).unwrap();
        assert_eq!(quadratic_loss(&d, 0.0).unwrap().theta, d.column_means());
        assert_eq!(quadratic_loss(&d, 1e6).unwrap().theta, vec![0.0, 0.0]);
    }
}
