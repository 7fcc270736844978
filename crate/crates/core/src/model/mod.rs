//! Moment-condition models `E{g(X; θ)} = 0`.

mod mean;
mod regression;
mod restrict;
mod sem;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::{ActiveSet, Dataset};
use crate::error::{Error, Result};

pub use mean::{mean_model, MeanModel};
pub use regression::{linear_regression_model, projected_iv_model, LinearRegression};
pub use restrict::{restrict, Restricted};
pub use sem::{sem_model, SemModel, SemParams};

/// Shared, immutable handle to a moment model.
pub type ModelRef = Arc<dyn MomentModel>;

/// An unconditional moment model with `p` parameters and `r` estimating functions.
///
/// Implementations are immutable after construction. The batched methods have
/// row-by-row defaults; concrete models override them where a closed form is cheaper.
pub trait MomentModel: Send + Sync + fmt::Debug {
    fn n_params(&self) -> usize;
    fn n_moments(&self) -> usize;
    /// Length of one observation row.
    fn obs_dim(&self) -> usize;
    fn label(&self) -> String;

    fn moments_into(&self, x: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()>;

    /// `∂g(x; θ)/∂θᵀ`, an `r × p` matrix.
    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>>;

    fn check_domain(&self, _theta: &[f64]) -> Result<()> {
        Ok(())
    }

    /// Moment rows that stay informative when only `active` parameters are free.
    /// `None` keeps every row.
    fn informative_rows(&self, _active: &ActiveSet) -> Option<Vec<usize>> {
        None
    }

    /// Design matrix and response when the model is a linear regression.
    fn regression_design(&self, _data: &Dataset) -> Option<(DMatrix<f64>, DVector<f64>)> {
        None
    }

    /// Starting value used when a fit does not supply one.
    fn default_init(&self, _data: &Dataset) -> Vec<f64> {
        vec![0.0; self.n_params()]
    }

    /// Indices that carry the sparsity penalty. All parameters by default.
    fn penalized_indices(&self) -> Vec<usize> {
        (0..self.n_params()).collect()
    }

    fn moments(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_moments()];
        self.moments_into(x, theta, &mut out)?;
        Ok(out)
    }

    /// `n × r` matrix whose i-th row is `g(X_i; θ)`.
    fn moment_matrix(&self, data: &Dataset, theta: &[f64]) -> Result<DMatrix<f64>> {
        check_inputs(self, data, theta)?;
        let r = self.n_moments();
        let mut g = DMatrix::zeros(data.n(), r);
        let mut buf = vec![0.0; r];
        for (i, x) in data.rows().enumerate() {
            self.moments_into(x, theta, &mut buf)?;
            for (k, v) in buf.iter().enumerate() {
                g[(i, k)] = *v;
            }
        }
        Ok(g)
    }

    /// `Σ_i w_i ∂g(X_i; θ)/∂θᵀ`. Weights may be negative.
    fn weighted_jacobian(&self, data: &Dataset, theta: &[f64], weights: &[f64]) -> Result<DMatrix<f64>> {
        check_inputs(self, data, theta)?;
        if weights.len() != data.n() {
            return Err(Error::Layout { expected: data.n(), got: weights.len() });
        }
        let mut acc = DMatrix::zeros(self.n_moments(), self.n_params());
        for (x, &w) in data.rows().zip(weights) {
            if w != 0.0 {
                acc += self.jacobian(x, theta)? * w;
            }
        }
        Ok(acc)
    }
}

pub(crate) fn check_inputs<M: MomentModel + ?Sized>(model: &M, data: &Dataset, theta: &[f64]) -> Result<()> {
    if data.dim() != model.obs_dim() {
        return Err(Error::Layout { expected: model.obs_dim(), got: data.dim() });
    }
    check_theta(model, theta)
}

pub(crate) fn check_theta<M: MomentModel + ?Sized>(model: &M, theta: &[f64]) -> Result<()> {
    if theta.len() != model.n_params() {
        return Err(Error::InvalidDimension(format!(
            "parameter vector has length {} but model has {} parameters",
            theta.len(),
            model.n_params()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("parameter vector"));
    }
    Ok(())
}

pub(crate) fn check_obs(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Layout { expected, got: x.len() });
    }
    Ok(())
}

/// Default relative step for central differences.
pub const FD_STEP: f64 = 1e-6;

/// Central-difference Jacobian with step `h · max(1, |θ_j|)` per coordinate.
pub fn fd_jacobian(model: &dyn MomentModel, x: &[f64], theta: &[f64], h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    check_theta(model, theta)?;
    let (r, p) = (model.n_moments(), model.n_params());
    let mut jac = DMatrix::zeros(r, p);
    let mut plus = theta.to_vec();
    let mut minus = theta.to_vec();
    let mut gp = vec![0.0; r];
    let mut gm = vec![0.0; r];
    for j in 0..p {
        let step = h * theta[j].abs().max(1.0);
        plus[j] = theta[j] + step;
        minus[j] = theta[j] - step;
        model.check_domain(&plus)?;
        model.check_domain(&minus)?;
        model.moments_into(x, &plus, &mut gp)?;
        model.moments_into(x, &minus, &mut gm)?;
        for k in 0..r {
            jac[(k, j)] = (gp[k] - gm[k]) / (2.0 * step);
        }
        plus[j] = theta[j];
        minus[j] = theta[j];
    }
    Ok(jac)
}

/// `ḡ(θ) = n⁻¹ Σ g(X_i; θ)`.
pub fn moment_mean(model: &dyn MomentModel, data: &Dataset, theta: &[f64]) -> Result<Vec<f64>> {
    let g = model.moment_matrix(data, theta)?;
    let n = g.nrows() as f64;
    Ok(g.row_sum().iter().map(|v| v / n).collect())
}
