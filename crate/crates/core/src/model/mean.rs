use std::sync::Arc;

use nalgebra::DMatrix;

use super::{check_inputs, check_obs, check_theta, ModelRef, MomentModel};
use crate::data::{ActiveSet, Dataset};
use crate::error::{Error, Result};

/// `g(x; θ) = x − θ`.
#[derive(Debug, Clone)]
pub struct MeanModel {
    p: usize,
}

pub fn mean_model(p: usize) -> Result<ModelRef> {
    if p == 0 {
        return Err(Error::InvalidDimension("mean model needs p >= 1".into()));
    }
    Ok(Arc::new(MeanModel { p }))
}

impl MomentModel for MeanModel {
    fn n_params(&self) -> usize {
        self.p
    }

    fn n_moments(&self) -> usize {
        self.p
    }

    fn obs_dim(&self) -> usize {
        self.p
    }

    fn label(&self) -> String {
        format!("mean(p={})", self.p)
    }

    fn moments_into(&self, x: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()> {
        check_obs(self.p, x)?;
        check_theta(self, theta)?;
        for ((o, xv), t) in out.iter_mut().zip(x).zip(theta) {
            *o = xv - t;
        }
        Ok(())
    }

    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        check_obs(self.p, x)?;
        check_theta(self, theta)?;
        Ok(-DMatrix::identity(self.p, self.p))
    }

    fn informative_rows(&self, active: &ActiveSet) -> Option<Vec<usize>> {
        Some(active.indices().to_vec())
    }

    fn default_init(&self, data: &Dataset) -> Vec<f64> {
        data.column_means()
    }

    fn moment_matrix(&self, data: &Dataset, theta: &[f64]) -> Result<DMatrix<f64>> {
        check_inputs(self, data, theta)?;
        Ok(DMatrix::from_fn(data.n(), self.p, |i, j| data.row(i)[j] - theta[j]))
    }

    fn weighted_jacobian(&self, data: &Dataset, theta: &[f64], weights: &[f64]) -> Result<DMatrix<f64>> {
        check_inputs(self, data, theta)?;
        let total: f64 = weights.iter().sum();
        Ok(DMatrix::identity(self.p, self.p) * (-total))
    }
}
