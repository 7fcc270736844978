use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{check_obs, check_theta, ModelRef, MomentModel};
use crate::data::{ActiveSet, Dataset};
use crate::error::{Error, Result};
use crate::linalg;

/// A model whose free parameters are the `active` coordinates of `inner`; the
/// remaining coordinates are pinned at zero and uninformative moment rows are dropped.
#[derive(Debug, Clone)]
pub struct Restricted {
    inner: ModelRef,
    active: ActiveSet,
    rows: Vec<usize>,
}

pub fn restrict(model: ModelRef, active: &ActiveSet) -> Result<ModelRef> {
    Ok(Arc::new(Restricted::new(model, active)?))
}

impl Restricted {
    pub fn new(inner: ModelRef, active: &ActiveSet) -> Result<Self> {
        if active.is_empty() {
            return Err(Error::EmptyActiveSet);
        }
        if active.dimension() != inner.n_params() {
            return Err(Error::InvalidDimension(format!(
                "active set over {} parameters applied to a model with {}",
                active.dimension(),
                inner.n_params()
            )));
        }
        let rows = inner
            .informative_rows(active)
            .unwrap_or_else(|| (0..inner.n_moments()).collect());
        Ok(Restricted { inner, active: active.clone(), rows })
    }

    pub fn active(&self) -> &ActiveSet {
        &self.active
    }

    pub fn inner(&self) -> &ModelRef {
        &self.inner
    }

    /// Retained rows of the inner model's moment vector.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    fn full_theta(&self, theta: &[f64]) -> Vec<f64> {
        self.active.expand(theta)
    }

    fn select(&self, m: &DMatrix<f64>, by_rows: bool) -> DMatrix<f64> {
        if by_rows {
            DMatrix::from_fn(self.rows.len(), self.active.len(), |i, j| m[(self.rows[i], self.active.indices()[j])])
        } else {
            DMatrix::from_fn(m.nrows(), self.rows.len(), |i, k| m[(i, self.rows[k])])
        }
    }
}

impl MomentModel for Restricted {
    fn n_params(&self) -> usize {
        self.active.len()
    }

    fn n_moments(&self) -> usize {
        self.rows.len()
    }

    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    fn label(&self) -> String {
        format!("{}|{:?}", self.inner.label(), self.active.indices())
    }

    fn moments_into(&self, x: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()> {
        check_obs(self.obs_dim(), x)?;
        check_theta(self, theta)?;
        let full = self.inner.moments(x, &self.full_theta(theta))?;
        for (o, &k) in out.iter_mut().zip(&self.rows) {
            *o = full[k];
        }
        Ok(())
    }

    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        check_theta(self, theta)?;
        let full = self.inner.jacobian(x, &self.full_theta(theta))?;
        Ok(self.select(&full, true))
    }

    fn check_domain(&self, theta: &[f64]) -> Result<()> {
        self.inner.check_domain(&self.full_theta(theta))
    }

    fn informative_rows(&self, active: &ActiveSet) -> Option<Vec<usize>> {
        let composed = self.active.compose(active).ok()?;
        let inner_rows = self.inner.informative_rows(&composed)?;
        Some(
            inner_rows
                .iter()
                .filter_map(|r| self.rows.iter().position(|k| k == r))
                .collect(),
        )
    }

    fn regression_design(&self, data: &Dataset) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let (x, y) = self.inner.regression_design(data)?;
        let cols: Vec<_> = self.active.indices().iter().map(|&j| x.column(j).into_owned()).collect();
        Some((DMatrix::from_columns(&cols), y))
    }

    fn default_init(&self, data: &Dataset) -> Vec<f64> {
        if let Some(beta) = self.regression_design(data).and_then(|(x, y)| linalg::least_squares(&x, &y)) {
            return beta.iter().copied().collect();
        }
        self.active.gather(&self.inner.default_init(data))
    }

    fn penalized_indices(&self) -> Vec<usize> {
        self.inner
            .penalized_indices()
            .into_iter()
            .filter_map(|j| self.active.position(j))
            .collect()
    }

    fn moment_matrix(&self, data: &Dataset, theta: &[f64]) -> Result<DMatrix<f64>> {
        check_theta(self, theta)?;
        let full = self.inner.moment_matrix(data, &self.full_theta(theta))?;
        Ok(self.select(&full, false))
    }

    fn weighted_jacobian(&self, data: &Dataset, theta: &[f64], weights: &[f64]) -> Result<DMatrix<f64>> {
        check_theta(self, theta)?;
        let full = self.inner.weighted_jacobian(data, &self.full_theta(theta), weights)?;
        Ok(self.select(&full, true))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{linear_regression_model, mean_model};

    #[test]
    fn mean_restriction_keeps_active_rows() {
        let m = mean_model(7).unwrap();
        let r = restrict(m, &ActiveSet::new(vec![0, 1, 2], 7).unwrap()).unwrap();
        assert_eq!(r.n_params(), 3);
        assert_eq!(r.n_moments(), 3);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        assert_eq!(r.moments(&x, &[0.5, 0.5, 0.5]).unwrap(), vec![0.5, 1.5, 2.5]);
    }

    #[test]
    fn regression_restriction_keeps_active_scores() {
        let m = linear_regression_model(5, false).unwrap();
        let r = restrict(m, &ActiveSet::new(vec![0, 1, 4], 5).unwrap()).unwrap();
        assert_eq!(r.n_moments(), 3);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 10.0];
        // residual: 10 − (1·1 + 2·1 + 5·1) = 2
        assert_eq!(r.moments(&x, &[1.0, 1.0, 1.0]).unwrap(), vec![2.0, 4.0, 10.0]);
    }

    #[test]
    fn full_restriction_is_identity() {
        let m = linear_regression_model(3, true).unwrap();
        let r = restrict(m.clone(), &ActiveSet::full(3)).unwrap();
        let x = [0.3, -1.0, 2.0, 0.1, 0.5, -0.7, 1.2];
        let t = [0.2, 0.4, -0.1];
        assert_eq!(r.moments(&x, &t).unwrap(), m.moments(&x, &t).unwrap());
        assert_eq!(r.jacobian(&x, &t).unwrap(), m.jacobian(&x, &t).unwrap());
    }

    #[test]
    fn empty_active_set_rejected() {
        let m = mean_model(3).unwrap();
        assert!(matches!(restrict(m, &ActiveSet::empty(3)), Err(Error::EmptyActiveSet)));
    }

    #[test]
    fn nested_restriction_composes() {
        let m = linear_regression_model(5, true).unwrap();
        let outer = ActiveSet::new(vec![0, 2, 3, 4], 5).unwrap();
        let inner = ActiveSet::new(vec![1, 3], 4).unwrap();
        let twice = restrict(restrict(m.clone(), &outer).unwrap(), &inner).unwrap();
        let once = restrict(m, &outer.compose(&inner).unwrap()).unwrap();
        let x: Vec<f64> = (0..11).map(|k| (k as f64 * 0.37).sin()).collect();
        let t = [0.3, -0.8];
        assert_eq!(twice.n_moments(), once.n_moments());
        assert_eq!(twice.moments(&x, &t).unwrap(), once.moments(&x, &t).unwrap());
        assert_eq!(twice.jacobian(&x, &t).unwrap(), once.jacobian(&x, &t).unwrap());
    }
}
