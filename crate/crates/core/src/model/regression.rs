use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{check_inputs, check_obs, check_theta, ModelRef, MomentModel};
use crate::data::{ActiveSet, Dataset};
use crate::error::{Error, Result};
use crate::linalg;

/// Score equations of a linear regression, optionally stacked with instrument scores.
///
/// Observation layout: `(z_1..z_p, [u_1..u_p], y)`. Without instruments
/// `g_j = z_j (y − zᵀθ)`; with instruments the `u_j (y − zᵀθ)` rows are appended (r = 2p).
#[derive(Debug, Clone)]
pub struct LinearRegression {
    p: usize,
    instrumented: bool,
    label: String,
}

pub fn linear_regression_model(p: usize, instrumented: bool) -> Result<ModelRef> {
    Ok(Arc::new(LinearRegression::new(p, instrumented)?))
}

impl LinearRegression {
    pub fn new(p: usize, instrumented: bool) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidDimension("regression model needs p >= 1".into()));
        }
        let label = if instrumented {
            format!("linreg-iv(p={p})")
        } else {
            format!("linreg(p={p})")
        };
        Ok(LinearRegression { p, instrumented, label })
    }

    fn residual(&self, x: &[f64], theta: &[f64]) -> f64 {
        let y = x[x.len() - 1];
        y - x[..self.p].iter().zip(theta).map(|(z, t)| z * t).sum::<f64>()
    }

    fn scale_rows(&self) -> usize {
        if self.instrumented {
            2 * self.p
        } else {
            self.p
        }
    }
}

impl MomentModel for LinearRegression {
    fn n_params(&self) -> usize {
        self.p
    }

    fn n_moments(&self) -> usize {
        self.scale_rows()
    }

    fn obs_dim(&self) -> usize {
        self.scale_rows() + 1
    }

    fn label(&self) -> String {
        self.label.clone()
    }

    fn moments_into(&self, x: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()> {
        check_obs(self.obs_dim(), x)?;
        check_theta(self, theta)?;
        let e = self.residual(x, theta);
        for (o, v) in out.iter_mut().zip(&x[..self.scale_rows()]) {
            *o = v * e;
        }
        Ok(())
    }

    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        check_obs(self.obs_dim(), x)?;
        check_theta(self, theta)?;
        let r = self.scale_rows();
        Ok(DMatrix::from_fn(r, self.p, |j, k| -x[j] * x[k]))
    }

    fn informative_rows(&self, active: &ActiveSet) -> Option<Vec<usize>> {
        let mut rows = active.indices().to_vec();
        if self.instrumented {
            rows.extend(active.indices().iter().map(|j| j + self.p));
        }
        Some(rows)
    }

    fn regression_design(&self, data: &Dataset) -> Option<(DMatrix<f64>, DVector<f64>)> {
        if data.dim() != self.obs_dim() {
            return None;
        }
        let x = DMatrix::from_fn(data.n(), self.p, |i, j| data.row(i)[j]);
        let y = DVector::from_fn(data.n(), |i, _| data.row(i)[data.dim() - 1]);
        Some((x, y))
    }

    fn default_init(&self, data: &Dataset) -> Vec<f64> {
        self.regression_design(data)
            .and_then(|(x, y)| linalg::least_squares(&x, &y))
            .map(|b| b.iter().copied().collect())
            .unwrap_or_else(|| vec![0.0; self.p])
    }

    fn moment_matrix(&self, data: &Dataset, theta: &[f64]) -> Result<DMatrix<f64>> {
        check_inputs(self, data, theta)?;
        let r = self.scale_rows();
        let mut g = DMatrix::zeros(data.n(), r);
        for (i, x) in data.rows().enumerate() {
            let e = self.residual(x, theta);
            for k in 0..r {
                g[(i, k)] = x[k] * e;
            }
        }
        Ok(g)
    }

    fn weighted_jacobian(&self, data: &Dataset, theta: &[f64], weights: &[f64]) -> Result<DMatrix<f64>> {
        check_inputs(self, data, theta)?;
        if weights.len() != data.n() {
            return Err(Error::Layout { expected: data.n(), got: weights.len() });
        }
        let r = self.scale_rows();
        // −Σ w_i s_i z_iᵀ with s_i the first r entries of the row
        let s = DMatrix::from_fn(data.n(), r, |i, k| data.row(i)[k] * weights[i]);
        let z = DMatrix::from_fn(data.n(), self.p, |i, k| data.row(i)[k]);
        Ok(-s.tr_mul(&z))
    }
}

/// Two-stage projection `X̃ = D(DᵀD)⁻¹DᵀY` followed by the score model on `(X̃, y)`.
///
/// Returns the model together with the projected dataset it consumes.
pub fn projected_iv_model(
    endogenous: &DMatrix<f64>,
    instruments: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(ModelRef, Dataset)> {
    let n = endogenous.nrows();
    let p = endogenous.ncols();
    let k = instruments.ncols();
    if instruments.nrows() != n || y.len() != n {
        return Err(Error::Layout { expected: n, got: instruments.nrows().min(y.len()) });
    }
    if k < p {
        return Err(Error::InvalidDimension(format!("need at least as many instruments ({k}) as regressors ({p})")));
    }
    let deficient = linalg::dependent_columns(instruments, 1e-10).len();
    if deficient > 0 {
        return Err(Error::RankDeficient { deficient, columns: k });
    }
    let dtd = linalg::gram(instruments);
    let dty = instruments.tr_mul(endogenous);
    let coef = dtd
        .cholesky()
        .map(|c| c.solve(&dty))
        .ok_or(Error::RankDeficient { deficient: 1, columns: k })?;
    let projected = instruments * coef;
    let mut values = Vec::with_capacity(n * (p + 1));
    for i in 0..n {
        for j in 0..p {
            values.push(projected[(i, j)]);
        }
        values.push(y[i]);
    }
    let data = Dataset::from_row_major(n, p + 1, values)?;
    let mut model = LinearRegression::new(p, false)?;
    model.label = format!("projected-iv(p={p},k={k})");
    Ok((Arc::new(model), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::moment_mean;

    #[test]
    fn spec_examples() {
        let m = linear_regression_model(1, false).unwrap();
        assert_eq!(m.moments(&[2.0, 6.0], &[3.0]).unwrap(), vec![0.0]);

        let iv = linear_regression_model(1, true).unwrap();
        assert_eq!(iv.moments(&[1.0, 2.0, 5.0], &[3.0]).unwrap(), vec![2.0, 4.0]);

        let m2 = linear_regression_model(2, false).unwrap();
        assert_eq!(m2.moments(&[1.0, 1.0, 0.0], &[3.0, 1.5]).unwrap(), vec![-4.5, -4.5]);
    }

    #[test]
    fn layout_mismatch() {
        let m = linear_regression_model(2, true).unwrap();
        assert!(matches!(m.moments(&[1.0, 2.0, 3.0], &[0.0, 0.0]), Err(Error::Layout { expected: 5, got: 3 })));
    }

    #[test]
    fn projection_onto_constant_is_column_mean() {
        let y_end = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let d = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]);
        let y = DVector::from_column_slice(&[0.0, 0.0, 0.0]);
        let (_, data) = projected_iv_model(&y_end, &d, &y).unwrap();
        for row in data.rows() {
            assert!((row[0] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn instruments_equal_regressors_give_ols() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 2.0, -1.0, 0.0, 3.0, 1.5, 1.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, -1.0, 0.5]);
        let (model, data) = projected_iv_model(&x, &x, &y).unwrap();
        for (i, row) in data.rows().enumerate() {
            assert!((row[0] - x[(i, 0)]).abs() < 1e-10);
            assert!((row[1] - x[(i, 1)]).abs() < 1e-10);
        }
        let ols = linalg::least_squares(&x, &y).unwrap();
        let gbar = moment_mean(model.as_ref(), &data, ols.as_slice()).unwrap();
        assert!(gbar.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn exact_fit_has_zero_mean_moment() {
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let d = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = &x * DVector::from_column_slice(&[2.0]);
        let (model, data) = projected_iv_model(&x, &d, &y).unwrap();
        // x lies in the column space of d, so the projection is exact
        let gbar = moment_mean(model.as_ref(), &data, &[2.0]).unwrap();
        assert!(gbar[0].abs() < 1e-10);
    }

    #[test]
    fn singular_instruments() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let d = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            projected_iv_model(&x, &d, &y),
            Err(Error::RankDeficient { deficient: 1, columns: 2 })
        ));
    }
}
