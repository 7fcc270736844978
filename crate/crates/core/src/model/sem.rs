use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_inputs, check_obs, check_theta, ModelRef, MomentModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::vech;

/// Structural equation model with `q` latent factors, two indicators each.
///
/// `y = Zω + ε`, `ω = Uω + ζ`, so `Cov(y) = Z A Ψ Aᵀ Zᵀ + Φ` with `A = (I − U)⁻¹`.
/// The first indicator of factor `l` has a fixed unit loading; the second carries
/// the free loading `b_l`.
///
/// Parameter packing (length `q² + 3q`):
/// `b_1..b_q`, the `q(q−1)` off-diagonal entries of `U` row by row, the `2q`
/// diagonal entries of `Φ`, then the `q` diagonal entries of `Ψ`.
///
/// With [`SemModel::log_variances`] the `Φ` and `Ψ` slots hold log-variances,
/// which keeps them positive during optimization.
#[derive(Debug, Clone)]
pub struct SemModel {
    q: usize,
    log_scale: bool,
}

pub fn sem_model(q_omega: usize) -> Result<ModelRef> {
    Ok(Arc::new(SemModel::new(q_omega)?))
}

/// Unpacked SEM parameters on the natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemParams {
    pub loadings: Vec<f64>,
    /// `q × q` coupling matrix with zero diagonal, stored row-major.
    pub couplings: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl SemParams {
    pub fn q(&self) -> usize {
        self.loadings.len()
    }

    /// Loadings, variances and the first upper off-diagonal of `U` all set to `value`.
    pub fn upper_band(q: usize, value: f64) -> Self {
        let mut couplings = vec![0.0; q * q];
        for j in 0..q.saturating_sub(1) {
            couplings[j * q + j + 1] = value;
        }
        SemParams {
            loadings: vec![value; q],
            couplings,
            phi: vec![value; 2 * q],
            psi: vec![value; q],
        }
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings[i * self.q() + j]
    }

    pub fn pack(&self) -> Vec<f64> {
        let q = self.q();
        let mut out = Vec::with_capacity(q * q + 3 * q);
        out.extend_from_slice(&self.loadings);
        for i in 0..q {
            for j in 0..q {
                if i != j {
                    out.push(self.couplings[i * q + j]);
                }
            }
        }
        out.extend_from_slice(&self.phi);
        out.extend_from_slice(&self.psi);
        out
    }

    pub fn unpack(q: usize, theta: &[f64]) -> Result<Self> {
        if theta.len() != q * q + 3 * q {
            return Err(Error::InvalidDimension(format!(
                "SEM with q={q} has {} parameters, got {}",
                q * q + 3 * q,
                theta.len()
            )));
        }
        let loadings = theta[..q].to_vec();
        let mut couplings = vec![0.0; q * q];
        let mut k = q;
        for i in 0..q {
            for j in 0..q {
                if i != j {
                    couplings[i * q + j] = theta[k];
                    k += 1;
                }
            }
        }
        let phi = theta[k..k + 2 * q].to_vec();
        let psi = theta[k + 2 * q..].to_vec();
        Ok(SemParams { loadings, couplings, phi, psi })
    }
}

/// Pieces of the implied covariance reused by the Jacobian.
struct Implied {
    z: DMatrix<f64>,
    a: DMatrix<f64>,
    m: DMatrix<f64>,
    omega: DMatrix<f64>,
}

impl SemModel {
    pub fn new(q_omega: usize) -> Result<Self> {
        if q_omega < 2 {
            return Err(Error::InvalidDimension(format!("SEM needs q_omega >= 2, got {q_omega}")));
        }
        Ok(SemModel { q: q_omega, log_scale: false })
    }

    /// Same model with variances parameterized on the log scale.
    pub fn log_variances(&self) -> Self {
        SemModel { q: self.q, log_scale: true }
    }

    pub fn is_log_scale(&self) -> bool {
        self.log_scale
    }

    pub fn q_omega(&self) -> usize {
        self.q
    }

    pub fn observed_dim(&self) -> usize {
        2 * self.q
    }

    pub fn loading_range(&self) -> Range<usize> {
        0..self.q
    }

    pub fn coupling_range(&self) -> Range<usize> {
        self.q..self.q * self.q
    }

    pub fn phi_range(&self) -> Range<usize> {
        self.q * self.q..self.q * self.q + 2 * self.q
    }

    pub fn psi_range(&self) -> Range<usize> {
        self.q * self.q + 2 * self.q..self.q * self.q + 3 * self.q
    }

    /// Parameter blocks in fitting order: loadings, couplings, Φ, Ψ.
    pub fn blocks(&self) -> [Range<usize>; 4] {
        [self.loading_range(), self.coupling_range(), self.phi_range(), self.psi_range()]
    }

    /// Packed index of coupling `U[i][j]`, `i ≠ j`.
    pub fn coupling_index(&self, i: usize, j: usize) -> Option<usize> {
        if i == j || i >= self.q || j >= self.q {
            return None;
        }
        Some(self.q + i * (self.q - 1) + if j > i { j - 1 } else { j })
    }

    /// `(i, j)` position in `U` of each packed coupling parameter, in packing order.
    pub fn coupling_positions(&self) -> Vec<(usize, usize)> {
        let q = self.q;
        (0..q)
            .flat_map(|i| (0..q).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect()
    }

    /// Natural-scale parameters from this model's internal vector.
    pub fn to_natural(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = theta.to_vec();
        if self.log_scale {
            for k in self.phi_range().start..self.psi_range().end {
                out[k] = out[k].exp();
            }
        }
        out
    }

    /// Internal vector from natural-scale parameters.
    pub fn from_natural(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = theta.to_vec();
        if self.log_scale {
            for k in self.phi_range().start..self.psi_range().end {
                out[k] = out[k].max(1e-300).ln();
            }
        }
        out
    }

    /// Identification start: unit loadings and variances, couplings 0.01.
    pub fn identification_start(&self) -> Vec<f64> {
        let q = self.q;
        let params = SemParams {
            loadings: vec![1.0; q],
            couplings: (0..q * q).map(|k| if k / q == k % q { 0.0 } else { 0.01 }).collect(),
            phi: vec![1.0; 2 * q],
            psi: vec![1.0; q],
        };
        self.from_natural(&params.pack())
    }

    /// Implied covariance `Z A Ψ Aᵀ Zᵀ + Φ` at natural-scale parameters.
    pub fn implied_covariance(&self, params: &SemParams) -> Result<DMatrix<f64>> {
        Ok(self.implied(params)?.omega)
    }

    /// `2q × q` loadings: each latent has a unit-loading reference indicator
    /// followed by one free indicator.
    pub fn loading_matrix(&self, params: &SemParams) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(2 * self.q, self.q);
        for l in 0..self.q {
            z[(2 * l, l)] = 1.0;
            z[(2 * l + 1, l)] = params.loadings[l];
        }
        z
    }

    fn implied(&self, params: &SemParams) -> Result<Implied> {
        let q = self.q;
        if params.q() != q {
            return Err(Error::InvalidDimension(format!("expected q={q}, got {}", params.q())));
        }
        if params.phi.iter().chain(&params.psi).any(|v| *v < 0.0) {
            return Err(Error::Domain("negative variance parameter".into()));
        }
        let i_minus_u = DMatrix::from_fn(q, q, |i, j| if i == j { 1.0 } else { -params.coupling(i, j) });
        let lu = i_minus_u.clone().lu();
        let det = lu.determinant();
        if !det.is_finite() || det.abs() < 1e-10 {
            return Err(Error::SingularStructure);
        }
        let a = lu.try_inverse().ok_or(Error::SingularStructure)?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularStructure);
        }
        let psi = DMatrix::from_diagonal(&DVector::from_column_slice(&params.psi));
        let m = &a * psi * a.transpose();
        let z = self.loading_matrix(params);
        let mut omega = &z * &m * z.transpose();
        for k in 0..2 * q {
            omega[(k, k)] += params.phi[k];
        }
        // enforce exact symmetry
        let omega = (&omega + omega.transpose()) * 0.5;
        Ok(Implied { z, a, m, omega })
    }

    fn natural_params(&self, theta: &[f64]) -> Result<SemParams> {
        SemParams::unpack(self.q, &self.to_natural(theta))
    }

    /// `∂ vech(Ω) / ∂θᵀ` (`r × p`).
    fn covariance_jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let params = self.natural_params(theta)?;
        let imp = self.implied(&params)?;
        let q = self.q;
        let py = 2 * q;
        let r = py * (py + 1) / 2;
        let p = self.n_params();
        let mut jac = DMatrix::zeros(r, p);
        let put = |col: usize, d: &DMatrix<f64>, jac: &mut DMatrix<f64>| {
            for (k, v) in vech(d).into_iter().enumerate() {
                jac[(k, col)] = v;
            }
        };
        // loadings
        for l in 0..q {
            let mut dz = DMatrix::zeros(py, q);
            dz[(2 * l + 1, l)] = 1.0;
            let left = &dz * &imp.m * imp.z.transpose();
            let d = &left + left.transpose();
            put(l, &d, &mut jac);
        }
        // couplings: dA = A E_ij A
        let psi = DMatrix::from_diagonal(&DVector::from_column_slice(&params.psi));
        for (k, (i, j)) in self.coupling_positions().into_iter().enumerate() {
            let da = imp.a.column(i) * imp.a.row(j);
            let half = &da * &psi * imp.a.transpose();
            let dm = &half + half.transpose();
            let d = &imp.z * dm * imp.z.transpose();
            put(self.q + k, &d, &mut jac);
        }
        // measurement variances
        for k in 0..py {
            let mut d = DMatrix::zeros(py, py);
            d[(k, k)] = if self.log_scale { params.phi[k] } else { 1.0 };
            put(self.phi_range().start + k, &d, &mut jac);
        }
        // latent variances
        for l in 0..q {
            let za = &imp.z * imp.a.column(l);
            let scale = if self.log_scale { params.psi[l] } else { 1.0 };
            let d = &za * za.transpose() * scale;
            put(self.psi_range().start + l, &d, &mut jac);
        }
        Ok(jac)
    }
}

impl MomentModel for SemModel {
    fn n_params(&self) -> usize {
        self.q * self.q + 3 * self.q
    }

    fn n_moments(&self) -> usize {
        let py = 2 * self.q;
        py * (py + 1) / 2
    }

    fn obs_dim(&self) -> usize {
        2 * self.q
    }

    fn label(&self) -> String {
        format!("sem(q={})", self.q)
    }

    fn check_domain(&self, theta: &[f64]) -> Result<()> {
        check_theta(self, theta)?;
        self.implied(&self.natural_params(theta)?).map(|_| ())
    }

    fn moments_into(&self, x: &[f64], theta: &[f64], out: &mut [f64]) -> Result<()> {
        check_obs(self.obs_dim(), x)?;
        check_theta(self, theta)?;
        let omega = self.implied(&self.natural_params(theta)?)?.omega;
        let py = 2 * self.q;
        let mut k = 0;
        for j in 0..py {
            for i in j..py {
                out[k] = x[i] * x[j] - omega[(i, j)];
                k += 1;
            }
        }
        Ok(())
    }

    fn jacobian(&self, x: &[f64], theta: &[f64]) -> Result<DMatrix<f64>> {
        check_obs(self.obs_dim(), x)?;
        check_theta(self, theta)?;
        Ok(-self.covariance_jacobian(theta)?)
    }

    fn default_init(&self, _data: &Dataset) -> Vec<f64> {
        self.identification_start()
    }

    fn penalized_indices(&self) -> Vec<usize> {
        self.coupling_range().collect()
    }

    fn moment_matrix(&self, data: &Dataset, theta: &[f64]) -> Result<DMatrix<f64>> {
        check_inputs(self, data, theta)?;
        let omega = self.implied(&self.natural_params(theta)?)?.omega;
        let py = 2 * self.q;
        let o = vech(&omega);
        let mut g = DMatrix::zeros(data.n(), o.len());
        for (row, x) in data.rows().enumerate() {
            let mut k = 0;
            for j in 0..py {
                for i in j..py {
                    g[(row, k)] = x[i] * x[j] - o[k];
                    k += 1;
                }
            }
        }
        Ok(g)
    }

    fn weighted_jacobian(&self, data: &Dataset, theta: &[f64], weights: &[f64]) -> Result<DMatrix<f64>> {
        check_inputs(self, data, theta)?;
        if weights.len() != data.n() {
            return Err(Error::Layout { expected: data.n(), got: weights.len() });
        }
        let total: f64 = weights.iter().sum();
        Ok(self.covariance_jacobian(theta)? * (-total))
    }
}
