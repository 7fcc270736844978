//! Data generators for the three simulation designs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tiltfit_core::model::{SemModel, SemParams};
use tiltfit_core::Dataset;

use crate::error::{Result, SimError};
use crate::rng::{chi_squared, normal};

/// Shape of the skewed innovations in the mean design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `χ²₁` components: the mean model is correctly specified.
    Cm,
    /// `χ²₁.₂` components centred as if they were `χ²₁`: every mean is shifted.
    Ms,
}

impl std::str::FromStr for Regime {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cm" => Ok(Regime::Cm),
            "ms" => Ok(Regime::Ms),
            other => Err(SimError::InvalidConfig(format!("unknown regime '{other}' (expected cm or ms)"))),
        }
    }
}

/// Symmetric square root of a positive semi-definite matrix.
pub fn matrix_sqrt(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !r.is_square() {
        return Err(SimError::InvalidConfig("matrix_sqrt needs a square matrix".into()));
    }
    let sym = (r + r.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -1e-10 {
        return Err(SimError::NotPsd(min));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Unit diagonal, `rho` everywhere else.
pub fn equicorrelation(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
}

/// `base^{|j−l|}`.
pub fn toeplitz(p: usize, base: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| base.powi((i as i32 - j as i32).abs()))
}

/// `(1, 0.6, 0.3, 0, …, 0)`.
pub fn exp1_truth(p: usize) -> Vec<f64> {
    let mut t = vec![0.0; p];
    for (k, v) in [1.0, 0.6, 0.3].into_iter().enumerate().take(p) {
        t[k] = v;
    }
    t
}

/// `(3, 1.5, 0, 0, 2, 0, …, 0)`.
pub fn exp2_truth(p: usize) -> Vec<f64> {
    let mut t = vec![0.0; p];
    for (k, v) in [(0, 3.0), (1, 1.5), (4, 2.0)] {
        if k < p {
            t[k] = v;
        }
    }
    t
}

/// Loadings and variances 0.8, first upper off-diagonal of `U` 0.8.
pub fn exp3_truth(q_omega: usize) -> SemParams {
    SemParams::upper_band(q_omega, 0.8)
}

/// Sample size schedule `⌊8(3n)^{1/5.1} − 14⌋` for the mean design.
pub fn exp1_dimension(n: usize) -> usize {
    (8.0 * (3.0 * n as f64).powf(1.0 / 5.1) - 14.0).floor() as usize
}

/// `X = θ₀ + R^{1/2}(Z − 1)` with independent `χ²` components in `Z` and
/// equicorrelation `R`; see [`gen_exp1_at`].
pub fn gen_exp1<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    rho: f64,
    regime: Regime,
    rng: &mut R,
) -> Result<(Dataset, Vec<f64>)> {
    if p < 3 {
        return Err(SimError::InvalidConfig(format!("the mean design needs p >= 3, got {p}")));
    }
    let theta = exp1_truth(p);
    let data = gen_exp1_at(&theta, n, rho, regime, false, rng)?;
    Ok((data, theta))
}

/// Mean design at an arbitrary centre. With `standardize_z` the innovations are
/// `(Z − 1)/√2`, giving `Var(X) = R` under the correctly specified regime.
pub fn gen_exp1_at<R: Rng + ?Sized>(
    theta: &[f64],
    n: usize,
    rho: f64,
    regime: Regime,
    standardize_z: bool,
    rng: &mut R,
) -> Result<Dataset> {
    let p = theta.len();
    if !(0.0..1.0).contains(&rho) {
        return Err(SimError::InvalidConfig(format!("rho must lie in [0, 1), got {rho}")));
    }
    let root = matrix_sqrt(&equicorrelation(p, rho))?;
    let df = match regime {
        Regime::Cm => 1.0,
        Regime::Ms => 1.2,
    };
    let scale = if standardize_z { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
    let mut values = Vec::with_capacity(n * p);
    let mut z = DVector::zeros(p);
    for _ in 0..n {
        for j in 0..p {
            z[j] = (chi_squared(rng, df) - 1.0) * scale;
        }
        let x = &root * &z;
        values.extend(theta.iter().zip(x.iter()).map(|(t, v)| t + v));
    }
    Ok(Dataset::from_row_major(n, p, values)?)
}

/// Linear regression with instruments: rows `(z, u, y)` where
/// `z ~ N(0, Toeplitz(0.5))`, `y = zᵀθ₀ + ε` and `u = z + N(0, I)`.
pub fn gen_exp2<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<(Dataset, Vec<f64>)> {
    if p < 5 {
        return Err(SimError::InvalidConfig(format!("the regression design needs p >= 5, got {p}")));
    }
    let theta = exp2_truth(p);
    let root = matrix_sqrt(&toeplitz(p, 0.5))?;
    let mut values = Vec::with_capacity(n * (2 * p + 1));
    let mut e = DVector::zeros(p);
    for _ in 0..n {
        for j in 0..p {
            e[j] = normal(rng);
        }
        let z = &root * &e;
        let y = z.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() + normal(rng);
        values.extend(z.iter().copied());
        for j in 0..p {
            values.push(z[j] + normal(rng));
        }
        values.push(y);
    }
    Ok((Dataset::from_row_major(n, 2 * p + 1, values)?, theta))
}

/// Structural equation design at the band truth; see [`gen_exp3_at`].
pub fn gen_exp3<R: Rng + ?Sized>(n: usize, q_omega: usize, rng: &mut R) -> Result<(Dataset, Vec<f64>)> {
    let params = exp3_truth(q_omega);
    let data = gen_exp3_at(&params, n, rng)?;
    Ok((data, params.pack()))
}

/// `ω = (I − U)⁻¹ζ`, `Y = Zω + ε` with `ζ ~ N(0, diag ψ)` and `ε ~ N(0, diag φ)`.
pub fn gen_exp3_at<R: Rng + ?Sized>(params: &SemParams, n: usize, rng: &mut R) -> Result<Dataset> {
    let q = params.q();
    let sem = SemModel::new(q)?;
    if params.phi.iter().chain(&params.psi).any(|v| !(*v >= 0.0)) {
        return Err(SimError::InvalidConfig("variances must be non-negative".into()));
    }
    let i_minus_u = DMatrix::from_fn(q, q, |i, j| if i == j { 1.0 } else { -params.coupling(i, j) });
    let lu = i_minus_u.lu();
    if lu.determinant().abs() < 1e-10 {
        return Err(SimError::Core(tiltfit_core::Error::SingularStructure));
    }
    let a = lu.try_inverse().ok_or(SimError::Core(tiltfit_core::Error::SingularStructure))?;
    let za = sem.loading_matrix(params) * a;
    let py = 2 * q;
    let mut values = Vec::with_capacity(n * py);
    let mut zeta = DVector::zeros(q);
    for _ in 0..n {
        for l in 0..q {
            zeta[l] = params.psi[l].sqrt() * normal(rng);
        }
        let y = &za * &zeta;
        for k in 0..py {
            values.push(y[k] + params.phi[k].sqrt() * normal(rng));
        }
    }
    Ok(Dataset::from_row_major(n, py, values)?)
}
