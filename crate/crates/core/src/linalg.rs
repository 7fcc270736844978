//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Ridge multipliers tried in order when a symmetric matrix is not numerically positive definite.
pub const RIDGE_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Mean absolute diagonal, floored so it can scale a ridge.
pub fn diag_scale(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows().max(1) as f64;
    let s = a.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n;
    if s.is_finite() && s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Cholesky factor of `a + ridge * scale * I` for the first ridge on the ladder that works.
pub fn cholesky_with_ridge(a: &DMatrix<f64>, scale: f64) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    for ridge in RIDGE_LADDER {
        let mut m = a.clone();
        if ridge > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += ridge * scale;
            }
        }
        if let Some(ch) = m.cholesky() {
            if ch.l().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Some(ch);
            }
        }
    }
    None
}

pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let ch = cholesky_with_ridge(a, diag_scale(a))?;
    Some(ch.solve(b))
}

pub fn inverse_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let ch = cholesky_with_ridge(a, diag_scale(a))?;
    Some(ch.inverse())
}

/// Symmetric eigendecomposition based pseudo-inverse with relative cutoff.
pub fn pinv_symmetric(a: &DMatrix<f64>, rel_cut: f64) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if lam.abs() > rel_cut * max && lam.abs() > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / lam;
        }
    }
    out
}

/// `xᵀx` without forming a transpose copy.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x)
}

/// Least squares through the normal equations with ridge fallback.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let xtx = gram(x);
    let xty = x.tr_mul(y);
    solve_spd(&xtx, &xty)
}

/// Columns that are (numerically) linear combinations of earlier columns.
pub fn dependent_columns(x: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        let mut v = col;
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        // second pass for numerical orthogonality
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= rel_tol * norm0 {
            dependent.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

/// Orthonormal basis (q × (q − rank)) of the null space of a d × q matrix.
pub fn null_space(b: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, usize) {
    let q = b.ncols();
    let btb = b.tr_mul(b);
    let eig = btb.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    let null_idx: Vec<usize> = (0..q).filter(|&k| eig.eigenvalues[k].abs() <= tol * max).collect();
    let rank = q - null_idx.len();
    let mut basis = DMatrix::zeros(q, null_idx.len());
    for (c, &k) in null_idx.iter().enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(k));
    }
    (basis, rank)
}

/// Half-vectorization: lower triangle stacked column by column.
pub fn vech(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in j..n {
            out.push(a[(i, j)]);
        }
    }
    out
}
