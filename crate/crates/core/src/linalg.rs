//! Thin helpers over `nalgebra` shared by the fitting code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Least-squares coefficients of `y` on the columns of `x` via thin QR.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, k) = x.shape();
    if n < k {
        return Err(Error::SingularDesign);
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale.max(1.0)) {
        return Err(Error::SingularDesign);
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty).ok_or(Error::SingularDesign)
}

/// Inverse of a symmetric positive definite matrix, `None` if not SPD.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    let inv = chol.inverse();
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}
