//! Dense 4x4 / 3x3 matrix functions backing the group operations.

use nalgebra::{Matrix3, Matrix4};

use crate::error::{Error, Result};

fn norm1(m: &Matrix4<f64>) -> f64 {
    (0..4)
        .map(|c| m.column(c).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(a: &Matrix4<f64>) -> Matrix4<f64> {
    let n = norm1(a);
    let squarings = if n > 0.25 {
        (n / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let b = a / 2f64.powi(squarings);
    let mut sum = Matrix4::identity();
    let mut term = Matrix4::identity();
    for k in 1..40 {
        term = term * b / k as f64;
        sum += term;
        if norm1(&term) < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Principal square root via the product form of the Denman-Beavers iteration.
pub fn sqrtm(a: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let id = Matrix4::identity();
    let mut m = *a;
    let mut y = *a;
    for _ in 0..100 {
        let m_inv = m
            .try_inverse()
            .ok_or_else(|| Error::LogDivergence("singular iterate in square root".into()))?;
        y = y * (id + m_inv) * 0.5;
        m = (id + (m + m_inv) * 0.5) * 0.5;
        if !y.iter().all(|v| v.is_finite()) {
            break;
        }
        if norm1(&(m - id)) < 1e-15 {
            return Ok(y);
        }
    }
    Err(Error::LogDivergence(
        "square root iteration did not converge (spectrum near the negative real axis?)".into(),
    ))
}

/// Principal matrix logarithm by inverse scaling and squaring.
///
/// Square roots are taken until `‖X − I‖₁ ≤ 0.25`, then the Gregory series
/// `log X = 2 Σ Z^(2j+1)/(2j+1)` with `Z = (X − I)(X + I)⁻¹` is summed.
pub fn logm(a: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::LogDivergence("non-finite input".into()));
    }
    let id = Matrix4::identity();
    let mut x = *a;
    let mut roots = 0;
    while norm1(&(x - id)) > 0.25 {
        if roots >= 64 {
            return Err(Error::LogDivergence("too many square roots".into()));
        }
        x = sqrtm(&x)?;
        roots += 1;
    }
    let z = (x - id)
        * (x + id)
            .try_inverse()
            .ok_or_else(|| Error::LogDivergence("singular Cayley denominator".into()))?;
    let z2 = z * z;
    let mut power = z;
    let mut sum = z;
    for j in 1..200 {
        power *= z2;
        let term = power / (2 * j + 1) as f64;
        sum += term;
        if norm1(&term) < 1e-22 {
            break;
        }
    }
    Ok(sum * 2.0 * 2f64.powi(roots))
}

/// RQ decomposition `m = upper · orthogonal` with a positive upper diagonal.
///
/// Returns `None` when `m` is singular.
pub fn rq3(m: &Matrix3<f64>) -> Option<(Matrix3<f64>, Matrix3<f64>)> {
    if m.determinant().abs() < 1e-300 {
        return None;
    }
    // Row-flip trick: QR of (P m)ᵀ yields the RQ factors of m.
    let flip = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
    let qr = (flip * m).transpose().qr();
    let (q, r) = (qr.q(), qr.r());
    let mut upper = flip * r.transpose() * flip;
    let mut orth = flip * q.transpose();
    for i in 0..3 {
        if upper[(i, i)] < 0.0 {
            upper.column_mut(i).neg_mut();
            orth.row_mut(i).neg_mut();
        }
    }
    Some((upper, orth))
}

/// QR decomposition `m = orthogonal · upper` with a positive upper diagonal.
pub fn qr3(m: &Matrix3<f64>) -> Option<(Matrix3<f64>, Matrix3<f64>)> {
    if m.determinant().abs() < 1e-300 {
        return None;
    }
    let qr = m.qr();
    let (mut q, mut r) = (qr.q(), qr.r());
    for i in 0..3 {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    Some((q, r))
}
