//! Small dense helpers shared by the estimators: symmetric LDLᵀ pivots,
//! positive-definiteness tests, determinants, compensated sums.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;

/// Relative pivot threshold for the positive-definite test.
pub const PD_PIVOT_TOL: f64 = 1e-12;
/// Relative tolerance for the symmetry precondition.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative slack for semi-definiteness: pivots may dip to `-PSD_TOL * scale`.
pub const PSD_TOL: f64 = 1e-10;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Dot product with four independent accumulators. The summation order is
/// fixed, so results are reproducible bit for bit.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let k = 4 * c;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    ((s0 + s1) + (s2 + s3)) + tail
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_asymmetry(m: &Matrix) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..d {
        for j in (i + 1)..d {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_square(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    check_square(m)?;
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL * max_abs(m).max(f64::MIN_POSITIVE) {
        return Err(Error::Asymmetric { asymmetry: asym });
    }
    Ok(())
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Outcome of an unpivoted LDLᵀ sweep over the lower triangle.
#[derive(Debug, Clone)]
pub struct LdlPivots {
    /// Pivots computed before the sweep stopped.
    pub pivots: Vec<f64>,
    /// Whether every column was processed.
    pub complete: bool,
}

/// Unpivoted LDLᵀ of a symmetric matrix. Reads only the lower triangle.
/// `stop` is consulted after each pivot; returning true ends the sweep.
fn ldl_sweep(m: &Matrix, mut stop: impl FnMut(f64) -> bool) -> LdlPivots {
    let d = m.nrows();
    let mut l = Matrix::zeros(d, d);
    let mut pivots = Vec::with_capacity(d);
    for j in 0..d {
        let mut dj = m[(j, j)];
        for k in 0..j {
            dj -= l[(j, k)] * l[(j, k)] * pivots[k];
        }
        pivots.push(dj);
        if stop(dj) {
            return LdlPivots {
                pivots,
                complete: j + 1 == d,
            };
        }
        for i in (j + 1)..d {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)] * pivots[k];
            }
            l[(i, j)] = v / dj;
        }
    }
    LdlPivots {
        pivots,
        complete: true,
    }
}

/// True iff the symmetric factorization completes with every pivot above
/// `PD_PIVOT_TOL * max(1, max diagonal)`.
pub fn is_positive_definite(m: &Matrix) -> Result<bool> {
    check_symmetric(m)?;
    Ok(is_pd_unchecked(m))
}

pub(crate) fn is_pd_unchecked(m: &Matrix) -> bool {
    let d = m.nrows();
    if d == 0 {
        return false;
    }
    let max_diag = (0..d).map(|i| m[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let tol = PD_PIVOT_TOL * max_diag.max(1.0);
    let mut ok = true;
    let out = ldl_sweep(m, |p| {
        if !(p > tol) {
            ok = false;
            true
        } else {
            false
        }
    });
    ok && out.complete
}

/// Determinant as the product of LDLᵀ pivots. A zero pivot yields 0.
pub fn det_ldl(m: &Matrix) -> f64 {
    let out = ldl_sweep(m, |p| p == 0.0);
    if !out.complete || out.pivots.last() == Some(&0.0) {
        return 0.0;
    }
    out.pivots.iter().product()
}

/// Log-determinant of a positive-definite matrix, `None` if any pivot is
/// not strictly positive.
pub fn log_det_pd(m: &Matrix) -> Option<f64> {
    let mut ok = true;
    let out = ldl_sweep(m, |p| {
        if !(p > 0.0) {
            ok = false;
            true
        } else {
            false
        }
    });
    if !ok || !out.complete {
        return None;
    }
    Some(out.pivots.iter().map(|p| p.ln()).sum())
}

/// Positive semi-definiteness up to `PSD_TOL * scale`, where scale is the
/// largest diagonal entry. Near-zero pivots are treated as exact zeros.
pub fn is_positive_semidefinite(m: &Matrix) -> bool {
    let d = m.nrows();
    if d == 0 {
        return true;
    }
    let scale = (0..d).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = PSD_TOL * scale;
    let mut l = Matrix::zeros(d, d);
    let mut pivots = vec![0.0; d];
    for j in 0..d {
        let mut dj = m[(j, j)];
        for k in 0..j {
            dj -= l[(j, k)] * l[(j, k)] * pivots[k];
        }
        if dj < -tol {
            return false;
        }
        if dj <= tol {
            // Rank-deficient direction: the remaining column must vanish too.
            for i in (j + 1)..d {
                let mut v = m[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)] * pivots[k];
                }
                if v.abs() > tol.sqrt() * scale.sqrt() {
                    return false;
                }
            }
            pivots[j] = 0.0;
            continue;
        }
        pivots[j] = dj;
        for i in (j + 1)..d {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)] * pivots[k];
            }
            l[(i, j)] = v / dj;
        }
    }
    true
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower(m: &Matrix) -> Option<Matrix> {
    nalgebra::linalg::Cholesky::new(m.clone()).map(|c| c.unpack())
}

/// Squared norm of `L⁻¹ x` for a lower-triangular `L`, i.e. `xᵀ (L Lᵀ)⁻¹ x`.
pub fn quadratic_form_chol(lower: &Matrix, x: &[f64]) -> f64 {
    let d = x.len();
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut v = x[i];
        for k in 0..i {
            v -= lower[(i, k)] * y[k];
        }
        y[i] = v / lower[(i, i)];
    }
    y.iter().map(|v| v * v).sum()
}

/// Frobenius norm.
pub fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}
