//! Tiny dense least squares for the 2- and 3-unknown position fixes.

use thiserror::Error;

use crate::Real;

/// Normal-matrix condition number above which a system is called degenerate.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("rows and right-hand side differ in length ({rows} vs {rhs})")]
    LengthMismatch { rows: usize, rhs: usize },
    #[error("normal equations are degenerate (condition number {0:e})")]
    Degenerate(f64),
}

/// Eigenvalues and eigenvectors (columns of the returned matrix) of a
/// symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigen<T: Real, const N: usize>(mut m: [[T; N]; N]) -> ([T; N], [[T; N]; N]) {
    let mut v = [[T::zero(); N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    for _sweep in 0..64 {
        let mut off = T::zero();
        for (p, row) in m.iter().enumerate() {
            for &x in &row[p + 1..] {
                off = off + x * x;
            }
        }
        let diag: T = (0..N).map(|i| m[i][i] * m[i][i]).sum();
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                if m[p][q] == T::zero() {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (T::lit(2.0) * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..N {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..N {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut eig = [T::zero(); N];
    for (i, e) in eig.iter_mut().enumerate() {
        *e = m[i][i];
    }
    (eig, v)
}

/// Solves `rows * x ~= rhs` in the least-squares sense through the normal
/// equations `(B^T B) x = B^T a`, rejecting systems whose normal matrix has a
/// condition number above [`MAX_CONDITION`].
pub fn least_squares<T: Real, const N: usize>(
    rows: &[[T; N]],
    rhs: &[T],
) -> Result<[T; N], LinalgError> {
    if rows.len() != rhs.len() {
        return Err(LinalgError::LengthMismatch {
            rows: rows.len(),
            rhs: rhs.len(),
        });
    }
    if rows.len() < N {
        return Err(LinalgError::TooFewRows {
            needed: N,
            got: rows.len(),
        });
    }
    let mut ata = [[T::zero(); N]; N];
    let mut atb = [T::zero(); N];
    for (row, &b) in rows.iter().zip(rhs) {
        for i in 0..N {
            atb[i] = atb[i] + row[i] * b;
            for j in 0..N {
                ata[i][j] = ata[i][j] + row[i] * row[j];
            }
        }
    }
    let (eig, vecs) = symmetric_eigen(ata);
    let max = eig.iter().fold(T::zero(), |a, &e| a.max(e.abs()));
    let min = eig.iter().fold(T::infinity(), |a, &e| a.min(e));
    if !(min > T::zero()) || max / min > T::lit(MAX_CONDITION) {
        let cond = if min > T::zero() {
            (max / min).to_f64().unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        };
        return Err(LinalgError::Degenerate(cond));
    }
    // x = V diag(1/eig) V^T atb
    let mut x = [T::zero(); N];
    for k in 0..N {
        let proj: T = (0..N).map(|i| vecs[i][k] * atb[i]).sum();
        let w = proj / eig[k];
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = *xi + vecs[i][k] * w;
        }
    }
    Ok(x)
}
