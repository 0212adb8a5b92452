//! Small dense linear-algebra helpers shared by the learners and their oracles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition number above which a matrix is treated as numerically singular.
pub const MAX_CONDITION: f64 = 1e12;

/// 2-norm condition number from the singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse through an LU factorization. Fails when the condition estimate
/// exceeds [`MAX_CONDITION`].
pub fn inverse(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if !a.is_square() {
        return Err(Error::invalid(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let cond = condition_number(a);
    if cond > MAX_CONDITION {
        return Err(Error::SingularMatrix(format!(
            "condition estimate {cond:.3e} exceeds {MAX_CONDITION:.0e}"
        )));
    }
    let n = a.nrows();
    let inv = a
        .clone()
        .lu()
        .solve(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::SingularMatrix("LU factorization failed".into()))?;
    Ok((inv, cond))
}

/// Dense solve of `a x = b` through LU with the same conditioning guard as
/// [`inverse`].
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() || !a.is_square() {
        return Err(Error::invalid("dimension mismatch in linear solve"));
    }
    let cond = condition_number(a);
    if cond > MAX_CONDITION {
        return Err(Error::SingularMatrix(format!(
            "condition estimate {cond:.3e} exceeds {MAX_CONDITION:.0e}"
        )));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularMatrix("LU factorization failed".into()))
}

/// `a ⊗ I_d`.
pub fn kron_identity(a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    a.kronecker(&DMatrix::<f64>::identity(d, d))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m - m.transpose()))
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && max_asymmetry(m) <= tol * (1.0 + max_abs(m))
}

/// Symmetric within a relative tolerance and admits a Cholesky factor.
pub fn is_spd(m: &DMatrix<f64>) -> bool {
    is_symmetric(m, 1e-10) && m.clone().cholesky().is_some()
}

/// `‖a b − I‖_max`.
pub fn identity_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    max_abs(&(a * b - DMatrix::<f64>::identity(n, n)))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_block_structure() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let k = kron_identity(&a, 2);
        assert_eq!(k.nrows(), 4);
        assert_eq!(k[(0, 2)], 2.0);
        assert_eq!(k[(1, 3)], 2.0);
        assert_eq!(k[(0, 3)], 0.0);
        assert_eq!(k[(3, 1)], 3.0);
    }

    #[test]
    fn inverse_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(inverse(&a), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn spd_detection() {
        assert!(is_spd(&DMatrix::identity(3, 3)));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(!is_spd(&indef));
    }
}
