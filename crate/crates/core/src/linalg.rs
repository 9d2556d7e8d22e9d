//! Small dense helpers shared by the certification and simulation modules.

use alloc::vec::Vec;
use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::{Error, Result};

const EIG_EPS: f64 = f64::EPSILON;
const EIG_MAX_ITER: usize = 10_000;

/// Smallest eigenvalue of a symmetric matrix together with a unit eigenvector.
pub fn min_symmetric_eigen(sym: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = sym.nrows();
    if n != sym.ncols() {
        return Err(Error::NotSquare { rows: n, cols: sym.ncols() });
    }
    if n == 0 {
        return Err(Error::Empty { what: "matrix" });
    }
    if n == 1 {
        return Ok((sym[(0, 0)], DVector::from_element(1, 1.0)));
    }
    let eig = SymmetricEigen::try_new(sym.clone(), EIG_EPS, EIG_MAX_ITER).ok_or(Error::EigenFailure)?;
    let (idx, &value) =
        eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).ok_or(Error::EigenFailure)?;
    Ok((value, eig.eigenvectors.column(idx).into_owned()))
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::NotSquare { rows: n, cols: m.ncols() });
    }
    match n {
        0 => Ok(Vec::new()),
        1 => Ok(alloc::vec![Complex::new(m[(0, 0)], 0.0)]),
        _ => {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "matrix" });
            }
            let schur = Schur::try_new(m.clone(), EIG_EPS, EIG_MAX_ITER).ok_or(Error::EigenFailure)?;
            Ok(schur.complex_eigenvalues().iter().copied().collect())
        }
    }
}

/// Largest real part over the spectrum, `-inf` for an empty matrix.
pub fn max_real_part(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Eigenvalue with the smallest real part, if any.
pub fn leftmost_eigenvalue(m: &DMatrix<f64>) -> Result<Option<Complex<f64>>> {
    Ok(eigenvalues(m)?.into_iter().min_by(|a, b| a.re.total_cmp(&b.re)))
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Hurwitz test with the relative margin convention `max Re < -1e-9·‖M‖`.
pub fn is_hurwitz(m: &DMatrix<f64>) -> Result<bool> {
    Ok(max_real_part(m)? < -HURWITZ_REL_MARGIN * frobenius(m))
}

pub const HURWITZ_REL_MARGIN: f64 = 1e-9;

/// Dense `M·diag(d)`.
pub fn scale_columns(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, &dj) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(dj);
    }
    out
}

pub(crate) fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}
