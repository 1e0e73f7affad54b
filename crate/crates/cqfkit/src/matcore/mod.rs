//! Dense real/complex matrix kernel.
//!
//! Everything downstream reduces to a handful of primitives implemented
//! here: an algebraic Lyapunov solver (Bartels-Stewart on the real Schur
//! form), a scaling-and-squaring matrix exponential, commutators and
//! symmetrizers, spectral-abscissa queries, and symmetric-eigenvalue
//! helpers. All operations are pure functions of plain data.

mod expm;
mod lyapunov;

pub use expm::matrix_exponential;
pub use lyapunov::solve_lyapunov;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real matrix, the carrier type for all domain matrices.
pub type Mat = DMatrix<f64>;
/// Dense complex matrix, used by mode decompositions and quadrature.
pub type CMat = DMatrix<Complex<f64>>;
/// Dense complex vector.
pub type CVec = DVector<Complex<f64>>;

/// Iteration cap handed to the Schur decomposition; exceeding it maps to
/// [`Error::EigenFailure`].
pub(crate) const SCHUR_MAX_ITER: usize = 100_000;

/// Spectral abscissa (max real part of the spectrum) together with the
/// admissible-horizon bound `1/(2 max(0, abscissa))` it induces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityMargin {
    /// Largest real part over the eigenvalues, units 1/time.
    pub abscissa: f64,
    /// `1/(2 max(0, abscissa))`; `+inf` when the abscissa is nonpositive.
    pub tau_bound: f64,
}

impl StabilityMargin {
    fn from_abscissa(abscissa: f64) -> Self {
        let tau_bound = if abscissa <= 0.0 {
            f64::INFINITY
        } else {
            1.0 / (2.0 * abscissa)
        };
        StabilityMargin { abscissa, tau_bound }
    }
}

pub fn ensure_finite(m: &Mat) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteEntries)
    }
}

pub fn ensure_square(m: &Mat) -> Result<usize> {
    if m.nrows() == m.ncols() {
        Ok(m.nrows())
    } else {
        Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn ensure_same_order(a: &Mat, b: &Mat) -> Result<usize> {
    let na = ensure_square(a)?;
    let nb = ensure_square(b)?;
    if na == nb {
        Ok(na)
    } else {
        Err(Error::DimensionMismatch(format!(
            "matrix orders differ: {na} vs {nb}"
        )))
    }
}

/// Commutator `ab − ba`.
pub fn commutator(a: &Mat, b: &Mat) -> Result<Mat> {
    ensure_same_order(a, b)?;
    Ok(a * b - b * a)
}

/// Symmetrizer `(n + nᵀ)/2`; the output is exactly symmetric.
pub fn symmetrizer(n: &Mat) -> Result<Mat> {
    let order = ensure_square(n)?;
    let mut s = Mat::zeros(order, order);
    for i in 0..order {
        s[(i, i)] = n[(i, i)];
        for j in (i + 1)..order {
            let v = 0.5 * (n[(i, j)] + n[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// Spectral abscissa of a real square matrix and the induced horizon bound.
pub fn stability_margin(a: &Mat) -> Result<StabilityMargin> {
    ensure_square(a)?;
    ensure_finite(a)?;
    Ok(StabilityMargin::from_abscissa(spectral_abscissa(a)?))
}

/// Max real part over the eigenvalues, via the real Schur form.
pub(crate) fn spectral_abscissa(a: &Mat) -> Result<f64> {
    let eigs = complex_eigenvalues(a)?;
    Ok(eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Eigenvalues of a real square matrix.
pub fn complex_eigenvalues(a: &Mat) -> Result<Vec<Complex<f64>>> {
    ensure_square(a)?;
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(Error::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Eigenvalues and orthonormal eigenvectors of a symmetric matrix, in
/// ascending eigenvalue order.
pub fn symmetric_eigen(m: &Mat) -> Result<(Vec<f64>, Mat)> {
    let order = ensure_square(m)?;
    ensure_finite(m)?;
    let se = symmetrizer(m)?.symmetric_eigen();
    let mut idx: Vec<usize> = (0..order).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = Mat::zeros(order, order);
    for (col, &i) in idx.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

/// Symmetric positive semidefinite square root.
///
/// Eigenvalues below `-psd_tol * max(1, |eig|_max)` are rejected; small
/// negative values inside the tolerance are clamped to zero.
pub fn sym_psd_sqrt(m: &Mat, psd_tol: f64) -> Result<Mat> {
    let (vals, vecs) = symmetric_eigen(m)?;
    let scale = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let floor = -psd_tol * scale.max(1.0);
    if let Some(&min) = vals.first() {
        if min < floor {
            return Err(Error::NotPositiveSemidefinite { min_eig: min });
        }
    }
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|&v| v.max(0.0).sqrt()));
    Ok(&vecs * Mat::from_diagonal(&d) * vecs.transpose())
}

pub fn is_symmetric_within(m: &Mat, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.norm().max(1.0);
    (m - m.transpose()).norm() <= tol * scale
}

/// Condition number estimate from the extreme singular values.
pub fn condition_number(m: &CMat) -> f64 {
    let sv = m.clone().singular_values();
    let smax = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let smin = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Frobenius inner product `tr(aᵀ b)`.
pub fn frobenius_inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex::new(x, 0.0))
}
