//! Bartels-Stewart solver for the algebraic Lyapunov equation
//! `α γ + γ αᵀ + β = 0` with a Hurwitz coefficient matrix `α`.
//!
//! The input is reduced to real Schur form `α = U T Uᵀ`, the transformed
//! equation `T X + X Tᵀ + Uᵀ β U = 0` is solved by back-substitution over
//! the 1x1/2x2 diagonal blocks of `T`, and the result is rotated back.
//! The O(m³) cost is what makes the synthesis loop cheap; the vectorized
//! Kronecker solve is kept test-side as an independent oracle.

use nalgebra::Schur;

use super::{ensure_finite, ensure_same_order, Mat, SCHUR_MAX_ITER};
use crate::error::{Error, Result};

pub fn solve_lyapunov(alpha: &Mat, beta: &Mat) -> Result<Mat> {
    let order = ensure_same_order(alpha, beta)?;
    ensure_finite(alpha)?;
    ensure_finite(beta)?;
    if order == 0 {
        return Ok(Mat::zeros(0, 0));
    }

    let schur = Schur::try_new(alpha.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(Error::EigenFailure)?;
    let (u, t) = schur.unpack();

    let abscissa = t_abscissa(&t);
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz { abscissa });
    }

    let c = u.transpose() * beta * &u;
    let x = solve_quasi_triangular(&t, &c)?;
    Ok(&u * x * u.transpose())
}

/// Spectral abscissa read off the quasi-triangular Schur factor.
fn t_abscissa(t: &Mat) -> f64 {
    let n = t.nrows();
    let mut max_re = f64::NEG_INFINITY;
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            // Complex pair: shared real part (t_ii + t_jj)/2.
            max_re = max_re.max(0.5 * (t[(i, i)] + t[(i + 1, i + 1)]));
            i += 2;
        } else {
            max_re = max_re.max(t[(i, i)]);
            i += 1;
        }
    }
    max_re
}

/// Solve `T X + X Tᵀ + C = 0` for quasi upper-triangular `T`.
fn solve_quasi_triangular(t: &Mat, c: &Mat) -> Result<Mat> {
    let n = t.nrows();
    // Diagonal block boundaries (start, size).
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let size = if i + 1 < n && t[(i + 1, i)] != 0.0 { 2 } else { 1 };
        blocks.push((i, size));
        i += size;
    }
    let nb = blocks.len();

    let mut x = Mat::zeros(n, n);
    // The (i,j) block couples only to blocks with larger indices, so sweep
    // from the bottom-right corner upward.
    for bi in (0..nb).rev() {
        let (ri, pi) = blocks[bi];
        for bj in (0..nb).rev() {
            let (rj, pj) = blocks[bj];
            let mut rhs = -c.view((ri, rj), (pi, pj)).clone_owned();
            for &(rk, pk) in &blocks[bi + 1..] {
                rhs -= t.view((ri, rk), (pi, pk)) * x.view((rk, rj), (pk, pj));
            }
            for &(rl, pl) in &blocks[bj + 1..] {
                rhs -= x.view((ri, rl), (pi, pl)) * t.view((rj, rl), (pj, pl)).transpose();
            }
            let tii = t.view((ri, ri), (pi, pi)).clone_owned();
            let tjj = t.view((rj, rj), (pj, pj)).clone_owned();
            let sol = solve_small_sylvester(&tii, &tjj, &rhs)?;
            x.view_mut((ri, rj), (pi, pj)).copy_from(&sol);
        }
    }
    Ok(x)
}

/// Solve `A X + X Bᵀ = R` for blocks of order at most 2 via the
/// Kronecker system `(I ⊗ A + B ⊗ I) vec(X) = vec(R)`.
fn solve_small_sylvester(a: &Mat, b: &Mat, r: &Mat) -> Result<Mat> {
    let p = a.nrows();
    let q = b.nrows();
    let m = p * q;
    let mut k = Mat::zeros(m, m);
    // Column-major vec: entry (i,j) of X sits at index i + j*p.
    for j in 0..q {
        for i in 0..p {
            let row = i + j * p;
            for ii in 0..p {
                k[(row, ii + j * p)] += a[(i, ii)];
            }
            for jj in 0..q {
                k[(row, i + jj * p)] += b[(j, jj)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(m, (0..q).flat_map(|j| (0..p).map(move |i| (i, j))).map(|(i, j)| r[(i, j)]));
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DimensionMismatch("singular diagonal Sylvester block".into()))?;
    Ok(Mat::from_fn(p, q, |i, j| sol[i + j * p]))
}
