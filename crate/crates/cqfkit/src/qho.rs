//! Closed quantum harmonic oscillators.
//!
//! An oscillator is a pair `(Θ, R)` of a nonsingular antisymmetric CCR
//! matrix and a symmetric energy matrix; its Heisenberg dynamics matrix is
//! `A = 2ΘR`, which is Hamiltonian with respect to `Θ`. For `R ⪰ 0` the
//! spectrum of `A` is purely imaginary and `A = iVΩW` decomposes the flow
//! into rank-one oscillating modes `C_k = V_k W_k` with centrally symmetric
//! frequencies. The mode matrices drive the trigonometric moment averages
//! in [`crate::moments`].

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::matcore::{
    self, condition_number, ensure_finite, ensure_square, symmetric_eigen, CMat, CVec, Mat,
};
use crate::policy::NumericPolicy;

/// Relative residual allowed for `‖VW − I‖` and the identity resolution.
pub const MODE_RESIDUAL_TOL: f64 = 1e-9;
/// Eigenvector-matrix condition number above which `A` is declared defective.
pub const DEFECTIVE_COND_LIMIT: f64 = 1e10;

/// Nonsingular real antisymmetric matrix fixing the commutation structure.
///
/// Antisymmetry is exact: construction keeps only the strict upper triangle
/// of the (validated) input and mirrors it.
#[derive(Clone, Debug, PartialEq)]
pub struct CcrMatrix {
    theta: Mat,
}

impl CcrMatrix {
    pub fn new(theta: Mat) -> Result<Self> {
        Self::with_policy(theta, &NumericPolicy::default())
    }

    pub fn with_policy(theta: Mat, policy: &NumericPolicy) -> Result<Self> {
        let n = ensure_square(&theta)?;
        ensure_finite(&theta)?;
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::invalid_spec("theta", format!("order {n} is not a positive even number")));
        }
        let scale = theta.norm().max(1.0);
        if (&theta + theta.transpose()).norm() > policy.rtol * scale {
            return Err(Error::invalid_spec("theta", "matrix is not antisymmetric"));
        }
        // Rebuild exactly antisymmetric from the strict upper triangle.
        let mut exact = Mat::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (theta[(i, j)] - theta[(j, i)]);
                exact[(i, j)] = v;
                exact[(j, i)] = -v;
            }
        }
        let sv = exact.clone().singular_values();
        let smax = sv.iter().fold(0.0f64, |a, &b| a.max(b));
        let smin = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if smax == 0.0 || smin <= policy.eigen_tol * smax {
            return Err(Error::SingularTheta);
        }
        Ok(CcrMatrix { theta: exact })
    }

    pub fn matrix(&self) -> &Mat {
        &self.theta
    }

    pub fn order(&self) -> usize {
        self.theta.nrows()
    }

    /// Inverse of `Θ`; construction guarantees it exists.
    pub fn inverse(&self) -> Result<Mat> {
        self.theta.clone().lu().try_inverse().ok_or(Error::SingularTheta)
    }

    /// Canonical CCR matrix `(1/2) diag(J, …, J)` of the given even order.
    pub fn canonical(n: usize) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::invalid_spec("theta", format!("order {n} is not a positive even number")));
        }
        let mut m = Mat::zeros(n, n);
        for k in 0..n / 2 {
            m[(2 * k, 2 * k + 1)] = 0.5;
            m[(2 * k + 1, 2 * k)] = -0.5;
        }
        Ok(CcrMatrix { theta: m })
    }
}

/// A closed oscillator `(Θ, R)`; the energy matrix is stored exactly
/// symmetric so that `A = 2ΘR` is Hamiltonian to rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct QhoModel {
    theta: CcrMatrix,
    energy: Mat,
}

impl QhoModel {
    pub fn new(theta: CcrMatrix, energy: Mat) -> Result<Self> {
        Self::with_policy(theta, energy, &NumericPolicy::default())
    }

    pub fn with_policy(theta: CcrMatrix, energy: Mat, policy: &NumericPolicy) -> Result<Self> {
        let n = ensure_square(&energy)?;
        ensure_finite(&energy)?;
        if n != theta.order() {
            return Err(Error::DimensionMismatch(format!(
                "energy order {n} does not match CCR order {}",
                theta.order()
            )));
        }
        if !matcore::is_symmetric_within(&energy, policy.eigen_tol) {
            return Err(Error::invalid_spec("energy", "matrix is not symmetric"));
        }
        let energy = matcore::symmetrizer(&energy)?;
        Ok(QhoModel { theta, energy })
    }

    pub fn theta(&self) -> &CcrMatrix {
        &self.theta
    }

    pub fn energy(&self) -> &Mat {
        &self.energy
    }

    pub fn order(&self) -> usize {
        self.theta.order()
    }

    /// Dynamics matrix `A = 2ΘR`.
    pub fn dynamics_matrix(&self) -> Mat {
        2.0 * self.theta.matrix() * &self.energy
    }
}

/// Outcome of the Hamiltonian-structure test `aΘ + Θaᵀ = 0`.
#[derive(Clone, Copy, Debug)]
pub struct HamiltonianCheck {
    pub holds: bool,
    pub residual: f64,
}

/// Checks `‖aΘ + Θaᵀ‖_F ≤ rtol (1 + ‖a‖_F ‖Θ‖_F)`.
pub fn check_hamiltonian(a: &Mat, theta: &CcrMatrix) -> Result<HamiltonianCheck> {
    check_hamiltonian_with(a, theta, NumericPolicy::default().rtol)
}

pub fn check_hamiltonian_with(a: &Mat, theta: &CcrMatrix, rtol: f64) -> Result<HamiltonianCheck> {
    let n = ensure_square(a)?;
    if n != theta.order() {
        return Err(Error::DimensionMismatch(format!(
            "matrix order {n} does not match CCR order {}",
            theta.order()
        )));
    }
    let th = theta.matrix();
    let residual = (a * th + th * a.transpose()).norm();
    let holds = residual <= rtol * (1.0 + a.norm() * th.norm());
    Ok(HamiltonianCheck { holds, residual })
}

/// Diagonalization `A = iVΩW` with `W = V⁻¹` and rank-one mode matrices
/// `C_k = V_k W_k`.
///
/// Frequencies follow the central-symmetry convention: the first `n/2`
/// entries are nonincreasing and nonnegative, the second half are their
/// negatives in the same order, and `conj(C_k) = C_{k + n/2}` exactly by
/// construction. Zero-frequency modes (singular `R`) sit at the end of
/// each half.
#[derive(Clone, Debug)]
pub struct ModeDecomposition {
    v: CMat,
    w: CMat,
    omega: Vec<f64>,
    mode_matrices: Vec<CMat>,
}

impl ModeDecomposition {
    pub fn order(&self) -> usize {
        self.omega.len()
    }

    pub fn eigenvector_matrix(&self) -> &CMat {
        &self.v
    }

    pub fn dual_matrix(&self) -> &CMat {
        &self.w
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.omega
    }

    pub fn mode_matrices(&self) -> &[CMat] {
        &self.mode_matrices
    }

    /// Coefficient `c_{jkl} = (C_k)_{jl}`.
    pub fn coefficient(&self, j: usize, k: usize, l: usize) -> Complex<f64> {
        self.mode_matrices[k][(j, l)]
    }

    /// Flow reconstruction `e^{tA} = Σ_k e^{iω_k t} C_k`.
    pub fn evolution(&self, t: f64) -> CMat {
        let n = self.order();
        let mut e = CMat::zeros(n, n);
        for (k, c) in self.mode_matrices.iter().enumerate() {
            let phase = Complex::new(0.0, self.omega[k] * t).exp();
            e += c * phase;
        }
        e
    }

    /// Real half-sum form `e^{tA} = 2 Σ_{k ≤ n/2} Re(e^{iω_k t} C_k)`.
    pub fn evolution_real_form(&self, t: f64) -> Mat {
        let n = self.order();
        let mut e = Mat::zeros(n, n);
        for k in 0..n / 2 {
            let phase = Complex::new(0.0, self.omega[k] * t).exp();
            e += (&self.mode_matrices[k] * phase).map(|z| 2.0 * z.re);
        }
        e
    }
}

/// Mode decomposition of `A = 2ΘR` for `R ⪰ 0`.
///
/// The nonzero modes are obtained from the antisymmetric similarity image
/// `T = 2 √R Θ √R` (through the Hermitian matrix `iT`), mapped back by
/// `v = 2ΘS φ`; the zero modes come from the kernel of `R`, paired into
/// complex-conjugate combinations. Failure to assemble a well-conditioned
/// eigenbasis reports [`Error::DefectiveMatrix`].
pub fn diagonalize_modes(model: &QhoModel) -> Result<ModeDecomposition> {
    diagonalize_modes_with(model, &NumericPolicy::default())
}

pub fn diagonalize_modes_with(model: &QhoModel, policy: &NumericPolicy) -> Result<ModeDecomposition> {
    let n = model.order();
    let theta = model.theta().matrix();

    let (vals, vecs) = symmetric_eigen(model.energy())?;
    let scale = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let rank_tol = policy.eigen_tol * scale.max(1.0);
    if let Some(&min) = vals.first() {
        if min < -rank_tol {
            return Err(Error::NotPositiveSemidefinite { min_eig: min });
        }
    }

    // Symmetric square root and kernel basis of R.
    let sqrt_diag = nalgebra::DVector::from_iterator(n, vals.iter().map(|&v| v.max(0.0).sqrt()));
    let sqrt_r = &vecs * Mat::from_diagonal(&sqrt_diag) * vecs.transpose();
    let kernel_cols: Vec<usize> = (0..n).filter(|&i| vals[i] <= rank_tol).collect();
    let q = kernel_cols.len();
    if !q.is_multiple_of(2) {
        return Err(Error::DefectiveMatrix(format!(
            "kernel of R has odd dimension {q}; no conjugate mode pairing exists"
        )));
    }

    // Hermitian image iT with T = 2 sqrt(R) Theta sqrt(R).
    let t = 2.0 * &sqrt_r * theta * &sqrt_r;
    let g: CMat = t.map(|x| Complex::new(0.0, x));
    let se = g.symmetric_eigen();
    let dscale = se.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let freq_tol = policy.eigen_tol * dscale.max(1.0);

    // Eigenvalue d of iT corresponds to frequency omega = -d.
    let mut positive: Vec<(f64, CVec)> = Vec::new();
    for k in 0..n {
        let d = se.eigenvalues[k];
        if d < -freq_tol {
            let phi: CVec = se.eigenvectors.column(k).into_owned();
            let omega = -d;
            let mapped = map_to_dynamics_eigenvector(theta, &sqrt_r, &phi);
            positive.push((omega, normalize_phase(mapped)));
        }
    }
    if 2 * positive.len() + q != n {
        return Err(Error::DefectiveMatrix(format!(
            "{} oscillating mode pairs and a rank-{} kernel cannot span order {n}",
            positive.len(),
            n - q
        )));
    }

    // Deterministic ordering: frequency descending, ties by the lexicographic
    // order of the real parts of the (phase-fixed) eigenvector entries.
    positive.sort_by(|a, b| {
        b.0.total_cmp(&a.0).then_with(|| lex_cmp_real(&a.1, &b.1))
    });

    let mut half: Vec<(f64, CVec)> = positive;
    for pair in 0..q / 2 {
        let k1 = vecs.column(kernel_cols[2 * pair]).into_owned();
        let k2 = vecs.column(kernel_cols[2 * pair + 1]).into_owned();
        let z = CVec::from_iterator(
            n,
            k1.iter().zip(k2.iter()).map(|(&x, &y)| Complex::new(x, y) / Complex::new(2f64.sqrt(), 0.0)),
        );
        half.push((0.0, normalize_phase(z)));
    }

    let mut v = CMat::zeros(n, n);
    let mut omega = vec![0.0; n];
    for (k, (w, veck)) in half.iter().enumerate() {
        omega[k] = *w;
        omega[k + n / 2] = -*w;
        v.set_column(k, veck);
        let conj = CVec::from_iterator(n, veck.iter().map(|z| z.conj()));
        v.set_column(k + n / 2, &conj);
    }

    let cond = condition_number(&v);
    if !cond.is_finite() || cond > DEFECTIVE_COND_LIMIT {
        return Err(Error::DefectiveMatrix(format!(
            "eigenvector matrix condition number {cond:.3e} exceeds {DEFECTIVE_COND_LIMIT:.1e}"
        )));
    }
    let w = v
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::DefectiveMatrix("eigenvector matrix is numerically singular".into()))?;

    let mode_matrices: Vec<CMat> = (0..n).map(|k| {
        let col = v.column(k);
        let row = w.row(k);
        CMat::from_fn(n, n, |i, j| col[i] * row[j])
    }).collect();

    Ok(ModeDecomposition { v, w, omega, mode_matrices })
}

/// Pushes an eigenvector `φ` of `T = 2SΘS` (eigenvalue `iω`, `ω > 0`)
/// forward to an eigenvector of `A = 2ΘS·S`.
fn map_to_dynamics_eigenvector(theta: &Mat, sqrt_r: &Mat, phi: &CVec) -> CVec {
    let real_part = nalgebra::DVector::from_iterator(phi.len(), phi.iter().map(|z| z.re));
    let imag_part = nalgebra::DVector::from_iterator(phi.len(), phi.iter().map(|z| z.im));
    let m = 2.0 * theta * sqrt_r;
    let re = &m * real_part;
    let im = &m * imag_part;
    CVec::from_iterator(phi.len(), re.iter().zip(im.iter()).map(|(&a, &b)| Complex::new(a, b)))
}

/// Unit norm with the first significant entry rotated to the positive real
/// axis; mode matrices are invariant under this choice, it only fixes `V`.
fn normalize_phase(mut v: CVec) -> CVec {
    let norm = v.norm();
    if norm > 0.0 {
        v /= Complex::new(norm, 0.0);
    }
    if let Some(lead) = v.iter().find(|z| z.norm() > 1e-8).copied() {
        let phase = lead / Complex::new(lead.norm(), 0.0);
        v /= phase;
    }
    v
}

fn lex_cmp_real(a: &CVec, b: &CVec) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let ord = x.re.total_cmp(&y.re);
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    std::cmp::Ordering::Equal
}
