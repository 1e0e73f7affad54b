//! Discounted (exponentially weighted) moment averages of oscillator
//! variables, computed three independent ways.
//!
//! For a horizon `τ > 0` the discounted average of a moment trajectory is
//! `(1/τ) ∫ e^{−t/τ} E σ(t) dt`. Second moments admit a state-space route
//! (a Lyapunov solve with the shifted matrix `A − I/(2τ)`), a
//! frequency-domain route (a certified-truncation quadrature over the
//! resolvent), and — for oscillators with `R ⪰ 0` — a trigonometric route
//! through the mode decomposition, which also covers monomials of any
//! degree and the infinite-horizon limit. The three routes cross-validate
//! each other in the test suite.

mod quad;

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::matcore::{
    self, ensure_same_order, ensure_square, solve_lyapunov, symmetrizer, CMat, Mat,
};
use crate::qho::{CcrMatrix, ModeDecomposition};

/// Cost guard for mode sums: refuse above this many `k`-tuples.
pub const MAX_MODE_TERMS: usize = 1_000_000;

/// Relative tolerance classifying a frequency sum as resonant (zero) in
/// infinite-horizon averages.
pub const FREQUENCY_SUM_TOL: f64 = 1e-9;

/// Characteristic function of the exponential distribution,
/// `χ_τ(u) = 1/(1 − i u τ)`.
pub fn exp_char(tau: f64, u: f64) -> Complex<f64> {
    assert!(tau > 0.0, "exp_char requires tau > 0");
    Complex::new(1.0, 0.0) / Complex::new(1.0, -u * tau)
}

/// Initial second moments `Σ = Re E(X₀X₀ᵀ)` together with the CCR matrix,
/// packaged as `Γ = Σ + iΘ`.
#[derive(Clone, Debug)]
pub struct InitialSecondMoments {
    sigma: Mat,
    theta: CcrMatrix,
    gamma: CMat,
}

impl InitialSecondMoments {
    /// Validates the generalized uncertainty constraint `Σ + iΘ ⪰ 0`
    /// (minimum eigenvalue of the Hermitian `Γ` above `−1e-10` at unit
    /// scale).
    pub fn new(sigma: Mat, theta: CcrMatrix) -> Result<Self> {
        let n = ensure_square(&sigma)?;
        matcore::ensure_finite(&sigma)?;
        if n != theta.order() {
            return Err(Error::DimensionMismatch(format!(
                "sigma order {n} does not match CCR order {}",
                theta.order()
            )));
        }
        if !matcore::is_symmetric_within(&sigma, 1e-10) {
            return Err(Error::invalid_spec("sigma", "matrix is not symmetric"));
        }
        let sigma = symmetrizer(&sigma)?;
        let gamma = CMat::from_fn(n, n, |i, j| Complex::new(sigma[(i, j)], theta.matrix()[(i, j)]));
        let eigs = gamma.clone().symmetric_eigen().eigenvalues;
        let max = eigs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let min = eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min < -1e-10 * max.max(1.0) {
            return Err(Error::NotPositiveSemidefinite { min_eig: min });
        }
        Ok(InitialSecondMoments { sigma, theta, gamma })
    }

    pub fn sigma(&self) -> &Mat {
        &self.sigma
    }

    pub fn theta(&self) -> &CcrMatrix {
        &self.theta
    }

    /// `Γ = Σ + iΘ`.
    pub fn gamma(&self) -> &CMat {
        &self.gamma
    }
}

/// Degree-`d` tensor of initial mixed moments `E Ξ_ℓ(0)`, indexed by
/// `ℓ ∈ {0..n−1}^d` with the first index fastest.
///
/// The library never fabricates higher moments: degrees above two must be
/// supplied by the caller, whose state model determines them.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTensor {
    degree: usize,
    dim: usize,
    entries: Vec<Complex<f64>>,
}

impl MomentTensor {
    pub fn new(degree: usize, dim: usize, entries: Vec<Complex<f64>>) -> Result<Self> {
        if degree == 0 || dim == 0 {
            return Err(Error::invalid_spec("moment_tensor", "degree and dimension must be positive"));
        }
        let expected = dim.checked_pow(degree as u32).ok_or(Error::TooManyTerms {
            terms: usize::MAX,
            max: MAX_MODE_TERMS,
        })?;
        if entries.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "moment tensor needs {expected} entries, got {}",
                entries.len()
            )));
        }
        if !entries.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFiniteEntries);
        }
        Ok(MomentTensor { degree, dim, entries })
    }

    /// Degree-2 tensor holding `Γ = Σ + iΘ`.
    pub fn from_initial_moments(m: &InitialSecondMoments) -> Self {
        let n = m.sigma().nrows();
        let gamma = m.gamma();
        let mut entries = Vec::with_capacity(n * n);
        for l2 in 0..n {
            for l1 in 0..n {
                entries.push(gamma[(l1, l2)]);
            }
        }
        MomentTensor { degree: 2, dim: n, entries }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex<f64>] {
        &self.entries
    }

    pub fn get(&self, index: &[usize]) -> Complex<f64> {
        assert_eq!(index.len(), self.degree);
        let mut flat = 0;
        let mut stride = 1;
        for &i in index {
            flat += i * stride;
            stride *= self.dim;
        }
        self.entries[flat]
    }
}

/// Enforces the horizon bound `τ < 1/(2 max(0, abscissa(a)))`.
fn check_tau(a: &Mat, tau: f64) -> Result<()> {
    if tau <= 0.0 {
        return Err(Error::invalid_spec("tau", "horizon must be positive"));
    }
    let margin = matcore::stability_margin(a)?;
    if tau >= margin.tau_bound {
        return Err(Error::TauTooLarge { tau, bound: margin.tau_bound });
    }
    Ok(())
}

/// State-space route: `P = Re E_τ(XXᵀ)` solves the shifted Lyapunov
/// equation `A_τ P + P A_τᵀ + Σ/τ = 0` with `A_τ = a − I/(2τ)`.
pub fn discounted_second_moments(a: &Mat, sigma: &Mat, tau: f64) -> Result<Mat> {
    let n = ensure_same_order(a, sigma)?;
    if !matcore::is_symmetric_within(sigma, 1e-10) {
        return Err(Error::invalid_spec("sigma", "matrix is not symmetric"));
    }
    check_tau(a, tau)?;
    let shifted = a - Mat::identity(n, n) / (2.0 * tau);
    let p = solve_lyapunov(&shifted, &(sigma / tau))?;
    symmetrizer(&p)
}

/// Truncation and convergence policy for the frequency-domain route.
#[derive(Clone, Copy, Debug)]
pub struct QuadraturePolicy {
    /// Absolute Frobenius tolerance on the returned matrix.
    pub tol: f64,
    /// Cap on adaptive segments before giving up.
    pub max_segments: usize,
}

impl Default for QuadraturePolicy {
    fn default() -> Self {
        QuadraturePolicy { tol: 1e-8, max_segments: 4000 }
    }
}

/// Frequency-domain route:
/// `P = (1/(2πτ)) Re ∫ F(1/(2τ)+iω) Γ F(1/(2τ)+iω)* dω` with
/// `F(s) = (sI − a)⁻¹`.
///
/// The integration window `|ω| ≤ Ω` is certified: the analytic tail bound
/// `‖F(1/(2τ)+iω)‖ ≤ 1/(|ω| − ‖a‖)` (valid for `|ω| > 2‖a‖`) is used to
/// choose `Ω` so the discarded tail stays below half the tolerance, and
/// the adaptive rule gets the other half.
pub fn discounted_second_moments_freq(
    a: &Mat,
    gamma: &CMat,
    tau: f64,
    policy: &QuadraturePolicy,
) -> Result<Mat> {
    let n = ensure_square(a)?;
    if gamma.nrows() != n || gamma.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "gamma is {}x{}, dynamics order is {n}",
            gamma.nrows(),
            gamma.ncols()
        )));
    }
    check_tau(a, tau)?;

    let a_norm = a.norm();
    let gamma_norm = gamma.norm() * (n as f64).sqrt();
    let tol = policy.tol.max(1e-14);
    // Tail of both half-lines: (Γ/(2πτ)) · 2/(Ω − ‖a‖) ≤ tol/2.
    let omega_tail = a_norm + 2.0 * gamma_norm / (std::f64::consts::PI * tau * (tol / 2.0));
    let omega_max = (2.0 * a_norm + 1.0).max(omega_tail);

    let c = 1.0 / (2.0 * tau);
    let ac = matcore::to_complex(a);
    let eye = CMat::identity(n, n);
    let integrand = |omega: f64| -> CMat {
        let shift = &eye * Complex::new(c, omega);
        let resolvent = (shift - &ac)
            .lu()
            .try_inverse()
            .unwrap_or_else(|| CMat::zeros(n, n));
        &resolvent * gamma * resolvent.adjoint()
    };

    let scale = 2.0 * std::f64::consts::PI * tau;
    let (integral, _err) =
        quad::integrate_adaptive(integrand, -omega_max, omega_max, tol / 2.0 * scale, policy.max_segments)?;
    let p = integral.map(|z| z.re) / scale;
    symmetrizer(&p)
}

/// Trigonometric route for the full matrix of degree-2 averages,
/// `E_τ(XXᵀ) = Σ_{k,m} χ_τ(ω_k + ω_m) C_k Γ C_mᵀ`.
///
/// Its real part reproduces the state-space `P`; its imaginary part is the
/// preserved CCR matrix `Θ`.
pub fn discounted_second_moment_matrix(
    modes: &ModeDecomposition,
    init: &InitialSecondMoments,
    tau: f64,
) -> Result<CMat> {
    if tau <= 0.0 {
        return Err(Error::invalid_spec("tau", "horizon must be positive"));
    }
    second_moment_matrix_weighted(modes, init, |omega_sum| exp_char(tau, omega_sum))
}

/// Infinite-horizon counterpart: only resonant mode pairs
/// (`ω_k + ω_m = 0`) survive.
pub fn infinite_horizon_second_moment_matrix(
    modes: &ModeDecomposition,
    init: &InitialSecondMoments,
) -> Result<CMat> {
    let thresh = resonance_threshold(modes.frequencies());
    second_moment_matrix_weighted(modes, init, move |omega_sum| {
        if omega_sum.abs() <= thresh {
            Complex::new(1.0, 0.0)
        } else {
            Complex::new(0.0, 0.0)
        }
    })
}

fn second_moment_matrix_weighted<W: Fn(f64) -> Complex<f64>>(
    modes: &ModeDecomposition,
    init: &InitialSecondMoments,
    weight: W,
) -> Result<CMat> {
    let n = modes.order();
    if init.sigma().nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial moments order {} does not match mode order {n}",
            init.sigma().nrows()
        )));
    }
    let gamma = init.gamma();
    let omega = modes.frequencies();
    let mut total = CMat::zeros(n, n);
    for k in 0..n {
        let left = &modes.mode_matrices()[k] * gamma;
        for m in 0..n {
            let w = weight(omega[k] + omega[m]);
            if w.norm() == 0.0 {
                continue;
            }
            total += (&left * modes.mode_matrices()[m].transpose()) * w;
        }
    }
    Ok(total)
}

/// Discounted average of the degree-`d` monomial `Ξ_j = Π_s X_{j_s}`,
/// `E_τ Ξ_j = Σ_k χ_τ(Σ_s ω_{k_s}) Σ_ℓ Π_s c_{j_s k_s ℓ_s} E Ξ_ℓ(0)`.
pub fn discounted_monomial_average(
    modes: &ModeDecomposition,
    j: &[usize],
    m0: &MomentTensor,
    tau: f64,
) -> Result<Complex<f64>> {
    if tau <= 0.0 {
        return Err(Error::invalid_spec("tau", "horizon must be positive"));
    }
    monomial_average_weighted(modes, j, m0, |omega_sum| exp_char(tau, omega_sum))
}

/// Infinite-horizon average, restricted to resonant index tuples
/// (`Σ_s ω_{k_s} = 0` within [`FREQUENCY_SUM_TOL`] relative).
pub fn infinite_horizon_monomial_average(
    modes: &ModeDecomposition,
    j: &[usize],
    m0: &MomentTensor,
) -> Result<Complex<f64>> {
    let thresh = resonance_threshold(modes.frequencies());
    monomial_average_weighted(modes, j, m0, move |omega_sum| {
        if omega_sum.abs() <= thresh {
            Complex::new(1.0, 0.0)
        } else {
            Complex::new(0.0, 0.0)
        }
    })
}

fn resonance_threshold(omega: &[f64]) -> f64 {
    FREQUENCY_SUM_TOL * omega.iter().fold(0.0f64, |a, &w| a.max(w.abs()))
}

fn monomial_average_weighted<W: Fn(f64) -> Complex<f64>>(
    modes: &ModeDecomposition,
    j: &[usize],
    m0: &MomentTensor,
    weight: W,
) -> Result<Complex<f64>> {
    let n = modes.order();
    let d = j.len();
    if d != m0.degree() {
        return Err(Error::DegreeMismatch { expected: m0.degree(), got: d });
    }
    if m0.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "moment tensor dimension {} does not match mode order {n}",
            m0.dim()
        )));
    }
    if j.iter().any(|&js| js >= n) {
        return Err(Error::DimensionMismatch("monomial index out of range".into()));
    }
    let terms = n.checked_pow(d as u32).filter(|&t| t <= MAX_MODE_TERMS).ok_or(
        Error::TooManyTerms { terms: usize::MAX, max: MAX_MODE_TERMS },
    )?;

    // Contract the initial-moment tensor mode by mode: after step s the
    // s-th index counts modes k_s instead of variables l_s.
    let mut cur: Vec<Complex<f64>> = m0.entries().to_vec();
    for (s, &js) in j.iter().enumerate() {
        let stride = n.pow(s as u32);
        let mut next = vec![Complex::new(0.0, 0.0); terms];
        for (idx, slot) in next.iter_mut().enumerate() {
            let k = (idx / stride) % n;
            let base = idx - k * stride;
            let mut acc = Complex::new(0.0, 0.0);
            for l in 0..n {
                acc += modes.coefficient(js, k, l) * cur[base + l * stride];
            }
            *slot = acc;
        }
        cur = next;
    }

    // Weighted sum over k-tuples, walking flat indices so the reduction is
    // deterministic.
    let omega = modes.frequencies();
    let mut total = Complex::new(0.0, 0.0);
    for (flat, value) in cur.iter().enumerate() {
        let mut rest = flat;
        let mut omega_sum = 0.0;
        for _ in 0..d {
            omega_sum += omega[rest % n];
            rest /= n;
        }
        total += weight(omega_sum) * value;
    }
    Ok(total)
}
