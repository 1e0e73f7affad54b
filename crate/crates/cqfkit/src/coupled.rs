//! Directly coupled plant-observer composite.
//!
//! The plant `(K, Θ₁, Σ₁, S₁)` and observer `(L, M, Θ₂, Σ₂, S₂)` form a
//! closed oscillator with block CCR matrix `Θ = diag(Θ₁, Θ₂)`, energy
//! matrix `[[K, L],[Lᵀ, M]]` and dynamics `𝒜 = 2ΘR`. A weight triple
//! `(Π, λ, τ)` turns estimation error plus back-action penalty into the
//! output matrix `𝒞 = [[S₁, −S₂],[0, √(λΠ)L]]`. The shifted Lyapunov
//! solves for `(𝒜_τ, Σ/τ)` and `(𝒜_τᵀ, 𝒞ᵀ𝒞)` produce the controllability
//! and observability Gramians whose product, the Hankelian, carries the
//! optimality conditions evaluated in [`crate::cqf`].

use crate::error::{Error, Result};
use crate::matcore::{
    self, ensure_finite, ensure_square, solve_lyapunov, stability_margin, symmetrizer, Mat,
    StabilityMargin,
};
use crate::policy::NumericPolicy;
use crate::qho::CcrMatrix;

/// Quantum plant: CCR matrix `Θ₁`, fixed energy matrix `K`, initial
/// second moments `Σ₁` and the selector `S₁` of plant variables of
/// interest.
#[derive(Clone, Debug)]
pub struct PlantSpec {
    theta1: CcrMatrix,
    k_energy: Mat,
    sigma1: Mat,
    s1: Mat,
}

impl PlantSpec {
    pub fn new(theta1: CcrMatrix, k_energy: Mat, sigma1: Mat, s1: Mat) -> Result<Self> {
        Self::with_policy(theta1, k_energy, sigma1, s1, &NumericPolicy::default())
    }

    pub fn with_policy(
        theta1: CcrMatrix,
        k_energy: Mat,
        sigma1: Mat,
        s1: Mat,
        policy: &NumericPolicy,
    ) -> Result<Self> {
        let n = theta1.order();
        let k_energy = validated_symmetric(k_energy, n, "plant.k_energy", policy)?;
        let sigma1 = validated_symmetric(sigma1, n, "plant.sigma1", policy)?;
        ensure_finite(&s1)?;
        if s1.ncols() != n {
            return Err(Error::invalid_spec(
                "plant.s1",
                format!("has {} columns, plant dimension is {n}", s1.ncols()),
            ));
        }
        check_state_uncertainty(&sigma1, &theta1, "plant.sigma1")?;
        Ok(PlantSpec { theta1, k_energy, sigma1, s1 })
    }

    pub fn theta(&self) -> &CcrMatrix {
        &self.theta1
    }

    pub fn k_energy(&self) -> &Mat {
        &self.k_energy
    }

    pub fn sigma(&self) -> &Mat {
        &self.sigma1
    }

    pub fn selector(&self) -> &Mat {
        &self.s1
    }

    pub fn dim(&self) -> usize {
        self.theta1.order()
    }

    pub fn output_dim(&self) -> usize {
        self.s1.nrows()
    }
}

/// Coherent observer: CCR matrix `Θ₂`, coupling `L`, energy `M`, initial
/// moments `Σ₂` and the selector `S₂` of observer variables.
#[derive(Clone, Debug)]
pub struct ObserverSpec {
    theta2: CcrMatrix,
    coupling: Mat,
    m_energy: Mat,
    sigma2: Mat,
    s2: Mat,
}

impl ObserverSpec {
    pub fn new(theta2: CcrMatrix, coupling: Mat, m_energy: Mat, sigma2: Mat, s2: Mat) -> Result<Self> {
        Self::with_policy(theta2, coupling, m_energy, sigma2, s2, &NumericPolicy::default())
    }

    pub fn with_policy(
        theta2: CcrMatrix,
        coupling: Mat,
        m_energy: Mat,
        sigma2: Mat,
        s2: Mat,
        policy: &NumericPolicy,
    ) -> Result<Self> {
        let nu = theta2.order();
        let m_energy = validated_symmetric(m_energy, nu, "observer.m_energy", policy)?;
        let sigma2 = validated_symmetric(sigma2, nu, "observer.sigma2", policy)?;
        ensure_finite(&coupling)?;
        ensure_finite(&s2)?;
        if coupling.ncols() != nu {
            return Err(Error::invalid_spec(
                "observer.l",
                format!("has {} columns, observer dimension is {nu}", coupling.ncols()),
            ));
        }
        if s2.ncols() != nu {
            return Err(Error::invalid_spec(
                "observer.s2",
                format!("has {} columns, observer dimension is {nu}", s2.ncols()),
            ));
        }
        check_state_uncertainty(&sigma2, &theta2, "observer.sigma2")?;
        Ok(ObserverSpec { theta2, coupling, m_energy, sigma2, s2 })
    }

    /// Same observer with a different decision pair `(L, M)`.
    pub fn with_decision(&self, coupling: Mat, m_energy: Mat) -> Result<Self> {
        ObserverSpec::new(
            self.theta2.clone(),
            coupling,
            m_energy,
            self.sigma2.clone(),
            self.s2.clone(),
        )
    }

    pub fn theta(&self) -> &CcrMatrix {
        &self.theta2
    }

    pub fn coupling(&self) -> &Mat {
        &self.coupling
    }

    pub fn m_energy(&self) -> &Mat {
        &self.m_energy
    }

    pub fn sigma(&self) -> &Mat {
        &self.sigma2
    }

    pub fn selector(&self) -> &Mat {
        &self.s2
    }

    pub fn dim(&self) -> usize {
        self.theta2.order()
    }
}

/// Cost weights: back-action weight matrix `Π ≻ 0`, relative weight
/// `λ > 0` and effective horizon `τ > 0`.
#[derive(Clone, Debug)]
pub struct CostSpec {
    pi_weight: Mat,
    lambda: f64,
    tau: f64,
}

impl CostSpec {
    pub fn new(pi_weight: Mat, lambda: f64, tau: f64) -> Result<Self> {
        Self::with_policy(pi_weight, lambda, tau, &NumericPolicy::default())
    }

    pub fn with_policy(pi_weight: Mat, lambda: f64, tau: f64, policy: &NumericPolicy) -> Result<Self> {
        let n = ensure_square(&pi_weight)?;
        ensure_finite(&pi_weight)?;
        if !matcore::is_symmetric_within(&pi_weight, policy.eigen_tol) {
            return Err(Error::invalid_spec("cost.pi_weight", "matrix is not symmetric"));
        }
        let pi_weight = symmetrizer(&pi_weight)?;
        let (vals, _) = matcore::symmetric_eigen(&pi_weight)?;
        let max = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if n == 0 || vals[0] <= policy.eigen_tol * max.max(1.0) {
            return Err(Error::invalid_spec("cost.pi_weight", "matrix is not positive definite"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid_spec("cost.lambda", "weight must be positive"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid_spec("cost.tau", "horizon must be positive"));
        }
        Ok(CostSpec { pi_weight, lambda, tau })
    }

    pub fn pi_weight(&self) -> &Mat {
        &self.pi_weight
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

fn validated_symmetric(m: Mat, n: usize, field: &str, policy: &NumericPolicy) -> Result<Mat> {
    ensure_finite(&m)?;
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::invalid_spec(
            field,
            format!("is {}x{}, expected {n}x{n}", m.nrows(), m.ncols()),
        ));
    }
    if !matcore::is_symmetric_within(&m, policy.eigen_tol.max(1e-12)) {
        return Err(Error::invalid_spec(field, "matrix is not symmetric"));
    }
    symmetrizer(&m)
}

/// Physical-state constraint `Σ_k + iΘ_k ⪰ 0`.
fn check_state_uncertainty(sigma: &Mat, theta: &CcrMatrix, field: &str) -> Result<()> {
    let n = sigma.nrows();
    let gamma = matcore::CMat::from_fn(n, n, |i, j| {
        nalgebra::Complex::new(sigma[(i, j)], theta.matrix()[(i, j)])
    });
    let eigs = gamma.symmetric_eigen().eigenvalues;
    let max = eigs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min < -1e-10 * max.max(1.0) {
        return Err(Error::invalid_spec(
            field,
            format!("uncertainty constraint violated: min eig(Σ + iΘ) = {min:.3e}"),
        ));
    }
    Ok(())
}

/// Assembled composite system with cached blocks.
#[derive(Clone, Debug)]
pub struct CompositeSystem {
    plant: PlantSpec,
    observer: ObserverSpec,
    cost: CostSpec,
    cal_a: Mat,
    theta: CcrMatrix,
    sigma: Mat,
    cal_c: Mat,
    a_block: Mat,
    b_block: Mat,
    alpha_block: Mat,
    beta_block: Mat,
}

impl CompositeSystem {
    pub fn plant(&self) -> &PlantSpec {
        &self.plant
    }

    pub fn observer(&self) -> &ObserverSpec {
        &self.observer
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    /// Composite dynamics matrix `𝒜 = 2ΘR`.
    pub fn dynamics(&self) -> &Mat {
        &self.cal_a
    }

    /// Block-diagonal composite CCR matrix.
    pub fn theta(&self) -> &CcrMatrix {
        &self.theta
    }

    /// Block-diagonal initial covariance `Σ = diag(Σ₁, Σ₂)`.
    pub fn sigma(&self) -> &Mat {
        &self.sigma
    }

    /// Cost output matrix `𝒞`.
    pub fn output_matrix(&self) -> &Mat {
        &self.cal_c
    }

    /// Plant drift block `A = 2Θ₁K`.
    pub fn a_block(&self) -> &Mat {
        &self.a_block
    }

    /// Plant input block `B = 2Θ₁`.
    pub fn b_block(&self) -> &Mat {
        &self.b_block
    }

    /// Observer drift block `α = 2Θ₂M`.
    pub fn alpha_block(&self) -> &Mat {
        &self.alpha_block
    }

    /// Observer input block `β = 2Θ₂`.
    pub fn beta_block(&self) -> &Mat {
        &self.beta_block
    }

    pub fn plant_dim(&self) -> usize {
        self.plant.dim()
    }

    pub fn observer_dim(&self) -> usize {
        self.observer.dim()
    }

    pub fn split(&self) -> BlockSplit {
        BlockSplit { n: self.plant_dim(), nu: self.observer_dim() }
    }

    /// Rebuild with a new decision pair, keeping everything else fixed.
    pub fn with_decision(&self, coupling: Mat, m_energy: Mat) -> Result<CompositeSystem> {
        let observer = self.observer.with_decision(coupling, m_energy)?;
        assemble(self.plant.clone(), observer, self.cost.clone())
    }
}

/// Explicit `(n, ν)` block addressing for composite matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSplit {
    pub n: usize,
    pub nu: usize,
}

impl BlockSplit {
    pub fn b11(&self, m: &Mat) -> Mat {
        m.view((0, 0), (self.n, self.n)).into_owned()
    }

    pub fn b12(&self, m: &Mat) -> Mat {
        m.view((0, self.n), (self.n, self.nu)).into_owned()
    }

    pub fn b21(&self, m: &Mat) -> Mat {
        m.view((self.n, 0), (self.nu, self.n)).into_owned()
    }

    pub fn b22(&self, m: &Mat) -> Mat {
        m.view((self.n, self.n), (self.nu, self.nu)).into_owned()
    }
}

/// Builds the composite system `(𝒜, Θ, Σ, 𝒞)` from its parts.
pub fn assemble(plant: PlantSpec, observer: ObserverSpec, cost: CostSpec) -> Result<CompositeSystem> {
    let n = plant.dim();
    let nu = observer.dim();
    let p = plant.output_dim();

    if observer.coupling().nrows() != n {
        return Err(Error::invalid_spec(
            "observer.l",
            format!("has {} rows, plant dimension is {n}", observer.coupling().nrows()),
        ));
    }
    if observer.selector().nrows() != p {
        return Err(Error::invalid_spec(
            "observer.s2",
            format!("has {} rows, s1 has {p}", observer.selector().nrows()),
        ));
    }
    if cost.pi_weight().nrows() != n {
        return Err(Error::invalid_spec(
            "cost.pi_weight",
            format!("order {} does not match plant dimension {n}", cost.pi_weight().nrows()),
        ));
    }

    let theta1 = plant.theta().matrix();
    let theta2 = observer.theta().matrix();
    let l = observer.coupling();

    // Block CCR and initial covariance.
    let mut theta = Mat::zeros(n + nu, n + nu);
    theta.view_mut((0, 0), (n, n)).copy_from(theta1);
    theta.view_mut((n, n), (nu, nu)).copy_from(theta2);
    let theta = CcrMatrix::new(theta)?;

    let mut sigma = Mat::zeros(n + nu, n + nu);
    sigma.view_mut((0, 0), (n, n)).copy_from(plant.sigma());
    sigma.view_mut((n, n), (nu, nu)).copy_from(observer.sigma());

    // 𝒜 = 2ΘR block by block.
    let a_block = 2.0 * theta1 * plant.k_energy();
    let b_block = 2.0 * theta1;
    let alpha_block = 2.0 * theta2 * observer.m_energy();
    let beta_block = 2.0 * theta2;
    let mut cal_a = Mat::zeros(n + nu, n + nu);
    cal_a.view_mut((0, 0), (n, n)).copy_from(&a_block);
    cal_a.view_mut((0, n), (n, nu)).copy_from(&(2.0 * theta1 * l));
    cal_a.view_mut((n, 0), (nu, n)).copy_from(&(2.0 * theta2 * l.transpose()));
    cal_a.view_mut((n, n), (nu, nu)).copy_from(&alpha_block);

    // 𝒞 = [[S1, -S2],[0, sqrt(λΠ) L]] with the symmetric PSD square root.
    let sqrt_weight = matcore::sym_psd_sqrt(&(cost.pi_weight() * cost.lambda()), 1e-12)?;
    let mut cal_c = Mat::zeros(p + n, n + nu);
    cal_c.view_mut((0, 0), (p, n)).copy_from(plant.selector());
    cal_c.view_mut((0, n), (p, nu)).copy_from(&(-observer.selector()));
    cal_c.view_mut((p, n), (n, nu)).copy_from(&(&sqrt_weight * l));

    Ok(CompositeSystem {
        plant,
        observer,
        cost,
        cal_a,
        theta,
        sigma,
        cal_c,
        a_block,
        b_block,
        alpha_block,
        beta_block,
    })
}

/// Admissibility verdict for a horizon `τ`.
#[derive(Clone, Copy, Debug)]
pub struct Admissibility {
    pub admissible: bool,
    /// `1/(2 max(0, abscissa)) − τ`, or `+inf` for a nonpositive abscissa.
    pub margin: f64,
    pub stability: StabilityMargin,
}

/// Strict test `τ < 1/(2 max(0, abscissa(𝒜)))`; the boundary is excluded.
pub fn admissibility(sys: &CompositeSystem, tau: f64) -> Result<Admissibility> {
    let stability = stability_margin(sys.dynamics())?;
    let margin = if stability.tau_bound.is_infinite() {
        f64::INFINITY
    } else {
        stability.tau_bound - tau
    };
    Ok(Admissibility { admissible: tau < stability.tau_bound, margin, stability })
}

/// Controllability and observability Gramians of the shifted composite,
/// with the Hankelian `ℰ = 𝒬𝒫`.
#[derive(Clone, Debug)]
pub struct GramianPair {
    cal_p: Mat,
    cal_q: Mat,
    hankelian: Mat,
    split: BlockSplit,
}

impl GramianPair {
    pub fn controllability(&self) -> &Mat {
        &self.cal_p
    }

    pub fn observability(&self) -> &Mat {
        &self.cal_q
    }

    pub fn hankelian(&self) -> &Mat {
        &self.hankelian
    }

    pub fn split(&self) -> BlockSplit {
        self.split
    }

    pub fn p22(&self) -> Mat {
        self.split.b22(&self.cal_p)
    }

    pub fn e12(&self) -> Mat {
        self.split.b12(&self.hankelian)
    }

    pub fn e21(&self) -> Mat {
        self.split.b21(&self.hankelian)
    }

    pub fn e22(&self) -> Mat {
        self.split.b22(&self.hankelian)
    }
}

/// Solves `𝒜_τ𝒫 + 𝒫𝒜_τᵀ + Σ/τ = 0` and `𝒜_τᵀ𝒬 + 𝒬𝒜_τ + 𝒞ᵀ𝒞 = 0` with
/// `𝒜_τ = 𝒜 − I/(2τ)`.
pub fn gramians(sys: &CompositeSystem, tau: f64) -> Result<GramianPair> {
    let adm = admissibility(sys, tau)?;
    if !adm.admissible {
        return Err(Error::NotAdmissible { tau, bound: adm.stability.tau_bound });
    }
    let total = sys.plant_dim() + sys.observer_dim();
    let shifted = sys.dynamics() - Mat::identity(total, total) / (2.0 * tau);
    let cal_p = symmetrizer(&solve_lyapunov(&shifted, &(sys.sigma() / tau))?)?;
    let ctc = sys.output_matrix().transpose() * sys.output_matrix();
    let cal_q = symmetrizer(&solve_lyapunov(&shifted.transpose(), &ctc)?)?;
    let hankelian = &cal_q * &cal_p;
    Ok(GramianPair { cal_p, cal_q, hankelian, split: sys.split() })
}

/// Hamiltonianized Gramians `P = 𝒫Θ⁻¹`, `Q = Θ𝒬`; both land in the same
/// Lie algebra of Hamiltonian matrices as `𝒜`.
pub fn hamiltonianize(pair: &GramianPair, theta: &CcrMatrix) -> Result<(Mat, Mat)> {
    let theta_inv = theta.inverse()?;
    let p = pair.controllability() * &theta_inv;
    let q = theta.matrix() * pair.observability();
    Ok((p, q))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::qho::check_hamiltonian;

    fn j2() -> Mat {
        Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
    }

    pub(crate) fn canonical_plant() -> PlantSpec {
        PlantSpec::new(
            CcrMatrix::canonical(2).unwrap(),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
        )
        .unwrap()
    }

    pub(crate) fn canonical_observer(l: Mat, m: Mat) -> ObserverSpec {
        ObserverSpec::new(
            CcrMatrix::canonical(2).unwrap(),
            l,
            m,
            Mat::identity(2, 2),
            Mat::identity(2, 2),
        )
        .unwrap()
    }

    pub(crate) fn canonical_cost() -> CostSpec {
        CostSpec::new(Mat::identity(2, 2), 1.0, 1.0).unwrap()
    }

    #[test]
    fn assemble_uncoupled_blocks() {
        let sys = assemble(
            canonical_plant(),
            canonical_observer(Mat::zeros(2, 2), Mat::zeros(2, 2)),
            canonical_cost(),
        )
        .unwrap();
        let split = sys.split();
        assert_abs_diff_eq!(split.b11(sys.dynamics()), j2(), epsilon = 1e-15);
        assert_eq!(split.b12(sys.dynamics()), Mat::zeros(2, 2));
        assert_eq!(split.b21(sys.dynamics()), Mat::zeros(2, 2));
        assert_eq!(split.b22(sys.dynamics()), Mat::zeros(2, 2));
        // C = [[S1, -S2],[0, 0]].
        let c = sys.output_matrix();
        assert_abs_diff_eq!(c.view((0, 0), (2, 2)).into_owned(), Mat::identity(2, 2), epsilon = 1e-15);
        assert_abs_diff_eq!(c.view((0, 2), (2, 2)).into_owned(), -Mat::identity(2, 2), epsilon = 1e-15);
        assert_eq!(c.view((2, 0), (2, 4)).into_owned(), Mat::zeros(2, 4));
    }

    #[test]
    fn assemble_canonical_all_j_blocks() {
        let sys = assemble(
            canonical_plant(),
            canonical_observer(Mat::identity(2, 2), Mat::identity(2, 2)),
            canonical_cost(),
        )
        .unwrap();
        let split = sys.split();
        for block in [
            split.b11(sys.dynamics()),
            split.b12(sys.dynamics()),
            split.b21(sys.dynamics()),
            split.b22(sys.dynamics()),
        ] {
            assert_abs_diff_eq!(block, j2(), epsilon = 1e-15);
        }
        // Hamiltonian structure of the composite.
        assert!(check_hamiltonian(sys.dynamics(), sys.theta()).unwrap().holds);
        // ODE split blocks.
        assert_abs_diff_eq!(sys.a_block(), &j2(), epsilon = 1e-15);
        assert_abs_diff_eq!(sys.b_block(), &j2(), epsilon = 1e-15);
        assert_abs_diff_eq!(sys.alpha_block(), &j2(), epsilon = 1e-15);
        assert_abs_diff_eq!(sys.beta_block(), &j2(), epsilon = 1e-15);
    }

    #[test]
    fn assemble_admissible_family_has_imaginary_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..5 {
            let k = {
                let g = Mat::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
                &g * g.transpose()
            };
            let m = {
                let g = Mat::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
                &g * g.transpose()
            };
            let lam = {
                let g = Mat::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
                let norm = g.norm();
                if norm > 0.0 { g / (norm * 1.1) } else { g }
            };
            let l = matcore::sym_psd_sqrt(&k, 1e-12).unwrap()
                * lam
                * matcore::sym_psd_sqrt(&m, 1e-12).unwrap();
            let plant = PlantSpec::new(
                CcrMatrix::canonical(2).unwrap(),
                k,
                Mat::identity(2, 2),
                Mat::identity(2, 2),
            )
            .unwrap();
            let obs = canonical_observer(l, m);
            let sys = assemble(plant, obs, canonical_cost()).unwrap();
            let margin = stability_margin(sys.dynamics()).unwrap();
            assert!(margin.abscissa <= 1e-9, "abscissa {:.3e}", margin.abscissa);
        }
    }

    #[test]
    fn admissibility_boundary_is_excluded() {
        // Plant with abscissa 0.25: K indefinite makes 2ΘK hyperbolic.
        let k = Mat::from_diagonal(&nalgebra::dvector![0.25, -0.25]);
        let plant = PlantSpec::new(
            CcrMatrix::canonical(2).unwrap(),
            k,
            Mat::identity(2, 2),
            Mat::identity(2, 2),
        )
        .unwrap();
        let sys = assemble(
            plant,
            canonical_observer(Mat::zeros(2, 2), Mat::zeros(2, 2)),
            canonical_cost(),
        )
        .unwrap();
        let margin = stability_margin(sys.dynamics()).unwrap();
        assert_abs_diff_eq!(margin.abscissa, 0.25, epsilon = 1e-10);

        let adm = admissibility(&sys, 1.0).unwrap();
        assert!(adm.admissible);
        assert!((adm.stability.tau_bound - 2.0).abs() <= 1e-9);
        // Exactly at the bound: excluded by the strict inequality.
        let boundary = adm.stability.tau_bound;
        let adm = admissibility(&sys, boundary).unwrap();
        assert!(!adm.admissible, "boundary tau must be excluded");
        assert_eq!(adm.margin, 0.0);
        let adm = admissibility(&sys, 2.1).unwrap();
        assert!(!adm.admissible);
    }

    #[test]
    fn admissibility_oscillatory_for_any_tau() {
        let sys = assemble(
            canonical_plant(),
            canonical_observer(0.5 * Mat::identity(2, 2), Mat::identity(2, 2)),
            canonical_cost(),
        )
        .unwrap();
        let adm = admissibility(&sys, 1e6).unwrap();
        assert!(adm.admissible);
        assert_eq!(adm.margin, f64::INFINITY);
    }

    #[test]
    fn gramians_uncoupled_are_block_diagonal() {
        let sys = assemble(
            canonical_plant(),
            canonical_observer(Mat::zeros(2, 2), 0.7 * Mat::identity(2, 2)),
            canonical_cost(),
        )
        .unwrap();
        let pair = gramians(&sys, 1.0).unwrap();
        let split = pair.split();
        assert!(split.b12(pair.controllability()).norm() <= 1e-12);
        // Each block solves its own shifted equation.
        let p11 = split.b11(pair.controllability());
        let direct = crate::moments::discounted_second_moments(
            sys.a_block(),
            &Mat::identity(2, 2),
            1.0,
        )
        .unwrap();
        assert!((p11 - direct).norm() <= 1e-10);
    }

    #[test]
    fn gramians_zero_output_zero_q() {
        let plant = PlantSpec::new(
            CcrMatrix::canonical(2).unwrap(),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::zeros(2, 2),
        )
        .unwrap();
        let obs = ObserverSpec::new(
            CcrMatrix::canonical(2).unwrap(),
            Mat::zeros(2, 2),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::zeros(2, 2),
        )
        .unwrap();
        let sys = assemble(plant, obs, canonical_cost()).unwrap();
        let pair = gramians(&sys, 1.0).unwrap();
        assert!(pair.observability().norm() <= 1e-14);
        assert!(pair.hankelian().norm() <= 1e-14);
    }

    #[test]
    fn gramians_positive_and_symmetric() {
        let sys = assemble(
            canonical_plant(),
            canonical_observer(0.5 * Mat::identity(2, 2), Mat::identity(2, 2)),
            canonical_cost(),
        )
        .unwrap();
        let pair = gramians(&sys, 1.0).unwrap();
        for g in [pair.controllability(), pair.observability()] {
            assert!((g - g.transpose()).norm() <= 1e-10);
            let (vals, _) = matcore::symmetric_eigen(g).unwrap();
            assert!(vals[0] >= -1e-10, "min eig {:.3e}", vals[0]);
        }
        // tr(QP) = tr(PQ).
        let qp = (pair.observability() * pair.controllability()).trace();
        let pq = (pair.controllability() * pair.observability()).trace();
        assert_abs_diff_eq!(qp, pq, epsilon = 1e-10 * qp.abs().max(1.0));
        // ALE residuals.
        let tau = 1.0;
        let shifted = sys.dynamics() - Mat::identity(4, 4) / (2.0 * tau);
        let res_p = (&shifted * pair.controllability()
            + pair.controllability() * shifted.transpose()
            + sys.sigma() / tau)
            .norm();
        let ctc = sys.output_matrix().transpose() * sys.output_matrix();
        let res_q = (shifted.transpose() * pair.observability()
            + pair.observability() * &shifted
            + ctc)
            .norm();
        assert!(res_p <= 1e-9 * pair.controllability().norm().max(1.0));
        assert!(res_q <= 1e-9 * pair.observability().norm().max(1.0));
    }

    #[test]
    fn gramians_reject_inadmissible_tau() {
        let k = Mat::from_diagonal(&nalgebra::dvector![0.25, -0.25]);
        let plant = PlantSpec::new(
            CcrMatrix::canonical(2).unwrap(),
            k,
            Mat::identity(2, 2),
            Mat::identity(2, 2),
        )
        .unwrap();
        let sys = assemble(
            plant,
            canonical_observer(Mat::zeros(2, 2), Mat::zeros(2, 2)),
            canonical_cost(),
        )
        .unwrap();
        assert!(matches!(
            gramians(&sys, 3.0),
            Err(Error::NotAdmissible { .. })
        ));
    }

    #[test]
    fn hamiltonianize_structure() {
        let sys = assemble(
            canonical_plant(),
            canonical_observer(0.5 * Mat::identity(2, 2), Mat::identity(2, 2)),
            canonical_cost(),
        )
        .unwrap();
        let pair = gramians(&sys, 1.0).unwrap();
        let (p, q) = hamiltonianize(&pair, sys.theta()).unwrap();
        assert!(check_hamiltonian(&p, sys.theta()).unwrap().holds);
        assert!(check_hamiltonian(&q, sys.theta()).unwrap().holds);

        // Theta^{-1} itself is Hamiltonian: P for 𝒫 = I.
        let theta_inv = sys.theta().inverse().unwrap();
        assert!(check_hamiltonian(&theta_inv, sys.theta()).unwrap().holds);
    }

    #[test]
    fn block_reassembly_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = Mat::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let m = {
            let g = Mat::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
            0.5 * (&g + g.transpose())
        };
        let sys = assemble(canonical_plant(), canonical_observer(l.clone(), m), canonical_cost())
            .unwrap();
        let split = sys.split();
        let theta1 = CcrMatrix::canonical(2).unwrap();
        assert_eq!(split.b12(sys.dynamics()), 2.0 * theta1.matrix() * &l);
        assert_eq!(split.b21(sys.dynamics()), 2.0 * theta1.matrix() * l.transpose());
    }

    #[test]
    fn invalid_specs_name_the_field() {
        let bad_k = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let err = PlantSpec::new(
            CcrMatrix::canonical(2).unwrap(),
            bad_k,
            Mat::identity(2, 2),
            Mat::identity(2, 2),
        )
        .unwrap_err();
        match err {
            Error::InvalidSpec { field, .. } => assert_eq!(field, "plant.k_energy"),
            other => panic!("expected InvalidSpec, got {other:?}"),
        }

        let err = CostSpec::new(Mat::from_diagonal(&nalgebra::dvector![1.0, 0.0]), 1.0, 1.0)
            .unwrap_err();
        match err {
            Error::InvalidSpec { field, .. } => assert_eq!(field, "cost.pi_weight"),
            other => panic!("expected InvalidSpec, got {other:?}"),
        }
    }
}
