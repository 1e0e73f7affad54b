//! Shared generators and independent oracles for the integration suites.

#![allow(dead_code)]

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cqfkit::coupled::{admissibility, assemble, CompositeSystem, CostSpec, ObserverSpec, PlantSpec};
use cqfkit::matcore::{self, Mat};
use cqfkit::qho::CcrMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let g = random_matrix(rng, n, n);
    0.5 * (&g + g.transpose())
}

pub fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let g = random_matrix(rng, n, n);
    &g * g.transpose()
}

pub fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    random_psd(rng, n) + Mat::identity(n, n) * 0.2
}

pub fn random_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let g = random_matrix(rng, n, n);
    let abscissa = matcore::stability_margin(&g).unwrap().abscissa;
    g - Mat::identity(n, n) * (abscissa + 0.3)
}

/// Random nonsingular antisymmetric matrix: noise plus a block-J shift.
pub fn random_ccr(rng: &mut ChaCha8Rng, n: usize) -> CcrMatrix {
    let g = random_matrix(rng, n, n);
    let mut base = 0.5 * (&g - g.transpose());
    for k in 0..n / 2 {
        base[(2 * k, 2 * k + 1)] += 1.0;
        base[(2 * k + 1, 2 * k)] -= 1.0;
    }
    CcrMatrix::new(base).unwrap()
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    Mat::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

/// Independent oracle: vectorized Kronecker solve of
/// `alpha gamma + gamma alphaᵀ + beta = 0`.
pub fn lyapunov_kron_oracle(alpha: &Mat, beta: &Mat) -> Mat {
    let n = alpha.nrows();
    let eye = Mat::identity(n, n);
    let k = kron(&eye, alpha) + kron(alpha, &eye);
    let rhs = DVector::from_iterator(
        n * n,
        (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).map(|(i, j)| -beta[(i, j)]),
    );
    let sol = k.lu().solve(&rhs).expect("oracle solve");
    Mat::from_fn(n, n, |i, j| sol[i + j * n])
}

pub fn canonical_plant() -> PlantSpec {
    PlantSpec::new(
        CcrMatrix::canonical(2).unwrap(),
        Mat::identity(2, 2),
        Mat::identity(2, 2),
        Mat::identity(2, 2),
    )
    .unwrap()
}

pub fn canonical_observer_template() -> ObserverSpec {
    ObserverSpec::new(
        CcrMatrix::canonical(2).unwrap(),
        Mat::zeros(2, 2),
        Mat::identity(2, 2),
        Mat::identity(2, 2),
        Mat::identity(2, 2),
    )
    .unwrap()
}

pub fn canonical_cost() -> CostSpec {
    CostSpec::new(Mat::identity(2, 2), 1.0, 1.0).unwrap()
}

/// Canonical structure with a hot observer (`Σ₂ = 4I`); its optimum has an
/// active, nondegenerate coupling.
pub fn hot_observer_template() -> ObserverSpec {
    ObserverSpec::new(
        CcrMatrix::canonical(2).unwrap(),
        Mat::zeros(2, 2),
        Mat::identity(2, 2),
        4.0 * Mat::identity(2, 2),
        Mat::identity(2, 2),
    )
    .unwrap()
}

/// Deterministic non-planar test model with n = ν = 4.
pub fn four_mode_parts(seed: u64) -> (PlantSpec, CostSpec, ObserverSpec) {
    let mut r = rng(seed);
    let theta1 = random_ccr(&mut r, 4);
    let theta2 = random_ccr(&mut r, 4);
    let k = random_psd(&mut r, 4) + Mat::identity(4, 4) * 0.3;
    let sigma_scale = 2.0 * theta1.matrix().norm().max(theta2.matrix().norm());
    let sigma1 = random_psd(&mut r, 4) + Mat::identity(4, 4) * sigma_scale;
    let sigma2 = random_psd(&mut r, 4) + Mat::identity(4, 4) * sigma_scale;
    let s1 = random_matrix(&mut r, 3, 4);
    let s2 = random_matrix(&mut r, 3, 4);
    let pi = random_pd(&mut r, 4);
    let plant = PlantSpec::new(theta1, k, sigma1, s1).unwrap();
    let observer = ObserverSpec::new(theta2, Mat::zeros(4, 4), Mat::zeros(4, 4), sigma2, s2).unwrap();
    let cost = CostSpec::new(pi, 0.7, 0.8).unwrap();
    (plant, cost, observer)
}

/// Draws an admissible decision pair for the given parts, rescaling until
/// the horizon bound holds with a comfortable margin.
pub fn random_admissible_system(
    rng: &mut ChaCha8Rng,
    plant: &PlantSpec,
    cost: &CostSpec,
    template: &ObserverSpec,
    amplitude: f64,
) -> CompositeSystem {
    let n = plant.dim();
    let nu = template.dim();
    loop {
        let l = random_matrix(rng, n, nu) * amplitude;
        let m = random_symmetric(rng, nu) * amplitude;
        let observer = template.with_decision(l, m).unwrap();
        let sys = assemble(plant.clone(), observer, cost.clone()).unwrap();
        let adm = admissibility(&sys, cost.tau()).unwrap();
        if adm.admissible && adm.margin > 0.05 * cost.tau() {
            return sys;
        }
    }
}
