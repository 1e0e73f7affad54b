use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::coupled::{assemble, gramians, CostSpec, ObserverSpec, PlantSpec};
use crate::moments::discounted_second_moments;
use crate::qho::{check_hamiltonian, CcrMatrix};

fn canonical_plant() -> PlantSpec {
    PlantSpec::new(
        CcrMatrix::canonical(2).unwrap(),
        Mat::identity(2, 2),
        Mat::identity(2, 2),
        Mat::identity(2, 2),
    )
    .unwrap()
}

fn observer(l: Mat, m: Mat) -> ObserverSpec {
    ObserverSpec::new(
        CcrMatrix::canonical(2).unwrap(),
        l,
        m,
        Mat::identity(2, 2),
        Mat::identity(2, 2),
    )
    .unwrap()
}

fn cost_spec(lambda: f64, tau: f64) -> CostSpec {
    CostSpec::new(Mat::identity(2, 2), lambda, tau).unwrap()
}

fn canonical_system(l: Mat, m: Mat) -> CompositeSystem {
    assemble(canonical_plant(), observer(l, m), cost_spec(1.0, 1.0)).unwrap()
}

fn total_cost(sys: &CompositeSystem) -> f64 {
    let tau = sys.cost().tau();
    let pair = gramians(sys, tau).unwrap();
    evaluate_cost(sys, &pair, tau).total
}

/// Central finite differences of the cost in `L`, rebuilding the Gramians
/// at every perturbation.
fn fd_gradient_l(sys: &CompositeSystem, h: f64) -> Mat {
    let l0 = sys.observer().coupling().clone();
    let m0 = sys.observer().m_energy().clone();
    Mat::from_fn(l0.nrows(), l0.ncols(), |i, j| {
        let mut lp = l0.clone();
        lp[(i, j)] += h;
        let mut lm = l0.clone();
        lm[(i, j)] -= h;
        let zp = total_cost(&sys.with_decision(lp, m0.clone()).unwrap());
        let zm = total_cost(&sys.with_decision(lm, m0.clone()).unwrap());
        (zp - zm) / (2.0 * h)
    })
}

/// Central finite differences in `M` along symmetric directions.
fn fd_gradient_m(sys: &CompositeSystem, h: f64) -> Mat {
    let l0 = sys.observer().coupling().clone();
    let m0 = sys.observer().m_energy().clone();
    let nu = m0.nrows();
    let mut out = Mat::zeros(nu, nu);
    for i in 0..nu {
        for j in i..nu {
            let mut dir = Mat::zeros(nu, nu);
            dir[(i, j)] += 1.0;
            dir[(j, i)] += 1.0;
            if i == j {
                dir[(i, i)] = 1.0;
            }
            let zp = total_cost(&sys.with_decision(l0.clone(), &m0 + h * &dir).unwrap());
            let zm = total_cost(&sys.with_decision(l0.clone(), &m0 - h * &dir).unwrap());
            let slope = (zp - zm) / (2.0 * h);
            // slope = <dM, dir>: dM_ii on the diagonal, 2 dM_ij off it.
            if i == j {
                out[(i, i)] = slope;
            } else {
                out[(i, j)] = slope / 2.0;
                out[(j, i)] = slope / 2.0;
            }
        }
    }
    out
}

#[test]
fn cost_zero_output_vanishes() {
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
    let sys = assemble(plant, obs, cost_spec(1.0, 1.0)).unwrap();
    let pair = gramians(&sys, 1.0).unwrap();
    let cost = evaluate_cost(&sys, &pair, 1.0);
    assert_eq!(cost.total, 0.0);
    assert_eq!(cost.error_part, 0.0);
    assert_eq!(cost.backaction_part, 0.0);
    assert!(cost.dual_total.abs() < 1e-14);
}

#[test]
fn cost_decoupled_reduction_is_plant_trace() {
    // S2 = 0, L = 0, S1 = I: the cost is tr(P_plant) for the plant-only
    // shifted Lyapunov equation.
    let obs = ObserverSpec::new(
        CcrMatrix::canonical(2).unwrap(),
        Mat::zeros(2, 2),
        Mat::identity(2, 2),
        Mat::identity(2, 2),
        Mat::zeros(2, 2),
    )
    .unwrap();
    let sys = assemble(canonical_plant(), obs, cost_spec(1.0, 1.0)).unwrap();
    let pair = gramians(&sys, 1.0).unwrap();
    let cost = evaluate_cost(&sys, &pair, 1.0);
    let p_plant = discounted_second_moments(
        &(2.0 * CcrMatrix::canonical(2).unwrap().matrix() * Mat::identity(2, 2)),
        &Mat::identity(2, 2),
        1.0,
    )
    .unwrap();
    assert_abs_diff_eq!(cost.total, p_plant.trace(), epsilon = 1e-10);
}

#[test]
fn cost_duality_and_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let l = Mat::from_fn(2, 2, |_, _| rng.random_range(-0.6..0.6));
        let m = {
            let g = Mat::from_fn(2, 2, |_, _| rng.random_range(-0.6..0.6));
            0.5 * (&g + g.transpose())
        };
        let sys = canonical_system(l, m);
        if !crate::coupled::admissibility(&sys, 1.0).unwrap().admissible {
            continue;
        }
        let pair = gramians(&sys, 1.0).unwrap();
        let cost = evaluate_cost(&sys, &pair, 1.0);
        let scale = cost.total.abs().max(1.0);
        assert!((cost.total - cost.dual_total).abs() <= 1e-9 * scale);
        assert!((cost.total - cost.error_part - cost.backaction_part).abs() <= 1e-9 * scale);
    }
}

#[test]
fn gradient_zero_output_reduction() {
    // C = 0 (zero selectors, L = 0) forces Q = 0 and E = 0, so both
    // derivative formulas collapse to zero.
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
    let sys = assemble(plant, obs, cost_spec(1.0, 1.0)).unwrap();
    let pair = gramians(&sys, 1.0).unwrap();
    assert!(pair.hankelian().norm() <= 1e-14);
    let grads = gradients(&sys, &pair).unwrap();
    assert!(grads.d_l.norm() <= 1e-12);
    assert!(grads.d_m.norm() <= 1e-12);

    // With zero selectors but a live coupling, only the back-action rows
    // of C remain and the full formulas must still hold.
    let l = Mat::from_row_slice(2, 2, &[0.1, 0.0, 0.05, 0.1]);
    let sys = sys.with_decision(l.clone(), Mat::identity(2, 2)).unwrap();
    let pair = gramians(&sys, 1.0).unwrap();
    let grads = gradients(&sys, &pair).unwrap();
    let theta = CcrMatrix::canonical(2).unwrap();
    let expected_l = 2.0 * Mat::identity(2, 2) * &l * pair.p22()
        - 4.0 * (theta.matrix() * pair.e12() - pair.e21().transpose() * theta.matrix());
    assert!((grads.d_l - expected_l).norm() <= 1e-12);
    let e22 = pair.e22();
    let expected_m = -2.0 * (theta.matrix() * &e22 - e22.transpose() * theta.matrix());
    assert!((grads.d_m - expected_m).norm() <= 1e-12);
}

#[test]
fn gradients_match_finite_differences() {
    let sys = canonical_system(0.5 * Mat::identity(2, 2), Mat::identity(2, 2));
    let pair = gramians(&sys, 1.0).unwrap();
    let grads = gradients(&sys, &pair).unwrap();
    let h = 1e-5;
    let fd_l = fd_gradient_l(&sys, h);
    let fd_m = fd_gradient_m(&sys, h);
    let rel_l = (&fd_l - &grads.d_l).norm() / (1.0 + grads.d_l.norm());
    let rel_m = (&fd_m - &grads.d_m).norm() / (1.0 + grads.d_m.norm());
    assert!(rel_l <= 1e-5, "dL finite-difference gap {rel_l:.3e}");
    assert!(rel_m <= 1e-5, "dM finite-difference gap {rel_m:.3e}");
}

#[test]
fn gradients_match_finite_differences_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut checked = 0;
    while checked < 8 {
        let l = Mat::from_fn(2, 2, |_, _| rng.random_range(-0.5..0.5));
        let m = {
            let g = Mat::from_fn(2, 2, |_, _| rng.random_range(-0.5..0.5));
            0.5 * (&g + g.transpose())
        };
        let sys = canonical_system(l, m);
        if !crate::coupled::admissibility(&sys, 1.0).unwrap().admissible {
            continue;
        }
        checked += 1;
        let pair = gramians(&sys, 1.0).unwrap();
        let grads = gradients(&sys, &pair).unwrap();
        let fd_l = fd_gradient_l(&sys, 1e-5);
        let fd_m = fd_gradient_m(&sys, 1e-5);
        assert!((&fd_l - &grads.d_l).norm() / (1.0 + grads.d_l.norm()) <= 1e-5);
        assert!((&fd_m - &grads.d_m).norm() / (1.0 + grads.d_m.norm()) <= 1e-5);
    }
}

#[test]
fn stationarity_trivial_when_output_zero() {
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
    let sys = assemble(plant, obs, cost_spec(1.0, 1.0)).unwrap();
    let pair = gramians(&sys, 1.0).unwrap();
    let report = stationarity(&sys, &pair).unwrap();
    assert!(report.res_l <= 1e-12);
    assert!(report.res_m <= 1e-12);
    assert!(report.lie_res_l <= 1e-12);
    assert!(report.lie_res_m <= 1e-12);
}

#[test]
fn stationarity_detects_useful_coupling() {
    // L = 0 with identity selectors and a detuned observer: coupling
    // would reduce the error, so the L-residual must be nonzero. (With
    // M = I the plant and observer are perfectly resonant and every
    // Hankelian block lies in span{I, J}, which makes L = 0 genuinely
    // stationary; detuning breaks that degeneracy.)
    let sys = canonical_system(Mat::zeros(2, 2), Mat::from_diagonal(&nalgebra::dvector![2.0, 1.0]));
    let pair = gramians(&sys, 1.0).unwrap();
    let report = stationarity(&sys, &pair).unwrap();
    assert!(report.res_l > 1e-3, "res_l = {:.3e}", report.res_l);

    // The resonant configuration really is L-stationary.
    let resonant = canonical_system(Mat::zeros(2, 2), Mat::identity(2, 2));
    let pair = gramians(&resonant, 1.0).unwrap();
    let report = stationarity(&resonant, &pair).unwrap();
    assert!(report.res_l <= 1e-12);
}

#[test]
fn lie_ale_forms_hold_for_any_admissible_observer() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let l = Mat::from_fn(2, 2, |_, _| rng.random_range(-0.7..0.7));
        let m = {
            let g = Mat::from_fn(2, 2, |_, _| rng.random_range(-0.7..0.7));
            0.5 * (&g + g.transpose())
        };
        let sys = canonical_system(l, m);
        if !crate::coupled::admissibility(&sys, 1.0).unwrap().admissible {
            continue;
        }
        let pair = gramians(&sys, 1.0).unwrap();
        let forms = lie_forms(&sys, &pair, 1.0).unwrap();
        let scale = pair.hankelian().norm().max(1.0);
        assert!(forms.ale_p <= 1e-9 * scale, "ale_p {:.3e}", forms.ale_p);
        assert!(forms.ale_q <= 1e-9 * scale, "ale_q {:.3e}", forms.ale_q);

        let ids = identity_residuals(&sys, &pair).unwrap();
        assert!(ids.hankelian_commutator <= 1e-9 * scale);
        assert!(ids.jacobi <= 1e-8 * scale);

        // [Q,P] stays in the Hamiltonian subspace.
        let (p_ham, q_ham) = crate::coupled::hamiltonianize(&pair, sys.theta()).unwrap();
        let g = matcore::commutator(&q_ham, &p_ham).unwrap();
        assert!(check_hamiltonian(&g, sys.theta()).unwrap().holds);
    }
}

#[test]
fn closed_form_l_linearity_in_inverse_lambda() {
    let sys = canonical_system(0.4 * Mat::identity(2, 2), Mat::identity(2, 2));
    let pair = gramians(&sys, 1.0).unwrap();
    let (p_ham, q_ham) = crate::coupled::hamiltonianize(&pair, sys.theta()).unwrap();
    let l1 = closed_form_l(&p_ham, &q_ham, sys.cost().pi_weight(), 1.0, sys.split()).unwrap();
    let l2 = closed_form_l(&p_ham, &q_ham, sys.cost().pi_weight(), 2.0, sys.split()).unwrap();
    assert!((l1 - 2.0 * l2).norm() <= 1e-12);
}

#[test]
fn closed_form_l_zero_commutator() {
    // C = 0 gives Q = 0 so [Q,P] = 0 and the formula returns L = 0.
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
    let sys = assemble(plant, obs, cost_spec(1.0, 1.0)).unwrap();
    let pair = gramians(&sys, 1.0).unwrap();
    let (p_ham, q_ham) = crate::coupled::hamiltonianize(&pair, sys.theta()).unwrap();
    let l = closed_form_l(&p_ham, &q_ham, sys.cost().pi_weight(), 1.0, sys.split()).unwrap();
    assert!(l.norm() <= 1e-12);
    // And closed_form_m is refused on the singular commutator block.
    assert!(matches!(
        closed_form_m(&p_ham, &q_ham, &sys, 1.0),
        Err(Error::SingularCommutatorBlock)
    ));
}

#[test]
fn optimize_canonical_model_converges() {
    let plant = canonical_plant();
    let cost = cost_spec(1.0, 1.0);
    let template = observer(Mat::zeros(2, 2), Mat::identity(2, 2));
    let init = initial_observer(&plant, &template, 0).unwrap();
    let outcome = optimize(&plant, &cost, &init, &OptimizeOptions::default()).unwrap();
    assert!(outcome.converged(), "termination {:?}", outcome.termination);

    // Monotone nonincreasing cost trace.
    for w in outcome.trace.windows(2) {
        assert!(w[1].cost <= w[0].cost + 1e-12);
    }

    let scale = 1.0 + outcome.cost.total.abs();
    assert!(outcome.report.res_l <= 1e-6 * scale, "res_l {:.3e}", outcome.report.res_l);
    assert!(outcome.report.res_m <= 1e-6 * scale, "res_m {:.3e}", outcome.report.res_m);

    // Primal and dual cost evaluations agree along the whole trajectory.
    assert!(
        outcome.max_duality_gap <= 1e-9,
        "duality gap {:.3e}",
        outcome.max_duality_gap
    );

    // Final cost is no worse than the initial one.
    let initial_cost = outcome.trace.first().unwrap().cost;
    assert!(outcome.cost.total <= initial_cost);
}

#[test]
fn optimize_restarts_at_stationary_point() {
    let plant = canonical_plant();
    let cost = cost_spec(1.0, 1.0);
    let template = observer(Mat::zeros(2, 2), Mat::identity(2, 2));
    let init = initial_observer(&plant, &template, 1).unwrap();
    let outcome = optimize(&plant, &cost, &init, &OptimizeOptions::default()).unwrap();
    assert!(outcome.converged());

    let again = optimize(&plant, &cost, &outcome.observer, &OptimizeOptions::default()).unwrap();
    assert!(again.converged());
    assert_eq!(again.iterations, 0, "stationary init must return immediately");
    assert_eq!(again.trace.len(), 1);
}

#[test]
fn optimize_rejects_inadmissible_init() {
    // Indefinite K with tau above the bound.
    let k = Mat::from_diagonal(&nalgebra::dvector![4.0, -4.0]);
    let plant = PlantSpec::new(
        CcrMatrix::canonical(2).unwrap(),
        k,
        Mat::identity(2, 2),
        Mat::identity(2, 2),
    )
    .unwrap();
    let cost = cost_spec(1.0, 1.0);
    let init = observer(Mat::zeros(2, 2), Mat::zeros(2, 2));
    let err = optimize(&plant, &cost, &init, &OptimizeOptions::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidSpec { .. }), "got {err:?}");
}

/// Canonical structure with a hot observer (`Σ₂ = 4I`): coupling pays off,
/// the optimum sits at `L ≠ 0` and is nondegenerate.
fn hot_observer_parts() -> (PlantSpec, CostSpec, ObserverSpec) {
    let plant = canonical_plant();
    let cost = cost_spec(1.0, 1.0);
    let template = ObserverSpec::new(
        CcrMatrix::canonical(2).unwrap(),
        Mat::zeros(2, 2),
        Mat::identity(2, 2),
        4.0 * Mat::identity(2, 2),
        Mat::identity(2, 2),
    )
    .unwrap();
    (plant, cost, template)
}

#[test]
fn optimize_hot_observer_finds_nondegenerate_coupling() {
    let (plant, cost, template) = hot_observer_parts();
    let init = initial_observer(&plant, &template, 0).unwrap();
    let out = optimize(&plant, &cost, &init, &OptimizeOptions::default()).unwrap();
    assert!(out.converged());
    assert!(out.observer.coupling().norm() > 0.1, "coupling must be active");
    assert!(out.report.nondegenerate);

    // Closed forms reproduce the optimizer's decision pair.
    let rel_l = out.report.l_formula_gap.unwrap() / (1.0 + out.observer.coupling().norm());
    let rel_m = out.report.m_formula_gap.unwrap() / (1.0 + out.observer.m_energy().norm());
    assert!(rel_l <= 1e-5, "closed-form L gap {rel_l:.3e}");
    assert!(rel_m <= 1e-5, "closed-form M gap {rel_m:.3e}");

    // Skew-Hamiltonian block at stationarity.
    let sys = assemble(plant, out.observer.clone(), cost).unwrap();
    let pair = gramians(&sys, 1.0).unwrap();
    let theta2 = CcrMatrix::canonical(2).unwrap();
    let te = theta2.matrix() * pair.e22();
    let scale = 1.0 + pair.hankelian().norm();
    assert!((&te + te.transpose()).norm() <= 1e-6 * scale);
}

#[test]
fn canonical_optimum_is_degenerate_uncoupled() {
    // On the fully resonant canonical model the optimal observer is the
    // uncoupled one; the commutator [Q,P] collapses and the nondegeneracy
    // flag must say so.
    let plant = canonical_plant();
    let cost = cost_spec(1.0, 1.0);
    let template = observer(Mat::zeros(2, 2), Mat::identity(2, 2));
    let init = initial_observer(&plant, &template, 0).unwrap();
    let out = optimize(&plant, &cost, &init, &OptimizeOptions::default()).unwrap();
    assert!(out.converged());
    assert!(out.observer.coupling().norm() <= 1e-6);
    assert_abs_diff_eq!(out.cost.total, 4.0, epsilon = 1e-9);
    assert!(!out.report.nondegenerate, "collapsed commutator must be flagged degenerate");

    // Closed-form L still applies (P22 is invertible) and returns ~0.
    assert!(out.report.l_formula_gap.unwrap() <= 1e-6);
    // Closed-form M is refused on the singular commutator block.
    assert!(out.report.m_formula_gap.is_none());
}

#[test]
fn lagrange_constraint_decreases_with_lambda() {
    let (plant, _, template) = hot_observer_parts();
    let init = initial_observer(&plant, &template, 0).unwrap();
    let opts = OptimizeOptions::default();
    let mut values = Vec::new();
    for lambda in [0.05, 1.0, 20.0] {
        let cost = cost_spec(lambda, 1.0);
        let out = optimize(&plant, &cost, &init, &opts).unwrap();
        assert!(out.converged());
        values.push(out.cost.backaction_part / lambda);
    }
    assert!(values[0] > values[1] && values[1] > values[2], "constraint values {values:?}");
}

#[test]
fn lagrange_bisection_saturates_and_detects_inactive() {
    let (plant, cost1, template) = hot_observer_parts();
    let init = initial_observer(&plant, &template, 0).unwrap();
    let opts = OptimizeOptions::default();

    // Self-consistent fixed point: r = constraint value at lambda = 1.
    let base = optimize(&plant, &cost1, &init, &opts).unwrap();
    let r = base.cost.backaction_part / 1.0;
    assert!(r > 0.0);
    let outcome =
        saturate_constraint(&plant, &cost1, &init, r, &opts, &BisectionOptions::default()).unwrap();
    assert!(!outcome.inactive);
    assert!(outcome.lambda_star.is_some());
    assert!(
        (outcome.constraint - r).abs() <= 1e-4 * r,
        "saturation gap {:.3e} vs r {:.3e}",
        (outcome.constraint - r).abs(),
        r
    );

    // Threshold above the small-lambda constraint value: inactive.
    let cost_small = cost_spec(1e-6, 1.0);
    let loose = optimize(&plant, &cost_small, &init, &opts).unwrap();
    let r_loose = 2.0 * loose.cost.backaction_part / 1e-6;
    let outcome =
        saturate_constraint(&plant, &cost1, &init, r_loose, &opts, &BisectionOptions::default())
            .unwrap();
    assert!(outcome.inactive);
    assert!(outcome.lambda_star.is_none());
}

#[test]
fn gradient_norm_bounds_stationarity_residuals() {
    // res_l = ||dL||/4 and res_m = ||dM||/2 by the derivative formulas.
    let sys = canonical_system(0.3 * Mat::identity(2, 2), 0.8 * Mat::identity(2, 2));
    let pair = gramians(&sys, 1.0).unwrap();
    let grads = gradients(&sys, &pair).unwrap();
    let report = stationarity(&sys, &pair).unwrap();
    assert_abs_diff_eq!(report.res_l, grads.d_l.norm() / 4.0, epsilon = 1e-10);
    assert_abs_diff_eq!(report.res_m, grads.d_m.norm() / 2.0, epsilon = 1e-10);
    assert!(report.res_l <= grads.d_l.norm() / 2.0);
    assert!(report.res_m <= grads.d_m.norm() / 2.0);
}
