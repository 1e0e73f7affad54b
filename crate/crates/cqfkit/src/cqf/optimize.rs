//! Projected gradient descent over the decision pair `(L, M)`.
//!
//! Steps follow the negative Fréchet gradients with Armijo backtracking
//! (contraction 1/2, slope factor 1e-4); `M` is projected back onto the
//! symmetric matrices after every update, and any trial step that leaves
//! the admissible set — or erodes the admissibility margin below the
//! floor — is rejected by halving. The initial trial length is a
//! safeguarded Barzilai-Borwein estimate, so the plain descent direction
//! still converges in a practical number of iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{evaluate_cost, gradients, stationarity, CostBreakdown, StationarityReport};
use crate::coupled::{
    admissibility, assemble, gramians, CompositeSystem, CostSpec, ObserverSpec, PlantSpec,
};
use crate::error::{Error, Result};
use crate::matcore::{self, symmetrizer, Mat};

#[derive(Clone, Copy, Debug)]
pub struct OptimizeOptions {
    /// Gradient tolerance scale: stop when `max(‖∂L‖,‖∂M‖) ≤ gtol_scale (1 + |𝒵|)`.
    pub gtol_scale: f64,
    pub max_iter: usize,
    /// Minimum admissibility margin kept between the iterates and the
    /// horizon bound; `None` selects `1e-3/τ`.
    pub margin_floor: Option<f64>,
    /// Armijo slope factor.
    pub armijo_slope: f64,
    /// Backtracking contraction.
    pub contraction: f64,
    /// First trial step of the very first iteration.
    pub initial_step: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            gtol_scale: 1e-7,
            max_iter: 5000,
            margin_floor: None,
            armijo_slope: 1e-4,
            contraction: 0.5,
            initial_step: 1.0,
        }
    }
}

/// One row of the optimizer trace.
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub iter: usize,
    pub cost: f64,
    pub grad_l_norm: f64,
    pub grad_m_norm: f64,
    pub step: f64,
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Gradient norms fell below tolerance.
    Converged,
    /// Iteration cap hit; the best iterate is returned, flagged.
    IterationCap,
    /// Line search hit machine precision; the best iterate is returned,
    /// flagged.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct OptimizeOutcome {
    pub observer: ObserverSpec,
    pub system: CompositeSystem,
    pub cost: CostBreakdown,
    pub report: StationarityReport,
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
    pub iterations: usize,
    /// Worst relative gap between the primal and dual cost evaluations
    /// over all accepted iterates.
    pub max_duality_gap: f64,
}

impl OptimizeOutcome {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Observer from the admissible family `L = √K Λ √M` with `M = I` and
/// `‖Λ‖ = 0.1`, which keeps the composite energy matrix positive
/// semidefinite and hence the observer admissible for every horizon.
///
/// `Λ` is a seeded orthogonal-like factor (QR of a deterministic random
/// matrix), so a seed maps to exactly one starting point.
pub fn initial_observer(plant: &PlantSpec, template: &ObserverSpec, seed: u64) -> Result<ObserverSpec> {
    let n = plant.dim();
    let nu = template.dim();
    let (k_eigs, _) = matcore::symmetric_eigen(plant.k_energy())?;
    if k_eigs[0] < -1e-10 * k_eigs.last().copied().unwrap_or(0.0).abs().max(1.0) {
        return Err(Error::invalid_spec(
            "plant.k_energy",
            "the admissible initialization family requires K to be positive semidefinite",
        ));
    }
    let sqrt_k = matcore::sym_psd_sqrt(plant.k_energy(), 1e-10)?;
    let m = Mat::identity(nu, nu);

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let g = Mat::from_fn(n.max(nu), n.max(nu), |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    let lambda_factor = 0.1 * q.view((0, 0), (n, nu)).into_owned();
    let l = sqrt_k * lambda_factor; // √M = I

    template.with_decision(l, m)
}

struct Iterate {
    sys: CompositeSystem,
    cost: CostBreakdown,
    margin: f64,
}

fn build_iterate(sys: CompositeSystem, tau: f64) -> Result<(Iterate, crate::coupled::GramianPair)> {
    let adm = admissibility(&sys, tau)?;
    if !adm.admissible {
        return Err(Error::NotAdmissible { tau, bound: adm.stability.tau_bound });
    }
    let pair = gramians(&sys, tau)?;
    let cost = evaluate_cost(&sys, &pair, tau);
    Ok((Iterate { sys, cost, margin: adm.margin }, pair))
}

/// Minimizes the discounted cost over `(L, M)` from the given initial
/// observer. The returned trace has strictly nonincreasing cost.
pub fn optimize(
    plant: &PlantSpec,
    cost_spec: &CostSpec,
    init: &ObserverSpec,
    options: &OptimizeOptions,
) -> Result<OptimizeOutcome> {
    let tau = cost_spec.tau();
    let margin_floor = options.margin_floor.unwrap_or(1e-3 / tau);

    // The stationarity analysis assumes a PSD plant energy matrix.
    let (k_eigs, _) = matcore::symmetric_eigen(plant.k_energy())?;
    let k_scale = k_eigs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if k_eigs[0] < -1e-10 * k_scale.max(1.0) {
        return Err(Error::invalid_spec(
            "plant.k_energy",
            "synthesis requires a positive semidefinite plant energy matrix",
        ));
    }

    let sys0 = assemble(plant.clone(), init.clone(), cost_spec.clone())?;
    let adm0 = admissibility(&sys0, tau)?;
    if !adm0.admissible || adm0.margin < margin_floor {
        return Err(Error::InitNotAdmissible { tau });
    }

    let (mut cur, mut pair) = build_iterate(sys0, tau)?;
    let mut trace = Vec::new();
    let mut prev_step = options.initial_step;
    let mut prev_grad: Option<(Mat, Mat)> = None;
    let mut prev_decision: Option<(Mat, Mat)> = None;
    let mut termination = Termination::IterationCap;
    let mut iterations = 0;
    let duality_gap = |c: &CostBreakdown| (c.total - c.dual_total).abs() / c.total.abs().max(1.0);
    let mut max_duality_gap = duality_gap(&cur.cost);

    for iter in 0..=options.max_iter {
        let grads = gradients(&cur.sys, &pair)?;
        let gnorm = grads.max_norm();
        let gtol = options.gtol_scale * (1.0 + cur.cost.total.abs());
        trace.push(TraceRow {
            iter,
            cost: cur.cost.total,
            grad_l_norm: grads.d_l.norm(),
            grad_m_norm: grads.d_m.norm(),
            step: prev_step,
            margin: cur.margin,
        });
        iterations = iter;

        if gnorm <= gtol {
            termination = Termination::Converged;
            break;
        }
        if iter == options.max_iter {
            termination = Termination::IterationCap;
            break;
        }

        let l_cur = cur.sys.observer().coupling().clone();
        let m_cur = cur.sys.observer().m_energy().clone();

        // Safeguarded Barzilai-Borwein trial step.
        let mut step = bb_step(&prev_decision, &prev_grad, &l_cur, &m_cur, &grads.d_l, &grads.d_m)
            .unwrap_or(prev_step * 2.0)
            .clamp(1e-12, 1e8);

        let slope = grads.d_l.norm_squared() + grads.d_m.norm_squared();
        let mut accepted = None;
        while step >= 1e-18 {
            let l_new = &l_cur - step * &grads.d_l;
            let m_new = symmetrizer(&(&m_cur - step * &grads.d_m))?;
            if let Ok(sys_new) = cur.sys.with_decision(l_new, m_new) {
                if let Ok(adm) = admissibility(&sys_new, tau) {
                    if adm.admissible && adm.margin >= margin_floor {
                        if let Ok((cand, cand_pair)) = build_iterate(sys_new, tau) {
                            if cand.cost.total
                                <= cur.cost.total - options.armijo_slope * step * slope
                            {
                                accepted = Some((cand, cand_pair, step));
                                break;
                            }
                        }
                    }
                }
            }
            step *= options.contraction;
        }

        match accepted {
            Some((next, next_pair, used_step)) => {
                prev_decision = Some((
                    &l_cur - next.sys.observer().coupling(),
                    &m_cur - next.sys.observer().m_energy(),
                ));
                prev_grad = Some((grads.d_l.clone(), grads.d_m.clone()));
                prev_step = used_step;
                max_duality_gap = max_duality_gap.max(duality_gap(&next.cost));
                cur = next;
                pair = next_pair;
            }
            None => {
                if iter == 0 {
                    return Err(Error::NoDescentDirection);
                }
                termination = Termination::Stalled;
                break;
            }
        }
    }

    let report = stationarity(&cur.sys, &pair)?;
    Ok(OptimizeOutcome {
        observer: cur.sys.observer().clone(),
        cost: cur.cost,
        report,
        trace,
        termination,
        iterations,
        max_duality_gap,
        system: cur.sys,
    })
}

/// BB1 step `⟨Δx, Δx⟩ / ⟨Δx, Δg⟩` over the stacked `(L, M)` space.
fn bb_step(
    prev_decision: &Option<(Mat, Mat)>,
    prev_grad: &Option<(Mat, Mat)>,
    _l: &Mat,
    _m: &Mat,
    d_l: &Mat,
    d_m: &Mat,
) -> Option<f64> {
    let (dx_l, dx_m) = prev_decision.as_ref()?;
    let (pg_l, pg_m) = prev_grad.as_ref()?;
    let dg_l = pg_l - d_l;
    let dg_m = pg_m - d_m;
    let num = dx_l.norm_squared() + dx_m.norm_squared();
    let den = matcore::frobenius_inner(dx_l, &dg_l) + matcore::frobenius_inner(dx_m, &dg_m);
    if den > 1e-300 && num.is_finite() && den.is_finite() {
        Some(num / den)
    } else {
        None
    }
}
