//! Lagrange-multiplier driver for the constrained formulation: minimize
//! the discounted estimation error subject to `E_τ(ηᵀΠη) ≤ r`.
//!
//! The weight `λ` acts as the multiplier; the driver searches for the
//! value whose unconstrained solution saturates the constraint. Each
//! probe is a full synthesis run, warm-started from the previous solution
//! so the search stays on one stationary branch.

use super::optimize::{optimize, OptimizeOptions, OptimizeOutcome};
use crate::coupled::{CostSpec, ObserverSpec, PlantSpec};
use crate::error::{Error, Result};

/// One evaluated multiplier value.
#[derive(Clone, Copy, Debug)]
pub struct ConstraintProbe {
    pub lambda: f64,
    /// Constraint value `E_τ(ηᵀΠη)` (back-action share divided by `λ`).
    pub constraint: f64,
    pub cost_total: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct LagrangeOutcome {
    /// Saturating multiplier, absent when the constraint is inactive.
    pub lambda_star: Option<f64>,
    /// Constraint value at the returned multiplier (or at the small-λ
    /// proxy when inactive).
    pub constraint: f64,
    /// `constraint − r`.
    pub gap: f64,
    /// The unconstrained optimum already satisfies the threshold.
    pub inactive: bool,
    pub probes: Vec<ConstraintProbe>,
}

#[derive(Clone, Copy, Debug)]
pub struct BisectionOptions {
    /// Relative saturation tolerance: stop when `|constraint − r| ≤ rel_tol · r`.
    pub rel_tol: f64,
    /// Small-λ proxy for the unconstrained problem.
    pub lambda_min: f64,
    /// Upper end of the bracketing scan.
    pub lambda_max: f64,
    /// Multiplicative spacing of the scan grid.
    pub grid_factor: f64,
    pub max_bisections: usize,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        BisectionOptions {
            rel_tol: 1e-4,
            lambda_min: 1e-6,
            lambda_max: 1e6,
            grid_factor: 10.0,
            max_bisections: 80,
        }
    }
}

fn constraint_of(outcome: &OptimizeOutcome) -> f64 {
    outcome.cost.backaction_part / outcome.system.cost().lambda()
}

/// Finds `λ*` with `E_τ(ηᵀΠη) = r` (within tolerance) along the scanned
/// branch, or reports the constraint inactive when even the small-λ proxy
/// satisfies it.
pub fn saturate_constraint(
    plant: &PlantSpec,
    cost_template: &CostSpec,
    init: &ObserverSpec,
    r_threshold: f64,
    optimize_options: &OptimizeOptions,
    bisect: &BisectionOptions,
) -> Result<LagrangeOutcome> {
    if !(r_threshold > 0.0 && r_threshold.is_finite()) {
        return Err(Error::invalid_spec("r_threshold", "threshold must be positive"));
    }
    let mut probes = Vec::new();
    let mut warm = init.clone();

    let run = |lambda: f64, warm: &mut ObserverSpec, probes: &mut Vec<ConstraintProbe>| -> Result<f64> {
        let cost_spec = CostSpec::new(cost_template.pi_weight().clone(), lambda, cost_template.tau())?;
        let outcome = match optimize(plant, &cost_spec, warm, optimize_options) {
            Ok(o) => o,
            // A warm start can sit exactly at a non-descendable point for
            // the new lambda; retry from the configured initial observer.
            Err(Error::NoDescentDirection) => optimize(plant, &cost_spec, init, optimize_options)?,
            Err(e) => return Err(e),
        };
        let c = constraint_of(&outcome);
        probes.push(ConstraintProbe {
            lambda,
            constraint: c,
            cost_total: outcome.cost.total,
            converged: outcome.converged(),
        });
        *warm = outcome.observer;
        Ok(c)
    };

    // Small-λ proxy: the loosest coupling constraint this branch attains.
    let c_unconstrained = run(bisect.lambda_min, &mut warm, &mut probes)?;
    if c_unconstrained <= r_threshold {
        return Ok(LagrangeOutcome {
            lambda_star: None,
            constraint: c_unconstrained,
            gap: c_unconstrained - r_threshold,
            inactive: true,
            probes,
        });
    }

    // Scan upward until the constraint drops below r.
    let mut lo = bisect.lambda_min;
    let mut c_lo = c_unconstrained;
    let mut hi = None;
    let mut c_hi = 0.0;
    let mut lambda = bisect.lambda_min * bisect.grid_factor;
    while lambda <= bisect.lambda_max {
        let c = run(lambda, &mut warm, &mut probes)?;
        if c <= r_threshold {
            hi = Some(lambda);
            c_hi = c;
            break;
        }
        lo = lambda;
        c_lo = c;
        lambda *= bisect.grid_factor;
    }
    let mut hi = hi.ok_or_else(|| {
        Error::NoBracket(format!(
            "constraint stayed above r = {r_threshold:.6e} up to lambda = {:.1e}",
            bisect.lambda_max
        ))
    })?;

    // Early exits if an endpoint already saturates.
    if (c_lo - r_threshold).abs() <= bisect.rel_tol * r_threshold {
        return Ok(LagrangeOutcome {
            lambda_star: Some(lo),
            constraint: c_lo,
            gap: c_lo - r_threshold,
            inactive: false,
            probes,
        });
    }
    if (c_hi - r_threshold).abs() <= bisect.rel_tol * r_threshold {
        return Ok(LagrangeOutcome {
            lambda_star: Some(hi),
            constraint: c_hi,
            gap: c_hi - r_threshold,
            inactive: false,
            probes,
        });
    }

    // Log-scale bisection on the bracket.
    let mut best = (hi, c_hi);
    for _ in 0..bisect.max_bisections {
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        let c_mid = run(mid, &mut warm, &mut probes)?;
        if (c_mid - r_threshold).abs() < (best.1 - r_threshold).abs() {
            best = (mid, c_mid);
        }
        if (c_mid - r_threshold).abs() <= bisect.rel_tol * r_threshold {
            return Ok(LagrangeOutcome {
                lambda_star: Some(mid),
                constraint: c_mid,
                gap: c_mid - r_threshold,
                inactive: false,
                probes,
            });
        }
        if c_mid > r_threshold {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi / lo - 1.0).abs() < 1e-14 {
            break;
        }
    }

    Err(Error::NoBracket(format!(
        "bisection did not saturate to {:.1e} relative; best |gap| = {:.3e} at lambda = {:.6e}",
        bisect.rel_tol,
        (best.1 - r_threshold).abs(),
        best.0
    )))
}
