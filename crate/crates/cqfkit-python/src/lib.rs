//! Python bindings for the coherent-quantum-filtering toolkit.
//!
//! Exposes the matrix kernel, single-oscillator moment routes and the
//! plant-observer synthesis pipeline. Matrices cross the boundary as
//! row-major `list[list[float]]`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use cqfkit::coupled::{
    admissibility, assemble, gramians, CompositeSystem, CostSpec, ObserverSpec, PlantSpec,
};
use cqfkit::cqf as synth;
use cqfkit::matcore::{self, Mat};
use cqfkit::moments;
use cqfkit::qho::{self, CcrMatrix, QhoModel};

/// Row-major matrix crossing the Python boundary.
type MatrixRows = Vec<Vec<f64>>;
/// Complex matrix as a `(real, imag)` pair of row-major parts.
type ComplexParts = (MatrixRows, MatrixRows);

fn to_matrix(rows: &[Vec<f64>], name: &str) -> PyResult<Mat> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err(format!("{name}: matrix is empty")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{name}: rows have inconsistent lengths")));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn to_rows(m: &Mat) -> MatrixRows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn lib_err(err: cqfkit::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// Solve `alpha x + x alpha^T + beta = 0` for Hurwitz `alpha`.
#[pyfunction]
fn solve_lyapunov(alpha: Vec<Vec<f64>>, beta: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let a = to_matrix(&alpha, "alpha")?;
    let b = to_matrix(&beta, "beta")?;
    Ok(to_rows(&matcore::solve_lyapunov(&a, &b).map_err(lib_err)?))
}

/// Matrix exponential `exp(t a)`.
#[pyfunction]
fn matrix_exponential(a: Vec<Vec<f64>>, t: f64) -> PyResult<Vec<Vec<f64>>> {
    let m = to_matrix(&a, "a")?;
    Ok(to_rows(&matcore::matrix_exponential(&m, t).map_err(lib_err)?))
}

/// Spectral abscissa and the admissible-horizon bound `(abscissa, tau_bound)`.
#[pyfunction]
fn stability_margin(a: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
    let m = to_matrix(&a, "a")?;
    let margin = matcore::stability_margin(&m).map_err(lib_err)?;
    Ok((margin.abscissa, margin.tau_bound))
}

/// A closed harmonic oscillator `(Theta, R)` with dynamics `A = 2 Theta R`.
#[pyclass]
struct Qho {
    model: QhoModel,
}

#[pymethods]
impl Qho {
    #[new]
    fn new(theta: Vec<Vec<f64>>, energy: Vec<Vec<f64>>) -> PyResult<Self> {
        let theta = CcrMatrix::new(to_matrix(&theta, "theta")?).map_err(lib_err)?;
        let model = QhoModel::new(theta, to_matrix(&energy, "energy")?).map_err(lib_err)?;
        Ok(Qho { model })
    }

    fn dynamics_matrix(&self) -> Vec<Vec<f64>> {
        to_rows(&self.model.dynamics_matrix())
    }

    /// Mode frequencies, centrally symmetric (`R` must be PSD).
    fn frequencies(&self) -> PyResult<Vec<f64>> {
        let modes = qho::diagonalize_modes(&self.model).map_err(lib_err)?;
        Ok(modes.frequencies().to_vec())
    }

    /// Hamiltonian-structure check of `a` against this oscillator's CCR
    /// matrix; returns `(holds, residual)`.
    fn check_hamiltonian(&self, a: Vec<Vec<f64>>) -> PyResult<(bool, f64)> {
        let m = to_matrix(&a, "a")?;
        let check = qho::check_hamiltonian(&m, self.model.theta()).map_err(lib_err)?;
        Ok((check.holds, check.residual))
    }

    /// Discounted second moments by the shifted Lyapunov route.
    fn discounted_second_moments(&self, sigma: Vec<Vec<f64>>, tau: f64) -> PyResult<Vec<Vec<f64>>> {
        let s = to_matrix(&sigma, "sigma")?;
        let p = moments::discounted_second_moments(&self.model.dynamics_matrix(), &s, tau)
            .map_err(lib_err)?;
        Ok(to_rows(&p))
    }

    /// Discounted second moments by the frequency-domain quadrature.
    #[pyo3(signature = (sigma, tau, tol=1e-8))]
    fn discounted_second_moments_freq(
        &self,
        sigma: Vec<Vec<f64>>,
        tau: f64,
        tol: f64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let s = to_matrix(&sigma, "sigma")?;
        let init = moments::InitialSecondMoments::new(s, self.model.theta().clone()).map_err(lib_err)?;
        let policy = moments::QuadraturePolicy { tol, ..moments::QuadraturePolicy::default() };
        let p = moments::discounted_second_moments_freq(
            &self.model.dynamics_matrix(),
            init.gamma(),
            tau,
            &policy,
        )
        .map_err(lib_err)?;
        Ok(to_rows(&p))
    }

    /// Full complex matrix of discounted second moments by the mode sum;
    /// returns `(real_part, imag_part)`.
    fn discounted_second_moment_matrix(
        &self,
        sigma: Vec<Vec<f64>>,
        tau: f64,
    ) -> PyResult<ComplexParts> {
        let s = to_matrix(&sigma, "sigma")?;
        let init = moments::InitialSecondMoments::new(s, self.model.theta().clone()).map_err(lib_err)?;
        let modes = qho::diagonalize_modes(&self.model).map_err(lib_err)?;
        let full = moments::discounted_second_moment_matrix(&modes, &init, tau).map_err(lib_err)?;
        Ok((to_rows(&full.map(|z| z.re)), to_rows(&full.map(|z| z.im))))
    }

    /// Infinite-horizon counterpart of the mode-sum matrix.
    fn infinite_horizon_second_moments(
        &self,
        sigma: Vec<Vec<f64>>,
    ) -> PyResult<ComplexParts> {
        let s = to_matrix(&sigma, "sigma")?;
        let init = moments::InitialSecondMoments::new(s, self.model.theta().clone()).map_err(lib_err)?;
        let modes = qho::diagonalize_modes(&self.model).map_err(lib_err)?;
        let full = moments::infinite_horizon_second_moment_matrix(&modes, &init).map_err(lib_err)?;
        Ok((to_rows(&full.map(|z| z.re)), to_rows(&full.map(|z| z.im))))
    }
}

/// Cost breakdown at a decision pair.
#[pyclass(get_all)]
struct CostSummary {
    total: f64,
    error_part: f64,
    backaction_part: f64,
    dual_total: f64,
    admissibility_margin: f64,
}

/// Stationarity diagnostics at a decision pair.
#[pyclass(get_all)]
struct StationaritySummary {
    res_l: f64,
    res_m: f64,
    lie_res_l: f64,
    lie_res_m: f64,
    jacobi_res: f64,
    l_formula_gap: Option<f64>,
    m_formula_gap: Option<f64>,
    nondegenerate: bool,
}

/// Synthesis outcome.
#[pyclass(get_all)]
struct SynthesisResult {
    l: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
    cost_total: f64,
    error_part: f64,
    backaction_part: f64,
    iterations: usize,
    converged: bool,
    termination: String,
    res_l: f64,
    res_m: f64,
    nondegenerate: bool,
    l_formula_gap: Option<f64>,
    m_formula_gap: Option<f64>,
}

/// Plant-observer filtering problem over the decision pair `(L, M)`.
#[pyclass]
struct CqfModel {
    plant: PlantSpec,
    template: ObserverSpec,
    cost: CostSpec,
}

impl CqfModel {
    fn system(&self, l: &[Vec<f64>], m: &[Vec<f64>]) -> PyResult<CompositeSystem> {
        let observer = self
            .template
            .with_decision(to_matrix(l, "l")?, to_matrix(m, "m")?)
            .map_err(lib_err)?;
        assemble(self.plant.clone(), observer, self.cost.clone()).map_err(lib_err)
    }
}

#[pymethods]
impl CqfModel {
    #[new]
    #[allow(clippy::too_many_arguments)]
    fn new(
        theta1: Vec<Vec<f64>>,
        k_energy: Vec<Vec<f64>>,
        sigma1: Vec<Vec<f64>>,
        s1: Vec<Vec<f64>>,
        theta2: Vec<Vec<f64>>,
        sigma2: Vec<Vec<f64>>,
        s2: Vec<Vec<f64>>,
        pi_weight: Vec<Vec<f64>>,
        lam: f64,
        tau: f64,
    ) -> PyResult<Self> {
        let theta1 = CcrMatrix::new(to_matrix(&theta1, "theta1")?).map_err(lib_err)?;
        let theta2 = CcrMatrix::new(to_matrix(&theta2, "theta2")?).map_err(lib_err)?;
        let n = theta1.order();
        let nu = theta2.order();
        let plant = PlantSpec::new(
            theta1,
            to_matrix(&k_energy, "k_energy")?,
            to_matrix(&sigma1, "sigma1")?,
            to_matrix(&s1, "s1")?,
        )
        .map_err(lib_err)?;
        let template = ObserverSpec::new(
            theta2,
            Mat::zeros(n, nu),
            Mat::zeros(nu, nu),
            to_matrix(&sigma2, "sigma2")?,
            to_matrix(&s2, "s2")?,
        )
        .map_err(lib_err)?;
        let cost = CostSpec::new(to_matrix(&pi_weight, "pi_weight")?, lam, tau).map_err(lib_err)?;
        Ok(CqfModel { plant, template, cost })
    }

    /// Cost breakdown and admissibility margin at `(l, m)`.
    fn evaluate(&self, l: Vec<Vec<f64>>, m: Vec<Vec<f64>>) -> PyResult<CostSummary> {
        let sys = self.system(&l, &m)?;
        let adm = admissibility(&sys, self.cost.tau()).map_err(lib_err)?;
        let pair = gramians(&sys, self.cost.tau()).map_err(lib_err)?;
        let breakdown = synth::evaluate_cost(&sys, &pair, self.cost.tau());
        Ok(CostSummary {
            total: breakdown.total,
            error_part: breakdown.error_part,
            backaction_part: breakdown.backaction_part,
            dual_total: breakdown.dual_total,
            admissibility_margin: adm.margin,
        })
    }

    /// Fréchet gradients `(dL, dM)` of the cost at `(l, m)`.
    fn gradients(&self, l: MatrixRows, m: MatrixRows) -> PyResult<ComplexParts> {
        let sys = self.system(&l, &m)?;
        let pair = gramians(&sys, self.cost.tau()).map_err(lib_err)?;
        let grads = synth::gradients(&sys, &pair).map_err(lib_err)?;
        Ok((to_rows(&grads.d_l), to_rows(&grads.d_m)))
    }

    /// Stationarity residuals (raw and Lie forms) at `(l, m)`.
    fn stationarity(&self, l: Vec<Vec<f64>>, m: Vec<Vec<f64>>) -> PyResult<StationaritySummary> {
        let sys = self.system(&l, &m)?;
        let pair = gramians(&sys, self.cost.tau()).map_err(lib_err)?;
        let report = synth::stationarity(&sys, &pair).map_err(lib_err)?;
        Ok(StationaritySummary {
            res_l: report.res_l,
            res_m: report.res_m,
            lie_res_l: report.lie_res_l,
            lie_res_m: report.lie_res_m,
            jacobi_res: report.jacobi_res,
            l_formula_gap: report.l_formula_gap,
            m_formula_gap: report.m_formula_gap,
            nondegenerate: report.nondegenerate,
        })
    }

    /// Projected-gradient synthesis from the seeded admissible family.
    #[pyo3(signature = (seed=0, gtol_scale=1e-7, max_iter=5000))]
    fn synthesize(&self, seed: u64, gtol_scale: f64, max_iter: usize) -> PyResult<SynthesisResult> {
        let init = synth::initial_observer(&self.plant, &self.template, seed).map_err(lib_err)?;
        let options = synth::OptimizeOptions {
            gtol_scale,
            max_iter,
            ..synth::OptimizeOptions::default()
        };
        let outcome = synth::optimize(&self.plant, &self.cost, &init, &options).map_err(lib_err)?;
        Ok(SynthesisResult {
            l: to_rows(outcome.observer.coupling()),
            m: to_rows(outcome.observer.m_energy()),
            cost_total: outcome.cost.total,
            error_part: outcome.cost.error_part,
            backaction_part: outcome.cost.backaction_part,
            iterations: outcome.iterations,
            converged: outcome.converged(),
            termination: match outcome.termination {
                synth::Termination::Converged => "converged".to_string(),
                synth::Termination::IterationCap => "iteration_cap".to_string(),
                synth::Termination::Stalled => "stalled".to_string(),
            },
            res_l: outcome.report.res_l,
            res_m: outcome.report.res_m,
            nondegenerate: outcome.report.nondegenerate,
            l_formula_gap: outcome.report.l_formula_gap,
            m_formula_gap: outcome.report.m_formula_gap,
        })
    }
}

#[pymodule]
fn cqfkit_python(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve_lyapunov, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(stability_margin, m)?)?;
    m.add_class::<Qho>()?;
    m.add_class::<CqfModel>()?;
    m.add_class::<CostSummary>()?;
    m.add_class::<StationaritySummary>()?;
    m.add_class::<SynthesisResult>()?;
    Ok(())
}
