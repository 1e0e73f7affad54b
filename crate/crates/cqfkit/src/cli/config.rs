//! Model configuration files.
//!
//! A single TOML document carries the plant, observer, cost weights,
//! optimizer options and numeric overrides. Matrices are written
//! row-major as arrays of arrays so configs diff cleanly. Validation
//! reproduces the module-level invariants and names the offending field.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::coupled::{CostSpec, ObserverSpec, PlantSpec};
use crate::error::{Error, Result};
use crate::matcore::Mat;
use crate::moments::MomentTensor;
use crate::policy::NumericPolicy;
use crate::qho::CcrMatrix;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub schema_version: u32,
    pub plant: PlantConfig,
    pub observer: ObserverConfig,
    pub cost: CostConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub numeric: NumericConfig,
    /// Caller-supplied initial mixed moments for monomial averages of
    /// degree other than two.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_moments: Option<InitialMomentsConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub theta1: Vec<Vec<f64>>,
    pub k_energy: Vec<Vec<f64>>,
    pub sigma1: Vec<Vec<f64>>,
    pub s1: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverConfig {
    pub theta2: Vec<Vec<f64>>,
    pub sigma2: Vec<Vec<f64>>,
    pub s2: Vec<Vec<f64>>,
    /// Plant-observer coupling; absent means "synthesize".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<Vec<f64>>>,
    /// Observer energy matrix; absent means "synthesize".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_energy: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub pi_weight: Vec<Vec<f64>>,
    pub lambda: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub gtol_scale: f64,
    pub max_iter: usize,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin_floor: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            gtol_scale: 1e-7,
            max_iter: 5000,
            seeds: vec![0],
            margin_floor: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericConfig {
    pub rtol: f64,
    pub eigen_tol: f64,
    pub quad_tol: f64,
}

impl Default for NumericConfig {
    fn default() -> Self {
        NumericConfig {
            rtol: 1e-10,
            eigen_tol: 1e-12,
            quad_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialMomentsConfig {
    pub degree: usize,
    /// Flattened entries, first index fastest.
    pub entries_re: Vec<f64>,
    #[serde(default)]
    pub entries_im: Vec<f64>,
}

impl ModelConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let cfg: ModelConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::ConfigParse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn policy(&self) -> NumericPolicy {
        NumericPolicy {
            rtol: self.numeric.rtol,
            eigen_tol: self.numeric.eigen_tol,
        }
    }

    /// Validated plant specification.
    pub fn plant_spec(&self) -> Result<PlantSpec> {
        let policy = self.policy();
        let theta1 = CcrMatrix::with_policy(to_matrix(&self.plant.theta1, "plant.theta1")?, &policy)
            .map_err(|e| retag(e, "plant.theta1"))?;
        PlantSpec::with_policy(
            theta1,
            to_matrix(&self.plant.k_energy, "plant.k_energy")?,
            to_matrix(&self.plant.sigma1, "plant.sigma1")?,
            to_matrix(&self.plant.s1, "plant.s1")?,
            &policy,
        )
    }

    /// Validated observer specification; `(L, M)` default to zero when the
    /// config leaves them to the synthesizer.
    pub fn observer_spec(&self) -> Result<ObserverSpec> {
        let policy = self.policy();
        let theta2 =
            CcrMatrix::with_policy(to_matrix(&self.observer.theta2, "observer.theta2")?, &policy)
                .map_err(|e| retag(e, "observer.theta2"))?;
        let nu = theta2.order();
        let n = self.plant.theta1.len();
        let l = match &self.observer.l {
            Some(rows) => to_matrix(rows, "observer.l")?,
            None => Mat::zeros(n, nu),
        };
        let m = match &self.observer.m_energy {
            Some(rows) => to_matrix(rows, "observer.m_energy")?,
            None => Mat::zeros(nu, nu),
        };
        ObserverSpec::with_policy(
            theta2,
            l,
            m,
            to_matrix(&self.observer.sigma2, "observer.sigma2")?,
            to_matrix(&self.observer.s2, "observer.s2")?,
            &policy,
        )
    }

    pub fn has_preset_decision(&self) -> bool {
        self.observer.l.is_some() && self.observer.m_energy.is_some()
    }

    pub fn cost_spec(&self) -> Result<CostSpec> {
        CostSpec::with_policy(
            to_matrix(&self.cost.pi_weight, "cost.pi_weight")?,
            self.cost.lambda,
            self.cost.tau,
            &self.policy(),
        )
    }

    /// Initial-moment tensor for the requested degree. Degree two derives
    /// from `(Σ₁, Θ₁)`; other degrees must be supplied in the config.
    pub fn moment_tensor(&self, degree: usize) -> Result<MomentTensor> {
        let plant = self.plant_spec()?;
        if degree == 2 && self.initial_moments.is_none() {
            let init = crate::moments::InitialSecondMoments::new(
                plant.sigma().clone(),
                plant.theta().clone(),
            )?;
            return Ok(MomentTensor::from_initial_moments(&init));
        }
        let section = self.initial_moments.as_ref().ok_or_else(|| {
            Error::invalid_spec(
                "initial_moments",
                format!(
                    "degree-{degree} averages need caller-supplied initial moments; \
                     the library does not fabricate them"
                ),
            )
        })?;
        if section.degree != degree {
            return Err(Error::invalid_spec(
                "initial_moments.degree",
                format!("config provides degree {}, requested {degree}", section.degree),
            ));
        }
        let n = plant.dim();
        let expected = n.pow(degree as u32);
        if section.entries_re.len() != expected {
            return Err(Error::invalid_spec(
                "initial_moments.entries_re",
                format!("needs {expected} entries, got {}", section.entries_re.len()),
            ));
        }
        if !section.entries_im.is_empty() && section.entries_im.len() != expected {
            return Err(Error::invalid_spec(
                "initial_moments.entries_im",
                format!("needs {expected} entries, got {}", section.entries_im.len()),
            ));
        }
        let entries = (0..expected)
            .map(|i| {
                Complex::new(
                    section.entries_re[i],
                    section.entries_im.get(i).copied().unwrap_or(0.0),
                )
            })
            .collect();
        MomentTensor::new(degree, n, entries)
    }
}

fn retag(err: Error, field: &str) -> Error {
    match err {
        Error::InvalidSpec { reason, .. } => Error::invalid_spec(field, reason),
        Error::SingularTheta => Error::invalid_spec(field, "CCR matrix is singular"),
        other => other,
    }
}

pub(crate) fn to_matrix(rows: &[Vec<f64>], field: &str) -> Result<Mat> {
    if rows.is_empty() {
        return Err(Error::invalid_spec(field, "matrix is empty"));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::invalid_spec(field, "matrix has an empty row"));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid_spec(field, "rows have inconsistent lengths"));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::invalid_spec(field, "matrix has non-finite entries"));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
