//! Machine-readable synthesis reports.
//!
//! Reports round-trip exactly through JSON (`parse(serialize(r)) == r`),
//! reject unknown fields, and separate volatile run metadata (timestamp,
//! wall clock) from the reproducible payload so that identical configs
//! produce identical payloads across runs.

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::cqf::{OptimizeOutcome, StationarityReport, Termination, TraceRow};
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisReport {
    pub schema_version: u32,
    pub library_version: String,
    /// Echo of the parsed input configuration.
    pub config_echo: ModelConfig,
    /// FNV-1a hash of the canonical JSON form of the config echo;
    /// excludes `run_meta` by construction.
    pub config_hash: String,
    /// Volatile metadata, excluded from the hash and from determinism
    /// comparisons.
    pub run_meta: RunMeta,
    pub verify_only: bool,
    pub final_l: Vec<Vec<f64>>,
    pub final_m: Vec<Vec<f64>>,
    pub cost: CostReport,
    pub stationarity: StationarityJson,
    pub optimizer: OptimizerSummary,
    pub multi_start: MultiStartSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMeta {
    pub timestamp_unix_ms: u64,
    pub wall_clock_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostReport {
    pub total: f64,
    pub error_part: f64,
    pub backaction_part: f64,
    pub dual_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarityJson {
    pub res_l: f64,
    pub res_m: f64,
    pub lie_res_l: f64,
    pub lie_res_m: f64,
    pub jacobi_res: f64,
    pub l_formula_gap: Option<f64>,
    pub m_formula_gap: Option<f64>,
    pub nondegenerate: bool,
    /// Free symmetric block `N = 2(Θℰ − ℰᵀΘ)₁₁`.
    pub free_block: Vec<Vec<f64>>,
}

impl From<&StationarityReport> for StationarityJson {
    fn from(r: &StationarityReport) -> Self {
        StationarityJson {
            res_l: r.res_l,
            res_m: r.res_m,
            lie_res_l: r.lie_res_l,
            lie_res_m: r.lie_res_m,
            jacobi_res: r.jacobi_res,
            l_formula_gap: r.l_formula_gap,
            m_formula_gap: r.m_formula_gap,
            nondegenerate: r.nondegenerate,
            free_block: super::config::matrix_to_rows(&r.free_block),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSummary {
    pub seed: u64,
    pub iterations: usize,
    pub termination: String,
    pub converged: bool,
    pub final_grad_l_norm: f64,
    pub final_grad_m_norm: f64,
    pub initial_cost: f64,
    pub final_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiStartSummary {
    pub seeds: Vec<SeedOutcome>,
    /// All converged costs agree to 1e-4 relative; when false, distinct
    /// stationary values were found and are reported as-is.
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedOutcome {
    pub seed: u64,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub fn termination_label(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::IterationCap => "iteration_cap",
        Termination::Stalled => "stalled",
    }
}

pub fn summarize_optimizer(seed: u64, outcome: &OptimizeOutcome) -> OptimizerSummary {
    let last = outcome.trace.last();
    OptimizerSummary {
        seed,
        iterations: outcome.iterations,
        termination: termination_label(outcome.termination).to_string(),
        converged: outcome.converged(),
        final_grad_l_norm: last.map_or(0.0, |r| r.grad_l_norm),
        final_grad_m_norm: last.map_or(0.0, |r| r.grad_m_norm),
        initial_cost: outcome.trace.first().map_or(outcome.cost.total, |r| r.cost),
        final_cost: outcome.cost.total,
    }
}

/// FNV-1a over the canonical JSON serialization of the config.
pub fn config_hash(config: &ModelConfig) -> Result<String> {
    let bytes = serde_json::to_vec(config).map_err(|e| Error::ConfigParse(e.to_string()))?;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{hash:016x}"))
}

impl SynthesisReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: SynthesisReport =
            serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::ConfigParse(format!(
                "unsupported report schema_version {} (expected {REPORT_SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }
}

/// Writes the per-iteration trace with the fixed header
/// `iter,cost,grad_L_norm,grad_M_norm,step,margin`. Floats use 17
/// significant digits so binary64 values round-trip exactly.
pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iter,cost,grad_L_norm,grad_M_norm,step,margin\n");
    for row in trace {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            row.iter,
            row.cost,
            row.grad_l_norm,
            row.grad_m_norm,
            row.step,
            if row.margin.is_infinite() { "inf".to_string() } else { format!("{:.16e}", row.margin) },
        ));
    }
    out
}

/// Atomic file write: temp file in the target directory, then rename.
pub fn write_atomic(path: &std::path::Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = dir.to_path_buf();
    let base = path
        .file_name()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "out".to_string());
    tmp.push(format!(".{base}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
