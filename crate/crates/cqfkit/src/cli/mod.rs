//! Command drivers behind the `cqf` binary: `check`, `moments`, `synth`.
//!
//! Drivers parse a TOML model config, run the library pipelines and write
//! machine-readable outputs. Exit codes: 0 success, 2 config parse error,
//! 3 invariant violation, 4 inadmissible horizon, 5 synthesis did not
//! converge for any seed.

pub mod config;
pub mod report;

use std::path::PathBuf;

use serde::Serialize;

use crate::coupled::{admissibility, assemble, gramians};
use crate::cqf::{
    evaluate_cost, initial_observer, optimize, stationarity, OptimizeOptions, OptimizeOutcome,
};
use crate::error::{Error, Result};
use crate::moments::{
    discounted_monomial_average, discounted_second_moment_matrix, discounted_second_moments,
    discounted_second_moments_freq, infinite_horizon_monomial_average,
    infinite_horizon_second_moment_matrix, InitialSecondMoments, QuadraturePolicy,
};
use crate::qho::{diagonalize_modes_with, QhoModel};
use config::{matrix_to_rows, ModelConfig};
use report::{
    config_hash, summarize_optimizer, trace_to_csv, write_atomic, CostReport, MultiStartSummary,
    RunMeta, SeedOutcome, StationarityJson, SynthesisReport, REPORT_SCHEMA_VERSION,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_INADMISSIBLE: i32 = 4;
pub const EXIT_NO_CONVERGENCE: i32 = 5;

/// Environment variable capping worker parallelism for multi-seed runs.
pub const WORKERS_ENV: &str = "CQF_WORKERS";

#[derive(Clone, Debug)]
pub struct GlobalArgs {
    pub config: PathBuf,
    pub json: bool,
    pub quiet: bool,
    /// Overrides the frequency-quadrature tolerance.
    pub tol: Option<f64>,
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::ConfigParse(_) => EXIT_PARSE,
        Error::NotAdmissible { .. } | Error::TauTooLarge { .. } | Error::InitNotAdmissible { .. } => {
            EXIT_INADMISSIBLE
        }
        _ => EXIT_INVARIANT,
    }
}

fn emit_error(global: &GlobalArgs, err: &Error) -> i32 {
    let code = exit_code_for(err);
    if global.json {
        let diag = serde_json::json!({ "status": "error", "exit_code": code, "error": err.to_string() });
        println!("{diag}");
    } else if !global.quiet {
        eprintln!("error: {err}");
    }
    code
}

fn margin_text(margin: f64) -> String {
    if margin.is_infinite() {
        "inf".to_string()
    } else {
        format!("{margin:.16e}")
    }
}

/// `check`: validate the config and, when the decision pair is preset,
/// test its admissibility at the configured horizon.
pub fn cmd_check(global: &GlobalArgs) -> i32 {
    match run_check(global) {
        Ok(done) => {
            if global.json {
                println!("{}", serde_json::json!({ "status": "ok", "margin": done }));
            } else if !global.quiet {
                match done {
                    Some(margin) => println!("config valid; admissibility margin = {margin}"),
                    None => println!("config valid; decision pair left to the synthesizer"),
                }
            }
            EXIT_OK
        }
        Err(err) => emit_error(global, &err),
    }
}

fn run_check(global: &GlobalArgs) -> Result<Option<String>> {
    let cfg = ModelConfig::from_path(&global.config)?;
    let plant = cfg.plant_spec()?;
    let observer = cfg.observer_spec()?;
    let cost = cfg.cost_spec()?;
    let sys = assemble(plant, observer, cost.clone())?;
    if !cfg.has_preset_decision() {
        return Ok(None);
    }
    let adm = admissibility(&sys, cost.tau())?;
    if !adm.admissible {
        return Err(Error::NotAdmissible { tau: cost.tau(), bound: adm.stability.tau_bound });
    }
    Ok(Some(margin_text(adm.margin)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Horizon {
    Tau(f64),
    Infinite,
}

impl Horizon {
    pub fn parse(text: &str) -> Result<Self> {
        if text.eq_ignore_ascii_case("inf") || text.eq_ignore_ascii_case("infinite") {
            return Ok(Horizon::Infinite);
        }
        text.parse::<f64>()
            .ok()
            .filter(|t| *t > 0.0 && t.is_finite())
            .map(Horizon::Tau)
            .ok_or_else(|| Error::ConfigParse(format!("invalid horizon {text:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentMethod {
    Ale,
    Freq,
    Modes,
    All,
}

impl MomentMethod {
    pub fn parse(text: &str) -> Result<Self> {
        match text.to_ascii_lowercase().as_str() {
            "ale" => Ok(MomentMethod::Ale),
            "freq" => Ok(MomentMethod::Freq),
            "modes" => Ok(MomentMethod::Modes),
            "all" => Ok(MomentMethod::All),
            other => Err(Error::ConfigParse(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MomentsArgs {
    pub degree: usize,
    /// Defaults to the configured `cost.tau`.
    pub horizon: Option<Horizon>,
    pub method: MomentMethod,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct MomentsOutput {
    degree: usize,
    horizon: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    ale: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    freq: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    modes_re: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    modes_im: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tensor: Option<Vec<TensorEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_discrepancy: Option<f64>,
}

#[derive(Serialize)]
struct TensorEntry {
    index: Vec<usize>,
    re: f64,
    im: f64,
}

/// `moments`: discounted (or infinite-horizon) moment averages of the
/// plant oscillator by the requested route(s).
pub fn cmd_moments(global: &GlobalArgs, args: &MomentsArgs) -> i32 {
    match run_moments(global, args) {
        Ok(output) => {
            let rendered = if global.json || args.out.is_none() {
                serde_json::to_string_pretty(&output).expect("moments output serializes")
            } else {
                moments_to_csv(&output)
            };
            match &args.out {
                Some(path) => {
                    if let Err(err) = write_atomic(path, &rendered) {
                        return emit_error(global, &err);
                    }
                    if !global.quiet && !global.json {
                        println!("wrote {}", path.display());
                    }
                }
                None => println!("{rendered}"),
            }
            EXIT_OK
        }
        Err(err) => emit_error(global, &err),
    }
}

fn run_moments(global: &GlobalArgs, args: &MomentsArgs) -> Result<MomentsOutput> {
    let cfg = ModelConfig::from_path(&global.config)?;
    let plant = cfg.plant_spec()?;
    let cost = cfg.cost_spec()?;
    let policy = cfg.policy();
    let horizon = args.horizon.unwrap_or(Horizon::Tau(cost.tau()));
    let quad = QuadraturePolicy {
        tol: global.tol.unwrap_or(cfg.numeric.quad_tol),
        ..QuadraturePolicy::default()
    };

    let model = QhoModel::with_policy(plant.theta().clone(), plant.k_energy().clone(), &policy)?;
    let a = model.dynamics_matrix();
    let init = InitialSecondMoments::new(plant.sigma().clone(), plant.theta().clone())?;

    let mut output = MomentsOutput {
        degree: args.degree,
        horizon: match horizon {
            Horizon::Tau(t) => format!("{t}"),
            Horizon::Infinite => "inf".to_string(),
        },
        ale: None,
        freq: None,
        modes_re: None,
        modes_im: None,
        tensor: None,
        max_discrepancy: None,
    };

    if args.degree == 0 {
        return Err(Error::invalid_spec("degree", "degree must be positive"));
    }

    if args.degree != 2 {
        if !matches!(args.method, MomentMethod::Modes | MomentMethod::All) {
            return Err(Error::invalid_spec(
                "method",
                "averages of degree other than two are only available through the mode sum",
            ));
        }
        let modes = diagonalize_modes_with(&model, &policy)?;
        let tensor_in = cfg.moment_tensor(args.degree)?;
        let n = model.order();
        let mut entries = Vec::new();
        let mut index = vec![0usize; args.degree];
        loop {
            let value = match horizon {
                Horizon::Tau(t) => discounted_monomial_average(&modes, &index, &tensor_in, t)?,
                Horizon::Infinite => infinite_horizon_monomial_average(&modes, &index, &tensor_in)?,
            };
            entries.push(TensorEntry { index: index.clone(), re: value.re, im: value.im });
            // Mixed-radix increment, first slot fastest.
            let mut carry = true;
            for slot in index.iter_mut() {
                *slot += 1;
                if *slot < n {
                    carry = false;
                    break;
                }
                *slot = 0;
            }
            if carry {
                break;
            }
        }
        output.tensor = Some(entries);
        return Ok(output);
    }

    // Degree two: matrix routes.
    match (args.method, horizon) {
        (MomentMethod::Ale, Horizon::Tau(t)) => {
            output.ale = Some(matrix_to_rows(&discounted_second_moments(&a, plant.sigma(), t)?));
        }
        (MomentMethod::Freq, Horizon::Tau(t)) => {
            output.freq = Some(matrix_to_rows(&discounted_second_moments_freq(
                &a,
                init.gamma(),
                t,
                &quad,
            )?));
        }
        (MomentMethod::Modes, Horizon::Tau(t)) => {
            let modes = diagonalize_modes_with(&model, &policy)?;
            let full = discounted_second_moment_matrix(&modes, &init, t)?;
            output.modes_re = Some(matrix_to_rows(&full.map(|z| z.re)));
            output.modes_im = Some(matrix_to_rows(&full.map(|z| z.im)));
        }
        (MomentMethod::Modes | MomentMethod::All, Horizon::Infinite) => {
            let modes = diagonalize_modes_with(&model, &policy)?;
            let full = infinite_horizon_second_moment_matrix(&modes, &init)?;
            output.modes_re = Some(matrix_to_rows(&full.map(|z| z.re)));
            output.modes_im = Some(matrix_to_rows(&full.map(|z| z.im)));
        }
        (MomentMethod::All, Horizon::Tau(t)) => {
            let p_ale = discounted_second_moments(&a, plant.sigma(), t)?;
            let p_freq = discounted_second_moments_freq(&a, init.gamma(), t, &quad)?;
            output.ale = Some(matrix_to_rows(&p_ale));
            output.freq = Some(matrix_to_rows(&p_freq));
            let mut discrepancy = (&p_ale - &p_freq).norm();
            match diagonalize_modes_with(&model, &policy) {
                Ok(modes) => {
                    let full = discounted_second_moment_matrix(&modes, &init, t)?;
                    let p_modes = full.map(|z| z.re);
                    discrepancy = discrepancy
                        .max((&p_ale - &p_modes).norm())
                        .max((&p_freq - &p_modes).norm());
                    output.modes_re = Some(matrix_to_rows(&p_modes));
                    output.modes_im = Some(matrix_to_rows(&full.map(|z| z.im)));
                }
                // The mode route needs R ⪰ 0; the other two do not.
                Err(Error::NotPositiveSemidefinite { .. }) | Err(Error::DefectiveMatrix(_)) => {}
                Err(e) => return Err(e),
            }
            output.max_discrepancy = Some(discrepancy);
        }
        (MomentMethod::Ale | MomentMethod::Freq, Horizon::Infinite) => {
            return Err(Error::invalid_spec(
                "method",
                "the infinite-horizon average is only available through the mode sum",
            ));
        }
    }
    Ok(output)
}

fn moments_to_csv(output: &MomentsOutput) -> String {
    let mut s = String::from("method,row,col,re,im\n");
    let push_matrix = |name: &str, re: &Option<Vec<Vec<f64>>>, im: Option<&Vec<Vec<f64>>>, s: &mut String| {
        if let Some(rows) = re {
            for (i, row) in rows.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let imv = im.map_or(0.0, |m| m[i][j]);
                    s.push_str(&format!("{name},{i},{j},{v:.16e},{imv:.16e}\n"));
                }
            }
        }
    };
    push_matrix("ale", &output.ale, None, &mut s);
    push_matrix("freq", &output.freq, None, &mut s);
    push_matrix("modes", &output.modes_re, output.modes_im.as_ref(), &mut s);
    if let Some(entries) = &output.tensor {
        for e in entries {
            let idx = e.index.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
            s.push_str(&format!("tensor[{idx}],0,0,{:.16e},{:.16e}\n", e.re, e.im));
        }
    }
    if let Some(d) = output.max_discrepancy {
        s.push_str(&format!("max_discrepancy,0,0,{d:.16e},0\n"));
    }
    s
}

#[derive(Clone, Debug, Default)]
pub struct SynthArgs {
    /// Overrides the configured seed list.
    pub seeds: Option<Vec<u64>>,
    pub trace: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// Skip optimization; evaluate and report the preset decision pair.
    pub verify_only: bool,
}

/// `synth`: synthesize (or verify) the observer and write the report.
pub fn cmd_synth(global: &GlobalArgs, args: &SynthArgs) -> i32 {
    let started = std::time::Instant::now();
    match run_synth(global, args) {
        Ok((mut report, trace_csv, any_converged)) => {
            report.run_meta = RunMeta {
                timestamp_unix_ms: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_millis() as u64)
                    .unwrap_or(0),
                wall_clock_ms: started.elapsed().as_millis() as u64,
            };
            let rendered = match report.to_json() {
                Ok(r) => r,
                Err(err) => return emit_error(global, &err),
            };
            if let Some(path) = &args.report {
                if let Err(err) = write_atomic(path, &rendered) {
                    return emit_error(global, &err);
                }
            }
            if let (Some(path), Some(csv)) = (&args.trace, &trace_csv) {
                if let Err(err) = write_atomic(path, csv) {
                    return emit_error(global, &err);
                }
            }
            if global.json {
                println!("{rendered}");
            } else if !global.quiet {
                println!(
                    "synthesis {}: cost = {:.12e}, res_L = {:.3e}, res_M = {:.3e}",
                    if any_converged { "converged" } else { "did not converge" },
                    report.cost.total,
                    report.stationarity.res_l,
                    report.stationarity.res_m,
                );
            }
            if any_converged {
                EXIT_OK
            } else {
                EXIT_NO_CONVERGENCE
            }
        }
        Err(err) => emit_error(global, &err),
    }
}

fn worker_cap() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_synth(
    global: &GlobalArgs,
    args: &SynthArgs,
) -> Result<(SynthesisReport, Option<String>, bool)> {
    let cfg = ModelConfig::from_path(&global.config)?;
    let plant = cfg.plant_spec()?;
    let observer = cfg.observer_spec()?;
    let cost = cfg.cost_spec()?;
    let hash = config_hash(&cfg)?;

    if args.verify_only {
        if !cfg.has_preset_decision() {
            return Err(Error::invalid_spec(
                "observer",
                "--verify-only needs both l and m_energy in the config",
            ));
        }
        let sys = assemble(plant, observer.clone(), cost.clone())?;
        let adm = admissibility(&sys, cost.tau())?;
        if !adm.admissible {
            return Err(Error::NotAdmissible { tau: cost.tau(), bound: adm.stability.tau_bound });
        }
        let pair = gramians(&sys, cost.tau())?;
        let breakdown = evaluate_cost(&sys, &pair, cost.tau());
        let stat = stationarity(&sys, &pair)?;
        let report = SynthesisReport {
            schema_version: REPORT_SCHEMA_VERSION,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            config_echo: cfg,
            config_hash: hash,
            run_meta: RunMeta { timestamp_unix_ms: 0, wall_clock_ms: 0 },
            verify_only: true,
            final_l: matrix_to_rows(sys.observer().coupling()),
            final_m: matrix_to_rows(sys.observer().m_energy()),
            cost: CostReport {
                total: breakdown.total,
                error_part: breakdown.error_part,
                backaction_part: breakdown.backaction_part,
                dual_total: breakdown.dual_total,
            },
            stationarity: StationarityJson::from(&stat),
            optimizer: report::OptimizerSummary {
                seed: 0,
                iterations: 0,
                termination: "verify_only".to_string(),
                converged: true,
                final_grad_l_norm: 0.0,
                final_grad_m_norm: 0.0,
                initial_cost: breakdown.total,
                final_cost: breakdown.total,
            },
            multi_start: MultiStartSummary { seeds: Vec::new(), consistent: true },
        };
        return Ok((report, None, true));
    }

    let options = OptimizeOptions {
        gtol_scale: cfg.optimizer.gtol_scale,
        max_iter: cfg.optimizer.max_iter,
        margin_floor: cfg.optimizer.margin_floor,
        ..OptimizeOptions::default()
    };
    let seeds = args.seeds.clone().unwrap_or_else(|| cfg.optimizer.seeds.clone());
    if seeds.is_empty() {
        return Err(Error::invalid_spec("optimizer.seeds", "seed list is empty"));
    }

    // Each seed is an independent synthesis; run them on a bounded pool
    // and collect in seed order so the report is deterministic.
    let preset = cfg.has_preset_decision();
    let workers = worker_cap().min(seeds.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<OptimizeOutcome>>>> =
        (0..seeds.len()).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= seeds.len() {
                    break;
                }
                let result = (|| {
                    let init = if preset {
                        observer.clone()
                    } else {
                        initial_observer(&plant, &observer, seeds[idx])?
                    };
                    optimize(&plant, &cost, &init, &options)
                })();
                *slots[idx].lock().expect("seed slot lock") = Some(result);
            });
        }
    });

    let mut seed_summaries = Vec::new();
    let mut best: Option<(u64, OptimizeOutcome)> = None;
    let mut first_error: Option<Error> = None;
    for (seed, slot) in seeds.iter().zip(slots) {
        match slot.into_inner().expect("seed slot").expect("every seed ran") {
            Ok(outcome) => {
                seed_summaries.push(SeedOutcome {
                    seed: *seed,
                    cost: outcome.cost.total,
                    converged: outcome.converged(),
                    iterations: outcome.iterations,
                });
                let better = match &best {
                    None => true,
                    Some((_, b)) => {
                        (outcome.converged() && !b.converged())
                            || (outcome.converged() == b.converged()
                                && outcome.cost.total < b.cost.total)
                    }
                };
                if better {
                    best = Some((*seed, outcome));
                }
            }
            Err(err) => {
                if first_error.is_none() {
                    first_error = Some(err);
                }
            }
        }
    }
    let (best_seed, best_outcome) = match best {
        Some(b) => b,
        None => return Err(first_error.unwrap_or(Error::NoDescentDirection)),
    };

    let converged_costs: Vec<f64> =
        seed_summaries.iter().filter(|s| s.converged).map(|s| s.cost).collect();
    let consistent = match converged_costs.as_slice() {
        [] | [_] => true,
        costs => {
            let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (max - min).abs() <= 1e-4 * min.abs().max(1.0)
        }
    };
    let any_converged = seed_summaries.iter().any(|s| s.converged);

    let report = SynthesisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config_echo: cfg,
        config_hash: hash,
        run_meta: RunMeta { timestamp_unix_ms: 0, wall_clock_ms: 0 },
        verify_only: false,
        final_l: matrix_to_rows(best_outcome.observer.coupling()),
        final_m: matrix_to_rows(best_outcome.observer.m_energy()),
        cost: CostReport {
            total: best_outcome.cost.total,
            error_part: best_outcome.cost.error_part,
            backaction_part: best_outcome.cost.backaction_part,
            dual_total: best_outcome.cost.dual_total,
        },
        stationarity: StationarityJson::from(&best_outcome.report),
        optimizer: summarize_optimizer(best_seed, &best_outcome),
        multi_start: MultiStartSummary { seeds: seed_summaries, consistent },
    };
    let trace_csv = trace_to_csv(&best_outcome.trace);
    Ok((report, Some(trace_csv), any_converged))
}
