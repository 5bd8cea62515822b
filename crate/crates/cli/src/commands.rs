use std::path::PathBuf;

use log::{info, warn};
use netac::analysis::{estimate_holder_exponent, estimate_strong_order, ExponentEstimate, HolderNorm};
use netac::semigroup::{check_contraction, check_positivity, ContractionNorm};
use netac::solver::{allen_cahn_energy, Simulator};
use netac::{generalized_eigs, Error, ValidationReport, VertexProfile};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{HolderNormConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::model::Model;
use crate::output::{num, Manifest, OutputDir, TOOL_NAME, TOOL_VERSION};

/// Flags shared by every subcommand, already resolved against the config.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: &'static str,
    pub seed: u64,
    pub trajectories: Option<usize>,
    pub output_dir: PathBuf,
}

const CHUNK: usize = 16;

/// Maps construction errors that express a violated hypothesis to a failed check.
fn assumption_check(e: &Error) -> Option<ValidationReport> {
    let (name, measured, threshold) = match *e {
        Error::NonpositiveConductance { value, .. } => ("conductance_positive", value, 0.0),
        Error::NegativePotential { value, .. } => ("potential_nonnegative", value, 0.0),
        Error::NonpositiveWeight { value, .. } => ("weight_positive", value, 0.0),
        Error::NonpositiveBeta { value, .. } => ("beta_positive", value, 0.0),
        Error::VertexMismatch { first, second, .. } => ("initial_vertex_continuity", (first - second).abs(), 1e-12),
        Error::DecayTooSlow(s) => ("noise_decay", s, 0.5),
        _ => return None,
    };
    let mut r = ValidationReport::new("config");
    r.push(name, false, measured, threshold).note = Some(e.to_string());
    Some(r)
}

fn full_report(model: &Model, cfg: &RunConfig) -> CliResult<ValidationReport> {
    let mut report = model.coefficient_report(cfg)?;
    let sys = &model.run.system;
    let times = &cfg.experiment.validate.times;
    report.merge("semigroup", check_contraction(sys, times, ContractionNorm::E2)?);
    if cfg.vertex_profile == VertexProfile::Strict {
        let lumped = sys.with_lumped_mass();
        report.merge("semigroup", check_contraction(&lumped, times, ContractionNorm::EInf)?);
        report.merge("semigroup", check_positivity(sys, times)?);
    }
    Ok(report)
}

/// Checks every sampled hypothesis; prints the report and writes no files.
pub fn validate(cfg: &RunConfig, inv: &Invocation) -> CliResult<()> {
    let report = match Model::build(cfg, inv.seed) {
        Ok(model) => full_report(&model, cfg)?,
        Err(CliError::Core(e)) => assumption_check(&e).ok_or(CliError::Core(e))?,
        Err(e) => return Err(e),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.passed {
        info!("command=validate checks={} passed=true", report.checks.len());
        Ok(())
    } else {
        Err(CliError::ValidationFailed(Box::new(report)))
    }
}

fn checked_model(cfg: &RunConfig, inv: &Invocation) -> CliResult<Model> {
    let model = Model::build(cfg, inv.seed)?;
    let report = model.vertex_report(cfg)?;
    if !report.passed {
        return Err(CliError::ValidationFailed(Box::new(report)));
    }
    Ok(model)
}

fn manifest<'a>(cfg: &'a RunConfig, inv: &Invocation, trajectories: usize) -> impl FnOnce(Vec<String>) -> Manifest + 'a {
    let command = inv.command.to_string();
    let seed = inv.seed;
    move |files| Manifest {
        tool: TOOL_NAME,
        version: TOOL_VERSION,
        command,
        config_hash: cfg.hash(),
        seed,
        scheme: serde_json::to_value(cfg.solver.scheme).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        trajectories,
        files,
    }
}

#[derive(Debug, Serialize)]
struct SpectrumProperties {
    eigenpairs: usize,
    complete: bool,
    orthonormality_defect: f64,
    contraction: ValidationReport,
}

pub fn spectrum(cfg: &RunConfig, inv: &Invocation) -> CliResult<()> {
    let model = checked_model(cfg, inv)?;
    let sys = &model.run.system;
    let count = cfg.experiment.spectrum.count.min(sys.n_dofs());
    let spectral = generalized_eigs(sys, count)?;
    let mut out = OutputDir::create(&inv.output_dir)?;
    let rows = spectral.eigenvalues().iter().enumerate().map(|(k, &l)| vec![(k + 1).to_string(), num(l)]);
    out.csv("spectrum.csv", &["k", "lambda_k"], rows)?;
    let props = SpectrumProperties {
        eigenpairs: spectral.len(),
        complete: spectral.is_complete(),
        orthonormality_defect: spectral.orthonormality_defect(sys),
        contraction: check_contraction(sys, &cfg.experiment.spectrum.times, ContractionNorm::E2)?,
    };
    out.json("properties.json", &props)?;
    let dir = out.finish(manifest(cfg, inv, 0))?;
    info!("command=spectrum eigenpairs={} out={}", spectral.len(), dir.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    trajectories: usize,
    q: f64,
    sup_moment: f64,
    sup_moment_stderr: f64,
    sup_quantiles: Vec<(f64, f64)>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

pub fn simulate(cfg: &RunConfig, inv: &Invocation) -> CliResult<()> {
    let model = checked_model(cfg, inv)?;
    let n = inv.trajectories.unwrap_or(cfg.experiment.simulate.trajectories);
    if n == 0 {
        return Err(CliError::InvalidConfig("need at least one trajectory".into()));
    }
    let run = &model.run;
    let sim = Simulator::new(run)?;
    let mut out = OutputDir::create(&inv.output_dir)?;
    let mut sups = Vec::with_capacity(n);
    let mut summary_rows = Vec::with_capacity(n);
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let paths = (start..end)
            .into_par_iter()
            .map(|k| sim.path(k as u64).map_err(|e| Error::Trajectory { id: k as u64, source: Box::new(e) }))
            .collect::<Result<Vec<_>, _>>()?;
        for p in paths {
            out.snapshots(&format!("trajectory_{:04}.csv", p.trajectory_id), &model.mesh, &p)?;
            let last = p.final_state().expect("path has a final state");
            let mut row = vec![p.trajectory_id.to_string(), num(p.sup_norm()), num(run.system.mass_norm(last))];
            if let Some(ac) = &model.allen_cahn {
                row.push(num(allen_cahn_energy(&run.system, ac.beta, last)));
            }
            sups.push(p.sup_norm());
            summary_rows.push(row);
        }
    }
    let mut header = vec!["trajectory", "sup_norm", "final_e2_norm"];
    if model.allen_cahn.is_some() {
        header.push("final_energy");
    }
    out.csv("summary.csv", &header, summary_rows)?;

    let q = cfg.experiment.simulate.moment;
    let powered: Vec<f64> = sups.iter().map(|s| s.powf(q)).collect();
    let mean = powered.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        (powered.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
    } else {
        f64::NAN
    };
    let mut sorted = sups.clone();
    sorted.sort_by(f64::total_cmp);
    let summary = SimulationSummary {
        trajectories: n,
        q,
        sup_moment: mean,
        sup_moment_stderr: stderr,
        sup_quantiles: [0.05, 0.5, 0.95].iter().map(|&p| (p, quantile(&sorted, p))).collect(),
    };
    out.json("summary.json", &summary)?;
    let dir = out.finish(manifest(cfg, inv, n))?;
    info!("command=simulate trajectories={n} out={}", dir.display());
    Ok(())
}

fn write_estimate(out: &mut OutputDir, name: &str, column: &str, est: &ExponentEstimate) -> CliResult<()> {
    let r = &est.regression;
    if !est.estimate.is_finite() {
        return Err(CliError::InvalidConfig(format!("{name}: degenerate ladder values {:?}", est.values)));
    }
    let rows = est
        .ladder
        .iter()
        .zip(&est.values)
        .map(|(&x, &y)| vec![num(x), num(y), num((r.intercept + r.slope * x.ln()).exp())]);
    out.csv(&format!("{name}.csv"), &["ladder", column, "fitted"], rows)?;
    out.json(&format!("{name}.json"), est)?;
    if r.r_squared.is_nan() || r.r_squared < 0.9 {
        warn!("command={name} r_squared={} msg=\"poor log-log fit\"", r.r_squared);
    }
    println!("{}", serde_json::to_string(&(est.estimate, est.half_width))?);
    Ok(())
}

pub fn convergence(cfg: &RunConfig, inv: &Invocation) -> CliResult<()> {
    let params = cfg
        .experiment
        .convergence
        .as_ref()
        .ok_or_else(|| CliError::InvalidConfig("experiment.convergence is required".into()))?;
    let model = checked_model(cfg, inv)?;
    let n = inv.trajectories.unwrap_or(params.trajectories);
    let est = estimate_strong_order(&model.run, &params.ladder, n)?;
    let mut out = OutputDir::create(&inv.output_dir)?;
    write_estimate(&mut out, "convergence", "error", &est)?;
    let dir = out.finish(manifest(cfg, inv, n))?;
    info!("command=convergence order={} out={}", est.estimate, dir.display());
    Ok(())
}

pub fn holder(cfg: &RunConfig, inv: &Invocation) -> CliResult<()> {
    let params =
        cfg.experiment.holder.as_ref().ok_or_else(|| CliError::InvalidConfig("experiment.holder is required".into()))?;
    let model = checked_model(cfg, inv)?;
    let n = inv.trajectories.unwrap_or(params.trajectories);
    let norm = match params.norm {
        HolderNormConfig::E2 => HolderNorm::E2,
        HolderNormConfig::EInf => HolderNorm::EInf,
    };
    let est = estimate_holder_exponent(&model.run, &params.lags, n, norm, params.t_start)?;
    let mut out = OutputDir::create(&inv.output_dir)?;
    write_estimate(&mut out, "holder", "increment", &est)?;
    let dir = out.finish(manifest(cfg, inv, n))?;
    info!("command=holder exponent={} out={}", est.estimate, dir.display());
    Ok(())
}
