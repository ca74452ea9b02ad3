//! Experiment orchestration and artifact emission.

use std::path::{Path, PathBuf};

use udsgd_core::clt::{self, Comparison, CovarianceReport};
use udsgd_core::communication::{schedule_diagnostics, verify_contraction};
use udsgd_core::engine::{
    self, run, run_ensemble, write_ensemble_rows, write_trajectory_rows, Ensemble, Metric, Summary, ENSEMBLE_HEADER,
    MATRIX_HEADER, TRAJECTORY_HEADER,
};
use udsgd_core::{Error, Scalar};

use crate::build::Setup;
use crate::config::{ExperimentConfig, ExperimentKind, Precision};
use crate::error::LabError;
use crate::output::{config_hash, opt, OutputDir};

/// Terminal statistics of one configuration.
#[derive(Debug, Clone)]
pub struct VariantSummary {
    pub name: String,
    pub agents: usize,
    pub n: usize,
    pub gamma: f64,
    pub mse: Summary,
    pub pr_mse: Summary,
    pub consensus: Summary,
    pub scaled_consensus: Summary,
    /// `Tr(Ĉ_n)`.
    pub empirical_trace: f64,
    pub empirical_trace_se: f64,
    pub trace_v: Option<f64>,
    pub trace_v_prime: Option<f64>,
    /// Per-trial terminal MSE, in trial order.
    pub terminal_mse: Vec<f64>,
    /// `(n, mean over trials of consensus/γ_n)` at every checkpoint.
    pub scaled_consensus_series: Vec<(usize, f64)>,
    /// Per trial, consensus/γ_n at every checkpoint.
    pub scaled_consensus_trials: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub variants: Vec<VariantSummary>,
    pub comparison: Option<Comparison>,
}

impl Outcome {
    pub fn variant(&self, name: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.name == name)
    }
}

const SUMMARY_HEADER: &str = "variant,agents,n,gamma,mse_mean,mse_se,scaled_mse,pr_mse_mean,pr_mse_se,consensus_mean,\
scaled_consensus_mean,empirical_trace,empirical_trace_se,trace_v,trace_v_prime";

fn summarize<T: Scalar>(name: &str, ens: &Ensemble<T>, report: Option<&CovarianceReport<T>>) -> VariantSummary {
    let t = ens.terminal();
    VariantSummary {
        name: name.to_string(),
        agents: 0,
        n: t.n,
        gamma: t.gamma,
        mse: t.mse,
        pr_mse: t.pr_mse,
        consensus: t.consensus,
        scaled_consensus: t.scaled_consensus,
        empirical_trace: t.scaled_cov.trace(),
        empirical_trace_se: t.scaled_cov_trace_se,
        trace_v: report.map(|r| r.trace_v.to_f64_lossy()),
        trace_v_prime: report.map(|r| r.trace_v_prime.to_f64_lossy()),
        terminal_mse: ens.terminal_values(Metric::Mse),
        scaled_consensus_series: ens.checkpoints.iter().map(|c| (c.n, c.scaled_consensus.mean)).collect(),
        scaled_consensus_trials: ens
            .trials
            .iter()
            .map(|t| t.records.iter().map(|r| Metric::ScaledConsensus.value(r)).collect())
            .collect(),
    }
}

fn write_summary(out: &mut OutputDir, rows: &[VariantSummary]) -> Result<(), LabError> {
    out.write("summary.csv", &[], SUMMARY_HEADER, |w| {
        use std::io::Write;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.name,
                r.agents,
                r.n,
                r.gamma,
                r.mse.mean,
                r.mse.std_error,
                r.mse.mean / r.gamma,
                r.pr_mse.mean,
                r.pr_mse.std_error,
                r.consensus.mean,
                r.scaled_consensus.mean,
                r.empirical_trace,
                r.empirical_trace_se,
                opt(r.trace_v),
                opt(r.trace_v_prime)
            )?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Closed-form report; agents without an explicit kernel fall back to Monte
/// Carlo unless `closed_form_only` is set, in which case `None` is returned.
pub fn covariance_report<T: Scalar>(cfg: &ExperimentConfig, setup: &Setup<T>) -> Result<Option<CovarianceReport<T>>, LabError> {
    let p = &*setup.problem;
    let star = &setup.optimum.theta;
    let mut us = Vec::with_capacity(p.num_agents());
    for (i, spec) in setup.samplers.iter().enumerate() {
        let u = match clt::agent_u(p, i, spec, star) {
            Ok(u) => u,
            Err(Error::KernelUnavailable(_)) if cfg.analysis.closed_form_only => return Ok(None),
            Err(Error::KernelUnavailable(_)) => {
                let seed = udsgd_core::rng::derive_seed(cfg.seed, &[udsgd_core::rng::tag::MC_TRIAL, i as u64]);
                clt::agent_u_mc(p, i, spec, star, cfg.analysis.mc_horizon, cfg.analysis.mc_trials, seed)?.covariance
            }
            Err(e) => return Err(e.into()),
        };
        us.push(u);
    }
    Ok(Some(CovarianceReport::new(us, setup.optimum.hessian.clone(), setup.step)?))
}

fn write_report<T: Scalar>(out: &mut OutputDir, name: &str, report: &CovarianceReport<T>) -> Result<(), LabError> {
    let manifest = format!("matrices: {}", report.manifest().join(";"));
    out.write(name, &[manifest], MATRIX_HEADER, |w| report.write_csv(w))?;
    Ok(())
}

fn write_ensemble<T: Scalar>(out: &mut OutputDir, name: &str, ens: &Ensemble<T>) -> Result<(), LabError> {
    out.write(name, &[], ENSEMBLE_HEADER, |w| write_ensemble_rows(w, &ens.checkpoints))?;
    Ok(())
}

fn write_trajectories<T: Scalar>(out: &mut OutputDir, name: &str, ens: &Ensemble<T>) -> Result<(), LabError> {
    out.write(name, &[], TRAJECTORY_HEADER, |w| {
        for (r, t) in ens.trials.iter().enumerate() {
            write_trajectory_rows(w, r, t)?;
        }
        Ok(())
    })?;
    Ok(())
}

/// Runs the configured experiment and writes its artifacts into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, LabError> {
    match cfg.precision {
        Precision::F64 => run_typed::<f64>(cfg, out_dir),
        Precision::F32 => run_typed::<f32>(cfg, out_dir),
    }
}

fn open_output(cfg: &ExperimentConfig, out_dir: &Path) -> Result<OutputDir, LabError> {
    let resolved = cfg.resolved_toml();
    let mut out = OutputDir::new(out_dir, &config_hash(&resolved), cfg.seed)?;
    out.write_text("config.resolved.toml", &resolved)?;
    Ok(out)
}

fn base_setup<T: Scalar>(cfg: &ExperimentConfig) -> Result<Setup<T>, LabError> {
    Setup::build(cfg, &cfg.agent_groups(), &cfg.pattern, &cfg.schedule)
}

fn run_typed<T: Scalar>(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, LabError> {
    cfg.validate()?;
    let mut out = open_output(cfg, out_dir)?;
    let mut outcome = Outcome::default();
    match cfg.experiment {
        ExperimentKind::SingleRun => {
            let setup = base_setup::<T>(cfg)?;
            let traj = run(&setup.run_config(cfg).for_trial(0))?;
            out.write("trajectory.csv", &[], TRAJECTORY_HEADER, |w| write_trajectory_rows(w, 0, &traj))?;
        }
        ExperimentKind::Ensemble | ExperimentKind::CltCompare => {
            let setup = base_setup::<T>(cfg)?;
            let ens = run_ensemble(&setup.run_config(cfg), cfg.trials)?;
            write_trajectories(&mut out, "trajectories.csv", &ens)?;
            write_ensemble(&mut out, "ensemble.csv", &ens)?;
            let report = if cfg.experiment == ExperimentKind::CltCompare {
                let report = covariance_report(cfg, &setup)?
                    .ok_or_else(|| LabError::Config("clt_compare needs a covariance report; unset closed_form_only".into()))?;
                write_report(&mut out, "covariance.csv", &report)?;
                let cmp = clt::compare(&report, &ens.checkpoints)?;
                out.write("comparison.csv", &[], Comparison::HEADER, |w| cmp.write_rows(w))?;
                outcome.comparison = Some(cmp);
                Some(report)
            } else {
                None
            };
            let mut s = summarize("base", &ens, report.as_ref());
            s.agents = setup.problem.num_agents();
            outcome.variants.push(s);
        }
        ExperimentKind::SpeedupSweep => {
            let base = base_setup::<T>(cfg)?;
            for &k in &cfg.sweep.factors {
                let setup = base.duplicated(k)?;
                let name = format!("x{k}");
                let ens = run_ensemble(&setup.run_config(cfg), cfg.trials)?;
                write_ensemble(&mut out, &format!("ensemble_{name}.csv"), &ens)?;
                let report = covariance_report(cfg, &setup)?;
                if let Some(r) = &report {
                    write_report(&mut out, &format!("covariance_{name}.csv"), r)?;
                }
                let mut s = summarize(&name, &ens, report.as_ref());
                s.agents = setup.problem.num_agents();
                outcome.variants.push(s);
            }
        }
        ExperimentKind::NetworkIndependence | ExperimentKind::SamplingSweep => {
            let base_groups = cfg.agent_groups();
            for v in &cfg.sweep.variants {
                let groups = v.groups.as_ref().unwrap_or(&base_groups);
                let setup = Setup::<T>::build(
                    cfg,
                    groups,
                    v.pattern.as_ref().unwrap_or(&cfg.pattern),
                    v.schedule.as_ref().unwrap_or(&cfg.schedule),
                )?;
                let ens = run_ensemble(&setup.run_config(cfg), cfg.trials)?;
                write_ensemble(&mut out, &format!("ensemble_{}.csv", v.name), &ens)?;
                let report = covariance_report(cfg, &setup)?;
                if let Some(r) = &report {
                    write_report(&mut out, &format!("covariance_{}.csv", v.name), r)?;
                }
                let mut s = summarize(&v.name, &ens, report.as_ref());
                s.agents = setup.problem.num_agents();
                outcome.variants.push(s);
            }
        }
    }
    if !outcome.variants.is_empty() {
        write_summary(&mut out, &outcome.variants)?;
    }
    outcome.files = out.into_files();
    Ok(outcome)
}

/// Closed-form covariance report of the base configuration.
pub fn analyze(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, LabError> {
    match cfg.precision {
        Precision::F64 => analyze_typed::<f64>(cfg, out_dir),
        Precision::F32 => analyze_typed::<f32>(cfg, out_dir),
    }
}

fn analyze_typed<T: Scalar>(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, LabError> {
    let mut out = open_output(cfg, out_dir)?;
    let setup = base_setup::<T>(cfg)?;
    let report = covariance_report(cfg, &setup)?
        .ok_or_else(|| LabError::Config("analysis needs a covariance report; unset closed_form_only".into()))?;
    write_report(&mut out, "covariance.csv", &report)?;
    let run_cfg = setup.run_config(cfg);
    let comments = vec![
        format!("trace_v={}", report.trace_v.to_f64_lossy()),
        format!("trace_v_prime={}", report.trace_v_prime.to_f64_lossy()),
        format!("mu={}", report.mu.to_f64_lossy()),
        format!("lyapunov_residual={}", report.lyapunov_residual().to_f64_lossy()),
    ];
    out.write("prediction.csv", &comments, "n,gamma,predicted_mse", |w| {
        use std::io::Write;
        for &n in &run_cfg.checkpoints {
            writeln!(w, "{n},{},{}", setup.step.step_size(n), report.predicted_mse(n))?;
        }
        Ok(())
    })?;
    Ok(Outcome { files: out.into_files(), ..Outcome::default() })
}

/// Schedule and contraction diagnostics.
/// Patterns in the config whose `E[WᵀW] − J` is not a contraction. Such runs are
/// allowed but the consensus error will not vanish, so callers should surface them.
pub fn non_contracting_patterns(cfg: &ExperimentConfig, draws: usize) -> Result<Vec<String>, LabError> {
    let count = |groups: &[crate::config::GroupConfig]| groups.iter().map(|g| g.count).sum::<usize>();
    let base_groups = cfg.agent_groups();
    let mut cases = vec![("base".to_string(), &cfg.pattern, count(&base_groups))];
    for v in &cfg.sweep.variants {
        let agents = v.groups.as_deref().map_or(count(&base_groups), count);
        cases.push((v.name.clone(), v.pattern.as_ref().unwrap_or(&cfg.pattern), agents));
    }
    let mut flagged = Vec::new();
    for (name, p, agents) in cases {
        let pattern = crate::build::build_pattern::<f64>(p, agents, cfg.seed)?;
        let report = verify_contraction(&pattern, agents, draws, cfg.seed)?;
        if !report.contracting {
            flagged.push(format!("{name}: ‖E[WᵀW] − J‖ = {:.6}", report.norm));
        }
    }
    Ok(flagged)
}

pub fn diagnose(cfg: &ExperimentConfig, out_dir: &Path, smoothness: u32, draws: usize) -> Result<Outcome, LabError> {
    let mut out = open_output(cfg, out_dir)?;
    let n_agents: usize = cfg.agent_groups().iter().map(|g| g.count).sum();
    let pattern = crate::build::build_pattern::<f64>(&cfg.pattern, n_agents, cfg.seed)?;
    let step = udsgd_core::communication::StepSchedule { gamma_star: cfg.step.gamma_star, a: cfg.step.a };
    let interval = crate::build::build_interval(&cfg.schedule);
    let diag = schedule_diagnostics(&step, &interval, cfg.horizon.max(4), smoothness)?;
    let contraction = verify_contraction(&pattern, n_agents, draws, cfg.seed)?;
    let comments = vec![
        format!("final_ratio={}", diag.final_ratio),
        format!("tail_growth={}", diag.tail_growth),
        format!("sum_flagged={}", diag.sum_flagged),
        format!("ratio_flagged={}", diag.ratio_flagged),
    ];
    out.write("schedule.csv", &comments, "n,eta,eta_sq_partial_sum", |w| {
        use std::io::Write;
        for ((n, e), (_, s)) in diag.eta.iter().zip(&diag.eta_sq_partial_sums) {
            writeln!(w, "{n},{e},{s}")?;
        }
        Ok(())
    })?;
    out.write("contraction.csv", &[], "pattern,agents,draws,norm,contracting", |w| {
        use std::io::Write;
        writeln!(w, "{},{n_agents},{},{},{}", pattern.name(), contraction.draws, contraction.norm, contraction.contracting)
    })?;
    Ok(Outcome { files: out.into_files(), ..Outcome::default() })
}

/// Trial-matched difference of terminal MSE between two variants.
pub fn paired_mse_difference(a: &VariantSummary, b: &VariantSummary) -> Summary {
    let d: Vec<f64> = a.terminal_mse.iter().zip(&b.terminal_mse).map(|(x, y)| x - y).collect();
    Summary::of(&d)
}

pub use engine::Summary as StatSummary;
