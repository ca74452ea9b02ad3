//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use udsgd_core::communication::{check_schedule_compatibility, StepSchedule};
use udsgd_core::graph::GraphKind;
use udsgd_core::problems::{PartitionMode, DEFAULT_KAPPA};
use udsgd_core::sampling::{DEFAULT_SRRW_ALPHA, DEFAULT_SRRW_BETA_EXPONENT};

use crate::error::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SingleRun,
    Ensemble,
    CltCompare,
    SpeedupSweep,
    NetworkIndependence,
    SamplingSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default = "defaults::horizon")]
    pub horizon: usize,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default)]
    pub checkpoints: CheckpointConfig,
    /// Agent count when a single `sampler` is shared by all agents.
    #[serde(default)]
    pub agents: Option<usize>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub groups: Vec<GroupConfig>,
    #[serde(default)]
    pub pattern: PatternConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub step: StepConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

mod defaults {
    pub fn horizon() -> usize {
        10_000
    }
    pub fn trials() -> usize {
        20
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn one_usize() -> usize {
        1
    }
    pub fn checkpoint_count() -> usize {
        20
    }
    pub fn points_per_agent() -> usize {
        20
    }
    pub fn kappa() -> f64 {
        super::DEFAULT_KAPPA
    }
    pub fn alpha() -> f64 {
        super::DEFAULT_SRRW_ALPHA
    }
    pub fn beta_exponent() -> f64 {
        super::DEFAULT_SRRW_BETA_EXPONENT
    }
    pub fn mc_horizon() -> usize {
        100_000
    }
    pub fn mc_trials() -> usize {
        100
    }
    pub fn factors() -> Vec<usize> {
        vec![1, 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Geometric,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointConfig {
    #[serde(default = "defaults::checkpoint_count")]
    pub count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Default for CheckpointConfig {
    fn default() -> Self {
        Self { count: defaults::checkpoint_count(), spacing: Spacing::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// `½(θ − c)ᵀA(θ − c)` with Gaussian centers per agent.
    Quadratic {
        a: Vec<Vec<f64>>,
        #[serde(default = "defaults::points_per_agent")]
        points_per_agent: usize,
        #[serde(default = "defaults::one")]
        center_scale: f64,
        /// Spread of the per-agent center means.
        #[serde(default)]
        heterogeneity: f64,
    },
    Logistic {
        #[serde(default = "defaults::kappa")]
        kappa: f64,
        data: DataConfig,
        #[serde(default = "even")]
        partition: PartitionMode,
    },
}

fn even() -> PartitionMode {
    PartitionMode::Even
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        n_points: usize,
        dim: usize,
        #[serde(default = "defaults::one")]
        separation: f64,
        /// Defaults to a stream derived from the master seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Libsvm {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    Path,
    Ring,
    Complete,
    RandomConnected { edge_prob: f64 },
    /// Whitespace-separated edge list.
    File { path: PathBuf },
}

impl GraphConfig {
    pub fn generated(&self) -> Option<GraphKind> {
        match *self {
            Self::Path => Some(GraphKind::Path),
            Self::Ring => Some(GraphKind::Ring),
            Self::Complete => Some(GraphKind::Complete),
            Self::RandomConnected { edge_prob } => Some(GraphKind::RandomConnected { edge_prob }),
            Self::File { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerName {
    Iid,
    Shuffle,
    Srw,
    Nbrw,
    Srrw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerName,
    /// SRRW repellence strength.
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    /// SRRW measure step exponent `b` in `β_n = (n+1)^{-b}`.
    #[serde(default = "defaults::beta_exponent")]
    pub beta_exponent: f64,
    /// Graph over the agent's local data points; required for walks.
    #[serde(default)]
    pub graph: Option<GraphConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub count: usize,
    pub sampler: SamplerConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    #[default]
    FullAverage,
    PartialParticipation,
    DecentralizedFixed,
    DecentralizedTimeVarying,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    #[serde(default)]
    pub kind: PatternKind,
    #[serde(default)]
    pub participation: Option<usize>,
    /// Agent graph for `decentralized_fixed` (Metropolis–Hastings weights).
    #[serde(default)]
    pub topology: Option<GraphConfig>,
    /// Agent graphs for `decentralized_time_varying`, one chosen per aggregation.
    #[serde(default)]
    pub topologies: Vec<GraphConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Constant,
    LogGrowth,
    LoglogGrowth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub kind: ScheduleKind,
    #[serde(rename = "K", default = "defaults::one_usize")]
    pub k: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { kind: ScheduleKind::Constant, k: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    #[serde(default = "defaults::one")]
    pub gamma_star: f64,
    #[serde(default = "defaults::one")]
    pub a: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { gamma_star: 1.0, a: 1.0 }
    }
}

/// Settings for the Monte-Carlo `U_i` used by samplers without an explicit kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "defaults::mc_horizon")]
    pub mc_horizon: usize,
    #[serde(default = "defaults::mc_trials")]
    pub mc_trials: usize,
    /// Skip closed-form reports for samplers that would need Monte Carlo.
    #[serde(default)]
    pub closed_form_only: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { mc_horizon: defaults::mc_horizon(), mc_trials: defaults::mc_trials(), closed_form_only: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Agent duplication factors for `speedup_sweep`.
    #[serde(default = "defaults::factors")]
    pub factors: Vec<usize>,
    /// Named overrides for `sampling_sweep` and `network_independence`.
    #[serde(default)]
    pub variants: Vec<VariantConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { factors: defaults::factors(), variants: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub name: String,
    #[serde(default)]
    pub groups: Option<Vec<GroupConfig>>,
    #[serde(default)]
    pub pattern: Option<PatternConfig>,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
}

/// Parses and validates a config. Paths are left relative; see [`ExperimentConfig::resolve_paths`].
pub fn parse_config(text: &str) -> Result<ExperimentConfig, LabError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, LabError> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")))?;
    Ok(cfg)
}

fn config_err(key: &str, message: impl std::fmt::Display) -> LabError {
    LabError::Config(format!("{key}: {message}"))
}

impl ExperimentConfig {
    /// Agent groups in agent-id order.
    pub fn agent_groups(&self) -> Vec<GroupConfig> {
        if !self.groups.is_empty() {
            return self.groups.clone();
        }
        match (&self.sampler, self.agents) {
            (Some(s), Some(n)) => vec![GroupConfig { count: n, sampler: s.clone() }],
            _ => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), LabError> {
        if self.horizon == 0 {
            return Err(config_err("horizon", "must be positive"));
        }
        if self.checkpoints.count == 0 {
            return Err(config_err("checkpoints.count", "must be positive"));
        }
        let ensemble = !matches!(self.experiment, ExperimentKind::SingleRun);
        if ensemble && self.trials < 2 {
            return Err(config_err("trials", "ensembles need at least 2 trials"));
        }
        match (&self.sampler, self.groups.is_empty(), self.agents) {
            (Some(_), true, Some(n)) if n > 0 => {}
            (Some(_), true, _) => return Err(config_err("agents", "a positive agent count is required with `sampler`")),
            (Some(_), false, _) => return Err(config_err("sampler", "give either `sampler` or `groups`, not both")),
            (None, true, _) => return Err(config_err("sampler", "missing; give `sampler` + `agents` or `groups`")),
            (None, false, Some(_)) => return Err(config_err("agents", "derived from `groups`; remove it")),
            (None, false, None) => {}
        }
        validate_groups("groups", &self.agent_groups())?;
        validate_pattern("pattern", &self.pattern)?;
        let step = StepSchedule { gamma_star: self.step.gamma_star, a: self.step.a };
        step.validate().map_err(|e| config_err("step", e.to_string()))?;
        validate_schedule("schedule", &self.schedule, &step)?;
        match &self.problem {
            ProblemConfig::Quadratic { a, points_per_agent, center_scale, heterogeneity } => {
                let d = a.len();
                if d == 0 || a.iter().any(|r| r.len() != d) {
                    return Err(config_err("problem.a", "must be a non-empty square matrix"));
                }
                if *points_per_agent == 0 {
                    return Err(config_err("problem.points_per_agent", "must be positive"));
                }
                if !(center_scale.is_finite() && *center_scale >= 0.0 && heterogeneity.is_finite() && *heterogeneity >= 0.0)
                {
                    return Err(config_err("problem", "center_scale and heterogeneity must be finite and >= 0"));
                }
            }
            ProblemConfig::Logistic { kappa, data, .. } => {
                if !(*kappa > 0.0) {
                    return Err(config_err("problem.kappa", "must be positive for a strongly convex objective"));
                }
                if let DataConfig::Synthetic { n_points, dim, .. } = data {
                    if *n_points == 0 || *dim == 0 {
                        return Err(config_err("problem.data", "n_points and dim must be positive"));
                    }
                }
            }
        }
        match self.experiment {
            ExperimentKind::SpeedupSweep if self.sweep.factors.is_empty() || self.sweep.factors.contains(&0) => {
                return Err(config_err("sweep.factors", "must be a non-empty list of positive integers"));
            }
            ExperimentKind::SamplingSweep | ExperimentKind::NetworkIndependence if self.sweep.variants.is_empty() => {
                return Err(config_err("sweep.variants", "at least one variant is required"));
            }
            _ => {}
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, v) in self.sweep.variants.iter().enumerate() {
            let key = format!("sweep.variants[{i}]");
            if v.name.is_empty() || !v.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(config_err(&key, "name must be non-empty [A-Za-z0-9_-]"));
            }
            if !names.insert(&v.name) {
                return Err(config_err(&key, format!("duplicate name {:?}", v.name)));
            }
            if let Some(g) = &v.groups {
                validate_groups(&format!("{key}.groups"), g)?;
            }
            if let Some(p) = &v.pattern {
                validate_pattern(&format!("{key}.pattern"), p)?;
            }
            if let Some(sc) = &v.schedule {
                validate_schedule(&format!("{key}.schedule"), sc, &step)?;
            }
        }
        Ok(())
    }

    /// Makes file paths absolute against `base` and checks they exist.
    pub fn resolve_paths(&mut self, base: &Path) -> Result<(), LabError> {
        let fix = |p: &mut PathBuf| -> Result<(), LabError> {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if p.is_file() {
                Ok(())
            } else {
                Err(LabError::Config(format!("referenced file {} does not exist", p.display())))
            }
        };
        let fix_graph = |g: &mut GraphConfig| match g {
            GraphConfig::File { path } => fix(path),
            _ => Ok(()),
        };
        if let ProblemConfig::Logistic { data: DataConfig::Libsvm { path }, .. } = &mut self.problem {
            fix(path)?;
        }
        let mut graphs: Vec<&mut GraphConfig> = Vec::new();
        let mut groups: Vec<&mut GroupConfig> = self.groups.iter_mut().collect();
        let mut patterns: Vec<&mut PatternConfig> = vec![&mut self.pattern];
        if let Some(s) = &mut self.sampler {
            graphs.extend(s.graph.as_mut());
        }
        for v in &mut self.sweep.variants {
            groups.extend(v.groups.iter_mut().flatten());
            patterns.extend(v.pattern.as_mut());
        }
        for g in groups {
            graphs.extend(g.sampler.graph.as_mut());
        }
        for p in patterns {
            graphs.extend(p.topology.as_mut());
            graphs.extend(p.topologies.iter_mut());
        }
        graphs.into_iter().try_for_each(fix_graph)
    }

    /// Fully defaulted TOML rendering.
    pub fn resolved_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }
}

fn validate_schedule(key: &str, schedule: &ScheduleConfig, step: &StepSchedule) -> Result<(), LabError> {
    if schedule.k == 0 {
        return Err(config_err(&format!("{key}.K"), "must be >= 1"));
    }
    check_schedule_compatibility(step, &crate::build::build_interval(schedule))
        .map_err(|e| config_err(&format!("{key}.kind"), e.to_string()))
}

fn validate_groups(key: &str, groups: &[GroupConfig]) -> Result<(), LabError> {
    if groups.is_empty() {
        return Err(config_err(key, "at least one agent is required"));
    }
    for (i, g) in groups.iter().enumerate() {
        let key = format!("{key}[{i}]");
        if g.count == 0 {
            return Err(config_err(&format!("{key}.count"), "must be positive"));
        }
        let s = &g.sampler;
        let walk = matches!(s.kind, SamplerName::Srw | SamplerName::Nbrw | SamplerName::Srrw);
        if walk && s.graph.is_none() {
            return Err(config_err(&format!("{key}.sampler.graph"), "required for walk samplers"));
        }
        if s.kind == SamplerName::Srrw && !(s.alpha >= 0.0 && s.beta_exponent > 0.5 && s.beta_exponent <= 1.0) {
            return Err(config_err(&format!("{key}.sampler"), "SRRW needs alpha >= 0 and beta_exponent in (0.5, 1]"));
        }
    }
    Ok(())
}

fn validate_pattern(key: &str, p: &PatternConfig) -> Result<(), LabError> {
    match p.kind {
        PatternKind::PartialParticipation if p.participation.is_none_or(|s| s == 0) => {
            Err(config_err(&format!("{key}.participation"), "a positive participation size is required"))
        }
        PatternKind::DecentralizedFixed if p.topology.is_none() => {
            Err(config_err(&format!("{key}.topology"), "required for decentralized_fixed"))
        }
        PatternKind::DecentralizedTimeVarying if p.topologies.is_empty() => {
            Err(config_err(&format!("{key}.topologies"), "at least one topology is required"))
        }
        _ => Ok(()),
    }
}
