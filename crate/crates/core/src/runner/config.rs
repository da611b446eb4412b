use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bounding::BoundingFn;
use crate::error::{Error, Result};
use crate::mdp::{build_gridworld, build_random_mdp, GridWorldConfig, TabularMdp};
use crate::soft_ops::RegParams;
use crate::solvers::{NoiseConfig, PsiInit, Scheme, SolverConfig};

/// Bundled presets, by name.
pub const PRESETS: &[(&str, &str)] = &[("gridworld-d1", include_str!("../../presets/gridworld-d1.json"))];

pub fn preset(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset '{}' (known: {})", name, known.join(", ")))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    Gridworld(GridWorldConfig),
    RandomMdp {
        num_states: usize,
        num_actions: usize,
        seed: u64,
        #[serde(default = "default_reward_scale")]
        reward_scale: f64,
        discount: f64,
    },
}

fn default_reward_scale() -> f64 {
    1.0
}

impl EnvironmentConfig {
    pub fn build(&self) -> Result<TabularMdp> {
        match self {
            EnvironmentConfig::Gridworld(cfg) => build_gridworld(cfg),
            EnvironmentConfig::RandomMdp {
                num_states,
                num_actions,
                seed,
                reward_scale,
                discount,
            } => build_random_mdp(*num_states, *num_actions, *seed, *reward_scale, *discount),
        }
    }
}

fn default_identity() -> BoundingFn {
    BoundingFn::Identity
}

fn default_init() -> PsiInit {
    PsiInit::UniformVmax
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub scheme: Scheme,
    pub alpha: f64,
    pub kappa: f64,
    #[serde(default = "default_identity")]
    pub f: BoundingFn,
    #[serde(default = "default_identity")]
    pub g: BoundingFn,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default = "default_init")]
    pub psi_init: PsiInit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceGranularity {
    #[default]
    Summary,
    /// Also writes every `Ψ_k` and policy table.
    Full,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

fn default_directory() -> PathBuf {
    PathBuf::from("regmdp-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default)]
    pub trace_granularity: TraceGranularity,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_directory(),
            formats: default_formats(),
            trace_granularity: TraceGranularity::Summary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Stopping tolerance of the soft-optimal value oracles.
    #[serde(default = "default_oracle_tol")]
    pub oracle: f64,
    /// Slack allowed when flagging bound checks.
    #[serde(default = "default_bound_tol")]
    pub bounds: f64,
}

fn default_oracle_tol() -> f64 {
    1e-12
}

fn default_bound_tol() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            oracle: default_oracle_tol(),
            bounds: default_bound_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    pub runs: Vec<RunSpec>,
    pub seeds: Vec<u64>,
    pub iterations: usize,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub allow_invalid_bounding: bool,
}

impl ExperimentConfig {
    /// Parses JSON text; errors name the offending field path and position.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path.is_empty() || path == "." {
                Error::Config(inner.to_string())
            } else {
                Error::Config(format!("at `{}`: {}", path, inner))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs.is_empty() {
            return Err(Error::Config("`runs` must hold at least one run".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("`seeds` must hold at least one seed".into()));
        }
        let mut seen = HashSet::new();
        for seed in &self.seeds {
            if !seen.insert(*seed) {
                return Err(Error::Config(format!("seed {} listed twice", seed)));
            }
        }
        let mut names = HashSet::new();
        for run in &self.runs {
            if run.name.is_empty() || !run.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return Err(Error::Config(format!(
                    "run name '{}' must be non-empty and use only letters, digits, '-', '_' or '.'",
                    run.name
                )));
            }
            if !names.insert(run.name.as_str()) {
                return Err(Error::Config(format!("run name '{}' is not unique", run.name)));
            }
            self.solver_config(run, 0)
                .and_then(|c| c.validate())
                .map_err(|e| Error::Config(format!("run '{}': {}", run.name, e)))?;
        }
        if !(self.tolerances.oracle > 0.0) || !(self.tolerances.bounds >= 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        self.environment.build().map_err(|e| Error::Config(format!("environment: {}", e)))?;
        Ok(())
    }

    pub fn solver_config(&self, run: &RunSpec, seed: u64) -> Result<SolverConfig> {
        let params = RegParams::new(run.alpha, run.kappa)?;
        let mut cfg = SolverConfig::bal(params, run.f, run.g)
            .with_iterations(self.iterations)
            .with_seed(seed)
            .with_init(run.psi_init.clone());
        cfg.scheme = run.scheme;
        cfg.noise = run.noise;
        cfg.allow_invalid_bounding = self.allow_invalid_bounding;
        Ok(cfg)
    }
}
