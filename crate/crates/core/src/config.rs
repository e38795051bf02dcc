//! Experiment configuration.
//!
//! A config file is a sparse TOML overlay: `name`, `master_seed`, and
//! `environment` are required, everything else falls back to per-environment
//! defaults. Parsing resolves the overlay into a concrete [`ExperimentConfig`]
//! whose serialized form reparses to an identical value, so the resolved copy
//! written next to the results is itself a valid config. Unknown keys anywhere
//! in the tree are errors.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{
    AgentConfig, EpsilonSchedule, NetSpec, OptimizerKind, OutputRegTarget, Regime, TrainerKind,
};
use crate::analysis::{gray_diagonal, rb_plane, xi_domains, EvalMode};
use crate::env::{CartpolePhysics, RenderConfig};
use crate::error::{Error, Result};
use crate::randomize::{RandomizationSpace, Randomizer, SpaceKind};
use crate::rngutil::fnv1a64;
use crate::sim::Sim;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartpoleEnvConfig {
    pub width: usize,
    pub height: usize,
    pub frame_stack: usize,
}

impl Default for CartpoleEnvConfig {
    fn default() -> Self {
        CartpoleEnvConfig { width: 32, height: 32, frame_stack: 3 }
    }
}

/// Which MDP to run. In TOML either `environment = "gridworld"` or a
/// `[environment.cartpole]` table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentConfig {
    Gridworld,
    Cartpole(CartpoleEnvConfig),
}

impl EnvironmentConfig {
    pub fn cartpole_default() -> Self {
        EnvironmentConfig::Cartpole(CartpoleEnvConfig::default())
    }

    pub fn is_grid(&self) -> bool {
        matches!(self, EnvironmentConfig::Gridworld)
    }

    pub fn label(&self) -> &'static str {
        match self {
            EnvironmentConfig::Gridworld => "gridworld",
            EnvironmentConfig::Cartpole(_) => "cartpole",
        }
    }

    pub fn sim(&self) -> Sim {
        match self {
            EnvironmentConfig::Gridworld => Sim::grid(),
            EnvironmentConfig::Cartpole(c) => Sim::cartpole(
                CartpolePhysics::default(),
                RenderConfig { width: c.width, height: c.height, ..RenderConfig::default() },
                c.frame_stack,
            ),
        }
    }

    fn default_agent(&self, trainer: TrainerKind) -> AgentConfig {
        match self {
            EnvironmentConfig::Gridworld => AgentConfig::grid_default(trainer),
            EnvironmentConfig::Cartpole(_) => {
                let mut a = AgentConfig::cartpole_default();
                a.trainer = trainer;
                a
            }
        }
    }

    fn default_analysis(&self) -> AnalysisConfig {
        match self {
            EnvironmentConfig::Gridworld => AnalysisConfig {
                seeds: 5,
                lambdas: Vec::new(),
                regimes: Vec::new(),
                eval_episodes: 20,
                eval_mode: EvalMode::Greedy,
                grids: vec![GridPreset::XiPair],
                k_discretization: None,
            },
            EnvironmentConfig::Cartpole(_) => AnalysisConfig {
                seeds: 3,
                lambdas: Vec::new(),
                regimes: Vec::new(),
                eval_episodes: 5,
                eval_mode: EvalMode::Greedy,
                grids: vec![GridPreset::RbPlane],
                k_discretization: None,
            },
        }
    }
}

/// Named evaluation-domain grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPreset {
    /// The two gridworld tags, ξ = +5 and ξ = −5.
    XiPair,
    /// 5×5 over red × blue with green held at 1.
    RbPlane,
    /// Eleven grays from black to white.
    GrayDiagonal,
}

impl GridPreset {
    pub fn name(&self) -> &'static str {
        match self {
            GridPreset::XiPair => "xi_pair",
            GridPreset::RbPlane => "rb_plane",
            GridPreset::GrayDiagonal => "gray_diagonal",
        }
    }

    pub fn domains(&self) -> Vec<Randomizer> {
        match self {
            GridPreset::XiPair => xi_domains(),
            GridPreset::RbPlane => rb_plane(5),
            GridPreset::GrayDiagonal => gray_diagonal(11),
        }
    }

    fn is_grid(&self) -> bool {
        matches!(self, GridPreset::XiPair)
    }
}

/// Sweep and evaluation settings consumed by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Independent training seeds per (regime, λ) cell.
    pub seeds: usize,
    /// Penalty weights to sweep; empty means just the agent's λ.
    pub lambdas: Vec<f64>,
    /// Regimes to sweep; empty means just the agent's regime.
    pub regimes: Vec<Regime>,
    pub eval_episodes: usize,
    pub eval_mode: EvalMode,
    pub grids: Vec<GridPreset>,
    /// Per-channel resolution for the discretized Lipschitz estimate on
    /// rendered environments (where exact enumeration is impossible).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_discretization: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub environment: EnvironmentConfig,
    pub agent: AgentConfig,
    pub analysis: AnalysisConfig,
}

impl ExperimentConfig {
    /// A fully-defaulted config for the given environment, as if parsing a
    /// file containing only the three required keys.
    pub fn defaults(name: &str, master_seed: u64, environment: EnvironmentConfig) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            master_seed,
            out_dir: PathBuf::from("runs").join(name),
            agent: environment.default_agent(TrainerKind::Dqn),
            analysis: environment.default_analysis(),
            environment,
        }
    }

    pub fn sim(&self) -> Sim {
        self.environment.sim()
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// FNV-1a over the resolved TOML text; recorded in every artifact so
    /// results can be traced back to the exact configuration. The output
    /// directory is excluded: where a run lands is not part of what it is.
    pub fn config_hash(&self) -> Result<u64> {
        let mut keyed = self.clone();
        keyed.out_dir = PathBuf::new();
        Ok(fnv1a64(keyed.to_toml_string()?.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::validation(
                "name must be nonempty and use only [A-Za-z0-9_-] (it names directories)",
            ));
        }
        self.agent.validate()?;
        match (&self.environment, &self.agent.space.kind) {
            (EnvironmentConfig::Gridworld, SpaceKind::XiSet(_)) => {}
            (EnvironmentConfig::Cartpole(_), SpaceKind::RgbBox { .. })
            | (EnvironmentConfig::Cartpole(_), SpaceKind::RgbUnion(_)) => {}
            _ => {
                return Err(Error::validation(format!(
                    "agent.space does not fit the environment: {} randomizes {}",
                    self.environment.label(),
                    match self.agent.space.kind {
                        SpaceKind::XiSet(_) => "observation tags (xi_set)",
                        _ => "background colors (rgb_*)",
                    },
                )));
            }
        }
        if matches!(self.agent.net, NetSpec::Conv { .. }) && self.environment.is_grid() {
            return Err(Error::validation(
                "agent.net: conv features need a rendered environment",
            ));
        }
        if self.analysis.seeds == 0 {
            return Err(Error::validation("analysis.seeds must be positive"));
        }
        if self.analysis.eval_episodes == 0 {
            return Err(Error::validation("analysis.eval_episodes must be positive"));
        }
        for &l in &self.analysis.lambdas {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::validation("analysis.lambdas must be finite and nonnegative"));
            }
        }
        for g in &self.analysis.grids {
            if g.is_grid() != self.environment.is_grid() {
                return Err(Error::validation(format!(
                    "analysis.grids: {} does not apply to {}",
                    g.name(),
                    self.environment.label(),
                )));
            }
        }
        match self.analysis.k_discretization {
            Some(n) if n < 2 => {
                return Err(Error::validation("analysis.k_discretization needs at least 2 levels"))
            }
            Some(_) if self.environment.is_grid() => {
                return Err(Error::validation(
                    "analysis.k_discretization only applies to rendered environments \
                     (the gridworld constant is computed exactly)",
                ))
            }
            _ => {}
        }
        Ok(())
    }
}

/// The sparse on-disk form: every agent/analysis key optional.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: String,
    master_seed: u64,
    out_dir: Option<PathBuf>,
    environment: EnvironmentConfig,
    #[serde(default)]
    agent: RawAgent,
    #[serde(default)]
    analysis: RawAnalysis,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawAgent {
    regime: Option<Regime>,
    lambda: Option<f64>,
    trainer: Option<TrainerKind>,
    space: Option<SpaceChoice>,
    net: Option<NetSpec>,
    episodes: Option<usize>,
    gamma: Option<f64>,
    lr: Option<f64>,
    weight_decay: Option<f64>,
    optimizer: Option<OptimizerKind>,
    batch_size: Option<usize>,
    replay_capacity: Option<usize>,
    warmup_steps: Option<usize>,
    update_every: Option<usize>,
    /// 0 disables the target network.
    target_sync: Option<usize>,
    double_q: Option<bool>,
    epsilon: Option<EpsilonSchedule>,
    traj_per_update: Option<usize>,
    dropout: Option<f64>,
    stop_gradient_on_reference: Option<bool>,
    output_reg_target: Option<OutputRegTarget>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawAnalysis {
    seeds: Option<usize>,
    lambdas: Option<Vec<f64>>,
    regimes: Option<Vec<Regime>>,
    eval_episodes: Option<usize>,
    eval_mode: Option<EvalMode>,
    grids: Option<Vec<GridPreset>>,
    k_discretization: Option<usize>,
}

/// Either the name of a built-in space or a full space table.
#[derive(Deserialize)]
#[serde(untagged)]
enum SpaceChoice {
    Preset(String),
    Full(RandomizationSpace),
}

impl SpaceChoice {
    fn resolve(self) -> Result<RandomizationSpace> {
        match self {
            SpaceChoice::Full(s) => Ok(s),
            SpaceChoice::Preset(name) => match name.as_str() {
                "rgb_small" => Ok(RandomizationSpace::rgb_small()),
                "rgb_big" => Ok(RandomizationSpace::rgb_big()),
                "rgb_split" => Ok(RandomizationSpace::rgb_split()),
                "xi_pair" => Ok(RandomizationSpace::xi_pair()),
                other => Err(Error::validation(format!(
                    "agent.space: unknown preset {other:?} \
                     (expected rgb_small, rgb_big, rgb_split, or xi_pair, or a full table)",
                ))),
            },
        }
    }
}

macro_rules! overlay {
    ($dst:expr, $src:expr, { $($field:ident),* $(,)? }) => {
        $(if let Some(v) = $src.$field {
            $dst.$field = v;
        })*
    };
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig> {
    let trainer = raw.agent.trainer.unwrap_or(TrainerKind::Dqn);
    let mut agent = raw.environment.default_agent(trainer);
    let r = raw.agent;
    overlay!(agent, r, {
        regime, lambda, net, episodes, lr, weight_decay, optimizer, batch_size,
        replay_capacity, warmup_steps, update_every, double_q, epsilon,
        traj_per_update, dropout, stop_gradient_on_reference, output_reg_target,
    });
    if let Some(g) = r.gamma {
        agent.gamma = Some(g);
    }
    if let Some(n) = r.target_sync {
        agent.target_sync = (n > 0).then_some(n);
    }
    if let Some(choice) = r.space {
        agent.space = choice.resolve()?;
    }

    let mut analysis = raw.environment.default_analysis();
    let a = raw.analysis;
    overlay!(analysis, a, { seeds, lambdas, regimes, eval_episodes, eval_mode, grids });
    if a.k_discretization.is_some() {
        analysis.k_discretization = a.k_discretization;
    }

    let cfg = ExperimentConfig {
        out_dir: raw.out_dir.unwrap_or_else(|| PathBuf::from("runs").join(&raw.name)),
        name: raw.name,
        master_seed: raw.master_seed,
        environment: raw.environment,
        agent,
        analysis,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
    resolve(raw)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::validation(format!("config {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Validation(msg) => Error::validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}
