//! Agent regimes and the two trainers: regularized DQN and regularized
//! REINFORCE with a baseline, plus the output-space regularization variant.

mod dqn;
mod losses;
mod reinforce;
mod replay;

pub use dqn::train_dqn;
pub use losses::{
    compute_returns, dqn_loss, pg_loss, DqnLossCfg, LossParts, ObsBranch, PgLossCfg, RegKind,
};
pub use reinforce::{train_reinforce, TrajStep, Trajectory};
pub use replay::{ReplayBuffer, Transition};

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{softmax_logprob, AdamState, NetworkParams};
use crate::randomize::RandomizationSpace;

/// How the agent is trained with respect to visual randomization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Reference styling only; no randomization, no penalty.
    Normal,
    /// Domain randomization: a fresh φ per episode, the agent acts on and
    /// learns from the restyled observations.
    Randomized,
    /// Acts on reference observations; feature-invariance penalty ties the
    /// features of the sampled styling to them.
    Regularized,
    /// Same as regularized but the penalty binds the network's output
    /// vector instead of the feature layer.
    OutputRegularized,
}

impl Regime {
    /// Which observation stream the RL terms (acting, TD, policy) consume.
    pub fn acts_on_sampled(self) -> bool {
        matches!(self, Regime::Randomized)
    }

    pub fn penalized(self) -> bool {
        matches!(self, Regime::Regularized | Regime::OutputRegularized)
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::Normal => "normal",
            Regime::Randomized => "randomized",
            Regime::Regularized => "regularized",
            Regime::OutputRegularized => "output_regularized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    Dqn,
    Reinforce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Where the output-regularized penalty lives for the policy-gradient
/// trainer: pre-softmax logits (default) or probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputRegTarget {
    #[default]
    Logits,
    Probs,
}

/// Network architecture, resolved against the observation length at build
/// time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NetSpec {
    Mlp { hidden: Vec<usize> },
    /// Conv stages as (filters, kernel, stride) over stacked frames, then a
    /// dense feature layer.
    Conv {
        convs: Vec<(usize, usize, usize)>,
        feature_dim: usize,
    },
}

impl NetSpec {
    pub fn grid_default() -> Self {
        NetSpec::Mlp { hidden: vec![32, 32] }
    }

    pub fn cartpole_default() -> Self {
        NetSpec::Conv {
            convs: vec![(8, 5, 2), (8, 3, 2)],
            feature_dim: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, step: usize) -> f64 {
        if step >= self.decay_steps || self.decay_steps == 0 {
            self.end
        } else {
            self.start + (self.end - self.start) * step as f64 / self.decay_steps as f64
        }
    }
}

fn ser_target_sync<S: serde::Serializer>(
    v: &Option<usize>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(v.unwrap_or(0) as u64)
}

fn de_target_sync<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<usize>, D::Error> {
    let n = usize::deserialize(d)?;
    Ok((n > 0).then_some(n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub regime: Regime,
    pub lambda: f64,
    pub trainer: TrainerKind,
    pub space: RandomizationSpace,
    pub net: NetSpec,
    pub episodes: usize,
    /// Discount; `None` uses the environment's canonical value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub lr: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub warmup_steps: usize,
    /// One gradient step every this many environment steps.
    pub update_every: usize,
    /// Sync a frozen target network every N steps; `None` computes targets
    /// with the online parameters, following the algorithm as written.
    /// Serialized as 0 when disabled so the resolved config round-trips.
    #[serde(default, serialize_with = "ser_target_sync", deserialize_with = "de_target_sync")]
    pub target_sync: Option<usize>,
    pub double_q: bool,
    pub epsilon: EpsilonSchedule,
    /// Trajectories collected per policy-gradient update.
    pub traj_per_update: usize,
    pub dropout: f64,
    /// Treat the reference features as constant inside the penalty.
    pub stop_gradient_on_reference: bool,
    pub output_reg_target: OutputRegTarget,
}

impl AgentConfig {
    /// Sane gridworld defaults; callers override regime/λ/trainer per cell.
    /// The policy-gradient trainer needs more episodes to climb out of the
    /// fire-diving local optimum, but its episodes are cheap.
    pub fn grid_default(trainer: TrainerKind) -> Self {
        AgentConfig {
            regime: Regime::Normal,
            lambda: 0.0,
            trainer,
            space: RandomizationSpace::xi_pair(),
            net: NetSpec::grid_default(),
            episodes: match trainer {
                TrainerKind::Dqn => 300,
                TrainerKind::Reinforce => 1000,
            },
            gamma: None,
            lr: 0.01,
            weight_decay: 0.0,
            optimizer: OptimizerKind::Adam,
            batch_size: 32,
            replay_capacity: 2000,
            warmup_steps: 200,
            update_every: 1,
            target_sync: Some(100),
            double_q: false,
            epsilon: EpsilonSchedule { start: 1.0, end: 0.01, decay_steps: 500 },
            traj_per_update: 5,
            dropout: 0.0,
            stop_gradient_on_reference: false,
            output_reg_target: OutputRegTarget::default(),
        }
    }

    pub fn cartpole_default() -> Self {
        AgentConfig {
            regime: Regime::Normal,
            lambda: 0.0,
            trainer: TrainerKind::Dqn,
            space: RandomizationSpace::rgb_big(),
            net: NetSpec::cartpole_default(),
            episodes: 500,
            gamma: None,
            lr: 1e-3,
            weight_decay: 0.0,
            optimizer: OptimizerKind::Adam,
            batch_size: 32,
            replay_capacity: 3000,
            warmup_steps: 1000,
            update_every: 2,
            target_sync: Some(500),
            double_q: false,
            epsilon: EpsilonSchedule { start: 1.0, end: 0.05, decay_steps: 15_000 },
            traj_per_update: 10,
            dropout: 0.0,
            stop_gradient_on_reference: false,
            output_reg_target: OutputRegTarget::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::validation("lambda must be nonnegative"));
        }
        if !self.regime.penalized() && self.lambda != 0.0 {
            return Err(Error::validation(format!(
                "regime {} requires lambda = 0 (got {})",
                self.regime.label(),
                self.lambda
            )));
        }
        // episodes == 0 is legal: a deliberate no-op run
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::validation("replay capacity must fit a batch"));
        }
        if self.update_every == 0 || self.traj_per_update == 0 {
            return Err(Error::validation("update cadence fields must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation("dropout must lie in [0, 1)"));
        }
        for eps in [self.epsilon.start, self.epsilon.end] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::validation("epsilon endpoints must lie in [0, 1]"));
            }
        }
        if let Some(n) = self.target_sync {
            if n == 0 {
                return Err(Error::validation("target_sync period must be positive"));
            }
        }
        self.space.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActMode {
    Greedy,
    Epsilon(f64),
    Sample,
}

/// Action selection. Greedy breaks ties toward the lowest index; sampling
/// draws from the softmax policy.
pub fn act<R: Rng>(
    params: &NetworkParams,
    obs: &[f64],
    mode: ActMode,
    rng: &mut R,
) -> Result<usize> {
    let n = params.output_dim();
    match mode {
        ActMode::Epsilon(eps) => {
            if rng.random::<f64>() < eps {
                Ok(rng.random_range(0..n))
            } else {
                act(params, obs, ActMode::Greedy, rng)
            }
        }
        ActMode::Greedy => {
            let trace = params.forward(obs)?;
            let out = trace.output();
            let mut best = 0;
            for (i, &v) in out.iter().enumerate().skip(1) {
                if v > out[best] {
                    best = i;
                }
            }
            Ok(best)
        }
        ActMode::Sample => {
            let trace = params.forward(obs)?;
            let (probs, _) = softmax_logprob(trace.output())?;
            let u = rng.random::<f64>();
            let mut acc = 0.0;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return Ok(i);
                }
            }
            Ok(n - 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub ret: f64,
    pub rl_loss: f64,
    pub reg_loss: f64,
    pub epsilon: f64,
    pub wall_ms: f64,
}

/// Per-episode training curve. Everything except `wall_ms` is a pure
/// function of (config, seed).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRecord {
    pub episodes: Vec<EpisodeRecord>,
}

impl MetricsRecord {
    pub const CSV_HEADER: &'static str = "episode,return,rl_loss,reg_loss,epsilon,wall_ms";

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for e in &self.episodes {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.episode, e.ret, e.rl_loss, e.reg_loss, e.epsilon, e.wall_ms
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("vec write");
        String::from_utf8(buf).expect("csv is utf8")
    }

    /// Equality of everything reproducible (i.e. ignoring wall-clock).
    pub fn content_equals(&self, other: &MetricsRecord) -> bool {
        self.episodes.len() == other.episodes.len()
            && self.episodes.iter().zip(&other.episodes).all(|(a, b)| {
                a.episode == b.episode
                    && a.ret == b.ret
                    && a.rl_loss == b.rl_loss
                    && a.reg_loss == b.reg_loss
                    && a.epsilon == b.epsilon
            })
    }

    pub fn mean_return_last(&self, n: usize) -> f64 {
        let tail = &self.episodes[self.episodes.len().saturating_sub(n)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().map(|e| e.ret).sum::<f64>() / tail.len() as f64
    }
}

/// What a trainer hands back: final parameters, the curve, and enough state
/// to checkpoint.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: NetworkParams,
    pub metrics: MetricsRecord,
    pub adam: Option<AdamState>,
    pub env_steps: usize,
}

pub(crate) fn build_net<R: Rng>(
    spec: &NetSpec,
    obs_len: usize,
    k: usize,
    frame_hw: Option<(usize, usize)>,
    actions: usize,
    baseline: bool,
    rng: &mut R,
) -> Result<NetworkParams> {
    match spec {
        NetSpec::Mlp { hidden } => crate::net::mlp(
            obs_len,
            hidden,
            actions,
            crate::net::Activation::Tanh,
            &crate::net::MlpOptions { baseline_head: baseline, ..Default::default() },
            rng,
        ),
        NetSpec::Conv { convs, feature_dim } => {
            let (h, w) = frame_hw.ok_or_else(|| {
                Error::validation("conv net requires a raster environment")
            })?;
            let specs: Vec<crate::net::ConvLayerSpec> = convs
                .iter()
                .map(|&(filters, kernel, stride)| crate::net::ConvLayerSpec {
                    filters,
                    kernel,
                    stride,
                })
                .collect();
            crate::net::conv_net(h, w, 3 * k, &specs, *feature_dim, actions, baseline, rng)
        }
    }
}
