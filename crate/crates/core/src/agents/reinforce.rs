//! REINFORCE with a learned baseline, regularized. Each trajectory carries
//! exactly one sampled φ; acting happens on the branch the regime dictates.

use std::sync::Arc;
use std::time::Instant;

use crate::error::Result;
use crate::net::{adam_step, sgd_step, AdamParams, AdamState, Gradient};
use crate::randomize::Randomizer;
use crate::rngutil::stream_rng;
use crate::sim::Sim;

use super::losses::{pg_loss, ObsBranch, PgLossCfg, RegKind};
use super::{act, ActMode, AgentConfig, EpisodeRecord, MetricsRecord, OptimizerKind, Regime, TrainOutput};

#[derive(Debug, Clone)]
pub struct TrajStep {
    pub obs_ref: Arc<Vec<f64>>,
    pub obs_sampled: Arc<Vec<f64>>,
    pub action: usize,
    pub reward: f64,
}

/// One episode's worth of paired observations plus the φ that styled the
/// sampled branch throughout.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
    pub phi_sampled: Randomizer,
}

pub(super) fn regime_branches(regime: Regime) -> (ObsBranch, RegKind) {
    match regime {
        Regime::Normal => (ObsBranch::Ref, RegKind::None),
        Regime::Randomized => (ObsBranch::Sampled, RegKind::None),
        Regime::Regularized => (ObsBranch::Ref, RegKind::Feature),
        Regime::OutputRegularized => (ObsBranch::Ref, RegKind::Output),
    }
}

pub fn train_reinforce(cfg: &AgentConfig, sim: &mut Sim, seed: u64) -> Result<TrainOutput> {
    cfg.validate()?;
    let mut init_rng = stream_rng(seed, "init");
    let mut env_rng = stream_rng(seed, "env");
    let mut domain_rng = stream_rng(seed, "domain");
    let mut explore_rng = stream_rng(seed, "explore");
    let mut dropout_rng = stream_rng(seed, "dropout");

    let geometry = sim.frame_geometry();
    let mut params = super::build_net(
        &cfg.net,
        sim.obs_len(),
        geometry.map_or(1, |(_, _, k)| k),
        geometry.map(|(h, w, _)| (h, w)),
        sim.action_count(),
        true,
        &mut init_rng,
    )?;
    let mut adam = matches!(cfg.optimizer, OptimizerKind::Adam)
        .then(|| AdamState::new(&params));
    let adam_hp = AdamParams {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };

    let gamma = cfg.gamma.unwrap_or_else(|| sim.spec().gamma);
    let (branch, reg) = regime_branches(cfg.regime);
    let loss_cfg = PgLossCfg {
        gamma,
        lambda: cfg.lambda,
        branch,
        reg,
        stop_grad_ref: cfg.stop_gradient_on_reference,
        output_target: cfg.output_reg_target,
        dropout: cfg.dropout,
    };
    let phi_ref = cfg.space.reference;

    let mut metrics = MetricsRecord::default();
    let mut env_steps = 0usize;
    let mut episode = 0usize;

    while episode < cfg.episodes {
        let batch = cfg.traj_per_update.min(cfg.episodes - episode);
        let mut batch_grad = Gradient::zeros_like(&params);
        for _ in 0..batch {
            let started = Instant::now();
            let phi_sampled = if cfg.regime == Regime::Normal {
                phi_ref
            } else {
                cfg.space.sample(&mut domain_rng)
            };

            let (mut obs_ref, mut obs_sampled) =
                sim.reset(&phi_ref, &phi_sampled, &mut env_rng)?;
            let mut steps = Vec::new();
            let mut ep_return = 0.0;
            loop {
                let acting = if cfg.regime.acts_on_sampled() {
                    &obs_sampled
                } else {
                    &obs_ref
                };
                let a = act(&params, acting, ActMode::Sample, &mut explore_rng)?;
                let s = sim.step(a, &phi_ref, &phi_sampled)?;
                steps.push(TrajStep {
                    obs_ref: Arc::clone(&obs_ref),
                    obs_sampled: Arc::clone(&obs_sampled),
                    action: a,
                    reward: s.reward,
                });
                ep_return += s.reward;
                env_steps += 1;
                obs_ref = s.obs_ref;
                obs_sampled = s.obs_sampled;
                if s.done {
                    break;
                }
            }

            let traj = Trajectory { steps, phi_sampled };
            let (parts, grad) = pg_loss(&params, &traj, &loss_cfg, &mut dropout_rng)?;
            batch_grad.add_assign(&grad);
            metrics.episodes.push(EpisodeRecord {
                episode,
                ret: ep_return,
                rl_loss: parts.rl,
                reg_loss: parts.reg,
                epsilon: 0.0,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            episode += 1;
        }

        batch_grad.scale(1.0 / batch as f64);
        match cfg.optimizer {
            OptimizerKind::Sgd => sgd_step(&mut params, &batch_grad, cfg.lr, cfg.weight_decay)?,
            OptimizerKind::Adam => {
                adam_step(adam.as_mut().expect("adam state"), &mut params, &batch_grad, &adam_hp)?
            }
        }
    }

    Ok(TrainOutput {
        params,
        metrics,
        adam,
        env_steps,
    })
}
