//! Regularized deep Q-learning: ε-greedy acting on the regime's branch,
//! six-tuple replay, one TD + penalty gradient step per `update_every`
//! environment steps after warmup.

use std::sync::Arc;
use std::time::Instant;

use crate::error::Result;
use crate::net::{adam_step, sgd_step, AdamParams, AdamState, NetworkParams};
use crate::rngutil::stream_rng;
use crate::sim::Sim;

use super::losses::{dqn_loss, DqnLossCfg};
use super::reinforce::regime_branches;
use super::replay::{ReplayBuffer, Transition};
use super::{act, ActMode, AgentConfig, EpisodeRecord, MetricsRecord, OptimizerKind, Regime, TrainOutput};

pub fn train_dqn(cfg: &AgentConfig, sim: &mut Sim, seed: u64) -> Result<TrainOutput> {
    cfg.validate()?;
    let mut init_rng = stream_rng(seed, "init");
    let mut env_rng = stream_rng(seed, "env");
    let mut domain_rng = stream_rng(seed, "domain");
    let mut explore_rng = stream_rng(seed, "explore");
    let mut replay_rng = stream_rng(seed, "replay");
    let mut dropout_rng = stream_rng(seed, "dropout");

    let geometry = sim.frame_geometry();
    let mut params = super::build_net(
        &cfg.net,
        sim.obs_len(),
        geometry.map_or(1, |(_, _, k)| k),
        geometry.map(|(h, w, _)| (h, w)),
        sim.action_count(),
        false,
        &mut init_rng,
    )?;
    let mut target: Option<NetworkParams> = cfg.target_sync.map(|_| params.clone());
    let mut adam = matches!(cfg.optimizer, OptimizerKind::Adam)
        .then(|| AdamState::new(&params));
    let adam_hp = AdamParams {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };

    let gamma = cfg.gamma.unwrap_or_else(|| sim.spec().gamma);
    let (branch, reg) = regime_branches(cfg.regime);
    let loss_cfg = DqnLossCfg {
        gamma,
        lambda: cfg.lambda,
        branch,
        reg,
        stop_grad_ref: cfg.stop_gradient_on_reference,
        double_q: cfg.double_q,
        dropout: cfg.dropout,
    };
    let phi_ref = cfg.space.reference;

    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let mut metrics = MetricsRecord::default();
    let mut global_step = 0usize;
    let mut update_count = 0usize;

    for episode in 0..cfg.episodes {
        let started = Instant::now();
        let phi_sampled = if cfg.regime == Regime::Normal {
            phi_ref
        } else {
            cfg.space.sample(&mut domain_rng)
        };
        let (mut obs_ref, mut obs_sampled) = sim.reset(&phi_ref, &phi_sampled, &mut env_rng)?;

        let ep_epsilon = cfg.epsilon.value(global_step);
        let mut ep_return = 0.0;
        let (mut rl_sum, mut reg_sum, mut ep_updates) = (0.0, 0.0, 0usize);

        loop {
            let eps = cfg.epsilon.value(global_step);
            let acting = if cfg.regime.acts_on_sampled() {
                &obs_sampled
            } else {
                &obs_ref
            };
            let a = act(&params, acting, ActMode::Epsilon(eps), &mut explore_rng)?;
            let s = sim.step(a, &phi_ref, &phi_sampled)?;
            buffer.push(Transition {
                obs_ref: Arc::clone(&obs_ref),
                obs_sampled: Arc::clone(&obs_sampled),
                action: a,
                reward: s.reward,
                next_obs_ref: Arc::clone(&s.obs_ref),
                next_obs_sampled: Arc::clone(&s.obs_sampled),
                terminal: s.done,
            });
            obs_ref = s.obs_ref;
            obs_sampled = s.obs_sampled;
            global_step += 1;
            ep_return += s.reward;

            if global_step >= cfg.warmup_steps
                && buffer.len() >= cfg.batch_size
                && global_step % cfg.update_every == 0
            {
                let batch = buffer.sample(cfg.batch_size, &mut replay_rng)?;
                let target_net = target.as_ref().unwrap_or(&params);
                let (parts, grad) =
                    dqn_loss(&params, target_net, &batch, &loss_cfg, &mut dropout_rng)?;
                match cfg.optimizer {
                    OptimizerKind::Sgd => {
                        sgd_step(&mut params, &grad, cfg.lr, cfg.weight_decay)?
                    }
                    OptimizerKind::Adam => adam_step(
                        adam.as_mut().expect("adam state"),
                        &mut params,
                        &grad,
                        &adam_hp,
                    )?,
                }
                update_count += 1;
                rl_sum += parts.rl;
                reg_sum += parts.reg;
                ep_updates += 1;
                if let (Some(sync), Some(t)) = (cfg.target_sync, target.as_mut()) {
                    if update_count % sync == 0 {
                        *t = params.clone();
                    }
                }
            }

            if s.done {
                break;
            }
        }

        let denom = ep_updates.max(1) as f64;
        metrics.episodes.push(EpisodeRecord {
            episode,
            ret: ep_return,
            rl_loss: rl_sum / denom,
            reg_loss: reg_sum / denom,
            epsilon: ep_epsilon,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    Ok(TrainOutput {
        params,
        metrics,
        adam,
        env_steps: global_step,
    })
}
