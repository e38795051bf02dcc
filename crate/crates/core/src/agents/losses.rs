//! The regularized losses. Both trainers share the same penalty structure:
//! total = RL loss + λ · mean squared distance between the two stylings'
//! features (or outputs, for the output-regularized variant).

use std::sync::Arc;

use rand::Rng;

use super::reinforce::Trajectory;
use super::replay::Transition;
use super::OutputRegTarget;
use crate::error::{Error, Result};
use crate::net::{softmax_logprob, Gradient, NetworkParams};

/// Which observation stream feeds the RL terms (acting branch).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsBranch {
    Ref,
    Sampled,
}

/// What the invariance penalty binds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegKind {
    None,
    Feature,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub rl: f64,
    pub reg: f64,
}

impl LossParts {
    fn assemble(rl: f64, reg: f64, lambda: f64) -> Self {
        LossParts {
            total: rl + lambda * reg,
            rl,
            reg,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DqnLossCfg {
    pub gamma: f64,
    pub lambda: f64,
    pub branch: ObsBranch,
    pub reg: RegKind,
    pub stop_grad_ref: bool,
    pub double_q: bool,
    pub dropout: f64,
}

impl DqnLossCfg {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::validation(format!("gamma {} outside [0,1]", self.gamma)));
        }
        if self.lambda < 0.0 {
            return Err(Error::validation("lambda must be nonnegative"));
        }
        if self.reg != RegKind::None && self.branch != ObsBranch::Ref {
            return Err(Error::validation(
                "the invariance penalty is defined against the reference branch",
            ));
        }
        Ok(())
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Squared L2 between two equal-length vectors and their difference.
fn squared_distance(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let delta: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let sq = delta.iter().map(|d| d * d).sum();
    (sq, delta)
}

/// One-step TD loss with the invariance penalty, averaged over the batch:
/// mean_j [(y_j − Q(obs_j, a_j))² + λ‖f(obs_ref_j) − f(obs_sampled_j)‖²]
/// with y_j = r_j for terminal transitions and
/// r_j + γ·max_a′ Q_target(next_obs_j, a′) otherwise.
///
/// With `dropout == 0` the RNG is never touched and the result is a pure
/// function of (params, target_params, batch).
pub fn dqn_loss<R: Rng>(
    params: &NetworkParams,
    target_params: &NetworkParams,
    batch: &[&Transition],
    cfg: &DqnLossCfg,
    rng: &mut R,
) -> Result<(LossParts, Gradient)> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::contract("dqn_loss over an empty batch"));
    }
    let n_actions = params.output_dim();
    let mut grad = Gradient::zeros_like(params);
    let (mut rl_sum, mut reg_sum) = (0.0, 0.0);

    for t in batch {
        if t.action >= n_actions {
            return Err(Error::contract(format!(
                "action {} out of range for {} outputs",
                t.action, n_actions
            )));
        }
        let (obs_t, obs_t1) = match cfg.branch {
            ObsBranch::Ref => (&t.obs_ref, &t.next_obs_ref),
            ObsBranch::Sampled => (&t.obs_sampled, &t.next_obs_sampled),
        };

        let y = if t.terminal {
            t.reward
        } else {
            let target_trace = target_params.forward(obs_t1)?;
            let q_next = if cfg.double_q {
                let online = params.forward(obs_t1)?;
                target_trace.output()[argmax(online.output())]
            } else {
                target_trace.output()[argmax(target_trace.output())]
            };
            t.reward + cfg.gamma * q_next
        };

        let trace = params.forward_train(obs_t, cfg.dropout, rng)?;
        let td = trace.output()[t.action] - y;
        rl_sum += td * td;

        let mut out_cot = vec![0.0; n_actions];
        out_cot[t.action] = 2.0 * td;
        let mut feat_cot: Option<Vec<f64>> = None;

        // λ = 0 skips the penalty branch entirely, making the regularized
        // regime bit-equivalent to the normal one there.
        if cfg.reg != RegKind::None
            && cfg.lambda > 0.0
            && !Arc::ptr_eq(&t.obs_ref, &t.obs_sampled)
        {
            let samp_trace = params.forward_train(&t.obs_sampled, cfg.dropout, rng)?;
            let lam2 = 2.0 * cfg.lambda;
            match cfg.reg {
                RegKind::Feature => {
                    let (sq, delta) =
                        squared_distance(params.feature(&trace), params.feature(&samp_trace));
                    reg_sum += sq;
                    if !cfg.stop_grad_ref {
                        feat_cot = Some(delta.iter().map(|d| lam2 * d).collect());
                    }
                    let samp_feat: Vec<f64> = delta.iter().map(|d| -lam2 * d).collect();
                    let zero_out = vec![0.0; n_actions];
                    grad.add_assign(&params.backward(
                        &samp_trace,
                        &zero_out,
                        Some(&samp_feat),
                        None,
                    )?);
                }
                RegKind::Output => {
                    let (sq, delta) = squared_distance(trace.output(), samp_trace.output());
                    reg_sum += sq;
                    if !cfg.stop_grad_ref {
                        for (c, d) in out_cot.iter_mut().zip(&delta) {
                            *c += lam2 * d;
                        }
                    }
                    let samp_out: Vec<f64> = delta.iter().map(|d| -lam2 * d).collect();
                    grad.add_assign(&params.backward(&samp_trace, &samp_out, None, None)?);
                }
                RegKind::None => unreachable!(),
            }
        }

        grad.add_assign(&params.backward(&trace, &out_cot, feat_cot.as_deref(), None)?);
    }

    let b = batch.len() as f64;
    grad.scale(1.0 / b);
    Ok((
        LossParts::assemble(rl_sum / b, reg_sum / b, cfg.lambda),
        grad,
    ))
}

/// Suffix-discounted returns: R_t = Σ_{t′≥t} γ^{t′−t} r_{t′}.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct PgLossCfg {
    pub gamma: f64,
    pub lambda: f64,
    pub branch: ObsBranch,
    pub reg: RegKind,
    pub stop_grad_ref: bool,
    pub output_target: OutputRegTarget,
    pub dropout: f64,
}

/// REINFORCE-with-baseline loss over one trajectory:
/// Σ_t [ −Â_t·log π(a_t|obs_t) + (R_t − b(obs_t))² + λ‖Δf_t‖² ]
/// where Â_t = R_t − b(obs_t) is treated as a constant in the policy term
/// and the baseline head learns only through the squared term.
pub fn pg_loss<R: Rng>(
    params: &NetworkParams,
    traj: &Trajectory,
    cfg: &PgLossCfg,
    rng: &mut R,
) -> Result<(LossParts, Gradient)> {
    if !(0.0..=1.0).contains(&cfg.gamma) {
        return Err(Error::validation(format!("gamma {} outside [0,1]", cfg.gamma)));
    }
    if cfg.lambda < 0.0 {
        return Err(Error::validation("lambda must be nonnegative"));
    }
    if cfg.reg != RegKind::None && cfg.branch != ObsBranch::Ref {
        return Err(Error::validation(
            "the invariance penalty is defined against the reference branch",
        ));
    }
    if traj.steps.is_empty() {
        return Err(Error::contract("pg_loss over an empty trajectory"));
    }
    if params.baseline_head.is_none() {
        return Err(Error::validation("pg_loss requires a baseline head"));
    }

    let n_actions = params.output_dim();
    let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
    let returns = compute_returns(&rewards, cfg.gamma);

    let mut grad = Gradient::zeros_like(params);
    let (mut rl_sum, mut reg_sum) = (0.0, 0.0);

    for (step, &ret) in traj.steps.iter().zip(&returns) {
        if step.action >= n_actions {
            return Err(Error::contract(format!(
                "action {} out of range for {} outputs",
                step.action, n_actions
            )));
        }
        let obs = match cfg.branch {
            ObsBranch::Ref => &step.obs_ref,
            ObsBranch::Sampled => &step.obs_sampled,
        };
        let trace = params.forward_train(obs, cfg.dropout, rng)?;
        let (probs, log_probs) = softmax_logprob(trace.output())?;
        let baseline = trace.baseline_out().expect("baseline head present");
        let adv = ret - baseline;

        rl_sum += -adv * log_probs[step.action] + adv * adv;

        // d(−Â·log π[a])/d logit_k = Â·(p_k − δ_{ka})
        let mut out_cot: Vec<f64> = probs.iter().map(|&p| adv * p).collect();
        out_cot[step.action] -= adv;
        let baseline_cot = -2.0 * adv;
        let mut feat_cot: Option<Vec<f64>> = None;

        if cfg.reg != RegKind::None
            && cfg.lambda > 0.0
            && !Arc::ptr_eq(&step.obs_ref, &step.obs_sampled)
        {
            let samp_trace = params.forward_train(&step.obs_sampled, cfg.dropout, rng)?;
            let lam2 = 2.0 * cfg.lambda;
            match cfg.reg {
                RegKind::Feature => {
                    let (sq, delta) =
                        squared_distance(params.feature(&trace), params.feature(&samp_trace));
                    reg_sum += sq;
                    if !cfg.stop_grad_ref {
                        feat_cot = Some(delta.iter().map(|d| lam2 * d).collect());
                    }
                    let samp_feat: Vec<f64> = delta.iter().map(|d| -lam2 * d).collect();
                    let zero_out = vec![0.0; n_actions];
                    grad.add_assign(&params.backward(
                        &samp_trace,
                        &zero_out,
                        Some(&samp_feat),
                        None,
                    )?);
                }
                RegKind::Output => match cfg.output_target {
                    OutputRegTarget::Logits => {
                        let (sq, delta) =
                            squared_distance(trace.output(), samp_trace.output());
                        reg_sum += sq;
                        if !cfg.stop_grad_ref {
                            for (c, d) in out_cot.iter_mut().zip(&delta) {
                                *c += lam2 * d;
                            }
                        }
                        let samp_out: Vec<f64> = delta.iter().map(|d| -lam2 * d).collect();
                        grad.add_assign(&params.backward(&samp_trace, &samp_out, None, None)?);
                    }
                    OutputRegTarget::Probs => {
                        let (samp_probs, _) = softmax_logprob(samp_trace.output())?;
                        let (sq, delta) = squared_distance(&probs, &samp_probs);
                        reg_sum += sq;
                        if !cfg.stop_grad_ref {
                            let up: Vec<f64> = delta.iter().map(|d| lam2 * d).collect();
                            for (c, j) in out_cot.iter_mut().zip(softmax_vjp(&probs, &up)) {
                                *c += j;
                            }
                        }
                        let up: Vec<f64> = delta.iter().map(|d| -lam2 * d).collect();
                        let samp_out = softmax_vjp(&samp_probs, &up);
                        grad.add_assign(&params.backward(&samp_trace, &samp_out, None, None)?);
                    }
                },
                RegKind::None => unreachable!(),
            }
        }

        grad.add_assign(&params.backward(
            &trace,
            &out_cot,
            feat_cot.as_deref(),
            Some(baseline_cot),
        )?);
    }

    Ok((LossParts::assemble(rl_sum, reg_sum, cfg.lambda), grad))
}

/// Pullback of the softmax: given y = softmax(z) and upstream g = dL/dy,
/// returns dL/dz = y ⊙ (g − ⟨y, g⟩).
fn softmax_vjp(probs: &[f64], upstream: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(upstream).map(|(p, g)| p * g).sum();
    probs
        .iter()
        .zip(upstream)
        .map(|(p, g)| p * (g - dot))
        .collect()
}
