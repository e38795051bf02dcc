//! Quantitative instruments for studying trained agents: total-variation
//! distance, the policy Lipschitz constant over a randomization set, the two
//! return-gap bounds, domain-grid evaluation, same-path checks, value spread
//! across domains, joint/marginal TV decompositions, and feature export.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{act, ActMode};
use crate::error::{Error, Result};
use crate::net::{softmax_logprob, NetworkParams};
use crate::randomize::{
    grid_state_sample, ObsState, ObservationMetric, Observer, RandomizationSpace, Randomizer,
    SpaceKind,
};
use crate::rngutil::{fnv1a64, stream_rng};
use crate::sim::Sim;

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::validation("empty distribution"));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation("distribution has negative or non-finite mass"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!("distribution sums to {total}, not 1")));
    }
    Ok(())
}

/// Total variation distance ½ Σ|p_i − q_i| between two finite distributions
/// over the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    check_distribution(p)?;
    check_distribution(q)?;
    if p.len() != q.len() {
        return Err(Error::validation(format!(
            "support sizes differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(tv_unchecked(p, q))
}

fn tv_unchecked(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// How a checkpoint is read as an action distribution: greedy Q-policies are
/// one-hot at the argmax; policy-gradient checkpoints are softmax over logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Greedy,
    Softmax,
}

pub fn action_distribution(
    params: &NetworkParams,
    obs: &[f64],
    kind: PolicyKind,
) -> Result<Vec<f64>> {
    let trace = params.forward(obs)?;
    let out = trace.output();
    match kind {
        PolicyKind::Greedy => {
            let mut best = 0;
            for (i, &v) in out.iter().enumerate().skip(1) {
                if v > out[best] {
                    best = i;
                }
            }
            let mut dist = vec![0.0; out.len()];
            dist[best] = 1.0;
            Ok(dist)
        }
        PolicyKind::Softmax => Ok(softmax_logprob(out)?.0),
    }
}

/// sup over states and randomizer pairs of
/// D_TV(π(·|φ₁(s)) ‖ π(·|φ₂(s))) / metric(φ₁(s), φ₂(s)).
///
/// Exact when `randomizers` and `states` enumerate their sets completely (the
/// gridworld case); a lower estimate of the sup otherwise. Pairs whose two
/// stylings coincide are skipped; if every pair is degenerate the constant is
/// undefined.
pub fn lipschitz_constant(
    params: &NetworkParams,
    kind: PolicyKind,
    observer: &Observer,
    randomizers: &[Randomizer],
    states: &[ObsState],
    metric: ObservationMetric,
) -> Result<f64> {
    if randomizers.len() < 2 {
        return Err(Error::validation("lipschitz constant needs at least two randomizers"));
    }
    if states.is_empty() {
        return Err(Error::validation("lipschitz constant over an empty state set"));
    }
    let mut best: Option<f64> = None;
    for s in states {
        let styled: Vec<(Vec<f64>, Vec<f64>)> = randomizers
            .iter()
            .map(|phi| {
                let obs = observer.apply(phi, s)?;
                let dist = action_distribution(params, &obs, kind)?;
                Ok((obs, dist))
            })
            .collect::<Result<_>>()?;
        for i in 0..styled.len() {
            for j in i + 1..styled.len() {
                let d = metric.distance(&styled[i].0, &styled[j].0);
                if d == 0.0 {
                    continue;
                }
                let ratio = tv_unchecked(&styled[i].1, &styled[j].1) / d;
                best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
            }
        }
    }
    best.ok_or_else(|| {
        Error::validation("every randomizer pair styles all states identically; the constant is undefined")
    })
}

/// The exact gridworld constant: full enumeration over the nine positions
/// and the ξ = ±5 pair.
pub fn grid_lipschitz(params: &NetworkParams, kind: PolicyKind) -> Result<f64> {
    lipschitz_constant(
        params,
        kind,
        &Observer::grid(),
        &[Randomizer::XiTag(5.0), Randomizer::XiTag(-5.0)],
        &grid_state_sample(),
        ObservationMetric::L2,
    )
}

/// Mean over the nine positions of the TV distance between the action
/// distributions under ξ = +5 and ξ = −5: how much the policy's behavior,
/// not just its features, still depends on the tag.
pub fn grid_mean_policy_tv(params: &NetworkParams, kind: PolicyKind) -> Result<f64> {
    let observer = Observer::grid();
    let states = grid_state_sample();
    let (plus, minus) = (Randomizer::XiTag(5.0), Randomizer::XiTag(-5.0));
    let mut total = 0.0;
    for s in &states {
        let p = action_distribution(params, &observer.apply(&plus, s)?, kind)?;
        let q = action_distribution(params, &observer.apply(&minus, s)?, kind)?;
        total += tv_unchecked(&p, &q);
    }
    Ok(total / states.len() as f64)
}

/// Inputs to the return-gap bounds: the policy constant K, the reward scale,
/// the discount, the styling distance Δ = sup_s |φ₁(s) − φ₂(s)|, and the
/// horizon (`None` sums the series to infinity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub k: f64,
    pub r_max: f64,
    pub gamma: f64,
    pub delta: f64,
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// 2·r_max·Σ_{t<T} γ^t·min(1, (t+1)·K·Δ)
    pub tight: f64,
    /// 2·r_max·K·Δ/(1−γ)²; infinite at γ = 1.
    pub loose: f64,
}

/// Σ_{t≥0} γ^t·min(1, (t+1)c) for γ < 1, in closed form: the unsaturated
/// head is an arithmetico-geometric sum, the saturated tail geometric.
fn saturating_series(gamma: f64, c: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    if c >= 1.0 {
        return 1.0 / (1.0 - gamma);
    }
    // First index with (t+1)·c ≥ 1. Kept in f64: for tiny c it exceeds any
    // usize, but γ^t* underflows to 0 exactly as the math wants.
    let t_star = (1.0 / c).ceil() - 1.0;
    let g = gamma.powf(t_star);
    let one_m = 1.0 - gamma;
    let head = c * ((1.0 - g) / (one_m * one_m) - t_star * g / one_m);
    head + g / one_m
}

pub fn prop1_bounds(b: &BoundInputs) -> Result<Bounds> {
    for (name, v) in [("K", b.k), ("r_max", b.r_max), ("gamma", b.gamma), ("delta", b.delta)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::validation(format!("{name} = {v} must be finite and nonnegative")));
        }
    }
    if b.gamma > 1.0 {
        return Err(Error::validation(format!("gamma {} exceeds 1", b.gamma)));
    }
    let c = b.k * b.delta;
    let tight = match b.horizon {
        Some(t) => (0..t)
            .map(|i| b.gamma.powi(i as i32) * 1.0f64.min((i + 1) as f64 * c))
            .sum::<f64>(),
        None if b.gamma < 1.0 => saturating_series(b.gamma, c),
        None => {
            return Err(Error::validation(
                "an infinite-horizon tight bound needs gamma < 1",
            ))
        }
    };
    let loose = if b.gamma < 1.0 {
        2.0 * b.r_max * c / ((1.0 - b.gamma) * (1.0 - b.gamma))
    } else {
        f64::INFINITY
    };
    Ok(Bounds { tight: 2.0 * b.r_max * tight, loose })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Greedy,
    Sample,
}

impl EvalMode {
    fn act_mode(self) -> ActMode {
        match self {
            EvalMode::Greedy => ActMode::Greedy,
            EvalMode::Sample => ActMode::Sample,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub domain: Randomizer,
    pub mean: f64,
    pub std: f64,
}

/// Mean/std return per domain, every domain evaluated with the same episode
/// budget and acting mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub rows: Vec<EvalRow>,
    pub episodes_per_domain: usize,
    pub mode: EvalMode,
}

impl EvalGrid {
    /// Largest performance difference across the grid: max η − min η.
    pub fn gap(&self) -> f64 {
        let means = self.rows.iter().map(|r| r.mean);
        let max = means.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = means.fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let cols = domain_columns(self.rows.first().map(|r| &r.domain));
        writeln!(w, "{},mean,std,episodes", cols.join(","))?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                domain_values(&r.domain).join(","),
                r.mean,
                r.std,
                self.episodes_per_domain
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("vec write");
        String::from_utf8(buf).expect("csv is utf8")
    }
}

fn domain_columns(domain: Option<&Randomizer>) -> Vec<String> {
    match domain {
        Some(Randomizer::BackgroundColor(_)) => {
            ["r", "g", "b"].iter().map(|s| s.to_string()).collect()
        }
        Some(Randomizer::XiTag(_)) => vec!["xi".to_string()],
        None => vec!["domain".to_string()],
    }
}

fn domain_values(domain: &Randomizer) -> Vec<String> {
    match domain {
        Randomizer::BackgroundColor(c) => c.iter().map(|v| v.to_string()).collect(),
        Randomizer::XiTag(v) => vec![v.to_string()],
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the fixed policy under each domain's styling. Domains evaluate in
/// parallel; per-domain RNG streams keep the result independent of
/// scheduling.
pub fn evaluate_grid(
    params: &NetworkParams,
    sim: &Sim,
    domains: &[Randomizer],
    episodes_per_domain: usize,
    mode: EvalMode,
    seed: u64,
) -> Result<EvalGrid> {
    if domains.is_empty() || episodes_per_domain == 0 {
        return Err(Error::validation("evaluate_grid needs domains and a positive budget"));
    }
    let rows = domains
        .par_iter()
        .enumerate()
        .map(|(i, phi)| {
            let mut sim = sim.clone();
            let mut rng = stream_rng(seed, &format!("eval-{i}"));
            let mut returns = Vec::with_capacity(episodes_per_domain);
            for _ in 0..episodes_per_domain {
                let (mut obs, _) = sim.reset(phi, phi, &mut rng)?;
                let mut ret = 0.0;
                loop {
                    let a = act(params, &obs, mode.act_mode(), &mut rng)?;
                    let s = sim.step(a, phi, phi)?;
                    obs = s.obs_ref;
                    ret += s.reward;
                    if s.done {
                        break;
                    }
                }
                returns.push(ret);
            }
            let (mean, std) = mean_std(&returns);
            Ok(EvalRow { domain: *phi, mean, std })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalGrid { rows, episodes_per_domain, mode })
}

/// The (r, b) plane at g = 1: n×n colors with r and b on a uniform grid.
pub fn rb_plane(n: usize) -> Vec<Randomizer> {
    let axis = linspace(n);
    let mut out = Vec::with_capacity(n * n);
    for &r in &axis {
        for &b in &axis {
            out.push(Randomizer::BackgroundColor([r, 1.0, b]));
        }
    }
    out
}

/// The gray diagonal (x, x, x) with n uniformly spaced points.
pub fn gray_diagonal(n: usize) -> Vec<Randomizer> {
    linspace(n)
        .into_iter()
        .map(|x| Randomizer::BackgroundColor([x, x, x]))
        .collect()
}

/// The gridworld tag pair, reference first.
pub fn xi_domains() -> Vec<Randomizer> {
    vec![Randomizer::XiTag(5.0), Randomizer::XiTag(-5.0)]
}

/// A finite cover of a randomization set: tag sets are returned as-is, color
/// boxes get an `n`-per-channel lattice (unioned box by box). This is the
/// styling set behind value-spread measurements and discretized constant
/// estimates on rendered environments.
pub fn discretize_space(space: &RandomizationSpace, n: usize) -> Result<Vec<Randomizer>> {
    let lattice = |lo: &[f64; 3], hi: &[f64; 3]| -> Vec<Randomizer> {
        let steps: Vec<Vec<f64>> = (0..3)
            .map(|c| linspace(n).into_iter().map(|t| lo[c] + t * (hi[c] - lo[c])).collect())
            .collect();
        let mut out = Vec::with_capacity(n * n * n);
        for &r in &steps[0] {
            for &g in &steps[1] {
                for &b in &steps[2] {
                    out.push(Randomizer::BackgroundColor([r, g, b]));
                }
            }
        }
        out
    };
    match &space.kind {
        SpaceKind::XiSet(tags) => Ok(tags.iter().map(|&t| Randomizer::XiTag(t)).collect()),
        SpaceKind::RgbBox { lo, hi } => {
            if n < 2 {
                return Err(Error::validation("discretization needs at least 2 levels per channel"));
            }
            Ok(lattice(lo, hi))
        }
        SpaceKind::RgbUnion(boxes) => {
            if n < 2 {
                return Err(Error::validation("discretization needs at least 2 levels per channel"));
            }
            Ok(boxes.iter().flat_map(|(lo, hi)| lattice(lo, hi)).collect())
        }
    }
}

fn linspace(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

fn ensure_grid_checkpoint(params: &NetworkParams) -> Result<()> {
    let in_dim = params.layers[0].in_dim();
    if in_dim != 3 {
        return Err(Error::contract(format!(
            "gridworld checkpoints take 3 inputs, this one takes {in_dim}"
        )));
    }
    Ok(())
}

/// Greedy action indices from the start state under the given tag. The
/// gridworld is deterministic, so this is the policy's entire behavior.
pub fn grid_greedy_path(params: &NetworkParams, xi: f64) -> Result<Vec<usize>> {
    ensure_grid_checkpoint(params)?;
    let mut sim = Sim::grid();
    let phi = Randomizer::XiTag(xi);
    let mut rng = stream_rng(0, "greedy-path");
    let (mut obs, _) = sim.reset(&phi, &phi, &mut rng)?;
    let mut path = Vec::new();
    loop {
        let a = act(params, &obs, ActMode::Greedy, &mut rng)?;
        path.push(a);
        let s = sim.step(a, &phi, &phi)?;
        obs = s.obs_ref;
        if s.done {
            return Ok(path);
        }
    }
}

/// Exact η under one tag: a single greedy rollout of the deterministic MDP.
pub fn grid_greedy_return(params: &NetworkParams, xi: f64) -> Result<f64> {
    ensure_grid_checkpoint(params)?;
    let mut sim = Sim::grid();
    let phi = Randomizer::XiTag(xi);
    let mut rng = stream_rng(0, "greedy-return");
    let (mut obs, _) = sim.reset(&phi, &phi, &mut rng)?;
    let mut ret = 0.0;
    loop {
        let a = act(params, &obs, ActMode::Greedy, &mut rng)?;
        let s = sim.step(a, &phi, &phi)?;
        obs = s.obs_ref;
        ret += s.reward;
        if s.done {
            return Ok(ret);
        }
    }
}

/// |η(ξ=+5) − η(ξ=−5)| by exhaustive greedy evaluation.
pub fn grid_return_gap(params: &NetworkParams) -> Result<f64> {
    Ok((grid_greedy_return(params, 5.0)? - grid_greedy_return(params, -5.0)?).abs())
}

/// Fraction of checkpoints whose greedy action sequence from the start is
/// identical under ξ = +5 and ξ = −5.
pub fn same_path_probability(checkpoints: &[NetworkParams]) -> Result<f64> {
    if checkpoints.is_empty() {
        return Err(Error::validation("same_path_probability over no checkpoints"));
    }
    let mut same = 0usize;
    for p in checkpoints {
        if grid_greedy_path(p, 5.0)? == grid_greedy_path(p, -5.0)? {
            same += 1;
        }
    }
    Ok(same as f64 / checkpoints.len() as f64)
}

/// States visited by one greedy rollout under `phi`, starting state included.
pub fn greedy_rollout_states(
    params: &NetworkParams,
    sim: &Sim,
    phi: &Randomizer,
    seed: u64,
) -> Result<Vec<ObsState>> {
    let mut sim = sim.clone();
    let mut rng = stream_rng(seed, "state-collect");
    let (mut obs, _) = sim.reset(phi, phi, &mut rng)?;
    let mut states = vec![sim.obs_state()];
    loop {
        let a = act(params, &obs, ActMode::Greedy, &mut rng)?;
        let s = sim.step(a, phi, phi)?;
        obs = s.obs_ref;
        states.push(sim.obs_state());
        if s.done {
            return Ok(states);
        }
    }
}

fn max_q(params: &NetworkParams, obs: &[f64]) -> Result<f64> {
    let trace = params.forward(obs)?;
    Ok(trace.output().iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Spread of the value estimate across domains: for each state, std of
/// max-Q over the domain stylings; averaged over states.
pub fn value_std(
    params: &NetworkParams,
    observer: &Observer,
    states: &[ObsState],
    domains: &[Randomizer],
) -> Result<f64> {
    if states.is_empty() || domains.is_empty() {
        return Err(Error::validation("value_std needs states and domains"));
    }
    let mut acc = 0.0;
    for s in states {
        let values = domains
            .iter()
            .map(|phi| max_q(params, &observer.apply(phi, s)?))
            .collect::<Result<Vec<_>>>()?;
        acc += mean_std(&values).1;
    }
    Ok(acc / states.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Joint-distribution TV decomposition: D_TV of the joints on the left,
/// D_TV of the x-marginals plus the largest conditional D_TV on the right.
/// Rows carrying zero mass in either joint have no conditional and are
/// skipped in the max.
pub fn lemma1_check(p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<LemmaCheck> {
    validate_joint(p)?;
    validate_joint(q)?;
    if p.len() != q.len() || p[0].len() != q[0].len() {
        return Err(Error::validation("joint supports differ in shape"));
    }
    let lhs = 0.5
        * p.iter()
            .zip(q)
            .map(|(pr, qr)| pr.iter().zip(qr).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .sum::<f64>();

    let px: Vec<f64> = p.iter().map(|row| row.iter().sum()).collect();
    let qx: Vec<f64> = q.iter().map(|row| row.iter().sum()).collect();
    let marginal = tv_unchecked(&px, &qx);

    let mut conditional = 0.0f64;
    for ((pr, qr), (&pm, &qm)) in p.iter().zip(q).zip(px.iter().zip(&qx)) {
        if pm == 0.0 || qm == 0.0 {
            continue;
        }
        let pc: Vec<f64> = pr.iter().map(|v| v / pm).collect();
        let qc: Vec<f64> = qr.iter().map(|v| v / qm).collect();
        conditional = conditional.max(tv_unchecked(&pc, &qc));
    }

    let rhs = marginal + conditional;
    Ok(LemmaCheck { lhs, rhs, holds: lhs <= rhs + 1e-12 })
}

fn validate_joint(p: &[Vec<f64>]) -> Result<()> {
    if p.is_empty() || p[0].is_empty() {
        return Err(Error::validation("empty joint distribution"));
    }
    let width = p[0].len();
    if p.iter().any(|row| row.len() != width) {
        return Err(Error::validation("ragged joint distribution"));
    }
    if p.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation("joint has negative or non-finite mass"));
    }
    let total: f64 = p.iter().flatten().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!("joint sums to {total}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub state_id: usize,
    pub domain: Randomizer,
    pub features: Vec<f64>,
    pub value: f64,
}

/// Feature-layer activations of one checkpoint over states × domains,
/// state-major, all rows tagged with the same checkpoint hash.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDump {
    pub checkpoint_hash: u64,
    pub rows: Vec<FeatureRow>,
}

impl FeatureDump {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let cols = domain_columns(self.rows.first().map(|r| &r.domain));
        let dim = self.rows.first().map_or(0, |r| r.features.len());
        let feats: Vec<String> = (1..=dim).map(|i| format!("f_{i}")).collect();
        writeln!(w, "state_id,{},{},value", cols.join(","), feats.join(","))?;
        for r in &self.rows {
            let feats: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{}",
                r.state_id,
                domain_values(&r.domain).join(","),
                feats.join(","),
                r.value
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("vec write");
        String::from_utf8(buf).expect("csv is utf8")
    }

    /// Mean over states of the mean pairwise L2 distance between the
    /// feature vectors of that state across domains. The quantitative form
    /// of "features collapse across domains".
    pub fn mean_cross_domain_distance(&self) -> f64 {
        let mut by_state: Vec<Vec<&FeatureRow>> = Vec::new();
        for r in &self.rows {
            if r.state_id >= by_state.len() {
                by_state.resize_with(r.state_id + 1, Vec::new);
            }
            by_state[r.state_id].push(r);
        }
        let mut total = 0.0;
        let mut states = 0usize;
        for rows in by_state.iter().filter(|rows| rows.len() >= 2) {
            let mut acc = 0.0;
            let mut pairs = 0usize;
            for i in 0..rows.len() {
                for j in i + 1..rows.len() {
                    acc += ObservationMetric::L2.distance(&rows[i].features, &rows[j].features);
                    pairs += 1;
                }
            }
            total += acc / pairs as f64;
            states += 1;
        }
        if states == 0 {
            0.0
        } else {
            total / states as f64
        }
    }
}

/// Styles every state under every domain, records the feature vector and the
/// max-Q value, and writes the CSV to `path`.
pub fn export_features(
    params: &NetworkParams,
    observer: &Observer,
    states: &[ObsState],
    domains: &[Randomizer],
    path: &Path,
) -> Result<FeatureDump> {
    let dump = feature_dump(params, observer, states, domains)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    dump.write_csv(&mut file)?;
    Ok(dump)
}

pub fn feature_dump(
    params: &NetworkParams,
    observer: &Observer,
    states: &[ObsState],
    domains: &[Randomizer],
) -> Result<FeatureDump> {
    if states.is_empty() || domains.is_empty() {
        return Err(Error::validation("feature dump needs states and domains"));
    }
    if domains.iter().any(|d| {
        std::mem::discriminant(d) != std::mem::discriminant(&domains[0])
    }) {
        return Err(Error::validation("feature dump domains must share one family"));
    }
    let checkpoint_hash = fnv1a64(&serde_json::to_vec(params)?);
    let mut rows = Vec::with_capacity(states.len() * domains.len());
    for (state_id, s) in states.iter().enumerate() {
        for phi in domains {
            let obs = observer.apply(phi, s)?;
            let trace = params.forward(&obs)?;
            rows.push(FeatureRow {
                state_id,
                domain: *phi,
                features: params.feature(&trace).to_vec(),
                value: trace.output().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    Ok(FeatureDump { checkpoint_hash, rows })
}

#[cfg(test)]
mod tests;
