//! Randomization maps φ and the spaces they are drawn from: background
//! coloring for rasters, the ξ tag for the gridworld, and the sup-distance
//! ‖φ₁ − φ₂‖∞ that the robustness bound is stated in.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{render, CartpolePhysics, CartpoleState, GridState, RenderConfig};
use crate::error::{Error, Result};

/// A single randomization map. Applying one never touches the underlying
/// MDP (state, reward, termination); it only restyles what the agent sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Randomizer {
    BackgroundColor([f64; 3]),
    XiTag(f64),
}

impl Randomizer {
    pub fn rgb(&self) -> Result<[f64; 3]> {
        match self {
            Randomizer::BackgroundColor(c) => Ok(*c),
            Randomizer::XiTag(_) => Err(Error::contract("expected a background-color randomizer")),
        }
    }

    pub fn xi(&self) -> Result<f64> {
        match self {
            Randomizer::XiTag(v) => Ok(*v),
            Randomizer::BackgroundColor(_) => Err(Error::contract("expected a xi-tag randomizer")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceKind {
    RgbBox { lo: [f64; 3], hi: [f64; 3] },
    RgbUnion(Vec<([f64; 3], [f64; 3])>),
    XiSet(Vec<f64>),
}

/// A sampleable set of randomizers together with its reference element
/// (the "clean" styling the regularized agent acts under).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationSpace {
    pub kind: SpaceKind,
    pub reference: Randomizer,
}

fn box_contains(lo: &[f64; 3], hi: &[f64; 3], c: &[f64; 3]) -> bool {
    (0..3).all(|i| lo[i] <= c[i] && c[i] <= hi[i])
}

fn box_volume(lo: &[f64; 3], hi: &[f64; 3]) -> f64 {
    (0..3).map(|i| hi[i] - lo[i]).product()
}

impl RandomizationSpace {
    /// The box [0.5,1]³ — one eighth of the RGB cube, white inside.
    pub fn rgb_small() -> Self {
        RandomizationSpace {
            kind: SpaceKind::RgbBox {
                lo: [0.5, 0.5, 0.5],
                hi: [1.0, 1.0, 1.0],
            },
            reference: Randomizer::BackgroundColor([1.0, 1.0, 1.0]),
        }
    }

    /// Half the RGB cube: r ∈ [0.5,1], g and b free. Excludes dark grays.
    pub fn rgb_big() -> Self {
        RandomizationSpace {
            kind: SpaceKind::RgbBox {
                lo: [0.5, 0.0, 0.0],
                hi: [1.0, 1.0, 1.0],
            },
            reference: Randomizer::BackgroundColor([1.0, 1.0, 1.0]),
        }
    }

    /// Union of the darker and lighter corners: [0,0.2]³ ∪ [0.8,1]³.
    pub fn rgb_split() -> Self {
        RandomizationSpace {
            kind: SpaceKind::RgbUnion(vec![
                ([0.0, 0.0, 0.0], [0.2, 0.2, 0.2]),
                ([0.8, 0.8, 0.8], [1.0, 1.0, 1.0]),
            ]),
            reference: Randomizer::BackgroundColor([1.0, 1.0, 1.0]),
        }
    }

    /// The gridworld tag set {+5, −5} with +5 as the reference.
    pub fn xi_pair() -> Self {
        RandomizationSpace {
            kind: SpaceKind::XiSet(vec![5.0, -5.0]),
            reference: Randomizer::XiTag(5.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            SpaceKind::RgbBox { lo, hi } => {
                if (0..3).any(|i| lo[i] > hi[i]) {
                    return Err(Error::validation(format!("rgb box {lo:?}..{hi:?} inverted")));
                }
                if [lo, hi]
                    .iter()
                    .any(|c| c.iter().any(|v| !(0.0..=1.0).contains(v)))
                {
                    return Err(Error::validation("rgb box outside the unit cube"));
                }
            }
            SpaceKind::RgbUnion(boxes) => {
                if boxes.is_empty() {
                    return Err(Error::validation("empty rgb union"));
                }
                for (lo, hi) in boxes {
                    if (0..3).any(|i| lo[i] > hi[i]) {
                        return Err(Error::validation(format!("rgb box {lo:?}..{hi:?} inverted")));
                    }
                }
            }
            SpaceKind::XiSet(vals) => {
                if vals.is_empty() {
                    return Err(Error::validation("empty xi set"));
                }
            }
        }
        if !self.contains(&self.reference) {
            return Err(Error::validation(
                "reference randomizer lies outside its space",
            ));
        }
        Ok(())
    }

    pub fn contains(&self, phi: &Randomizer) -> bool {
        match (&self.kind, phi) {
            (SpaceKind::RgbBox { lo, hi }, Randomizer::BackgroundColor(c)) => {
                box_contains(lo, hi, c)
            }
            (SpaceKind::RgbUnion(boxes), Randomizer::BackgroundColor(c)) => {
                boxes.iter().any(|(lo, hi)| box_contains(lo, hi, c))
            }
            (SpaceKind::XiSet(vals), Randomizer::XiTag(v)) => vals.contains(v),
            _ => false,
        }
    }

    /// Uniform draw: per-channel uniform over a box, box chosen by volume
    /// within a union, uniform over a finite ξ set.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Randomizer {
        match &self.kind {
            SpaceKind::RgbBox { lo, hi } => {
                Randomizer::BackgroundColor(sample_box(lo, hi, rng))
            }
            SpaceKind::RgbUnion(boxes) => {
                let volumes: Vec<f64> = boxes.iter().map(|(lo, hi)| box_volume(lo, hi)).collect();
                let total: f64 = volumes.iter().sum();
                let idx = if total > 0.0 {
                    let mut u = rng.random::<f64>() * total;
                    let mut pick = boxes.len() - 1;
                    for (i, v) in volumes.iter().enumerate() {
                        if u < *v {
                            pick = i;
                            break;
                        }
                        u -= v;
                    }
                    pick
                } else {
                    rng.random_range(0..boxes.len())
                };
                let (lo, hi) = &boxes[idx];
                Randomizer::BackgroundColor(sample_box(lo, hi, rng))
            }
            SpaceKind::XiSet(vals) => Randomizer::XiTag(vals[rng.random_range(0..vals.len())]),
        }
    }
}

fn sample_box<R: Rng>(lo: &[f64; 3], hi: &[f64; 3], rng: &mut R) -> [f64; 3] {
    let mut c = [0.0; 3];
    for i in 0..3 {
        c[i] = lo[i] + (hi[i] - lo[i]) * rng.random::<f64>();
    }
    c
}

/// Norm choice over flattened observation vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMetric {
    #[default]
    L2,
    MaxNorm,
}

impl ObservationMetric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            ObservationMetric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            ObservationMetric::MaxNorm => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Environment state, as seen by an observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObsState {
    Grid(GridState),
    Cartpole(CartpoleState),
}

/// Turns (randomizer, state) into the flattened observation vector the
/// network consumes.
#[derive(Debug, Clone, PartialEq)]
pub enum Observer {
    /// Gridworld observation (x, y, ξ·xi_scale). The scale defaults to 1
    /// (the tag is fed raw).
    Grid { xi_scale: f64 },
    /// Rendered cartpole frames stacked k deep. Applied to a single state
    /// the frame is replicated k times, exactly like the reset seeding.
    Cartpole {
        physics: CartpolePhysics,
        render: RenderConfig,
        k: usize,
    },
}

impl Observer {
    pub fn grid() -> Self {
        Observer::Grid { xi_scale: 1.0 }
    }

    pub fn obs_len(&self) -> usize {
        match self {
            Observer::Grid { .. } => 3,
            Observer::Cartpole { render, k, .. } => 3 * k * render.width * render.height,
        }
    }

    pub fn apply(&self, phi: &Randomizer, state: &ObsState) -> Result<Vec<f64>> {
        match (self, state) {
            (Observer::Grid { xi_scale }, ObsState::Grid(s)) => {
                let xi = phi.xi()?;
                Ok(vec![s.x as f64, s.y as f64, xi * xi_scale])
            }
            (Observer::Cartpole { physics, render: cfg, k }, ObsState::Cartpole(s)) => {
                let frame = render(s, phi.rgb()?, physics, cfg)?;
                let mut stack = crate::env::FrameStack::new(*k);
                stack.reset_with(frame);
                Ok(stack.as_input())
            }
            _ => Err(Error::contract("observer and state families do not match")),
        }
    }
}

/// sup over the state sample of metric(apply(φ₁,s), apply(φ₂,s)). Exact when
/// the sample covers the full (finite) state set.
pub fn sup_distance(
    phi1: &Randomizer,
    phi2: &Randomizer,
    states: &[ObsState],
    observer: &Observer,
    metric: ObservationMetric,
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::contract("sup_distance over an empty state sample"));
    }
    let mut sup = 0.0f64;
    for s in states {
        let a = observer.apply(phi1, s)?;
        let b = observer.apply(phi2, s)?;
        sup = sup.max(metric.distance(&a, &b));
    }
    Ok(sup)
}

/// All nine gridworld positions (the clock is not observed).
pub fn grid_state_sample() -> Vec<ObsState> {
    let mut v = Vec::with_capacity(9);
    for x in 0..3 {
        for y in 0..3 {
            v.push(ObsState::Grid(GridState { x, y, t: 0 }));
        }
    }
    v
}
