//! Rollout wrapper pairing every environment step with two stylings of the
//! same underlying state: the reference observation and the φ-sampled one.
//! Keeping both streams in lockstep is what lets the regularized losses
//! compare features without touching the MDP itself.

use std::sync::Arc;

use rand::Rng;

use crate::env::{
    render, CartpoleEnv, CartpolePhysics, FrameStack, GridAction, GridworldEnv, MdpSpec,
    RenderConfig,
};
use crate::error::Result;
use crate::randomize::{ObsState, Observer, Randomizer};

#[derive(Debug, Clone)]
pub struct SimStep {
    pub obs_ref: Arc<Vec<f64>>,
    pub obs_sampled: Arc<Vec<f64>>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub enum Sim {
    Grid(GridSim),
    Cartpole(CartpoleSim),
}

#[derive(Debug, Clone)]
pub struct GridSim {
    env: GridworldEnv,
    observer: Observer,
}

#[derive(Debug, Clone)]
pub struct CartpoleSim {
    env: CartpoleEnv,
    render_cfg: RenderConfig,
    k: usize,
    stack_ref: FrameStack,
    stack_sampled: FrameStack,
}

impl Sim {
    pub fn grid() -> Self {
        Sim::Grid(GridSim {
            env: GridworldEnv::new(),
            observer: Observer::grid(),
        })
    }

    pub fn cartpole(physics: CartpolePhysics, render_cfg: RenderConfig, k: usize) -> Self {
        Sim::Cartpole(CartpoleSim {
            env: CartpoleEnv::new(physics),
            render_cfg,
            k,
            stack_ref: FrameStack::new(k),
            stack_sampled: FrameStack::new(k),
        })
    }

    pub fn spec(&self) -> MdpSpec {
        match self {
            Sim::Grid(_) => GridworldEnv::spec(),
            Sim::Cartpole(s) => s.env.spec(),
        }
    }

    pub fn action_count(&self) -> usize {
        self.spec().action_count
    }

    pub fn obs_len(&self) -> usize {
        match self {
            Sim::Grid(_) => 3,
            Sim::Cartpole(s) => 3 * s.k * s.render_cfg.width * s.render_cfg.height,
        }
    }

    /// `(height, width, stack_depth)` for image observations, `None` for vectors.
    pub fn frame_geometry(&self) -> Option<(usize, usize, usize)> {
        match self {
            Sim::Grid(_) => None,
            Sim::Cartpole(s) => Some((s.render_cfg.height, s.render_cfg.width, s.k)),
        }
    }

    /// The environment's current physical state (for re-styling it under
    /// other domains).
    pub fn obs_state(&self) -> ObsState {
        match self {
            Sim::Grid(s) => ObsState::Grid(s.env.state()),
            Sim::Cartpole(s) => ObsState::Cartpole(s.env.state()),
        }
    }

    /// The observer that styles single states (used for sup-distance).
    pub fn observer(&self) -> Observer {
        match self {
            Sim::Grid(s) => s.observer.clone(),
            Sim::Cartpole(s) => Observer::Cartpole {
                physics: *s.env.physics(),
                render: s.render_cfg,
                k: s.k,
            },
        }
    }

    pub fn reset<R: Rng>(
        &mut self,
        phi_ref: &Randomizer,
        phi_sampled: &Randomizer,
        rng: &mut R,
    ) -> Result<(Arc<Vec<f64>>, Arc<Vec<f64>>)> {
        match self {
            Sim::Grid(s) => {
                let state = ObsState::Grid(s.env.reset());
                let obs_ref = Arc::new(s.observer.apply(phi_ref, &state)?);
                let obs_sampled = if phi_sampled == phi_ref {
                    Arc::clone(&obs_ref)
                } else {
                    Arc::new(s.observer.apply(phi_sampled, &state)?)
                };
                Ok((obs_ref, obs_sampled))
            }
            Sim::Cartpole(s) => {
                let states = s.env.reset(rng);
                let physics = *s.env.physics();
                let same = phi_sampled == phi_ref;
                for (i, st) in states.iter().enumerate() {
                    let frame_ref = render(st, phi_ref.rgb()?, &physics, &s.render_cfg)?;
                    let frame_sampled = if same {
                        None
                    } else {
                        Some(render(st, phi_sampled.rgb()?, &physics, &s.render_cfg)?)
                    };
                    if i == 0 {
                        s.stack_ref.reset_with(frame_ref);
                        s.stack_sampled
                            .reset_with(frame_sampled.unwrap_or_else(|| {
                                // Placeholder; never read while φ's coincide.
                                crate::env::Raster {
                                    width: s.render_cfg.width,
                                    height: s.render_cfg.height,
                                    pixels: vec![0.0; 3 * s.render_cfg.width * s.render_cfg.height],
                                }
                            }));
                    } else {
                        s.stack_ref.push(frame_ref)?;
                        if let Some(f) = frame_sampled {
                            s.stack_sampled.push(f)?;
                        }
                    }
                }
                let obs_ref = Arc::new(s.stack_ref.as_input());
                let obs_sampled = if same {
                    Arc::clone(&obs_ref)
                } else {
                    Arc::new(s.stack_sampled.as_input())
                };
                Ok((obs_ref, obs_sampled))
            }
        }
    }

    pub fn step(
        &mut self,
        action: usize,
        phi_ref: &Randomizer,
        phi_sampled: &Randomizer,
    ) -> Result<SimStep> {
        match self {
            Sim::Grid(s) => {
                let (state, reward, done) = s.env.step(GridAction::from_index(action)?)?;
                let state = ObsState::Grid(state);
                let obs_ref = Arc::new(s.observer.apply(phi_ref, &state)?);
                let obs_sampled = if phi_sampled == phi_ref {
                    Arc::clone(&obs_ref)
                } else {
                    Arc::new(s.observer.apply(phi_sampled, &state)?)
                };
                Ok(SimStep { obs_ref, obs_sampled, reward, done })
            }
            Sim::Cartpole(s) => {
                let (state, reward, done) = s.env.step(action)?;
                let physics = *s.env.physics();
                let same = phi_sampled == phi_ref;
                let frame_ref = render(&state, phi_ref.rgb()?, &physics, &s.render_cfg)?;
                s.stack_ref.push(frame_ref)?;
                let obs_ref = Arc::new(s.stack_ref.as_input());
                let obs_sampled = if same {
                    Arc::clone(&obs_ref)
                } else {
                    let f = render(&state, phi_sampled.rgb()?, &physics, &s.render_cfg)?;
                    s.stack_sampled.push(f)?;
                    Arc::new(s.stack_sampled.as_input())
                };
                Ok(SimStep { obs_ref, obs_sampled, reward, done })
            }
        }
    }
}
