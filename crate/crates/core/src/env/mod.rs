//! The two desk-scale MDPs: a 3×3 gridworld and a physics-simulated cartpole
//! with a raster renderer, plus frame stacking.

mod cartpole;
mod gridworld;
mod render;
mod stack;

pub use cartpole::{CartpoleEnv, CartpolePhysics, CartpoleState};
pub use gridworld::{GridAction, GridState, GridworldEnv, FIRE, GOAL, GRID_SIZE, GRID_TIME_LIMIT};
pub use render::{render, render_mask, Raster, RenderConfig, CART_COLOR, POLE_COLOR};
pub use stack::FrameStack;

/// Coarse MDP description used by trainers and the bound analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpSpec {
    pub action_count: usize,
    pub gamma: f64,
    pub time_limit: u32,
    /// Bound on |r(s, a)| over everything the environment can emit.
    pub r_max: f64,
}
