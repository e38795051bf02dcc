//! 3×3 gridworld: start bottom-left, goal top-right, fire in the center.
//! Actions move up or right only, so every goal-reaching path is monotone;
//! exactly two of the six such paths avoid the fire, giving two optimal
//! policies.

use super::MdpSpec;
use crate::error::{Error, Result};

pub const GRID_SIZE: u8 = 3;
pub const GRID_TIME_LIMIT: u32 = 10;
pub const GOAL: (u8, u8) = (2, 2);
pub const FIRE: (u8, u8) = (1, 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridState {
    pub x: u8,
    pub y: u8,
    pub t: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Up,
    Right,
}

impl GridAction {
    pub const COUNT: usize = 2;
    pub const ALL: [GridAction; 2] = [GridAction::Up, GridAction::Right];

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(GridAction::Up),
            1 => Ok(GridAction::Right),
            _ => Err(Error::contract(format!("grid action index {i} out of range"))),
        }
    }

    pub fn index(self) -> usize {
        match self {
            GridAction::Up => 0,
            GridAction::Right => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridworldEnv {
    state: GridState,
    done: bool,
}

impl Default for GridworldEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl GridworldEnv {
    pub fn new() -> Self {
        GridworldEnv {
            state: GridState { x: 0, y: 0, t: 0 },
            done: false,
        }
    }

    pub fn spec() -> MdpSpec {
        MdpSpec {
            action_count: GridAction::COUNT,
            gamma: 1.0,
            time_limit: GRID_TIME_LIMIT,
            r_max: 1.0,
        }
    }

    pub fn state(&self) -> GridState {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self) -> GridState {
        self.state = GridState { x: 0, y: 0, t: 0 };
        self.done = false;
        self.state
    }

    /// Pure single-cell dynamics, ignoring the clock: returns
    /// (next position, reward, terminal-by-cell). Shared with the exact DP
    /// evaluation in the analysis code.
    pub fn transition(x: u8, y: u8, action: GridAction) -> ((u8, u8), f64, bool) {
        let (nx, ny) = match action {
            GridAction::Up => (x, y + 1),
            GridAction::Right => (x + 1, y),
        };
        if nx >= GRID_SIZE || ny >= GRID_SIZE {
            // Off the grid: stay put, pay the invalid-move penalty.
            return ((x, y), -1.0, false);
        }
        if (nx, ny) == GOAL {
            ((nx, ny), 1.0, true)
        } else if (nx, ny) == FIRE {
            ((nx, ny), -1.0, true)
        } else {
            ((nx, ny), 0.0, false)
        }
    }

    pub fn step(&mut self, action: GridAction) -> Result<(GridState, f64, bool)> {
        if self.done {
            return Err(Error::contract("grid_step on a finished episode"));
        }
        let ((nx, ny), reward, terminal) = Self::transition(self.state.x, self.state.y, action);
        self.state = GridState {
            x: nx,
            y: ny,
            t: self.state.t + 1,
        };
        self.done = terminal || self.state.t >= GRID_TIME_LIMIT;
        Ok((self.state, reward, self.done))
    }
}
