//! Testbed for training visual-domain-randomized RL agents with a
//! feature-invariance penalty, plus the analysis instruments (total-variation
//! distance, policy Lipschitz constants, return-gap bounds) used to study them.
//!
//! The crate is organized around six pieces:
//!
//! - [`net`] — a minimal feedforward network library (dense + small conv
//!   layers) with exact reverse-mode gradients, Adam/SGD, dropout and weight
//!   decay, and a JSON checkpoint format.
//! - [`env`] — two desk-scale environments: a 3x3 gridworld and a
//!   pixel-rendered cartpole, with frame stacking.
//! - [`randomize`] — randomizer maps (background color, xi tag), sampleable
//!   randomization spaces, and the sup-distance machinery between randomizers.
//! - [`agents`] — DQN and REINFORCE-with-baseline trainers in four regimes
//!   (normal, randomized, regularized, output-regularized).
//! - [`analysis`] — TV distance, Lipschitz constants, return-gap bounds,
//!   domain-grid evaluation, value-function spread, feature export.
//! - [`harness`] — config-driven orchestration: seeded multi-cell training,
//!   grid evaluation, bound reports, and canned experiment presets.

pub mod agents;
pub mod analysis;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod net;
pub mod randomize;
pub mod rngutil;
pub mod sim;

pub use error::{Error, Result};
