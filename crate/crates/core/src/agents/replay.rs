//! Ring-buffer replay memory storing six-tuple transitions: both stylings of
//! the current and next observations, as the regularized algorithm records
//! them at observation time.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs_ref: Arc<Vec<f64>>,
    pub obs_sampled: Arc<Vec<f64>>,
    pub action: usize,
    pub reward: f64,
    pub next_obs_ref: Arc<Vec<f64>>,
    pub next_obs_sampled: Arc<Vec<f64>>,
    pub terminal: bool,
}

#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    ring: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            ring: Vec::with_capacity(capacity),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.ring.len() < self.capacity {
            self.ring.push(t);
        } else {
            self.ring[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Uniform sample with replacement over current contents.
    pub fn sample<'a, R: Rng>(&'a self, n: usize, rng: &mut R) -> Result<Vec<&'a Transition>> {
        if self.ring.is_empty() {
            return Err(Error::contract("sampling from an empty replay buffer"));
        }
        Ok((0..n)
            .map(|_| &self.ring[rng.random_range(0..self.ring.len())])
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.ring.iter()
    }
}
