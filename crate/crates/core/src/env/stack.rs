//! Frame stacking: the network sees the k most recent frames concatenated
//! along the channel axis (3k channels), oldest first.

use std::collections::VecDeque;

use super::render::Raster;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FrameStack {
    k: usize,
    frames: VecDeque<Raster>,
}

impl FrameStack {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "frame stack needs k >= 1");
        FrameStack {
            k,
            frames: VecDeque::with_capacity(k),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Seeds the stack at episode start by replicating the first frame.
    pub fn reset_with(&mut self, frame: Raster) {
        self.frames.clear();
        for _ in 0..self.k {
            self.frames.push_back(frame.clone());
        }
    }

    pub fn push(&mut self, frame: Raster) -> Result<()> {
        if let Some(first) = self.frames.front() {
            if first.width != frame.width || first.height != frame.height {
                return Err(Error::contract(format!(
                    "frame {}x{} pushed onto a {}x{} stack",
                    frame.width, frame.height, first.width, first.height
                )));
            }
        }
        if self.frames.len() == self.k {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
        Ok(())
    }

    pub fn frames(&self) -> impl Iterator<Item = &Raster> {
        self.frames.iter()
    }

    /// Flattens to network input: 3k channel planes of h×w, frames oldest
    /// first, channels r,g,b within each frame.
    pub fn as_input(&self) -> Vec<f64> {
        let first = self.frames.front().expect("stack seeded before use");
        let (w, h) = (first.width, first.height);
        let mut out = Vec::with_capacity(self.frames.len() * 3 * w * h);
        for frame in &self.frames {
            for c in 0..3 {
                for i in 0..w * h {
                    out.push(frame.pixels[i * 3 + c]);
                }
            }
        }
        out
    }
}
