//! Tiny deterministic environments for trainer unit tests.

use crate::env::{Env, EnvStep, ObsVec};
use std::rc::Rc;

/// One decision, two actions: action 1 pays 1, action 0 pays nothing.
pub struct Bandit;

impl Env for Bandit {
    fn reset(&mut self, _seed: u64) -> ObsVec {
        Rc::new(vec![1.0])
    }

    fn step(&mut self, action: u8) -> EnvStep {
        let reward = if action == 1 { 1.0 } else { 0.0 };
        EnvStep { obs: Rc::new(vec![1.0]), reward, done: true }
    }

    fn obs_len(&self) -> usize {
        1
    }

    fn action_count(&self) -> usize {
        2
    }

    fn fork_eval(&self) -> Box<dyn Env> {
        Box::new(Bandit)
    }

    fn return_bounds(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

/// A corridor of `n` cells with one-hot observations. Action 1 walks right
/// at a cost, action 0 slides back to the start; the far end pays 1.
pub struct Corridor {
    n: usize,
    at: usize,
    steps: u32,
}

impl Corridor {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        Corridor { n, at: 0, steps: 0 }
    }

    fn obs(&self) -> ObsVec {
        let mut v = vec![0.0; self.n];
        v[self.at] = 1.0;
        Rc::new(v)
    }

    fn budget(&self) -> u32 {
        4 * self.n as u32
    }
}

impl Env for Corridor {
    fn reset(&mut self, _seed: u64) -> ObsVec {
        self.at = 0;
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: u8) -> EnvStep {
        self.steps += 1;
        let mut reward = -0.01;
        if action == 1 {
            self.at += 1;
        } else {
            self.at = 0;
        }
        let mut done = self.steps >= self.budget();
        if self.at == self.n - 1 {
            reward += 1.0;
            done = true;
        }
        EnvStep { obs: self.obs(), reward, done }
    }

    fn obs_len(&self) -> usize {
        self.n
    }

    fn action_count(&self) -> usize {
        2
    }

    fn fork_eval(&self) -> Box<dyn Env> {
        Box::new(Corridor::new(self.n))
    }

    fn return_bounds(&self) -> (f64, f64) {
        (-0.01 * self.budget() as f64, 1.0)
    }
}
