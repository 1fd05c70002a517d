//! The environment interface agents train against.
//!
//! Both the ground-truth world and learned surrogates sit behind [`Env`], so
//! training code never knows which one it is driving. Observations are
//! reference-counted vectors: surrogate environments hand out the same
//! embedding for the same state over and over, and cloning a pointer is
//! cheaper than cloning twelve thousand floats.

use crate::embeddings::{embed_world, observe, EmbeddingConfig, EmbeddingKind, ObsKey};
use crate::simgen::TraceStore;
use crate::world::{reset, step, CompiledScenario, WorldState};
use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

pub type ObsVec = Rc<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct EnvStep {
    pub obs: ObsVec,
    pub reward: f64,
    pub done: bool,
}

pub trait Env {
    /// Start a fresh episode and return its first observation.
    fn reset(&mut self, seed: u64) -> ObsVec;
    fn step(&mut self, action: u8) -> EnvStep;
    fn obs_len(&self) -> usize;
    fn action_count(&self) -> usize;
    /// Independent copy for evaluation; never records, never disturbs
    /// training state.
    fn fork_eval(&self) -> Box<dyn Env>;
    /// Bounds on the episode return, for value-distribution supports.
    fn return_bounds(&self) -> (f64, f64);
}

/// The ground-truth world behind the [`Env`] interface, optionally recording
/// every transition it serves into a shared trace store.
pub struct WorldEnv {
    scn: Arc<CompiledScenario>,
    cfg: EmbeddingConfig,
    kind: EmbeddingKind,
    state: Option<WorldState>,
    recorder: Option<Rc<RefCell<TraceStore>>>,
    last_key: Option<ObsKey>,
}

impl WorldEnv {
    pub fn new(scn: Arc<CompiledScenario>, kind: EmbeddingKind) -> Self {
        let cfg = EmbeddingConfig::for_scenario(scn.scenario());
        WorldEnv { scn, cfg, kind, state: None, recorder: None, last_key: None }
    }

    pub fn with_recorder(mut self, recorder: Rc<RefCell<TraceStore>>) -> Self {
        self.recorder = Some(recorder);
        self
    }

    pub fn scenario(&self) -> &Arc<CompiledScenario> {
        &self.scn
    }

    pub fn embedding(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn config(&self) -> &EmbeddingConfig {
        &self.cfg
    }

    pub fn state(&self) -> Option<&WorldState> {
        self.state.as_ref()
    }

    fn record_state(&mut self) -> Option<ObsKey> {
        let recorder = self.recorder.as_ref()?;
        let ws = self.state.as_ref().expect("live episode");
        let payload = observe(ws);
        Some(recorder.borrow_mut().intern_payload(payload))
    }
}

impl Env for WorldEnv {
    fn reset(&mut self, seed: u64) -> ObsVec {
        let ws = reset(&self.scn, seed);
        self.state = Some(ws);
        if let Some(key) = self.record_state() {
            self.recorder.as_ref().unwrap().borrow_mut().start_episode(key);
            self.last_key = Some(key);
        }
        Rc::new(embed_world(self.kind, &self.cfg, self.state.as_ref().unwrap()))
    }

    fn step(&mut self, action: u8) -> EnvStep {
        let ws = self.state.as_mut().expect("reset before stepping");
        let result = step(ws, action).expect("stepped a finished episode");
        if let Some(to) = self.record_state() {
            let from = self.last_key.take().expect("recorded start");
            // Record structural termination only. The step budget is the
            // machine's own to enforce; folding it into outcomes would make
            // identical states look stochastic near the horizon.
            self.recorder.as_ref().unwrap().borrow_mut().record(
                from,
                action,
                result.reward,
                to,
                result.goal_reached,
            );
            self.last_key = Some(to);
        }
        EnvStep {
            obs: Rc::new(embed_world(self.kind, &self.cfg, self.state.as_ref().unwrap())),
            reward: result.reward,
            done: result.done,
        }
    }

    fn obs_len(&self) -> usize {
        self.kind.dim()
    }

    fn action_count(&self) -> usize {
        crate::params::ACTION_COUNT
    }

    fn fork_eval(&self) -> Box<dyn Env> {
        Box::new(WorldEnv::new(self.scn.clone(), self.kind))
    }

    fn return_bounds(&self) -> (f64, f64) {
        let game = &self.scn.scenario().game;
        let worst = -game.step_cost * game.max_steps as f64;
        let mut best = game.goal_worth - game.step_cost;
        if !game.intermediate_worths.is_empty() {
            let per_step: f64 = game.intermediate_worths.iter().map(|w| w.worth.max(0.0)).sum();
            best += per_step * game.max_steps as f64;
        }
        (worst, best)
    }
}
