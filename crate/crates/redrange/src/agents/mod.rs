//! Reinforcement learning agents and the strategy registry.
//!
//! Each algorithm lives behind [`Algorithm`], is registered under a short
//! name, and yields a [`Trainer`] that runs episodes against any [`Env`].
//! Trainers expose greedy [`Policy`] snapshots that can be checkpointed,
//! reloaded, and evaluated anywhere, independent of how they were trained.

pub mod mlp;
mod replay;

mod c51;
mod dqn;
mod ppo;
#[cfg(test)]
mod testenv;

pub use c51::project_distribution;

use crate::env::Env;
use crate::seeds;
use mlp::Mlp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("unknown algorithm `{0}`, expected one of dqn, c51, ppo")]
    UnknownAlgorithm(String),
    #[error("observation width {got} does not match policy input {want}")]
    WidthMismatch { got: usize, want: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Parse(#[from] serde_json::Error),
}

/// One knob set shared by every algorithm; each reads the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub gamma: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub batch: usize,
    pub replay_capacity: usize,
    pub warmup: usize,
    pub train_freq: u32,
    pub target_sync: u32,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub atoms: usize,
    /// Value-distribution support; `None` adopts the environment bounds.
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    pub horizon: usize,
    pub ppo_epochs: usize,
    pub minibatch: usize,
    pub clip: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            gamma: 0.99,
            lr: 1e-3,
            hidden: vec![64, 64],
            batch: 32,
            replay_capacity: 50_000,
            warmup: 400,
            train_freq: 4,
            target_sync: 500,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 15_000,
            atoms: 51,
            v_min: None,
            v_max: None,
            horizon: 512,
            ppo_epochs: 4,
            minibatch: 64,
            clip: 0.2,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            max_grad_norm: 10.0,
        }
    }
}

impl Hyper {
    /// Reject settings that cannot train against an environment with the
    /// given return bounds.
    pub fn validate(&self, bounds: (f64, f64)) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::InvalidHyper(msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive and finite", self.lr));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return bad(format!("hidden layers {:?} must be nonempty and nonzero", self.hidden));
        }
        if self.batch == 0 || self.minibatch == 0 || self.horizon == 0 {
            return bad("batch, minibatch and horizon must be at least 1".into());
        }
        if self.replay_capacity < self.batch {
            return bad(format!(
                "replay capacity {} smaller than batch {}",
                self.replay_capacity, self.batch
            ));
        }
        if self.atoms < 2 {
            return bad(format!("atoms {} must be at least 2", self.atoms));
        }
        if !(0.0..=1.0).contains(&self.eps_start)
            || !(0.0..=1.0).contains(&self.eps_end)
            || self.eps_end > self.eps_start
        {
            return bad(format!(
                "exploration schedule {} -> {} must stay within [0, 1] and not grow",
                self.eps_start, self.eps_end
            ));
        }
        let (v_min, v_max) = self.support_bounds(bounds);
        if v_min >= v_max {
            return bad(format!("support [{v_min}, {v_max}] is empty"));
        }
        if v_min > bounds.0 || v_max < bounds.1 {
            return bad(format!(
                "support [{v_min}, {v_max}] does not cover achievable returns [{}, {}]",
                bounds.0, bounds.1
            ));
        }
        if self.clip < 0.0 || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("clip {} or lambda {} out of range", self.clip, self.gae_lambda));
        }
        Ok(())
    }

    pub fn support_bounds(&self, env_bounds: (f64, f64)) -> (f64, f64) {
        (self.v_min.unwrap_or(env_bounds.0), self.v_max.unwrap_or(env_bounds.1))
    }

    fn epsilon(&self, step: u64) -> f64 {
        if step >= self.eps_decay_steps {
            return self.eps_end;
        }
        let frac = step as f64 / self.eps_decay_steps as f64;
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

// ---------------------------------------------------------------------------
// policies and evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "head")]
pub enum PolicyHead {
    /// Outputs are action values.
    Q,
    /// Outputs are per-action distribution logits over a fixed support.
    Categorical { atoms: usize, v_min: f64, v_max: f64 },
    /// Outputs are action preferences.
    Logits,
}

/// A greedy policy snapshot: a network, how to read its outputs, and enough
/// shape information to refuse the wrong environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub algorithm: String,
    pub obs_len: usize,
    pub action_count: usize,
    head: PolicyHead,
    net: Mlp,
}

impl Policy {
    pub fn scores(&self, obs: &[f64]) -> Vec<f64> {
        assert_eq!(obs.len(), self.obs_len, "observation width mismatch");
        let out = self.net.forward(obs);
        match &self.head {
            PolicyHead::Q | PolicyHead::Logits => out,
            PolicyHead::Categorical { atoms, v_min, v_max } => {
                let support = support(*atoms, *v_min, *v_max);
                (0..self.action_count)
                    .map(|a| {
                        let probs = softmax(&out[a * atoms..(a + 1) * atoms]);
                        probs.iter().zip(support.iter()).map(|(p, z)| p * z).sum()
                    })
                    .collect()
            }
        }
    }

    pub fn act(&self, obs: &[f64]) -> u8 {
        argmax(&self.scores(obs)) as u8
    }

    /// Draw from the softmax over scores instead of taking the argmax.
    pub fn sample(&self, obs: &[f64], rng: &mut impl Rng) -> u8 {
        let probs = softmax(&self.scores(obs));
        let mut pick: f64 = rng.gen();
        for (i, p) in probs.iter().enumerate() {
            if pick < *p {
                return i as u8;
            }
            pick -= p;
        }
        probs.len() as u8 - 1
    }

    /// Width-checked variant for callers handling foreign observations.
    pub fn try_act(&self, obs: &[f64]) -> Result<u8, AgentError> {
        if obs.len() != self.obs_len {
            return Err(AgentError::WidthMismatch { got: obs.len(), want: self.obs_len });
        }
        Ok(self.act(obs))
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Anything that maps observations to actions during evaluation.
pub trait Actor {
    fn act(&mut self, obs: &[f64]) -> u8;
}

impl Actor for Policy {
    fn act(&mut self, obs: &[f64]) -> u8 {
        Policy::act(self, obs)
    }
}

pub struct RandomActor {
    rng: ChaCha8Rng,
    actions: u8,
}

impl RandomActor {
    pub fn new(seed: u64, actions: u8) -> Self {
        RandomActor { rng: ChaCha8Rng::seed_from_u64(seed), actions }
    }
}

impl Actor for RandomActor {
    fn act(&mut self, _obs: &[f64]) -> u8 {
        self.rng.gen_range(0..self.actions)
    }
}

/// Replays a fixed action sequence, then repeats the last action.
pub struct ScriptedActor {
    script: Vec<u8>,
    at: usize,
}

impl ScriptedActor {
    pub fn new(script: Vec<u8>) -> Self {
        assert!(!script.is_empty());
        ScriptedActor { script, at: 0 }
    }
}

impl Actor for ScriptedActor {
    fn act(&mut self, _obs: &[f64]) -> u8 {
        let a = self.script[self.at.min(self.script.len() - 1)];
        self.at += 1;
        a
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub returns: Vec<f64>,
    pub lengths: Vec<u32>,
    /// Per episode: did it end with positive return, i.e. reach the goal.
    pub goal_reached: Vec<bool>,
    pub mean: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub success_ratio: f64,
}

impl EvalReport {
    fn from_returns(returns: Vec<f64>, lengths: Vec<u32>) -> Self {
        let mean = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
        let min = returns.iter().cloned().reduce(f64::min);
        let max = returns.iter().cloned().reduce(f64::max);
        let goal_reached: Vec<bool> = returns.iter().map(|&r| r > 0.0).collect();
        let successes = goal_reached.iter().filter(|&&g| g).count();
        let success_ratio = successes as f64 / returns.len().max(1) as f64;
        EvalReport { returns, lengths, goal_reached, mean, min, max, success_ratio }
    }

    pub fn successes(&self) -> usize {
        self.goal_reached.iter().filter(|&&g| g).count()
    }

    pub fn mean_length(&self) -> f64 {
        self.lengths.iter().map(|&l| l as f64).sum::<f64>() / self.lengths.len().max(1) as f64
    }
}

pub fn evaluate(env: &mut dyn Env, actor: &mut dyn Actor, episodes: u32, seed: u64) -> EvalReport {
    let mut returns = Vec::with_capacity(episodes as usize);
    let mut lengths = Vec::with_capacity(episodes as usize);
    for ep in 0..episodes {
        let mut obs = env.reset(seeds::derive_indexed(seed, "eval-episode", ep as u64));
        let mut total = 0.0;
        let mut len = 0u32;
        loop {
            let step = env.step(actor.act(&obs));
            total += step.reward;
            len += 1;
            obs = step.obs;
            if step.done {
                break;
            }
        }
        returns.push(total);
        lengths.push(len);
    }
    EvalReport::from_returns(returns, lengths)
}

/// One point per evaluation: environment steps so far, mean training return
/// since the last point, mean greedy evaluation return, mean episode length.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainCurve {
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvePoint {
    pub steps: u64,
    pub train_return: f64,
    pub eval_return: f64,
    pub episode_length: f64,
}

impl TrainCurve {
    pub fn push(&mut self, p: CurvePoint) {
        if let Some(last) = self.points.last() {
            assert!(p.steps > last.steps, "curve steps must strictly increase");
        }
        self.points.push(p);
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), AgentError> {
        let mut out = String::from("steps,train_return,eval_return,ep_len\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.steps, p.train_return, p.eval_return, p.episode_length
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// First point at which the greedy evaluation reached `threshold`.
    pub fn steps_to_eval(&self, threshold: f64) -> Option<u64> {
        self.points.iter().find(|p| p.eval_return >= threshold).map(|p| p.steps)
    }
}

/// Stopping and measurement knobs for [`train`].
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub max_env_steps: u64,
    pub eval_every_steps: u64,
    pub eval_episodes: u32,
    /// Stop once the greedy evaluation reaches this return.
    pub stop_at_eval_return: Option<f64>,
    /// Stop when no evaluation improves on the best by more than `min_gain`
    /// for `patience` consecutive points.
    pub plateau: Option<Plateau>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub min_gain: f64,
    pub patience: u32,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            max_env_steps: 200_000,
            eval_every_steps: 2_000,
            eval_episodes: 10,
            stop_at_eval_return: None,
            plateau: None,
        }
    }
}

/// Drive a trainer with periodic greedy evaluation until a stop condition
/// fires. Returns the final policy and the curve that got there.
pub fn train(
    name: &str,
    env: &mut dyn Env,
    hyper: &Hyper,
    opts: &TrainOptions,
    seed: u64,
) -> Result<(Policy, TrainCurve), AgentError> {
    let mut trainer = trainer_for(name, env, hyper, seed)?;
    let curve = train_with(trainer.as_mut(), env, opts, seed)?;
    Ok((trainer.policy(), curve))
}

/// Same loop for an existing trainer, so callers can resume training or keep
/// the trainer for later phases.
pub fn train_with(
    trainer: &mut dyn Trainer,
    env: &mut dyn Env,
    opts: &TrainOptions,
    seed: u64,
) -> Result<TrainCurve, AgentError> {
    let mut curve = TrainCurve::default();
    let mut recent: Vec<(f64, u64)> = Vec::new();
    let mut next_eval = opts.eval_every_steps;
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0u32;
    let mut eval_index = 0u64;

    while trainer.steps() < opts.max_env_steps {
        let before = trainer.steps();
        let ret = trainer.train_episode(env);
        recent.push((ret, trainer.steps() - before));

        if trainer.steps() >= next_eval {
            next_eval = trainer.steps() + opts.eval_every_steps;
            eval_index += 1;
            let mut fork = env.fork_eval();
            let mut policy = trainer.policy();
            let report = evaluate(
                fork.as_mut(),
                &mut policy,
                opts.eval_episodes,
                seeds::derive_indexed(seed, "train-eval", eval_index),
            );
            let train_return = recent.iter().map(|(r, _)| r).sum::<f64>() / recent.len() as f64;
            let episode_length =
                recent.iter().map(|&(_, s)| s as f64).sum::<f64>() / recent.len() as f64;
            recent.clear();
            curve.push(CurvePoint {
                steps: trainer.steps(),
                train_return,
                eval_return: report.mean,
                episode_length,
            });
            if let Some(target) = opts.stop_at_eval_return {
                if report.mean >= target {
                    break;
                }
            }
            if let Some(p) = opts.plateau {
                if report.mean > best + p.min_gain {
                    best = report.mean;
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= p.patience {
                        break;
                    }
                }
            } else if report.mean > best {
                best = report.mean;
            }
        }
    }
    Ok(curve)
}

// ---------------------------------------------------------------------------
// the strategy registry
// ---------------------------------------------------------------------------

/// Live training state: runs episodes, learns as it goes, snapshots
/// policies. Trainers survive environment swaps as long as the observation
/// shape stays put, which is what lets a surrogate-trained agent resume
/// against the real world.
pub trait Trainer {
    fn train_episode(&mut self, env: &mut dyn Env) -> f64;
    fn policy(&self) -> Policy;
    fn algorithm(&self) -> &'static str;
    /// Environment steps consumed so far.
    fn steps(&self) -> u64;
}

pub trait Algorithm {
    fn name(&self) -> &'static str;
    fn trainer(
        &self,
        obs_len: usize,
        action_count: usize,
        bounds: (f64, f64),
        hyper: &Hyper,
        seed: u64,
    ) -> Result<Box<dyn Trainer>, AgentError>;
}

pub const ALL_ALGORITHMS: [&str; 3] = ["dqn", "c51", "ppo"];

pub fn algorithms() -> Vec<Box<dyn Algorithm>> {
    vec![Box::new(dqn::DqnAlgorithm), Box::new(c51::C51Algorithm), Box::new(ppo::PpoAlgorithm)]
}

pub fn algorithm(name: &str) -> Result<Box<dyn Algorithm>, AgentError> {
    algorithms()
        .into_iter()
        .find(|a| a.name() == name)
        .ok_or_else(|| AgentError::UnknownAlgorithm(name.to_string()))
}

/// Convenience: build a trainer for an environment in one call.
pub fn trainer_for(
    name: &str,
    env: &dyn Env,
    hyper: &Hyper,
    seed: u64,
) -> Result<Box<dyn Trainer>, AgentError> {
    algorithm(name)?.trainer(env.obs_len(), env.action_count(), env.return_bounds(), hyper, seed)
}

// ---------------------------------------------------------------------------
// shared numerics
// ---------------------------------------------------------------------------

/// Index of the largest value; ties go to the lowest index.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn support(atoms: usize, v_min: f64, v_max: f64) -> Vec<f64> {
    let dz = (v_max - v_min) / (atoms - 1) as f64;
    (0..atoms).map(|i| v_min + i as f64 * dz).collect()
}

/// Greedy action helper shared by the value-based trainers.
fn greedy(scores: &[f64]) -> u8 {
    argmax(scores) as u8
}
