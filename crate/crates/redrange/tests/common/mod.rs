//! Shared fixtures and helpers for the acceptance suite.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use redrange::agents::{Hyper, Policy};
use redrange::embeddings::EmbeddingKind;
use redrange::env::{Env, EnvStep, ObsVec};
use redrange::scenario::canonical_scenario;
use redrange::seeds::derive;
use redrange::simgen::FsmModel;
use redrange::unified_loop::{run_unified_loop, LoopConfig, LoopReport};
use std::path::PathBuf;
use std::rc::Rc;
use std::sync::OnceLock;

/// Prints the per-criterion verdict line and fails the test on FAIL.
pub fn verdict(number: u32, name: &str, ok: bool, detail: &str) {
    let word = if ok { "PASS" } else { "FAIL" };
    println!("criterion {number} ({name}): {word} [{detail}]");
    assert!(ok, "criterion {number} ({name}) failed: {detail}");
}

/// Records an informational criterion that has no pass/fail gate.
pub fn record(number: u32, name: &str, detail: &str) {
    println!("criterion {number} ({name}): RECORDED [{detail}]");
}

// ---------------------------------------------------------------------------
// Unified-loop fixtures shared across criteria.

pub struct LoopFixture {
    pub dir: tempfile::TempDir,
    pub policy: Policy,
    pub report: LoopReport,
}

impl LoopFixture {
    /// The simulation built by the final loop iteration.
    pub fn final_fsm(&self) -> FsmModel {
        FsmModel::load(&self.final_iteration_dir().join("model.fsm")).expect("load fixture fsm")
    }

    pub fn final_iteration_dir(&self) -> PathBuf {
        let last = self.report.iterations.len();
        self.dir.path().join(format!("iter_{last:02}"))
    }
}

fn build_loop_fixture(cfg: LoopConfig, seed: u64) -> LoopFixture {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = LoopConfig { run_dir: Some(dir.path().to_path_buf()), ..cfg };
    let scenario = canonical_scenario();
    let (policy, report) = run_unified_loop(&scenario, &cfg, seed).expect("unified loop");
    LoopFixture { dir, policy, report }
}

pub fn act_loop_config() -> LoopConfig {
    LoopConfig {
        collect_cap: 600,
        retry_episodes: 30,
        max_iterations: 10,
        s_max_steps: 40_000,
        s_eval_every: 2_000,
        s_stop_at: Some(88.0),
        embedding: EmbeddingKind::Act,
        hyper: Hyper { eps_end: 0.1, target_sync: 250, ..Hyper::default() },
        ..LoopConfig::default()
    }
}

pub fn actnet_loop_config() -> LoopConfig {
    LoopConfig {
        collect_cap: 600,
        retry_episodes: 30,
        max_iterations: 10,
        s_max_steps: 40_000,
        s_eval_every: 2_000,
        s_stop_at: Some(88.0),
        embedding: EmbeddingKind::Actnet,
        hyper: Hyper {
            hidden: vec![32],
            eps_end: 0.1,
            target_sync: 250,
            ..Hyper::default()
        },
        ..LoopConfig::default()
    }
}

/// ACT-embedded loop run on the deterministic canonical scenario.
pub fn act_fixture() -> &'static LoopFixture {
    static FIXTURE: OnceLock<LoopFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| build_loop_fixture(act_loop_config(), 11))
}

/// ACTNeT-embedded loop run on the deterministic canonical scenario.
pub fn actnet_fixture() -> &'static LoopFixture {
    static FIXTURE: OnceLock<LoopFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| build_loop_fixture(actnet_loop_config(), 12))
}

// ---------------------------------------------------------------------------
// Small tabular MDPs with a value-iteration oracle.

pub struct TabularMdp {
    pub states: usize,
    pub actions: usize,
    /// transitions[s][a] is a sparse distribution over next states.
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    pub rewards: Vec<Vec<f64>>,
}

impl TabularMdp {
    pub fn terminal(&self) -> usize {
        self.states - 1
    }

    /// Samples a random episodic MDP. The last state is absorbing and every
    /// state-action pair keeps at least 0.15 probability of reaching it, so
    /// episodes end quickly and a 30-step cap is almost never binding.
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let states = rng.gen_range(5..=20);
        let actions = rng.gen_range(2..=4);
        let terminal = states - 1;
        let mut transitions = Vec::with_capacity(states);
        let mut rewards = Vec::with_capacity(states);
        for s in 0..states {
            let mut row_t = Vec::with_capacity(actions);
            let mut row_r = Vec::with_capacity(actions);
            for _ in 0..actions {
                if s == terminal {
                    row_t.push(vec![(terminal, 1.0)]);
                    row_r.push(0.0);
                    continue;
                }
                let mut mass = vec![0.0_f64; states];
                for _ in 0..3 {
                    mass[rng.gen_range(0..states)] += rng.gen_range(0.2..1.0);
                }
                mass[terminal] += 0.15 * mass.iter().sum::<f64>();
                let total: f64 = mass.iter().sum();
                let dist: Vec<(usize, f64)> = mass
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m > 0.0)
                    .map(|(next, &m)| (next, m / total))
                    .collect();
                row_t.push(dist);
                row_r.push(rng.gen_range(-1.0..1.0));
            }
            transitions.push(row_t);
            rewards.push(row_r);
        }
        TabularMdp { states, actions, transitions, rewards }
    }

    /// Exact Q values under the discount, with the terminal state worth zero.
    pub fn value_iteration(&self, gamma: f64) -> Vec<Vec<f64>> {
        let mut q = vec![vec![0.0_f64; self.actions]; self.states];
        loop {
            let mut delta = 0.0_f64;
            for s in 0..self.terminal() {
                for a in 0..self.actions {
                    let mut value = self.rewards[s][a];
                    for &(next, p) in &self.transitions[s][a] {
                        if next != self.terminal() {
                            let best =
                                q[next].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            value += gamma * p * best;
                        }
                    }
                    delta = delta.max((value - q[s][a]).abs());
                    q[s][a] = value;
                }
            }
            if delta < 1e-12 {
                return q;
            }
        }
    }

    /// Smallest gap between the best and second-best action across states.
    pub fn min_action_gap(&self, q: &[Vec<f64>]) -> f64 {
        let mut gap = f64::INFINITY;
        for s in 0..self.terminal() {
            let mut sorted = q[s].clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            gap = gap.min(sorted[0] - sorted[1]);
        }
        gap
    }

    pub fn greedy(&self, q: &[Vec<f64>], s: usize) -> u8 {
        let row = &q[s];
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        best as u8
    }
}

/// Episodic environment over a tabular MDP with one-hot observations.
pub struct MdpEnv {
    mdp: std::sync::Arc<TabularMdp>,
    state: usize,
    steps: u32,
    rng: ChaCha8Rng,
}

pub const MDP_STEP_CAP: u32 = 30;

impl MdpEnv {
    pub fn new(mdp: std::sync::Arc<TabularMdp>) -> Self {
        MdpEnv { mdp, state: 0, steps: 0, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    fn observe(&self) -> ObsVec {
        let mut obs = vec![0.0; self.mdp.states];
        obs[self.state] = 1.0;
        Rc::new(obs)
    }
}

impl Env for MdpEnv {
    fn obs_len(&self) -> usize {
        self.mdp.states
    }

    fn action_count(&self) -> usize {
        self.mdp.actions
    }

    fn reset(&mut self, seed: u64) -> ObsVec {
        self.rng = ChaCha8Rng::seed_from_u64(derive(seed, "mdp-episode"));
        self.state = self.rng.gen_range(0..self.mdp.terminal());
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: u8) -> EnvStep {
        let reward = self.mdp.rewards[self.state][action as usize];
        let draw: f64 = self.rng.gen();
        let mut acc = 0.0;
        let mut next = self.mdp.terminal();
        for &(candidate, p) in &self.mdp.transitions[self.state][action as usize] {
            acc += p;
            if draw < acc {
                next = candidate;
                break;
            }
        }
        self.state = next;
        self.steps += 1;
        let done = next == self.mdp.terminal() || self.steps >= MDP_STEP_CAP;
        EnvStep { obs: self.observe(), reward, done }
    }

    fn fork_eval(&self) -> Box<dyn Env> {
        Box::new(MdpEnv::new(self.mdp.clone()))
    }

    fn return_bounds(&self) -> (f64, f64) {
        (-(MDP_STEP_CAP as f64), MDP_STEP_CAP as f64)
    }
}
