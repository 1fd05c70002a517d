//! Trace collection and surrogate synthesis.
//!
//! Episodes recorded against the world become a trace store: payloads
//! interned by digest, transitions between digests, episode start counts.
//! From a store, [`build_fsm`] estimates a maximum-likelihood finite state
//! machine whose states are observation digests. The FSM steps in
//! microseconds and never touches the world, which is the whole point:
//! train the expensive miles on the copy, keep the world for the exam.

use crate::embeddings::{embed, EmbeddingConfig, EmbeddingKind, ObsKey, ObsPayload};
use crate::env::{Env, EnvStep, ObsVec};
use crate::scenario::GameConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::rc::Rc;

#[derive(Debug, thiserror::Error)]
pub enum SimgenError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Parse(#[from] serde_json::Error),
    #[error("trace provenance mismatch: {0}")]
    ProvenanceMismatch(String),
    #[error("trace store holds no episodes")]
    Empty,
    #[error("malformed trace data: {0}")]
    Malformed(String),
}

/// What a trace was collected against. Stores with different provenance
/// describe different dynamics and must never be merged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario_hash: String,
    pub config: EmbeddingConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: ObsKey,
    pub action: u8,
    pub reward: f64,
    pub to: ObsKey,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStore {
    provenance: Provenance,
    payloads: BTreeMap<ObsKey, ObsPayload>,
    transitions: Vec<Transition>,
    starts: BTreeMap<ObsKey, u64>,
    episodes: u64,
}

impl TraceStore {
    pub fn new(scenario_hash: String, config: EmbeddingConfig) -> Self {
        TraceStore {
            provenance: Provenance { scenario_hash, config },
            payloads: BTreeMap::new(),
            transitions: Vec::new(),
            starts: BTreeMap::new(),
            episodes: 0,
        }
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Store a payload once, keyed by digest.
    pub fn intern_payload(&mut self, payload: ObsPayload) -> ObsKey {
        let key = payload.key();
        self.payloads.entry(key).or_insert(payload);
        key
    }

    pub fn start_episode(&mut self, key: ObsKey) {
        *self.starts.entry(key).or_insert(0) += 1;
        self.episodes += 1;
    }

    pub fn record(&mut self, from: ObsKey, action: u8, reward: f64, to: ObsKey, done: bool) {
        self.transitions.push(Transition { from, action, reward, to, done });
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn episode_count(&self) -> u64 {
        self.episodes
    }

    pub fn payload_count(&self) -> usize {
        self.payloads.len()
    }

    /// Fold another store into this one. Both must share provenance.
    pub fn merge(&mut self, other: TraceStore) -> Result<(), SimgenError> {
        if other.provenance != self.provenance {
            return Err(SimgenError::ProvenanceMismatch(format!(
                "have scenario {}, merging scenario {}",
                self.provenance.scenario_hash, other.provenance.scenario_hash
            )));
        }
        self.payloads.extend(other.payloads);
        self.transitions.extend(other.transitions);
        for (key, count) in other.starts {
            *self.starts.entry(key).or_insert(0) += count;
        }
        self.episodes += other.episodes;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), SimgenError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        let header =
            TraceLine::Header { provenance: self.provenance.clone(), episodes: self.episodes };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for (key, payload) in &self.payloads {
            serde_json::to_writer(&mut w, &TraceLine::Payload { key: *key, data: payload.clone() })?;
            w.write_all(b"\n")?;
        }
        for (key, count) in &self.starts {
            serde_json::to_writer(&mut w, &TraceLine::Start { key: *key, count: *count })?;
            w.write_all(b"\n")?;
        }
        for t in &self.transitions {
            serde_json::to_writer(&mut w, &TraceLine::Step(*t))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SimgenError> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut store: Option<TraceStore> = None;
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine = serde_json::from_str(&line)?;
            match (parsed, &mut store) {
                (TraceLine::Header { provenance, episodes }, slot @ None) => {
                    let mut s = TraceStore::new(String::new(), provenance.config.clone());
                    s.provenance = provenance;
                    s.episodes = episodes;
                    *slot = Some(s);
                }
                (TraceLine::Header { .. }, Some(_)) => {
                    return Err(SimgenError::Malformed("second header line".into()));
                }
                (TraceLine::Payload { key, data }, Some(s)) => {
                    if data.key() != key {
                        return Err(SimgenError::Malformed(format!("payload digest mismatch for {key}")));
                    }
                    s.payloads.insert(key, data);
                }
                (TraceLine::Start { key, count }, Some(s)) => {
                    *s.starts.entry(key).or_insert(0) += count;
                }
                (TraceLine::Step(t), Some(s)) => s.transitions.push(t),
                (_, None) => return Err(SimgenError::Malformed("missing header line".into())),
            }
        }
        let store = store.ok_or(SimgenError::Empty)?;
        for t in &store.transitions {
            if !store.payloads.contains_key(&t.from) || !store.payloads.contains_key(&t.to) {
                return Err(SimgenError::Malformed(format!("transition references unknown state {}", t.from)));
            }
        }
        Ok(store)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TraceLine {
    Header { provenance: Provenance, episodes: u64 },
    Payload { key: ObsKey, data: ObsPayload },
    Start { key: ObsKey, count: u64 },
    Step(Transition),
}

// ---------------------------------------------------------------------------
// the estimated machine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmMeta {
    pub scenario_hash: String,
    pub config: EmbeddingConfig,
    pub step_cost: f64,
    pub max_steps: u32,
    pub return_min: f64,
    pub return_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Outcome {
    reward: f64,
    next: u32,
    done: bool,
    count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TransitionRow {
    state: u32,
    action: u8,
    outcomes: Vec<Outcome>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FsmModel {
    pub meta: FsmMeta,
    payloads: Vec<ObsPayload>,
    rows: Vec<TransitionRow>,
    initial: Vec<(u32, u64)>,
    #[serde(skip)]
    lookup: BTreeMap<(u32, u8), usize>,
}

/// Maximum-likelihood estimate of the dynamics in a trace store.
pub fn build_fsm(store: &TraceStore, game: &GameConfig) -> Result<FsmModel, SimgenError> {
    if store.episodes == 0 || store.starts.is_empty() {
        return Err(SimgenError::Empty);
    }
    let index: BTreeMap<ObsKey, u32> =
        store.payloads.keys().enumerate().map(|(i, k)| (*k, i as u32)).collect();
    let payloads: Vec<ObsPayload> = store.payloads.values().cloned().collect();

    let mut counts: BTreeMap<(u32, u8), BTreeMap<(u32, u64, bool), u32>> = BTreeMap::new();
    for t in &store.transitions {
        let from = *index
            .get(&t.from)
            .ok_or_else(|| SimgenError::Malformed(format!("unknown state {}", t.from)))?;
        let to = *index
            .get(&t.to)
            .ok_or_else(|| SimgenError::Malformed(format!("unknown state {}", t.to)))?;
        *counts
            .entry((from, t.action))
            .or_default()
            .entry((to, t.reward.to_bits(), t.done))
            .or_insert(0) += 1;
    }

    let rows: Vec<TransitionRow> = counts
        .into_iter()
        .map(|((state, action), outcomes)| TransitionRow {
            state,
            action,
            outcomes: outcomes
                .into_iter()
                .map(|((next, reward_bits, done), count)| Outcome {
                    reward: f64::from_bits(reward_bits),
                    next,
                    done,
                    count,
                })
                .collect(),
        })
        .collect();

    let initial: Vec<(u32, u64)> =
        store.starts.iter().map(|(k, &c)| (index[k], c)).collect();

    let mut best = game.goal_worth - game.step_cost;
    if !game.intermediate_worths.is_empty() {
        best += game.intermediate_worths.iter().map(|w| w.worth.max(0.0)).sum::<f64>()
            * game.max_steps as f64;
    }
    let mut model = FsmModel {
        meta: FsmMeta {
            scenario_hash: store.provenance.scenario_hash.clone(),
            config: store.provenance.config.clone(),
            step_cost: game.step_cost,
            max_steps: game.max_steps,
            return_min: -game.step_cost * game.max_steps as f64,
            return_max: best,
        },
        payloads,
        rows,
        initial,
        lookup: BTreeMap::new(),
    };
    model.rebuild_lookup();
    Ok(model)
}

impl FsmModel {
    fn rebuild_lookup(&mut self) {
        self.lookup =
            self.rows.iter().enumerate().map(|(i, r)| ((r.state, r.action), i)).collect();
    }

    pub fn state_count(&self) -> usize {
        self.payloads.len()
    }

    pub fn payload(&self, state: u32) -> &ObsPayload {
        &self.payloads[state as usize]
    }

    pub fn initial_state(&self, rng: &mut impl Rng) -> u32 {
        let total: u64 = self.initial.iter().map(|(_, c)| c).sum();
        let mut pick = rng.gen_range(0..total);
        for &(state, count) in &self.initial {
            if pick < count {
                return state;
            }
            pick -= count;
        }
        self.initial.last().expect("nonempty initial distribution").0
    }

    /// Empirical outcome distribution for a visited pair, as
    /// `(probability, reward, next, done)` entries. `None` for pairs the
    /// traces never visited.
    pub fn outcome_distribution(
        &self,
        state: u32,
        action: u8,
    ) -> Option<Vec<(f64, f64, u32, bool)>> {
        let i = *self.lookup.get(&(state, action))?;
        let outcomes = &self.rows[i].outcomes;
        let total: u64 = outcomes.iter().map(|o| o.count as u64).sum();
        Some(
            outcomes
                .iter()
                .map(|o| (o.count as f64 / total as f64, o.reward, o.next, o.done))
                .collect(),
        )
    }

    /// Sample one step. A pair the traces never visited falls back to a
    /// costed self-loop: the machine admits it knows nothing there.
    pub fn transition(&self, state: u32, action: u8, rng: &mut impl Rng) -> (f64, u32, bool) {
        match self.lookup.get(&(state, action)) {
            None => (-self.meta.step_cost, state, false),
            Some(&i) => {
                let outcomes = &self.rows[i].outcomes;
                let total: u64 = outcomes.iter().map(|o| o.count as u64).sum();
                let mut pick = if outcomes.len() == 1 { 0 } else { rng.gen_range(0..total) };
                for o in outcomes {
                    if pick < o.count as u64 {
                        return (o.reward, o.next, o.done);
                    }
                    pick -= o.count as u64;
                }
                unreachable!("counts cover the draw");
            }
        }
    }

    pub fn coverage(&self) -> FsmCoverage {
        FsmCoverage {
            states: self.state_count(),
            pairs: self.rows.len(),
            observations: self
                .rows
                .iter()
                .flat_map(|r| r.outcomes.iter())
                .map(|o| o.count as u64)
                .sum(),
            stochastic_pairs: self.rows.iter().filter(|r| r.outcomes.len() > 1).count(),
            terminal_outcomes: self
                .rows
                .iter()
                .flat_map(|r| r.outcomes.iter())
                .filter(|o| o.done)
                .count(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), SimgenError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SimgenError> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut model: FsmModel = serde_json::from_reader(r)?;
        if model.initial.is_empty() {
            return Err(SimgenError::Empty);
        }
        let states = model.payloads.len() as u32;
        let bad = model
            .rows
            .iter()
            .flat_map(|r| r.outcomes.iter().map(move |o| (r.state, o.next)))
            .chain(model.initial.iter().map(|&(s, _)| (s, s)))
            .find(|&(s, n)| s >= states || n >= states);
        if let Some((s, _)) = bad {
            return Err(SimgenError::Malformed(format!("state index {s} out of range")));
        }
        model.rebuild_lookup();
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FsmCoverage {
    pub states: usize,
    /// Distinct (state, action) pairs with at least one observation.
    pub pairs: usize,
    /// Total recorded transitions behind the estimate.
    pub observations: u64,
    /// Pairs with more than one observed outcome.
    pub stochastic_pairs: usize,
    pub terminal_outcomes: usize,
}

// ---------------------------------------------------------------------------
// the surrogate environment
// ---------------------------------------------------------------------------

/// The estimated machine behind the [`Env`] interface. Any embedding can be
/// served because states carry full payloads.
pub struct FsmEnv {
    model: Rc<FsmModel>,
    kind: EmbeddingKind,
    cache: Rc<RefCell<BTreeMap<u32, ObsVec>>>,
    state: u32,
    steps: u32,
    done: bool,
    rng: ChaCha8Rng,
}

impl FsmEnv {
    pub fn new(model: Rc<FsmModel>, kind: EmbeddingKind) -> Self {
        FsmEnv {
            model,
            kind,
            cache: Rc::new(RefCell::new(BTreeMap::new())),
            state: 0,
            steps: 0,
            done: true,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn model(&self) -> &Rc<FsmModel> {
        &self.model
    }

    fn obs(&self, state: u32) -> ObsVec {
        let mut cache = self.cache.borrow_mut();
        cache
            .entry(state)
            .or_insert_with(|| {
                Rc::new(embed(self.kind, &self.model.meta.config, self.model.payload(state)))
            })
            .clone()
    }
}

impl Env for FsmEnv {
    fn reset(&mut self, seed: u64) -> ObsVec {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = self.model.initial_state(&mut self.rng);
        self.steps = 0;
        self.done = false;
        self.obs(self.state)
    }

    fn step(&mut self, action: u8) -> EnvStep {
        assert!(!self.done, "stepped a finished episode");
        let (reward, next, done) = self.model.transition(self.state, action, &mut self.rng);
        self.state = next;
        self.steps += 1;
        self.done = done || self.steps >= self.model.meta.max_steps;
        EnvStep { obs: self.obs(next), reward, done: self.done }
    }

    fn obs_len(&self) -> usize {
        self.kind.dim()
    }

    fn action_count(&self) -> usize {
        crate::params::ACTION_COUNT
    }

    fn fork_eval(&self) -> Box<dyn Env> {
        Box::new(FsmEnv {
            model: self.model.clone(),
            kind: self.kind,
            cache: self.cache.clone(),
            state: 0,
            steps: 0,
            done: true,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    fn return_bounds(&self) -> (f64, f64) {
        (self.model.meta.return_min, self.model.meta.return_max)
    }
}
