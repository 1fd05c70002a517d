//! The alternating world/surrogate loop: collect traces in the world until
//! returns jump, distill them into a surrogate machine, train a fresh agent
//! there, then carry the policy back into the world. If the world is not
//! convinced, the agent earns a few more episodes of real experience and the
//! machine is rebuilt from everything gathered so far.

use crate::agents::{
    self, evaluate, train_with, AgentError, Hyper, Plateau, Policy, TrainCurve, TrainOptions,
    Trainer,
};
use crate::embeddings::{EmbeddingConfig, EmbeddingKind};
use crate::env::WorldEnv;
use crate::scenario::NetworkScenario;
use crate::seeds;
use crate::simgen::{build_fsm, FsmCoverage, FsmEnv, SimgenError, TraceStore};
use crate::world::{CompiledScenario, WorldError};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::path::PathBuf;
use std::rc::Rc;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum LoopError {
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Simgen(#[from] SimgenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Return improvement between the first and latest window that ends the
    /// initial collection phase.
    pub delta_trigger: f64,
    /// Episodes per averaging window for the trigger.
    pub window: usize,
    /// World episodes of continued training after an unsatisfying evaluation.
    pub retry_episodes: u32,
    /// Greedy world episodes per evaluation.
    pub eval_episodes: u32,
    /// Mean evaluation return that counts as satisfied.
    pub r_star: f64,
    pub max_iterations: u32,
    /// Algorithm per iteration for world collection; the last entry repeats.
    pub e_algorithms: Vec<String>,
    /// Algorithm per iteration for surrogate training; the last entry repeats.
    pub s_algorithms: Vec<String>,
    pub embedding: EmbeddingKind,
    /// Hard cap on initial collection episodes if the trigger never fires.
    pub collect_cap: u32,
    /// Surrogate training budget per iteration, in environment steps.
    pub s_max_steps: u64,
    pub s_eval_every: u64,
    /// End surrogate training early once its greedy evaluation in the machine
    /// reaches this return.
    pub s_stop_at: Option<f64>,
    /// Optional early stop when surrogate evaluations stall.
    pub s_plateau: Option<Plateau>,
    pub hyper: Hyper,
    /// Where to persist per-iteration machines and checkpoints; `None` keeps
    /// everything in memory.
    pub run_dir: Option<PathBuf>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            delta_trigger: 20.0,
            window: 50,
            retry_episodes: 10,
            eval_episodes: 10,
            r_star: 85.0,
            max_iterations: 20,
            e_algorithms: vec!["c51".into()],
            s_algorithms: vec!["c51".into()],
            embedding: EmbeddingKind::Act,
            collect_cap: 2_000,
            s_max_steps: 150_000,
            s_eval_every: 1_000,
            s_stop_at: None,
            s_plateau: None,
            hyper: Hyper::default(),
            run_dir: None,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        let bad = |msg: &str| Err(LoopError::Config(msg.into()));
        if self.delta_trigger <= 0.0 {
            return bad("delta_trigger must be positive");
        }
        if self.window == 0
            || self.retry_episodes == 0
            || self.eval_episodes == 0
            || self.max_iterations == 0
            || self.collect_cap == 0
            || self.s_max_steps == 0
            || self.s_eval_every == 0
        {
            return bad("all counts must be at least 1");
        }
        if self.e_algorithms.is_empty() || self.s_algorithms.is_empty() {
            return bad("algorithm schedules must not be empty");
        }
        for name in self.e_algorithms.iter().chain(&self.s_algorithms) {
            agents::algorithm(name).map_err(|e| LoopError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

fn pick(schedule: &[String], iteration: usize) -> &str {
    &schedule[iteration.min(schedule.len() - 1)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopDecision {
    Satisfied,
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IterationDecision {
    Continue,
    Satisfied,
    BudgetExhausted,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: u32,
    /// Surrogate algorithm used this iteration.
    pub algorithm: String,
    /// Cumulative transitions behind this iteration's machine.
    pub trace_transitions: usize,
    pub fsm: FsmCoverage,
    pub s_curve: TrainCurve,
    pub s_steps: u64,
    /// Mean greedy return back in the world.
    pub eval_return: f64,
    pub eval_success_ratio: f64,
    /// World episodes of continued training after the evaluation.
    pub retry_episodes: u32,
    pub decision: IterationDecision,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoopReport {
    pub config: LoopConfig,
    /// Episodes the initial collection phase consumed.
    pub collect_episodes: u32,
    pub iterations: Vec<IterationRecord>,
    /// Every world episode consumed: collection, evaluation, and retries.
    pub total_e_episodes: u32,
    pub final_eval_return: f64,
    pub decision: LoopDecision,
    /// Checkpoint path relative to the run directory, when persisted.
    pub final_policy: Option<String>,
}

/// True once the mean return of the latest window beats the first window by
/// more than the trigger. Needs at least one full window of data.
pub fn check_delta_trigger(returns: &[f64], cfg: &LoopConfig) -> bool {
    let w = cfg.window;
    if returns.len() < w {
        return false;
    }
    let first = returns[..w].iter().sum::<f64>() / w as f64;
    let latest = returns[returns.len() - w..].iter().sum::<f64>() / w as f64;
    latest - first > cfg.delta_trigger
}

/// Continue a trainer in the recording world for a few episodes and fold
/// what it saw into the store.
pub fn retry_collect(
    scn: &Arc<CompiledScenario>,
    kind: EmbeddingKind,
    trainer: &mut dyn Trainer,
    episodes: u32,
    store: TraceStore,
) -> Result<TraceStore, LoopError> {
    if episodes == 0 {
        return Ok(store);
    }
    let shared = Rc::new(RefCell::new(store));
    let mut env = WorldEnv::new(scn.clone(), kind).with_recorder(shared.clone());
    for _ in 0..episodes {
        trainer.train_episode(&mut env);
    }
    drop(env);
    Ok(Rc::try_unwrap(shared).expect("recorder released").into_inner())
}

pub fn run_unified_loop(
    s: &NetworkScenario,
    cfg: &LoopConfig,
    seed: u64,
) -> Result<(Policy, LoopReport), LoopError> {
    cfg.validate()?;
    let scn = CompiledScenario::compile(s)?;
    let game = s.game.clone();
    let mut store =
        TraceStore::new(scn.content_hash().to_string(), EmbeddingConfig::for_scenario(s));
    if let Some(dir) = &cfg.run_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut returns = Vec::new();
    let mut collect_episodes = 0u32;
    {
        let shared = Rc::new(RefCell::new(store));
        let mut env = WorldEnv::new(scn.clone(), cfg.embedding).with_recorder(shared.clone());
        let mut agent0 = agents::trainer_for(
            pick(&cfg.e_algorithms, 0),
            &env,
            &cfg.hyper,
            seeds::derive(seed, "loop-agent0"),
        )?;
        while collect_episodes < cfg.collect_cap {
            returns.push(agent0.train_episode(&mut env));
            collect_episodes += 1;
            if check_delta_trigger(&returns, cfg) {
                break;
            }
        }
        drop(env);
        store = Rc::try_unwrap(shared).expect("recorder released").into_inner();
    }

    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut total_e_episodes = collect_episodes;
    let mut final_policy: Option<Policy> = None;
    let mut final_policy_ref = None;
    let mut final_eval = f64::NEG_INFINITY;
    let mut decision = LoopDecision::BudgetExhausted;

    for iteration in 0..cfg.max_iterations {
        let fsm = Rc::new(build_fsm(&store, &game)?);
        let algo = pick(&cfg.s_algorithms, iteration as usize);
        let mut fsm_env = FsmEnv::new(fsm.clone(), cfg.embedding);
        let mut trainer = agents::trainer_for(
            algo,
            &fsm_env,
            &cfg.hyper,
            seeds::derive_indexed(seed, "loop-surrogate", iteration as u64),
        )?;
        let opts = TrainOptions {
            max_env_steps: cfg.s_max_steps,
            eval_every_steps: cfg.s_eval_every,
            eval_episodes: cfg.eval_episodes,
            stop_at_eval_return: cfg.s_stop_at,
            plateau: cfg.s_plateau,
        };
        let s_curve = train_with(
            trainer.as_mut(),
            &mut fsm_env,
            &opts,
            seeds::derive_indexed(seed, "loop-s-eval", iteration as u64),
        )?;

        let mut policy = trainer.policy();
        let mut eval_env = WorldEnv::new(scn.clone(), cfg.embedding);
        let report = evaluate(
            &mut eval_env,
            &mut policy,
            cfg.eval_episodes,
            seeds::derive_indexed(seed, "loop-world-eval", iteration as u64),
        );
        total_e_episodes += cfg.eval_episodes;

        if let Some(dir) = &cfg.run_dir {
            let iter_dir = dir.join(format!("iter_{:02}", iteration + 1));
            std::fs::create_dir_all(&iter_dir)?;
            fsm.save(&iter_dir.join("model.fsm"))?;
            policy.save(&iter_dir.join("policy.json"))?;
            s_curve.save_csv(&iter_dir.join("s_curve.csv"))?;
            final_policy_ref = Some(format!("iter_{:02}/policy.json", iteration + 1));
        }

        let satisfied = report.mean >= cfg.r_star;
        let last = iteration + 1 == cfg.max_iterations;
        let iteration_decision = if satisfied {
            IterationDecision::Satisfied
        } else if last {
            IterationDecision::BudgetExhausted
        } else {
            IterationDecision::Continue
        };
        let retry = if iteration_decision == IterationDecision::Continue {
            cfg.retry_episodes
        } else {
            0
        };
        iterations.push(IterationRecord {
            iteration: iteration + 1,
            algorithm: algo.to_string(),
            trace_transitions: store.transition_count(),
            fsm: fsm.coverage(),
            s_curve,
            s_steps: trainer.steps(),
            eval_return: report.mean,
            eval_success_ratio: report.success_ratio,
            retry_episodes: retry,
            decision: iteration_decision,
        });
        final_eval = report.mean;
        final_policy = Some(policy);

        if satisfied {
            decision = LoopDecision::Satisfied;
            break;
        }
        if last {
            break;
        }
        store = retry_collect(&scn, cfg.embedding, trainer.as_mut(), retry, store)?;
        total_e_episodes += retry;
    }

    let report = LoopReport {
        config: cfg.clone(),
        collect_episodes,
        iterations,
        total_e_episodes,
        final_eval_return: final_eval,
        decision,
        final_policy: final_policy_ref,
    };
    if let Some(dir) = &cfg.run_dir {
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")
            .map_err(LoopError::Io)?;
    }
    Ok((final_policy.expect("at least one iteration"), report))
}
