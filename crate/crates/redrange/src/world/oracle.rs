//! Exhaustive search for the best deterministic action chain.
//!
//! Breadth-first search over world states with all success rates forced to
//! 1.0. Because every step costs the same and worth only arrives at the
//! goal, the first goal state found by BFS carries the optimal return.

use super::{executable_commands, reset, step, CompiledScenario, WorldError, WorldState};
use crate::scenario::NetworkScenario;
use sha2::{Digest, Sha256};
use std::collections::{BTreeSet, VecDeque};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    /// Action indices of one optimal chain.
    pub chain: Vec<u8>,
    /// Episode return of that chain.
    pub episode_return: f64,
}

impl OracleOutcome {
    pub fn length(&self) -> usize {
        self.chain.len()
    }
}

const DEFAULT_BUDGET: usize = 1_000_000;

/// Best deterministic chain to the goal, or `None` when no chain exists
/// within the episode step budget.
pub fn optimal_return_oracle(s: &NetworkScenario) -> Result<Option<OracleOutcome>, WorldError> {
    optimal_return_oracle_with_budget(s, DEFAULT_BUDGET)
}

pub fn optimal_return_oracle_with_budget(
    s: &NetworkScenario,
    budget: usize,
) -> Result<Option<OracleOutcome>, WorldError> {
    let det = s.clone().with_uniform_success_rate(1.0);
    let scn = CompiledScenario::compile(&det)?;
    let max_steps = det.game.max_steps;

    let root = reset(&scn, 0);
    let mut seen: BTreeSet<[u8; 32]> = BTreeSet::new();
    seen.insert(key_of(&root));
    let mut queue: VecDeque<(WorldState, Vec<u8>)> = VecDeque::new();
    queue.push_back((root, Vec::new()));

    while let Some((state, chain)) = queue.pop_front() {
        if chain.len() as u32 >= max_steps {
            continue;
        }
        let actions: BTreeSet<u8> =
            executable_commands(&state).iter().map(|c| c.action).collect();
        for action in actions {
            let mut next = state.clone();
            let result = step(&mut next, action).expect("live state");
            let mut next_chain = chain.clone();
            next_chain.push(action);
            if result.goal_reached {
                return Ok(Some(OracleOutcome {
                    chain: next_chain,
                    episode_return: next.episode_return(),
                }));
            }
            if result.done || result.new_instances == 0 {
                continue;
            }
            if seen.insert(key_of(&next)) {
                if seen.len() > budget {
                    return Err(WorldError::BudgetExceeded(seen.len()));
                }
                queue.push_back((next, next_chain));
            }
        }
    }
    Ok(None)
}

fn key_of(ws: &WorldState) -> [u8; 32] {
    Sha256::digest(ws.transition_key()).into()
}
