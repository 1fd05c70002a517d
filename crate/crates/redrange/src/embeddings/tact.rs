//! Command blocks appended by the `tact` embedding.
//!
//! Each block compresses one currently executable command: a one-hot action
//! lane, a believed-reachability bit, a new-subnet bit, and the believed
//! service conditions. One block per action, taken from the first command
//! the C2 would form for it; unused blocks stay zero.

use super::{CeecBlock, CEEC_WIDTH, MAX_CEECS};
use crate::params::{ACTION_COUNT, SERVICE_TAGS};
use crate::world::CommandInstance;

/// The first executable command per action, in action order.
pub fn collect_ceecs(commands: &[CommandInstance]) -> Vec<CeecBlock> {
    let mut first: Vec<Option<CeecBlock>> = vec![None; ACTION_COUNT];
    for c in commands {
        let slot = &mut first[c.action as usize];
        if slot.is_none() {
            *slot = Some(CeecBlock {
                action: c.action,
                reachable: c.dst_reachable,
                new_subnet: c.dst_in_new_subnet,
                conditions: c.satisfied_conditions,
            });
        }
    }
    first.into_iter().flatten().collect()
}

pub(super) fn append_blocks(v: &mut Vec<f64>, ceecs: &[CeecBlock]) {
    let start = v.len();
    v.resize(start + MAX_CEECS * CEEC_WIDTH, 0.0);
    for (i, c) in ceecs.iter().take(MAX_CEECS).enumerate() {
        let base = start + i * CEEC_WIDTH;
        v[base + c.action as usize] = 1.0;
        v[base + ACTION_COUNT] = c.reachable as u8 as f64;
        v[base + ACTION_COUNT + 1] = c.new_subnet as u8 as f64;
        for bit in 0..SERVICE_TAGS.len() {
            if c.conditions & (1 << bit) != 0 {
                v[base + ACTION_COUNT + 2 + bit] = 1.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{embed_world, EmbeddingConfig, EmbeddingKind, ACT_DIM};
    use crate::scenario::canonical_scenario;
    use crate::world::{executable_commands, reset, step, CompiledScenario};

    #[test]
    fn one_block_per_formable_action() {
        let scn = CompiledScenario::compile(&canonical_scenario()).unwrap();
        let mut ws = reset(&scn, 0);
        for a in [13, 12] {
            step(&mut ws, a).unwrap();
        }
        let ceecs = collect_ceecs(&executable_commands(&ws));
        let actions: Vec<u8> = ceecs.iter().map(|c| c.action).collect();
        let mut sorted = actions.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(actions, sorted, "blocks are unique and action ordered");
        assert!(actions.contains(&8), "privilege escalation just became formable");
    }

    #[test]
    fn blocks_encode_reachability_and_conditions() {
        let s = canonical_scenario();
        let cfg = EmbeddingConfig::for_scenario(&s);
        let scn = CompiledScenario::compile(&s).unwrap();
        let mut ws = reset(&scn, 0);
        for a in [13, 12] {
            step(&mut ws, a).unwrap();
        }
        let ceecs = collect_ceecs(&executable_commands(&ws));
        let shares = ceecs.iter().find(|c| c.action == 0).expect("share discovery formable");
        assert!(shares.reachable, "peer in the same subnet");
        assert!(!shares.new_subnet);
        assert_ne!(shares.conditions, 0, "smb condition believed met");

        let v = embed_world(EmbeddingKind::Tact, &cfg, &ws);
        let rank = ceecs.iter().position(|c| c.action == 0).unwrap();
        let base = ACT_DIM + rank * CEEC_WIDTH;
        assert_eq!(v[base], 1.0, "one-hot lane for action 0");
        assert_eq!(v[base + ACTION_COUNT], 1.0);
        assert_eq!(v[base + ACTION_COUNT + 1], 0.0);
    }

    #[test]
    fn unused_blocks_stay_zero() {
        let s = canonical_scenario();
        let cfg = EmbeddingConfig::for_scenario(&s);
        let scn = CompiledScenario::compile(&s).unwrap();
        let ws = reset(&scn, 0);
        let ceecs = collect_ceecs(&executable_commands(&ws));
        assert_eq!(ceecs.len(), 1, "only one action is formable at reset");
        let v = embed_world(EmbeddingKind::Tact, &cfg, &ws);
        let tail = &v[ACT_DIM + CEEC_WIDTH..];
        assert!(tail.iter().all(|&x| x == 0.0));
    }
}
