//! The abstract per-action embedding.
//!
//! For each action: one bit per slot saying "this slot matters to the action
//! and at least one instance of it has been gathered anywhere", then one bit
//! saying "the last run of this action collected something new". No host
//! identity, no topology: an agent trained on this view keeps working when
//! the network is relabeled or resized.

use super::{EmbeddingConfig, ACTNET_COLS, ACT_DIM};
use crate::params::{self, ACTION_COUNT, MAX_HOSTS, SLOT_COUNT};
use crate::world::FactStore;

pub fn embed_act(cfg: &EmbeddingConfig, facts: &FactStore) -> Vec<f64> {
    let gathered: Vec<bool> = (0..SLOT_COUNT as u8).map(|s| facts.slot_gathered(s)).collect();
    assemble(cfg, &gathered, facts.last_new_instance())
}

/// Derive the same embedding from a recorded knowledge matrix.
pub fn act_from_matrix(
    cfg: &EmbeddingConfig,
    matrix: &[u8],
    last_new: &[bool; ACTION_COUNT],
) -> Vec<f64> {
    let gathered: Vec<bool> = (0..SLOT_COUNT)
        .map(|s| {
            if params::slot_spec(s as u8).network_wide {
                matrix[MAX_HOSTS * ACTNET_COLS + s] > 0
            } else {
                (0..MAX_HOSTS).any(|row| matrix[row * ACTNET_COLS + s] > 0)
            }
        })
        .collect();
    assemble(cfg, &gathered, last_new)
}

fn assemble(cfg: &EmbeddingConfig, gathered: &[bool], last_new: &[bool; ACTION_COUNT]) -> Vec<f64> {
    let mut v = Vec::with_capacity(ACT_DIM);
    for a in 0..ACTION_COUNT {
        for (s, &g) in gathered.iter().enumerate() {
            v.push((cfg.mask_contains(a, s as u8) && g) as u8 as f64);
        }
        v.push(last_new[a] as u8 as f64);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::slot;
    use crate::scenario::canonical_scenario;
    use crate::world::{reset, step, CompiledScenario};

    const STRIDE: usize = SLOT_COUNT + 1;

    #[test]
    fn reset_exposes_only_seeded_slots() {
        let s = canonical_scenario();
        let cfg = EmbeddingConfig::for_scenario(&s);
        let scn = CompiledScenario::compile(&s).unwrap();
        let ws = reset(&scn, 0);
        let v = embed_act(&cfg, &ws.facts);
        assert_eq!(v[13 * STRIDE + slot::IP_ADDRESS as usize], 1.0);
        assert_eq!(v[8 * STRIDE + slot::OS_VERSION as usize], 1.0);
        assert_eq!(v[8 * STRIDE + slot::SVC_SMB as usize], 0.0);
        assert_eq!(v[13 * STRIDE + SLOT_COUNT], 0.0, "nothing has run yet");
    }

    #[test]
    fn last_new_bit_tracks_the_action() {
        let s = canonical_scenario();
        let cfg = EmbeddingConfig::for_scenario(&s);
        let scn = CompiledScenario::compile(&s).unwrap();
        let mut ws = reset(&scn, 0);
        step(&mut ws, 13).unwrap();
        let v = embed_act(&cfg, &ws.facts);
        assert_eq!(v[13 * STRIDE + SLOT_COUNT], 1.0);
        step(&mut ws, 13).unwrap();
        let v = embed_act(&cfg, &ws.facts);
        assert_eq!(v[13 * STRIDE + SLOT_COUNT], 0.0, "re-run collected nothing");
    }

    #[test]
    fn discovery_order_does_not_matter() {
        let s = canonical_scenario();
        let cfg = EmbeddingConfig::for_scenario(&s);
        let scn = CompiledScenario::compile(&s).unwrap();
        let mut ws = reset(&scn, 0);
        for a in [13, 12, 8] {
            step(&mut ws, a).unwrap();
        }
        let before = embed_act(&cfg, &ws.facts);
        let n = ws.facts.discovered().len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(2);
        ws.facts.permute_discovery_order(&perm);
        assert_eq!(embed_act(&cfg, &ws.facts), before);
    }
}
