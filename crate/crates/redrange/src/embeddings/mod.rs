//! Observation embeddings over the red side's knowledge.
//!
//! Three views of the same state, from heaviest to leanest:
//!
//! * `actnet`: the full knowledge matrix, one row per discovered host plus a
//!   network-wide row, slot cells followed by believed connectivity.
//! * `act`: per action, which of the slots it cares about have at least one
//!   instance gathered anywhere, plus a did-the-last-run-collect-anything
//!   bit. Host identity is abstracted away entirely.
//! * `tact`: `act` extended with compressed blocks describing the currently
//!   executable commands.
//!
//! Every embedding is derivable from a recorded [`ObsPayload`], so traces
//! taken under one view can train an agent under another.

mod act;
mod actnet;
pub mod payload;
mod tact;

pub use act::{act_from_matrix, embed_act};
pub use actnet::actnet_matrix;
pub use payload::{CeecBlock, ObsKey, ObsPayload, PayloadError};
pub use tact::collect_ceecs;

use crate::params::{slot_index, ACTION_COUNT, MAX_HOSTS, SERVICE_TAGS, SLOT_COUNT};
use crate::scenario::NetworkScenario;
use crate::world::{executable_commands, WorldState};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Rows of the knowledge matrix: host rows in discovery order, then the
/// network-wide row.
pub const ACTNET_ROWS: usize = MAX_HOSTS + 1;
/// Columns: slot cells, then one believed-connectivity cell per host row.
pub const ACTNET_COLS: usize = SLOT_COUNT + MAX_HOSTS;
pub const ACTNET_CELLS: usize = ACTNET_ROWS * ACTNET_COLS;
pub const ACTNET_DIM: usize = ACTNET_CELLS;

/// Per action: one gathered bit per slot, one last-new bit.
pub const ACT_DIM: usize = ACTION_COUNT * (SLOT_COUNT + 1);

/// Command blocks appended by `tact`.
pub const MAX_CEECS: usize = ACTION_COUNT;
pub const CEEC_WIDTH: usize = ACTION_COUNT + 2 + SERVICE_TAGS.len();
pub const TACT_DIM: usize = ACT_DIM + MAX_CEECS * CEEC_WIDTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Actnet,
    Act,
    Tact,
}

pub const ALL_EMBEDDINGS: [EmbeddingKind; 3] =
    [EmbeddingKind::Actnet, EmbeddingKind::Act, EmbeddingKind::Tact];

impl EmbeddingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingKind::Actnet => "actnet",
            EmbeddingKind::Act => "act",
            EmbeddingKind::Tact => "tact",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            EmbeddingKind::Actnet => ACTNET_DIM,
            EmbeddingKind::Act => ACT_DIM,
            EmbeddingKind::Tact => TACT_DIM,
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmbeddingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_EMBEDDINGS
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown embedding `{s}`, expected actnet, act or tact"))
    }
}

/// Scenario-derived relevance masks: for each action, the slots named by its
/// requirements plus its service condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub masks: Vec<u32>,
}

impl EmbeddingConfig {
    pub fn for_scenario(s: &NetworkScenario) -> Self {
        let mut masks = vec![0u32; ACTION_COUNT];
        for rule in &s.action_rules {
            let mut m = 0u32;
            for p in &rule.required {
                if let Some(idx) = slot_index(&p.slot) {
                    m |= 1 << idx;
                }
            }
            if let Some(svc) = rule.service {
                m |= 1 << svc.slot();
            }
            masks[rule.index as usize] = m;
        }
        EmbeddingConfig { masks }
    }

    pub fn mask_contains(&self, action: usize, slot: u8) -> bool {
        self.masks[action] & (1 << slot) != 0
    }
}

/// Record the full observation payload for the current world state.
pub fn observe(ws: &WorldState) -> ObsPayload {
    ObsPayload {
        matrix: actnet_matrix(&ws.facts),
        last_new: *ws.facts.last_new_instance(),
        ceecs: collect_ceecs(&executable_commands(ws)),
    }
}

/// Embed a recorded payload. This is the only route surrogate environments
/// have; it must agree with [`embed_world`] on live states.
pub fn embed(kind: EmbeddingKind, cfg: &EmbeddingConfig, payload: &ObsPayload) -> Vec<f64> {
    match kind {
        EmbeddingKind::Actnet => payload.matrix.iter().map(|&c| c as f64).collect(),
        EmbeddingKind::Act => act_from_matrix(cfg, &payload.matrix, &payload.last_new),
        EmbeddingKind::Tact => {
            let mut v = act_from_matrix(cfg, &payload.matrix, &payload.last_new);
            tact::append_blocks(&mut v, &payload.ceecs);
            v
        }
    }
}

/// Embed a live world state directly, without going through a payload.
pub fn embed_world(kind: EmbeddingKind, cfg: &EmbeddingConfig, ws: &WorldState) -> Vec<f64> {
    match kind {
        EmbeddingKind::Actnet => actnet_matrix(&ws.facts).into_iter().map(|c| c as f64).collect(),
        EmbeddingKind::Act => embed_act(cfg, &ws.facts),
        EmbeddingKind::Tact => {
            let mut v = embed_act(cfg, &ws.facts);
            tact::append_blocks(&mut v, &collect_ceecs(&executable_commands(ws)));
            v
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::canonical_scenario;
    use crate::world::{reset, step, CompiledScenario};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dimensions_match_their_constants() {
        assert_eq!(ACTNET_DIM, 12_625);
        assert_eq!(ACT_DIM, 416);
        assert_eq!(TACT_DIM, 768);
        let s = canonical_scenario();
        let cfg = EmbeddingConfig::for_scenario(&s);
        let scn = CompiledScenario::compile(&s).unwrap();
        let ws = reset(&scn, 0);
        let payload = observe(&ws);
        for kind in ALL_EMBEDDINGS {
            assert_eq!(embed(kind, &cfg, &payload).len(), kind.dim());
            assert_eq!(embed_world(kind, &cfg, &ws).len(), kind.dim());
        }
    }

    #[test]
    fn kinds_parse_and_print() {
        for kind in ALL_EMBEDDINGS {
            assert_eq!(kind.as_str().parse::<EmbeddingKind>().unwrap(), kind);
        }
        assert!("act-net".parse::<EmbeddingKind>().is_err());
    }

    #[test]
    fn masks_cover_requirements_and_service() {
        let s = canonical_scenario();
        let cfg = EmbeddingConfig::for_scenario(&s);
        use crate::params::slot;
        assert!(cfg.mask_contains(13, slot::IP_ADDRESS));
        assert!(cfg.mask_contains(8, slot::OS_VERSION));
        assert!(cfg.mask_contains(8, slot::SVC_SMB));
        assert!(cfg.mask_contains(2, slot::SVC_SMB), "service condition is relevant");
        assert!(!cfg.mask_contains(13, slot::ADMIN_ACCESS));
    }

    #[test]
    fn payload_route_matches_world_route() {
        let s = canonical_scenario();
        let cfg = EmbeddingConfig::for_scenario(&s);
        let scn = CompiledScenario::compile(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for episode in 0..6 {
            let mut ws = reset(&scn, episode);
            loop {
                let payload = observe(&ws);
                for kind in ALL_EMBEDDINGS {
                    assert_eq!(
                        embed(kind, &cfg, &payload),
                        embed_world(kind, &cfg, &ws),
                        "{kind} diverged between routes"
                    );
                }
                if ws.done() || ws.step_count() > 25 {
                    break;
                }
                let a = rng.gen_range(0..ACTION_COUNT as u8);
                step(&mut ws, a).unwrap();
            }
        }
    }
}
