//! The full knowledge matrix.
//!
//! One row per discovered host in discovery order, then a network-wide row.
//! The first columns hold slot cells: presence slots as 0/1, count slots as
//! the capped instance count. The remaining columns hold directed believed
//! connectivity, one cell per host row. Because rows follow discovery
//! order, the embedding is tied to the identities the tooling reports:
//! relabel the network and the same topology lands in different rows.

use super::{ACTNET_CELLS, ACTNET_COLS};
use crate::params::{self, SlotKind, COUNT_CAP, MAX_HOSTS, SLOT_COUNT};
use crate::world::FactStore;

pub fn actnet_matrix(facts: &FactStore) -> Vec<u8> {
    let mut m = vec![0u8; ACTNET_CELLS];
    let hosts = facts.discovered();

    for (row, &host) in hosts.iter().take(MAX_HOSTS).enumerate() {
        let base = row * ACTNET_COLS;
        for s in 0..SLOT_COUNT as u8 {
            let spec = params::slot_spec(s);
            if spec.network_wide {
                continue;
            }
            m[base + s as usize] = match spec.kind {
                SlotKind::Presence => facts.has(host, s) as u8,
                SlotKind::Count => facts.count(host, s).min(COUNT_CAP as usize) as u8,
            };
        }
        for (col, &other) in hosts.iter().take(MAX_HOSTS).enumerate() {
            if facts.believes_connected(host, other) {
                m[base + SLOT_COUNT + col] = 1;
            }
        }
    }

    let base = MAX_HOSTS * ACTNET_COLS;
    for s in 0..SLOT_COUNT as u8 {
        let spec = params::slot_spec(s);
        if !spec.network_wide {
            continue;
        }
        m[base + s as usize] = match spec.kind {
            SlotKind::Presence => facts.has_global(s) as u8,
            SlotKind::Count => facts.count_global(s).min(COUNT_CAP as usize) as u8,
        };
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::slot;
    use crate::scenario::canonical_scenario;
    use crate::world::{reset, step, CompiledScenario};

    #[test]
    fn reset_fills_exactly_one_row() {
        let scn = CompiledScenario::compile(&canonical_scenario()).unwrap();
        let ws = reset(&scn, 0);
        let m = actnet_matrix(&ws.facts);
        for s in [slot::OS_VERSION, slot::IP_ADDRESS, slot::HOSTNAME, slot::IMPLANT] {
            assert_eq!(m[s as usize], 1);
        }
        assert_eq!(m.iter().map(|&c| c as u32).sum::<u32>(), 4, "nothing else is known");
    }

    #[test]
    fn counts_cap_at_nine() {
        let mut facts = FactStore::new();
        for i in 0..30 {
            facts.insert(0, slot::ARP_TABLE, format!("10.0.0.{i}"));
        }
        let m = actnet_matrix(&facts);
        assert_eq!(m[slot::ARP_TABLE as usize], COUNT_CAP);
    }

    #[test]
    fn connectivity_cells_follow_discovery_ranks() {
        let scn = CompiledScenario::compile(&canonical_scenario()).unwrap();
        let mut ws = reset(&scn, 0);
        step(&mut ws, 13).unwrap();
        let m = actnet_matrix(&ws.facts);
        // The foothold row believes links to every subnet peer it just saw.
        for col in 1..4 {
            assert_eq!(m[SLOT_COUNT + col], 1);
        }
        assert_eq!(m[SLOT_COUNT], 0, "no self link");
        assert_eq!(m[slot::ARP_TABLE as usize], 3);
    }

    #[test]
    fn network_row_holds_global_slots() {
        let scn = CompiledScenario::compile(&canonical_scenario()).unwrap();
        let mut ws = reset(&scn, 0);
        for a in [13, 12] {
            step(&mut ws, a).unwrap();
        }
        let m = actnet_matrix(&ws.facts);
        let nir = MAX_HOSTS * ACTNET_COLS;
        assert_eq!(m[nir + slot::DOMAIN_NAME as usize], 1);
        assert_eq!(m[nir + slot::DOMAIN_ADMIN_ACCOUNTS as usize], 0);
        for row in 0..MAX_HOSTS {
            assert_eq!(m[row * ACTNET_COLS + slot::DOMAIN_NAME as usize], 0);
        }
    }

    #[test]
    fn discovery_order_changes_the_matrix() {
        let scn = CompiledScenario::compile(&canonical_scenario()).unwrap();
        let mut ws = reset(&scn, 0);
        for a in [13, 12] {
            step(&mut ws, a).unwrap();
        }
        let before = actnet_matrix(&ws.facts);
        let n = ws.facts.discovered().len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(1);
        ws.facts.permute_discovery_order(&perm);
        let after = actnet_matrix(&ws.facts);
        assert_ne!(before, after);
    }
}
