//! The red side's accumulated knowledge.
//!
//! Facts are instance values filed under (host, slot) or under a global slot
//! for network-wide parameters. The store is append-only during an episode:
//! the engine only ever inserts, never retracts, so observations grow
//! monotonically. Hosts enter the discovery order the first time any fact is
//! filed for them.

use crate::params::{self, ACTION_COUNT};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

/// Index of a host within a compiled scenario.
pub type HostIdx = u16;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FactStore {
    /// Per-host instance values, keyed by (host index, slot).
    host_facts: BTreeMap<(HostIdx, u8), BTreeSet<String>>,
    /// Network-wide instance values, keyed by slot.
    global_facts: BTreeMap<u8, BTreeSet<String>>,
    /// Hosts in the order the red side learned of them.
    discovered: Vec<HostIdx>,
    /// Believed connectivity, learned from discovery actions.
    connectivity: BTreeSet<(HostIdx, HostIdx)>,
    /// Per action: did its most recent execution collect a new instance.
    last_new_instance: [bool; ACTION_COUNT],
}

impl FactStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// File an instance value. Returns true when the value is new.
    pub fn insert(&mut self, host: HostIdx, slot: u8, value: impl Into<String>) -> bool {
        self.register(host);
        self.host_facts.entry((host, slot)).or_default().insert(value.into())
    }

    pub fn insert_global(&mut self, slot: u8, value: impl Into<String>) -> bool {
        debug_assert!(params::slot_spec(slot).network_wide);
        self.global_facts.entry(slot).or_default().insert(value.into())
    }

    /// Add a host to the discovery order without filing a fact.
    pub fn register(&mut self, host: HostIdx) {
        if !self.discovered.contains(&host) {
            self.discovered.push(host);
        }
    }

    pub fn learn_connectivity(&mut self, from: HostIdx, to: HostIdx) {
        if from != to {
            self.connectivity.insert((from, to));
        }
    }

    pub fn has(&self, host: HostIdx, slot: u8) -> bool {
        self.host_facts.get(&(host, slot)).is_some_and(|v| !v.is_empty())
    }

    pub fn has_global(&self, slot: u8) -> bool {
        self.global_facts.get(&slot).is_some_and(|v| !v.is_empty())
    }

    pub fn count(&self, host: HostIdx, slot: u8) -> usize {
        self.host_facts.get(&(host, slot)).map_or(0, |v| v.len())
    }

    pub fn count_global(&self, slot: u8) -> usize {
        self.global_facts.get(&slot).map_or(0, |v| v.len())
    }

    pub fn values(&self, host: HostIdx, slot: u8) -> impl Iterator<Item = &str> {
        self.host_facts.get(&(host, slot)).into_iter().flatten().map(String::as_str)
    }

    /// Any instance of the slot anywhere, host-scoped or global.
    pub fn slot_gathered(&self, slot: u8) -> bool {
        if params::slot_spec(slot).network_wide {
            self.has_global(slot)
        } else {
            self.host_facts
                .iter()
                .any(|(&(_, s), values)| s == slot && !values.is_empty())
        }
    }

    pub fn discovered(&self) -> &[HostIdx] {
        &self.discovered
    }

    pub fn discovery_rank(&self, host: HostIdx) -> Option<usize> {
        self.discovered.iter().position(|&h| h == host)
    }

    pub fn believes_connected(&self, from: HostIdx, to: HostIdx) -> bool {
        self.connectivity.contains(&(from, to))
    }

    pub fn last_new_instance(&self) -> &[bool; ACTION_COUNT] {
        &self.last_new_instance
    }

    pub fn set_last_new_instance(&mut self, action: u8, flag: bool) {
        self.last_new_instance[action as usize] = flag;
    }

    /// Test hook: reorder the discovery order with a permutation.
    pub fn permute_discovery_order(&mut self, perm: &[usize]) {
        assert_eq!(perm.len(), self.discovered.len());
        let old = self.discovered.clone();
        for (i, &p) in perm.iter().enumerate() {
            self.discovered[i] = old[p];
        }
    }

    /// Canonical byte encoding used for state identity in search and replay.
    pub fn canonical_bytes(&self, out: &mut Vec<u8>) {
        for (&(h, s), values) in &self.host_facts {
            out.extend_from_slice(&h.to_le_bytes());
            out.push(s);
            for v in values {
                out.extend_from_slice(v.as_bytes());
                out.push(0);
            }
            out.push(0xfe);
        }
        out.push(0xff);
        for (&s, values) in &self.global_facts {
            out.push(s);
            for v in values {
                out.extend_from_slice(v.as_bytes());
                out.push(0);
            }
            out.push(0xfe);
        }
        out.push(0xff);
        for &h in &self.discovered {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out.push(0xff);
        for &(a, b) in &self.connectivity {
            out.extend_from_slice(&a.to_le_bytes());
            out.extend_from_slice(&b.to_le_bytes());
        }
        out.push(0xff);
        for &f in &self.last_new_instance {
            out.push(f as u8);
        }
    }
}
