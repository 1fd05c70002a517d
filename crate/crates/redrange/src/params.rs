//! Action parameter catalog.
//!
//! Every piece of information the red C2 can hold about the target network is
//! filed under one of a fixed set of parameter slots. Host-scoped slots are
//! keyed by host, network-wide slots live in a single global store. The slot
//! indices double as column indices in the full observation matrix, so the
//! catalog order is part of the observation contract and must not be
//! reordered.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Number of parameter slots in the catalog.
pub const SLOT_COUNT: usize = 25;

/// Number of distinct action indices in the rule table.
pub const ACTION_COUNT: usize = 16;

/// Maximum number of hosts an observation can track.
pub const MAX_HOSTS: usize = 100;

// ---------------------------------------------------------------------------
// slots
// ---------------------------------------------------------------------------

/// How instances of a slot are rendered into an observation cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotKind {
    /// Cell is 1 when at least one instance is known.
    Presence,
    /// Cell is the instance count, capped at [`COUNT_CAP`].
    Count,
}

/// Observation cells never report more than this many instances.
pub const COUNT_CAP: u8 = 9;

#[derive(Debug, Clone, Copy)]
pub struct SlotSpec {
    pub name: &'static str,
    pub kind: SlotKind,
    /// Network-wide slots are stored globally rather than per host.
    pub network_wide: bool,
}

const fn host(name: &'static str, kind: SlotKind) -> SlotSpec {
    SlotSpec { name, kind, network_wide: false }
}

const fn network(name: &'static str, kind: SlotKind) -> SlotSpec {
    SlotSpec { name, kind, network_wide: true }
}

use SlotKind::{Count, Presence};

pub const CATALOG: [SlotSpec; SLOT_COUNT] = [
    host("os-version", Presence),
    host("ip-address", Presence),
    host("hostname", Presence),
    host("implant", Presence),
    host("admin-access", Presence),
    host("user-credentials", Count),
    host("admin-credentials", Count),
    host("svc-smb", Presence),
    host("svc-winrm", Presence),
    host("svc-ssh", Presence),
    host("svc-rdp", Presence),
    host("network-shares", Count),
    host("staged-tool", Presence),
    host("arp-table", Count),
    host("dns-records", Count),
    host("open-ports", Count),
    host("processes", Count),
    host("logged-in-users", Count),
    host("installed-software", Count),
    host("security-products", Count),
    network("domain-name", Presence),
    network("domain-user-accounts", Count),
    network("domain-admin-accounts", Count),
    network("domain-user-credential", Presence),
    network("trust-relationships", Count),
];

/// Named indices for the slots the engine manipulates directly.
pub mod slot {
    pub const OS_VERSION: u8 = 0;
    pub const IP_ADDRESS: u8 = 1;
    pub const HOSTNAME: u8 = 2;
    pub const IMPLANT: u8 = 3;
    pub const ADMIN_ACCESS: u8 = 4;
    pub const USER_CREDENTIALS: u8 = 5;
    pub const ADMIN_CREDENTIALS: u8 = 6;
    pub const SVC_SMB: u8 = 7;
    pub const SVC_WINRM: u8 = 8;
    pub const SVC_SSH: u8 = 9;
    pub const SVC_RDP: u8 = 10;
    pub const NETWORK_SHARES: u8 = 11;
    pub const STAGED_TOOL: u8 = 12;
    pub const ARP_TABLE: u8 = 13;
    pub const DNS_RECORDS: u8 = 14;
    pub const DOMAIN_NAME: u8 = 20;
    pub const DOMAIN_USER_ACCOUNTS: u8 = 21;
    pub const DOMAIN_ADMIN_ACCOUNTS: u8 = 22;
    pub const DOMAIN_USER_CREDENTIAL: u8 = 23;
}

pub fn slot_index(name: &str) -> Option<u8> {
    CATALOG.iter().position(|s| s.name == name).map(|i| i as u8)
}

pub fn slot_spec(index: u8) -> &'static SlotSpec {
    &CATALOG[index as usize]
}

// ---------------------------------------------------------------------------
// services
// ---------------------------------------------------------------------------

/// Remote services an action can depend on. These four make up the
/// execution-condition part of the target-aware observation encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServiceTag {
    Smb,
    Winrm,
    Ssh,
    Rdp,
}

pub const SERVICE_TAGS: [ServiceTag; 4] =
    [ServiceTag::Smb, ServiceTag::Winrm, ServiceTag::Ssh, ServiceTag::Rdp];

impl ServiceTag {
    /// Catalog slot that records belief about this service on a host.
    pub fn slot(self) -> u8 {
        match self {
            ServiceTag::Smb => slot::SVC_SMB,
            ServiceTag::Winrm => slot::SVC_WINRM,
            ServiceTag::Ssh => slot::SVC_SSH,
            ServiceTag::Rdp => slot::SVC_RDP,
        }
    }

    /// Position within the condition block of a command encoding.
    pub fn condition_bit(self) -> usize {
        match self {
            ServiceTag::Smb => 0,
            ServiceTag::Winrm => 1,
            ServiceTag::Ssh => 2,
            ServiceTag::Rdp => 3,
        }
    }
}

impl fmt::Display for ServiceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ServiceTag::Smb => "smb",
            ServiceTag::Winrm => "winrm",
            ServiceTag::Ssh => "ssh",
            ServiceTag::Rdp => "rdp",
        };
        f.write_str(s)
    }
}

impl FromStr for ServiceTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "smb" => Ok(ServiceTag::Smb),
            "winrm" => Ok(ServiceTag::Winrm),
            "ssh" => Ok(ServiceTag::Ssh),
            "rdp" => Ok(ServiceTag::Rdp),
            other => Err(format!("unknown service tag: {other}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_no_duplicate_names() {
        for (i, a) in CATALOG.iter().enumerate() {
            for b in &CATALOG[i + 1..] {
                assert_ne!(a.name, b.name);
            }
        }
    }

    #[test]
    fn named_indices_match_catalog() {
        assert_eq!(CATALOG[slot::OS_VERSION as usize].name, "os-version");
        assert_eq!(CATALOG[slot::STAGED_TOOL as usize].name, "staged-tool");
        assert_eq!(CATALOG[slot::DOMAIN_NAME as usize].name, "domain-name");
        assert!(CATALOG[slot::DOMAIN_NAME as usize].network_wide);
        assert!(!CATALOG[slot::ARP_TABLE as usize].network_wide);
    }

    #[test]
    fn service_slots_are_presence_slots() {
        for tag in SERVICE_TAGS {
            let spec = slot_spec(tag.slot());
            assert_eq!(spec.kind, SlotKind::Presence);
            assert!(spec.name.starts_with("svc-"));
        }
    }
}
