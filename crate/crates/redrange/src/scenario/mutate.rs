//! Scenario variation operators.
//!
//! Each operator derives a structurally valid sibling of a scenario while
//! preserving the hosts the attack depends on: the initial access point, the
//! goal, and every credential target. Mutation is a pure function of
//! (scenario, kind, seed).

use super::{
    validate_scenario, FirewallRule, HostId, HostSpec, NetworkScenario, OsKind, ScenarioError,
};
use crate::params::ServiceTag;
use crate::seeds;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationKind {
    IpScramble,
    NameScramble,
    AddRemoveHosts,
    MoveSubnet,
}

pub const ALL_VARIATIONS: [VariationKind; 4] = [
    VariationKind::IpScramble,
    VariationKind::NameScramble,
    VariationKind::AddRemoveHosts,
    VariationKind::MoveSubnet,
];

impl VariationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VariationKind::IpScramble => "ip_scramble",
            VariationKind::NameScramble => "name_scramble",
            VariationKind::AddRemoveHosts => "add_remove_hosts",
            VariationKind::MoveSubnet => "move_subnet",
        }
    }
}

impl fmt::Display for VariationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ip_scramble" => Ok(VariationKind::IpScramble),
            "name_scramble" => Ok(VariationKind::NameScramble),
            "add_remove_hosts" => Ok(VariationKind::AddRemoveHosts),
            "move_subnet" => Ok(VariationKind::MoveSubnet),
            other => Err(format!("unknown variation kind: {other}")),
        }
    }
}

/// Apply a variation operator. The result is guaranteed to validate.
pub fn mutate_scenario(
    s: &NetworkScenario,
    kind: VariationKind,
    seed: u64,
) -> Result<NetworkScenario, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, kind.as_str()));
    let mut out = s.clone();
    match kind {
        VariationKind::IpScramble => ip_scramble(&mut out, &mut rng),
        VariationKind::NameScramble => name_scramble(&mut out, &mut rng),
        VariationKind::AddRemoveHosts => add_remove_hosts(&mut out, &mut rng)?,
        VariationKind::MoveSubnet => move_subnet(&mut out, &mut rng)?,
    }
    let report = validate_scenario(&out);
    if report.is_empty() {
        Ok(out)
    } else {
        Err(ScenarioError::Invalid(report))
    }
}

/// Shuffled index permutation, guaranteed not to be the identity when the
/// sequence has more than one element.
fn non_identity_permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    if n > 1 && perm.iter().enumerate().all(|(i, &p)| i == p) {
        perm.rotate_right(1);
    }
    perm
}

fn ip_scramble(s: &mut NetworkScenario, rng: &mut ChaCha8Rng) {
    let ips: Vec<String> = s.hosts.iter().map(|h| h.ip.clone()).collect();
    let perm = non_identity_permutation(ips.len(), rng);
    for (i, h) in s.hosts.iter_mut().enumerate() {
        h.ip = ips[perm[i]].clone();
    }
}

fn name_scramble(s: &mut NetworkScenario, rng: &mut ChaCha8Rng) {
    let n = s.hosts.len();

    let hostnames: Vec<String> = s.hosts.iter().map(|h| h.hostname.clone()).collect();
    let perm = non_identity_permutation(n, rng);
    for (i, h) in s.hosts.iter_mut().enumerate() {
        h.hostname = hostnames[perm[i]].clone();
    }

    let old_ids: Vec<HostId> = s.hosts.iter().map(|h| h.id.clone()).collect();
    let perm = non_identity_permutation(n, rng);
    let rename: BTreeMap<HostId, HostId> =
        (0..n).map(|i| (old_ids[i].clone(), old_ids[perm[i]].clone())).collect();
    let map = |id: &HostId| rename.get(id).cloned().unwrap_or_else(|| id.clone());

    for h in &mut s.hosts {
        h.id = map(&h.id);
        h.local_credentials = h
            .local_credentials
            .iter()
            .map(|c| match c {
                super::Credential::User { host } => super::Credential::User { host: map(host) },
                super::Credential::Admin { host } => super::Credential::Admin { host: map(host) },
                d @ super::Credential::Domain { .. } => d.clone(),
            })
            .collect();
    }
    for sn in &mut s.subnets {
        for m in &mut sn.members {
            *m = map(m);
        }
    }
    for fw in &mut s.firewall_rules {
        fw.src = map(&fw.src);
        fw.dst = map(&fw.dst);
    }
    for id in &mut s.internet_reachable {
        *id = map(id);
    }
    s.goal_host = map(&s.goal_host);
}

const ADDED_HOSTNAMES: [&str; 8] =
    ["nimbus", "orion", "pulsar", "quasar", "rigel", "sirius", "tycho", "vega"];

fn add_remove_hosts(s: &mut NetworkScenario, rng: &mut ChaCha8Rng) -> Result<(), ScenarioError> {
    let protected = s.protected_hosts();
    let foothold = s
        .foothold()
        .cloned()
        .ok_or_else(|| ScenarioError::Mutation("scenario has no initial access host".into()))?;
    let foothold_subnet = s
        .subnets
        .iter()
        .find(|sn| sn.members.contains(&foothold))
        .map(|sn| sn.id.clone())
        .ok_or_else(|| ScenarioError::Mutation("initial access host has no subnet".into()))?;

    let mut removable: Vec<HostId> = s
        .hosts
        .iter()
        .map(|h| h.id.clone())
        .filter(|id| !protected.contains(id))
        .collect();
    removable.shuffle(rng);

    let n_rem = rng.gen_range(0..=removable.len().min(4));
    let mut n_add = rng.gen_range(0..=4usize);
    if n_rem + n_add == 0 {
        n_add = 1;
    }

    // Never leave the initial access host alone in its subnet; local
    // discovery must keep at least one peer to report.
    let mut removed: BTreeSet<HostId> = BTreeSet::new();
    for cand in removable {
        if removed.len() == n_rem {
            break;
        }
        let sn = s.subnets.iter().find(|sn| sn.members.contains(&cand)).unwrap();
        if sn.id == foothold_subnet {
            let peers_left = sn
                .members
                .iter()
                .filter(|m| **m != foothold && **m != cand && !removed.contains(m))
                .count();
            if peers_left == 0 {
                continue;
            }
        }
        removed.insert(cand);
    }

    s.hosts.retain(|h| !removed.contains(&h.id));
    for sn in &mut s.subnets {
        sn.members.retain(|m| !removed.contains(m));
    }
    s.firewall_rules.retain(|fw| !removed.contains(&fw.src) && !removed.contains(&fw.dst));
    s.internet_reachable.retain(|id| !removed.contains(id));

    let mut next_index = s
        .hosts
        .iter()
        .filter_map(|h| h.id.as_str().strip_prefix("host").and_then(|n| n.parse::<u32>().ok()))
        .max()
        .unwrap_or(0)
        + 1;
    let taken_names: BTreeSet<String> = s.hosts.iter().map(|h| h.hostname.clone()).collect();
    let mut names: Vec<&str> =
        ADDED_HOSTNAMES.iter().copied().filter(|n| !taken_names.contains(*n)).collect();
    names.shuffle(rng);
    let subnet_ids: Vec<String> = s.subnets.iter().map(|sn| sn.id.clone()).collect();
    let service_menu: [&[ServiceTag]; 3] = [
        &[ServiceTag::Smb],
        &[ServiceTag::Winrm],
        &[ServiceTag::Smb, ServiceTag::Winrm],
    ];

    for k in 0..n_add {
        let id = HostId::new(format!("host{next_index}"));
        next_index += 1;
        let hostname = names
            .pop()
            .map(str::to_string)
            .unwrap_or_else(|| format!("node-{next_index}"));
        let subnet = subnet_ids[rng.gen_range(0..subnet_ids.len())].clone();
        let services = service_menu[rng.gen_range(0..service_menu.len())];
        let host = HostSpec {
            id: id.clone(),
            os: OsKind::Windows10,
            ip: format!("10.99.0.{}", 10 + k),
            hostname,
            services: services.iter().copied().collect(),
            local_credentials: BTreeSet::new(),
            is_domain_controller: false,
        };
        s.hosts.push(host);
        s.subnets.iter_mut().find(|sn| sn.id == subnet).unwrap().members.push(id.clone());
        if id != s.goal_host {
            s.firewall_rules.push(FirewallRule { src: id, dst: s.goal_host.clone() });
        }
    }
    Ok(())
}

fn move_subnet(s: &mut NetworkScenario, rng: &mut ChaCha8Rng) -> Result<(), ScenarioError> {
    if s.subnets.len() < 2 {
        return Err(ScenarioError::Mutation(
            "move_subnet needs at least two subnets to move between".into(),
        ));
    }
    let foothold = s
        .foothold()
        .cloned()
        .ok_or_else(|| ScenarioError::Mutation("scenario has no initial access host".into()))?;
    let mut critical = vec![foothold.clone()];
    if s.goal_host != foothold {
        critical.push(s.goal_host.clone());
    }

    for host in &critical {
        let current = s
            .subnets
            .iter()
            .position(|sn| sn.members.contains(host))
            .ok_or_else(|| ScenarioError::Mutation(format!("{host} has no subnet")))?;
        let options: Vec<usize> =
            (0..s.subnets.len()).filter(|i| *i != current).collect();
        let target = options[rng.gen_range(0..options.len())];
        s.subnets[current].members.retain(|m| m != host);
        s.subnets[target].members.push(host.clone());
    }

    // Keep consecutive critical-path hosts one hop apart.
    for pair in critical.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let same_subnet = s.subnets.iter().any(|sn| sn.members.contains(a) && sn.members.contains(b));
        let ruled = s.firewall_rules.iter().any(|fw| &fw.src == a && &fw.dst == b);
        if !same_subnet && !ruled {
            s.firewall_rules.push(FirewallRule { src: a.clone(), dst: b.clone() });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::canonical_scenario;

    #[test]
    fn mutation_is_deterministic() {
        let s = canonical_scenario();
        for kind in ALL_VARIATIONS {
            let a = mutate_scenario(&s, kind, 7).unwrap();
            let b = mutate_scenario(&s, kind, 7).unwrap();
            assert_eq!(a.to_json(), b.to_json(), "{kind}");
            let c = mutate_scenario(&s, kind, 8).unwrap();
            assert_ne!(a.to_json(), c.to_json(), "{kind} ignored its seed");
        }
    }

    #[test]
    fn ip_scramble_touches_only_ips() {
        let s = canonical_scenario();
        let m = mutate_scenario(&s, VariationKind::IpScramble, 7).unwrap();
        let old: BTreeSet<&str> = s.hosts.iter().map(|h| h.ip.as_str()).collect();
        let new: BTreeSet<&str> = m.hosts.iter().map(|h| h.ip.as_str()).collect();
        assert_eq!(old, new, "ip set must be permuted, not replaced");
        assert!(s.hosts.iter().zip(&m.hosts).any(|(a, b)| a.ip != b.ip));

        let mut stripped_old = s.clone();
        let mut stripped_new = m.clone();
        for h in stripped_old.hosts.iter_mut().chain(stripped_new.hosts.iter_mut()) {
            h.ip.clear();
        }
        assert_eq!(stripped_old, stripped_new, "non-ip fields must be untouched");
    }

    #[test]
    fn name_scramble_preserves_topology_labels_aside() {
        let s = canonical_scenario();
        let m = mutate_scenario(&s, VariationKind::NameScramble, 3).unwrap();
        assert_eq!(m.hosts.len(), s.hosts.len());
        let old_names: BTreeSet<&str> = s.hosts.iter().map(|h| h.hostname.as_str()).collect();
        let new_names: BTreeSet<&str> = m.hosts.iter().map(|h| h.hostname.as_str()).collect();
        assert_eq!(old_names, new_names);
        assert!(s.hosts.iter().zip(&m.hosts).any(|(a, b)| a.hostname != b.hostname));
        // The goal still names the single domain controller.
        assert!(m.host(&m.goal_host).unwrap().is_domain_controller);
        assert_eq!(m.firewall_rules.len(), s.firewall_rules.len());
    }

    #[test]
    fn add_remove_changes_host_count_but_keeps_protected() {
        let s = canonical_scenario();
        for seed in 0..8 {
            let m = mutate_scenario(&s, VariationKind::AddRemoveHosts, seed).unwrap();
            assert_ne!(m.hosts.len(), 0);
            assert!((m.hosts.len() as i64 - 12).abs() <= 8);
            for id in s.protected_hosts() {
                assert!(m.host(&id).is_some(), "protected {id} vanished at seed {seed}");
            }
            if m.hosts.len() == s.hosts.len() {
                // Same count is only acceptable when adds balanced removals.
                assert_ne!(m.to_json(), s.to_json());
            }
        }
    }

    #[test]
    fn move_subnet_relocates_critical_hosts() {
        let s = canonical_scenario();
        let m = mutate_scenario(&s, VariationKind::MoveSubnet, 11).unwrap();
        let subnet_of = |scn: &NetworkScenario, id: &HostId| {
            scn.subnets.iter().find(|sn| sn.members.contains(id)).unwrap().id.clone()
        };
        let foothold = s.foothold().unwrap().clone();
        assert_ne!(subnet_of(&s, &foothold), subnet_of(&m, &foothold));
        assert_ne!(subnet_of(&s, &s.goal_host), subnet_of(&m, &m.goal_host));
    }

    #[test]
    fn move_subnet_requires_multiple_subnets() {
        let mut s = canonical_scenario();
        let all: Vec<HostId> = s.hosts.iter().map(|h| h.id.clone()).collect();
        s.subnets = vec![super::super::SubnetSpec { id: "flat".into(), members: all }];
        assert!(matches!(
            mutate_scenario(&s, VariationKind::MoveSubnet, 1),
            Err(ScenarioError::Mutation(_))
        ));
    }
}
