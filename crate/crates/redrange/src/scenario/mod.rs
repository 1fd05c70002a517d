//! Network scenario data model.
//!
//! A scenario is the complete ground-truth description of a target network:
//! hosts, subnet partition, firewall rules, the action rule table and the
//! game economy. Everything the world engine does is driven by this data, so
//! scenarios can be stored, validated, mutated and diffed as plain JSON.

mod canonical;
mod mutate;

pub use canonical::{canonical_scenario, stochastic_canonical, CANONICAL_JSON};
pub use mutate::{mutate_scenario, VariationKind, ALL_VARIATIONS};

use crate::params::{self, ServiceTag, ACTION_COUNT};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

// ---------------------------------------------------------------------------
// identifiers
// ---------------------------------------------------------------------------

/// Stable identifier of a host within a scenario document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HostId(pub String);

impl HostId {
    pub fn new(s: impl Into<String>) -> Self {
        HostId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for HostId {
    fn from(s: &str) -> Self {
        HostId(s.to_string())
    }
}

// ---------------------------------------------------------------------------
// hosts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OsKind {
    #[serde(rename = "windows-10")]
    Windows10,
    #[serde(rename = "windows-server-2016")]
    WindowsServer2016,
    #[serde(rename = "linux")]
    Linux,
}

impl fmt::Display for OsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OsKind::Windows10 => "windows-10",
            OsKind::WindowsServer2016 => "windows-server-2016",
            OsKind::Linux => "linux",
        };
        f.write_str(s)
    }
}

/// A credential the red side can come to hold. Host credentials open a
/// specific machine at a specific level; domain credentials identify a
/// directory account and are held network-wide.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Credential {
    User { host: HostId },
    Admin { host: HostId },
    Domain { account: String },
}

impl Credential {
    /// Host the credential opens, when it is host-scoped.
    pub fn target(&self) -> Option<&HostId> {
        match self {
            Credential::User { host } | Credential::Admin { host } => Some(host),
            Credential::Domain { .. } => None,
        }
    }
}

impl fmt::Display for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Credential::User { host } => write!(f, "user@{host}"),
            Credential::Admin { host } => write!(f, "admin@{host}"),
            Credential::Domain { account } => write!(f, "domain:{account}"),
        }
    }
}

impl FromStr for Credential {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(host) = s.strip_prefix("user@") {
            Ok(Credential::User { host: HostId::new(host) })
        } else if let Some(host) = s.strip_prefix("admin@") {
            Ok(Credential::Admin { host: HostId::new(host) })
        } else if let Some(account) = s.strip_prefix("domain:") {
            Ok(Credential::Domain { account: account.to_string() })
        } else {
            Err(format!("unparseable credential: {s}"))
        }
    }
}

impl Serialize for Credential {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Credential {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostSpec {
    pub id: HostId,
    pub os: OsKind,
    pub ip: String,
    pub hostname: String,
    pub services: BTreeSet<ServiceTag>,
    /// Credentials cached on this host, recoverable by credential dumping.
    pub local_credentials: BTreeSet<Credential>,
    pub is_domain_controller: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubnetSpec {
    pub id: String,
    pub members: Vec<HostId>,
}

/// One-directional allow rule between two hosts in different subnets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FirewallRule {
    pub src: HostId,
    pub dst: HostId,
}

// ---------------------------------------------------------------------------
// action rules
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tactic {
    Reconnaissance,
    Discovery,
    CredentialAccess,
    PrivilegeEscalation,
    LateralMovement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    Collect,
    CredentialGain,
    PrivilegeEscalate,
    LateralMove,
    ToolTransfer,
}

/// Where a required fact must already be filed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequiredScope {
    Source,
    Destination,
    Global,
}

/// Where the facts produced by a successful command are filed. The three
/// plain scopes mirror [`RequiredScope`]; the remaining ones name host sets
/// the engine resolves from ground truth at execution time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProducedScope {
    Source,
    Destination,
    Global,
    /// Hosts sharing the source host's subnet.
    SubnetPeers,
    /// Hosts one hop from the source (subnet peers plus firewall-allowed).
    ReachableHosts,
    /// Hosts opened by credentials cached on the source host.
    CredentialTargets,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactPattern<S> {
    pub slot: String,
    pub scope: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRule {
    pub index: u8,
    pub tactic: Tactic,
    pub technique: String,
    pub label: String,
    pub required: Vec<FactPattern<RequiredScope>>,
    pub produced: Vec<FactPattern<ProducedScope>>,
    pub effect: EffectKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<ServiceTag>,
}

impl ActionRule {
    pub fn requires_destination(&self) -> bool {
        self.required.iter().any(|p| p.scope == RequiredScope::Destination)
    }
}

// ---------------------------------------------------------------------------
// game economy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorthRule {
    pub slot: String,
    /// Reward added per newly collected instance of the slot.
    pub worth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub goal_worth: f64,
    pub step_cost: f64,
    pub max_steps: u32,
    pub intermediate_worths: Vec<WorthRule>,
}

// ---------------------------------------------------------------------------
// scenario
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub hosts: Vec<HostSpec>,
    pub subnets: Vec<SubnetSpec>,
    pub firewall_rules: Vec<FirewallRule>,
    /// Hosts with an internet-facing surface. The first entry is the initial
    /// access point where the red side starts with one implant.
    pub internet_reachable: Vec<HostId>,
    pub goal_host: HostId,
    pub action_rules: Vec<ActionRule>,
    pub game: GameConfig,
    /// Per-action success probability; actions not listed succeed always.
    pub success_rates: BTreeMap<u8, f64>,
}

impl NetworkScenario {
    pub fn host(&self, id: &HostId) -> Option<&HostSpec> {
        self.hosts.iter().find(|h| &h.id == id)
    }

    /// Initial access host, if declared and known.
    pub fn foothold(&self) -> Option<&HostId> {
        self.internet_reachable.first()
    }

    pub fn success_rate(&self, action: u8) -> f64 {
        self.success_rates.get(&action).copied().unwrap_or(1.0)
    }

    /// Hosts that must survive any structural mutation: the initial access
    /// point, the goal, and every host some cached credential opens.
    pub fn protected_hosts(&self) -> BTreeSet<HostId> {
        let mut keep = BTreeSet::new();
        if let Some(f) = self.foothold() {
            keep.insert(f.clone());
        }
        keep.insert(self.goal_host.clone());
        for h in &self.hosts {
            for c in &h.local_credentials {
                if let Some(t) = c.target() {
                    keep.insert(t.clone());
                }
            }
        }
        keep
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    /// Content hash used to tag traces and surrogate models.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_json().as_bytes());
        let d = h.finalize();
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Replace every action's success rate with `p`.
    pub fn with_uniform_success_rate(mut self, p: f64) -> Self {
        self.success_rates = (0..ACTION_COUNT as u8).map(|a| (a, p)).collect();
        self
    }
}

// ---------------------------------------------------------------------------
// loading and validation
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("{0}")]
    Mutation(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { path: path.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  {}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

/// Parse a scenario document and reject it unless validation is clean.
pub fn load_scenario(json: &str) -> Result<NetworkScenario, ScenarioError> {
    let s: NetworkScenario = serde_json::from_str(json)?;
    let report = validate_scenario(&s);
    if report.is_empty() {
        Ok(s)
    } else {
        Err(ScenarioError::Invalid(report))
    }
}

pub fn load_scenario_path(path: &Path) -> Result<NetworkScenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    load_scenario(&text)
}

/// Check structural consistency. An empty report means the document can be
/// handed to the world engine.
pub fn validate_scenario(s: &NetworkScenario) -> ValidationReport {
    let mut r = ValidationReport::default();

    if s.hosts.is_empty() {
        r.push("hosts", "scenario declares no hosts");
    }
    let mut ids = BTreeSet::new();
    let mut ips = BTreeSet::new();
    let mut hostnames = BTreeSet::new();
    for h in &s.hosts {
        if !ids.insert(&h.id) {
            r.push(format!("hosts.{}", h.id), "duplicate host id");
        }
        if !ips.insert(&h.ip) {
            r.push(format!("hosts.{}.ip", h.id), format!("duplicate ip {}", h.ip));
        }
        if !hostnames.insert(&h.hostname) {
            r.push(format!("hosts.{}.hostname", h.id), format!("duplicate hostname {}", h.hostname));
        }
    }
    let dc_count = s.hosts.iter().filter(|h| h.is_domain_controller).count();
    if !s.hosts.is_empty() && dc_count != 1 {
        r.push("hosts", format!("expected exactly one domain controller, found {dc_count}"));
    }

    let known = |id: &HostId| s.hosts.iter().any(|h| &h.id == id);

    let mut assigned: BTreeMap<&HostId, &str> = BTreeMap::new();
    let mut subnet_ids = BTreeSet::new();
    for sn in &s.subnets {
        if !subnet_ids.insert(&sn.id) {
            r.push(format!("subnets.{}", sn.id), "duplicate subnet id");
        }
        for m in &sn.members {
            if !known(m) {
                r.push(format!("subnets.{}", sn.id), format!("unknown member {m}"));
            }
            if let Some(prev) = assigned.insert(m, &sn.id) {
                r.push(
                    format!("subnets.{}", sn.id),
                    format!("host {m} already belongs to {prev}"),
                );
            }
        }
    }
    for h in &s.hosts {
        if !assigned.contains_key(&h.id) {
            r.push(format!("hosts.{}", h.id), "host is not a member of any subnet");
        }
    }

    for (i, fw) in s.firewall_rules.iter().enumerate() {
        if !known(&fw.src) {
            r.push(format!("firewall_rules[{i}]"), format!("unknown src {}", fw.src));
        }
        if !known(&fw.dst) {
            r.push(format!("firewall_rules[{i}]"), format!("unknown dst {}", fw.dst));
        }
        if fw.src == fw.dst {
            r.push(format!("firewall_rules[{i}]"), "rule from a host to itself");
        }
    }

    if s.internet_reachable.is_empty() {
        r.push("internet_reachable", "no internet-reachable host; initial access point missing");
    }
    for id in &s.internet_reachable {
        if !known(id) {
            r.push("internet_reachable", format!("unknown host {id}"));
        }
    }
    if !known(&s.goal_host) {
        r.push("goal_host", format!("unknown host {}", s.goal_host));
    }

    // Goal must be reachable from the entry surface through subnet and
    // firewall hops, otherwise the game cannot be won.
    if known(&s.goal_host) && s.internet_reachable.iter().any(known) {
        if !goal_reachable(s) {
            r.push("goal_host", "goal is unreachable from every internet-reachable host");
        }
    }

    validate_rules(s, &mut r);

    if s.game.goal_worth <= s.game.step_cost {
        r.push("game.goal_worth", "goal worth must exceed the step cost");
    }
    if s.game.step_cost < 0.0 {
        r.push("game.step_cost", "step cost must be non-negative");
    }
    if s.game.max_steps == 0 {
        r.push("game.max_steps", "episodes need at least one step");
    }
    for w in &s.game.intermediate_worths {
        if params::slot_index(&w.slot).is_none() {
            r.push("game.intermediate_worths", format!("unknown slot {}", w.slot));
        }
    }

    for (a, p) in &s.success_rates {
        if *a as usize >= ACTION_COUNT {
            r.push("success_rates", format!("action index {a} out of range"));
        }
        if !(0.0..=1.0).contains(p) {
            r.push("success_rates", format!("rate {p} for action {a} outside [0, 1]"));
        }
    }

    r
}

fn validate_rules(s: &NetworkScenario, r: &mut ValidationReport) {
    let mut seen = BTreeSet::new();
    for rule in &s.action_rules {
        let path = format!("action_rules[{}]", rule.index);
        if rule.index as usize >= ACTION_COUNT {
            r.push(&path, "action index out of range");
        }
        if !seen.insert(rule.index) {
            r.push(&path, "duplicate action index");
        }
        for p in &rule.required {
            if params::slot_index(&p.slot).is_none() {
                r.push(&path, format!("unknown required slot {}", p.slot));
            }
        }
        for p in &rule.produced {
            if params::slot_index(&p.slot).is_none() {
                r.push(&path, format!("unknown produced slot {}", p.slot));
            }
        }
        if rule.service.is_some() && !rule.requires_destination() {
            r.push(&path, "service precondition on a rule with no destination requirement");
        }
        if matches!(rule.effect, EffectKind::LateralMove | EffectKind::ToolTransfer)
            && !rule.requires_destination()
        {
            r.push(&path, "destination-directed effect without destination requirement");
        }
    }
    if s.action_rules.len() != ACTION_COUNT {
        r.push(
            "action_rules",
            format!("expected {ACTION_COUNT} rules, found {}", s.action_rules.len()),
        );
    }
}

fn goal_reachable(s: &NetworkScenario) -> bool {
    let subnet_of: BTreeMap<&HostId, &str> = s
        .subnets
        .iter()
        .flat_map(|sn| sn.members.iter().map(move |m| (m, sn.id.as_str())))
        .collect();
    let mut frontier: Vec<&HostId> = s.internet_reachable.iter().filter(|h| s.host(h).is_some()).collect();
    let mut seen: BTreeSet<&HostId> = frontier.iter().copied().collect();
    while let Some(h) = frontier.pop() {
        if h == &s.goal_host {
            return true;
        }
        for next in s.hosts.iter().map(|x| &x.id) {
            if seen.contains(next) {
                continue;
            }
            let same_subnet = subnet_of.get(h) == subnet_of.get(next) && subnet_of.contains_key(h);
            let allowed = same_subnet
                || s.firewall_rules.iter().any(|fw| &fw.src == h && &fw.dst == next);
            if allowed {
                seen.insert(next);
                frontier.push(next);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn credential_round_trip() {
        for text in ["user@host3", "admin@host6", "domain:ops-svc"] {
            let c: Credential = text.parse().unwrap();
            assert_eq!(c.to_string(), text);
        }
        assert!("root@host1".parse::<Credential>().is_err());
    }

    #[test]
    fn empty_scenario_rejected() {
        let s = NetworkScenario {
            hosts: vec![],
            subnets: vec![],
            firewall_rules: vec![],
            internet_reachable: vec![],
            goal_host: HostId::new("host6"),
            action_rules: vec![],
            game: GameConfig {
                goal_worth: 100.0,
                step_cost: 1.0,
                max_steps: 80,
                intermediate_worths: vec![],
            },
            success_rates: BTreeMap::new(),
        };
        let report = validate_scenario(&s);
        assert!(!report.is_empty());
        assert!(report.violations.iter().any(|v| v.path == "hosts"));
    }
}
