//! Ground-truth world engine.
//!
//! The world executes the attack-knowledge game over a scenario: one step
//! chooses an action index, the C2 broadcasts that action through every hand
//! it holds against every destination the current knowledge can form, each
//! resulting command succeeds or fails independently, and successful
//! commands file new facts. Reward per step is collected worth minus the
//! step cost; the episode ends when a hand lands on the goal host or the
//! step budget runs out.

pub mod facts;
mod oracle;

pub use facts::{FactStore, HostIdx};
pub use oracle::{optimal_return_oracle, optimal_return_oracle_with_budget, OracleOutcome};

use crate::params::{self, slot, ServiceTag, ACTION_COUNT};
use crate::scenario::{
    validate_scenario, ActionRule, Credential, EffectKind, HostId, NetworkScenario, ProducedScope,
    RequiredScope, ValidationReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("scenario declares no usable initial access host")]
    FootholdMissing,
    #[error("scenario failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("episode is over; reset the world before stepping again")]
    EpisodeDone,
    #[error("action index {0} out of range")]
    UnknownAction(u8),
    #[error("search budget exhausted after {0} states")]
    BudgetExceeded(usize),
    #[error("forced outcome list has {have} entries, step needs {need}")]
    ForcedOutcomes { have: usize, need: usize },
}

// ---------------------------------------------------------------------------
// compiled scenario
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct CompiledRule {
    rule: ActionRule,
    required_src: Vec<u8>,
    required_dst: Vec<u8>,
    required_global: Vec<u8>,
    produced: Vec<(u8, ProducedScope)>,
}

/// Scenario indexed for execution: hosts by position, single-hop ground
/// truth reachability, rules by action index.
#[derive(Debug)]
pub struct CompiledScenario {
    scenario: NetworkScenario,
    index: BTreeMap<HostId, HostIdx>,
    subnet_of: Vec<usize>,
    reach: Vec<Vec<bool>>,
    shares: Vec<Vec<String>>,
    foothold: HostIdx,
    goal: HostIdx,
    rules: Vec<CompiledRule>,
    hash: String,
}

impl CompiledScenario {
    pub fn compile(s: &NetworkScenario) -> Result<Arc<Self>, WorldError> {
        let foothold_id = s.foothold().ok_or(WorldError::FootholdMissing)?.clone();
        if s.host(&foothold_id).is_none() {
            return Err(WorldError::FootholdMissing);
        }
        let report = validate_scenario(s);
        if !report.is_empty() {
            return Err(WorldError::Invalid(report));
        }

        let index: BTreeMap<HostId, HostIdx> =
            s.hosts.iter().enumerate().map(|(i, h)| (h.id.clone(), i as HostIdx)).collect();
        let n = s.hosts.len();

        let mut subnet_of = vec![usize::MAX; n];
        for (si, sn) in s.subnets.iter().enumerate() {
            for m in &sn.members {
                subnet_of[index[m] as usize] = si;
            }
        }

        let mut reach = vec![vec![false; n]; n];
        for a in 0..n {
            for b in 0..n {
                if a != b && subnet_of[a] == subnet_of[b] {
                    reach[a][b] = true;
                }
            }
        }
        for fw in &s.firewall_rules {
            reach[index[&fw.src] as usize][index[&fw.dst] as usize] = true;
        }

        let shares = s
            .hosts
            .iter()
            .map(|h| {
                let mut v = Vec::new();
                if h.services.contains(&ServiceTag::Smb) {
                    v.push("ADMIN$".to_string());
                    v.push("C$".to_string());
                }
                if h.is_domain_controller {
                    v.push("NETLOGON".to_string());
                    v.push("SYSVOL".to_string());
                }
                v
            })
            .collect();

        let mut rules: Vec<Option<CompiledRule>> = (0..ACTION_COUNT).map(|_| None).collect();
        for rule in &s.action_rules {
            let slot_of = |name: &str| params::slot_index(name).expect("validated slot name");
            let mut required_src = Vec::new();
            let mut required_dst = Vec::new();
            let mut required_global = Vec::new();
            for p in &rule.required {
                match p.scope {
                    RequiredScope::Source => required_src.push(slot_of(&p.slot)),
                    RequiredScope::Destination => required_dst.push(slot_of(&p.slot)),
                    RequiredScope::Global => required_global.push(slot_of(&p.slot)),
                }
            }
            let produced = rule.produced.iter().map(|p| (slot_of(&p.slot), p.scope)).collect();
            rules[rule.index as usize] = Some(CompiledRule {
                rule: rule.clone(),
                required_src,
                required_dst,
                required_global,
                produced,
            });
        }
        let rules = rules.into_iter().map(|r| r.expect("validated rule table")).collect();
        let foothold = index[&foothold_id];
        let goal = index[&s.goal_host];

        Ok(Arc::new(CompiledScenario {
            hash: s.content_hash(),
            index,
            subnet_of,
            reach,
            shares,
            foothold,
            goal,
            rules,
            scenario: s.clone(),
        }))
    }

    pub fn scenario(&self) -> &NetworkScenario {
        &self.scenario
    }

    pub fn content_hash(&self) -> &str {
        &self.hash
    }

    pub fn host_count(&self) -> usize {
        self.scenario.hosts.len()
    }

    pub fn id(&self, host: HostIdx) -> &HostId {
        &self.scenario.hosts[host as usize].id
    }

    pub fn foothold(&self) -> HostIdx {
        self.foothold
    }

    pub fn goal(&self) -> HostIdx {
        self.goal
    }

    pub fn rule(&self, action: u8) -> &ActionRule {
        &self.rules[action as usize].rule
    }

    pub fn subnet_of(&self, host: HostIdx) -> usize {
        self.subnet_of[host as usize]
    }

    /// Ground-truth single-hop reachability.
    pub fn can_reach(&self, from: HostIdx, to: HostIdx) -> bool {
        self.reach[from as usize][to as usize]
    }

    fn truth_service(&self, host: HostIdx, svc: ServiceTag) -> bool {
        self.scenario.hosts[host as usize].services.contains(&svc)
    }

    fn hostname(&self, host: HostIdx) -> &str {
        &self.scenario.hosts[host as usize].hostname
    }

    fn subnet_peers(&self, host: HostIdx) -> Vec<HostIdx> {
        let sn = self.subnet_of[host as usize];
        self.sorted_by_hostname(
            (0..self.host_count() as HostIdx)
                .filter(|&p| p != host && self.subnet_of[p as usize] == sn),
        )
    }

    fn one_hop_with_self(&self, host: HostIdx) -> Vec<HostIdx> {
        self.sorted_by_hostname(
            (0..self.host_count() as HostIdx)
                .filter(|&p| p == host || self.reach[host as usize][p as usize]),
        )
    }

    /// Tool output ordering: hosts sort by hostname, so relabeling a network
    /// reshuffles the order in which they enter the fact store.
    fn sorted_by_hostname(&self, it: impl Iterator<Item = HostIdx>) -> Vec<HostIdx> {
        let mut v: Vec<HostIdx> = it.collect();
        v.sort_by(|&a, &b| {
            self.hostname(a)
                .cmp(self.hostname(b))
                .then_with(|| self.id(a).cmp(self.id(b)))
        });
        v
    }

    /// Ground-truth instance values for a host-scoped slot.
    fn resolve(&self, slot_idx: u8, host: HostIdx) -> Vec<String> {
        let h = &self.scenario.hosts[host as usize];
        match slot_idx {
            slot::OS_VERSION => vec![h.os.to_string()],
            slot::IP_ADDRESS => vec![h.ip.clone()],
            slot::HOSTNAME => vec![h.hostname.clone()],
            slot::IMPLANT => vec!["sandcat".to_string()],
            slot::ADMIN_ACCESS => vec!["admin".to_string()],
            slot::USER_CREDENTIALS => vec![format!("user@{}", h.id)],
            slot::ADMIN_CREDENTIALS => vec![format!("admin@{}", h.id)],
            slot::SVC_SMB => self.svc_value(host, ServiceTag::Smb),
            slot::SVC_WINRM => self.svc_value(host, ServiceTag::Winrm),
            slot::SVC_SSH => self.svc_value(host, ServiceTag::Ssh),
            slot::SVC_RDP => self.svc_value(host, ServiceTag::Rdp),
            slot::NETWORK_SHARES => self.shares[host as usize].clone(),
            slot::STAGED_TOOL => vec!["sandcat-payload".to_string()],
            slot::ARP_TABLE => {
                self.subnet_peers(host).iter().map(|&p| self.scenario.hosts[p as usize].ip.clone()).collect()
            }
            slot::DNS_RECORDS => {
                self.subnet_peers(host).iter().map(|&p| self.hostname(p).to_string()).collect()
            }
            _ => Vec::new(),
        }
    }

    fn svc_value(&self, host: HostIdx, svc: ServiceTag) -> Vec<String> {
        if self.truth_service(host, svc) {
            vec!["up".to_string()]
        } else {
            Vec::new()
        }
    }

    /// Ground-truth instance values for a network-wide slot. The source host
    /// matters for credential material pulled out of its cache.
    fn resolve_global(&self, slot_idx: u8, src: HostIdx) -> Vec<String> {
        match slot_idx {
            slot::DOMAIN_NAME => vec!["ad.range.local".to_string()],
            slot::DOMAIN_USER_ACCOUNTS => self
                .scenario
                .hosts
                .iter()
                .filter(|h| h.os != crate::scenario::OsKind::Linux && !h.is_domain_controller)
                .map(|h| format!("u_{}", h.id))
                .collect(),
            slot::DOMAIN_ADMIN_ACCOUNTS => vec!["domadmin".to_string()],
            slot::DOMAIN_USER_CREDENTIAL => self.scenario.hosts[src as usize]
                .local_credentials
                .iter()
                .filter_map(|c| match c {
                    Credential::Domain { account } => Some(format!("domain:{account}")),
                    _ => None,
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// world state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Privilege {
    User,
    Admin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Hand {
    pub host: HostIdx,
    pub privilege: Privilege,
}

/// A command the C2 can emit right now: one action through one hand, aimed
/// at one destination when the action is destination-directed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommandInstance {
    pub action: u8,
    pub source: HostIdx,
    pub destination: Option<HostIdx>,
    /// Believed reachability of the destination, which may lag ground truth.
    pub dst_reachable: bool,
    /// Destination sits in a subnet where no hand currently lives.
    pub dst_in_new_subnet: bool,
    /// Bitset over the service-condition catalog: conditions this command
    /// needs that are believed met on the destination.
    pub satisfied_conditions: u8,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CommandOutcome {
    pub action: u8,
    pub source: HostIdx,
    pub destination: Option<HostIdx>,
    pub succeeded: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
    pub goal_reached: bool,
    pub new_instances: u32,
    pub outcomes: Vec<CommandOutcome>,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    scenario: Arc<CompiledScenario>,
    pub facts: FactStore,
    hands: Vec<Hand>,
    step_count: u32,
    episode_return: f64,
    goal_reached: bool,
    done: bool,
    rng: ChaCha8Rng,
}

/// Start an episode: one user-level hand on the initial access host, the
/// fact store seeded with that host's local facts.
pub fn reset(scenario: &Arc<CompiledScenario>, seed: u64) -> WorldState {
    let f = scenario.foothold();
    let mut facts = FactStore::new();
    for s in [slot::OS_VERSION, slot::IP_ADDRESS, slot::HOSTNAME, slot::IMPLANT] {
        for v in scenario.resolve(s, f) {
            facts.insert(f, s, v);
        }
    }
    WorldState {
        scenario: scenario.clone(),
        facts,
        hands: vec![Hand { host: f, privilege: Privilege::User }],
        step_count: 0,
        episode_return: 0.0,
        goal_reached: false,
        done: false,
        rng: ChaCha8Rng::seed_from_u64(seed),
    }
}

/// Convenience: compile and reset in one call.
pub fn reset_scenario(s: &NetworkScenario, seed: u64) -> Result<WorldState, WorldError> {
    Ok(reset(&CompiledScenario::compile(s)?, seed))
}

impl WorldState {
    pub fn scenario(&self) -> &Arc<CompiledScenario> {
        &self.scenario
    }

    pub fn hands(&self) -> &[Hand] {
        &self.hands
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn goal_reached(&self) -> bool {
        self.goal_reached
    }

    /// State identity for search and deduplication: hands plus facts,
    /// excluding counters and presentation-only flags.
    fn transition_key(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(256);
        for h in &self.hands {
            out.extend_from_slice(&h.host.to_le_bytes());
            out.push(matches!(h.privilege, Privilege::Admin) as u8);
        }
        out.push(0xff);
        self.facts.canonical_bytes(&mut out);
        // Drop the trailing last-new flags; they do not affect dynamics.
        out.truncate(out.len() - ACTION_COUNT);
        out
    }
}

fn requirements_met(
    facts: &FactStore,
    host: HostIdx,
    slots: &[u8],
) -> bool {
    slots.iter().all(|&s| facts.has(host, s))
}

/// Every command the C2 could emit from the current state, ordered by hand,
/// then action index, then destination discovery order.
pub fn executable_commands(ws: &WorldState) -> Vec<CommandInstance> {
    let scn = &ws.scenario;
    let mut out = Vec::new();
    let hand_subnets: Vec<usize> = ws.hands.iter().map(|h| scn.subnet_of(h.host)).collect();

    for hand in &ws.hands {
        for (action, cr) in scn.rules.iter().enumerate() {
            let action = action as u8;
            if !requirements_met(&ws.facts, hand.host, &cr.required_src) {
                continue;
            }
            if !cr.required_global.iter().all(|&s| ws.facts.has_global(s)) {
                continue;
            }
            if cr.rule.requires_destination() {
                for &dst in ws.facts.discovered() {
                    if dst == hand.host {
                        continue;
                    }
                    if !requirements_met(&ws.facts, dst, &cr.required_dst) {
                        continue;
                    }
                    let mut conditions = 0u8;
                    if let Some(svc) = cr.rule.service {
                        if !ws.facts.has(dst, svc.slot()) {
                            continue;
                        }
                        conditions |= 1 << svc.condition_bit();
                    }
                    out.push(CommandInstance {
                        action,
                        source: hand.host,
                        destination: Some(dst),
                        dst_reachable: ws.facts.believes_connected(hand.host, dst),
                        dst_in_new_subnet: !hand_subnets.contains(&scn.subnet_of(dst)),
                        satisfied_conditions: conditions,
                    });
                }
            } else {
                out.push(CommandInstance {
                    action,
                    source: hand.host,
                    destination: None,
                    dst_reachable: false,
                    dst_in_new_subnet: false,
                    satisfied_conditions: 0,
                });
            }
        }
    }
    out
}

/// Execute one broadcast step of the chosen action.
pub fn step(ws: &mut WorldState, action: u8) -> Result<StepResult, WorldError> {
    step_inner(ws, action, None)
}

/// Deterministic replay of a stochastic step: per-command success flags come
/// from `successes`, in command order, instead of the RNG. Commands whose
/// success rate is 1.0 or more skip the draw and consume no flag; see
/// [`pending_draws`] for how many flags a step needs.
pub fn step_forced(
    ws: &mut WorldState,
    action: u8,
    successes: &[bool],
) -> Result<StepResult, WorldError> {
    step_inner(ws, action, Some(successes))
}

/// How many success draws [`step`] would make for this action right now.
pub fn pending_draws(ws: &WorldState, action: u8) -> usize {
    if ws.scenario.scenario.success_rate(action) >= 1.0 {
        return 0;
    }
    executable_commands(ws).iter().filter(|c| c.action == action).count()
}

fn step_inner(
    ws: &mut WorldState,
    action: u8,
    forced: Option<&[bool]>,
) -> Result<StepResult, WorldError> {
    if ws.done {
        return Err(WorldError::EpisodeDone);
    }
    if action as usize >= ACTION_COUNT {
        return Err(WorldError::UnknownAction(action));
    }
    let scn = ws.scenario.clone();
    let game = &scn.scenario.game;
    let rate = scn.scenario.success_rate(action);

    let cmds: Vec<CommandInstance> =
        executable_commands(ws).into_iter().filter(|c| c.action == action).collect();

    if let Some(flags) = forced {
        let need = if rate >= 1.0 { 0 } else { cmds.len() };
        if flags.len() < need {
            return Err(WorldError::ForcedOutcomes { have: flags.len(), need });
        }
    }

    let mut outcomes = Vec::with_capacity(cmds.len());
    let mut new_instances = 0u32;
    let mut worth = 0.0;
    let mut draws = 0usize;

    for cmd in cmds {
        let mut ok = if rate >= 1.0 {
            true
        } else {
            let drawn = match forced {
                Some(flags) => flags[draws],
                None => ws.rng.gen::<f64>() < rate,
            };
            draws += 1;
            drawn
        };
        if ok {
            if let Some(dst) = cmd.destination {
                let cr = &scn.rules[action as usize];
                ok = scn.can_reach(cmd.source, dst)
                    && cr.rule.service.map_or(true, |svc| scn.truth_service(dst, svc));
            }
        }
        if ok {
            new_instances += apply_effects(ws, &scn, action, cmd.source, cmd.destination, &mut worth);
            if !ws.goal_reached && ws.hands.iter().any(|h| h.host == scn.goal()) {
                ws.goal_reached = true;
                worth += game.goal_worth;
            }
        }
        outcomes.push(CommandOutcome {
            action,
            source: cmd.source,
            destination: cmd.destination,
            succeeded: ok,
        });
    }

    ws.facts.set_last_new_instance(action, new_instances > 0);
    ws.step_count += 1;
    let reward = worth - game.step_cost;
    ws.episode_return += reward;
    if ws.goal_reached || ws.step_count >= game.max_steps {
        ws.done = true;
    }

    Ok(StepResult {
        reward,
        done: ws.done,
        goal_reached: ws.goal_reached,
        new_instances,
        outcomes,
    })
}

enum FactTarget {
    Host(HostIdx),
    Global,
}

fn apply_effects(
    ws: &mut WorldState,
    scn: &CompiledScenario,
    action: u8,
    src: HostIdx,
    dst: Option<HostIdx>,
    worth: &mut f64,
) -> u32 {
    let cr = &scn.rules[action as usize];

    let mut inserts: Vec<(FactTarget, u8, String)> = Vec::new();
    let mut learned: Vec<(HostIdx, HostIdx)> = Vec::new();

    for &(slot_idx, scope) in &cr.produced {
        match scope {
            ProducedScope::Source => {
                for v in scn.resolve(slot_idx, src) {
                    inserts.push((FactTarget::Host(src), slot_idx, v));
                }
            }
            ProducedScope::Destination => {
                let d = dst.expect("destination-directed rule");
                for v in scn.resolve(slot_idx, d) {
                    inserts.push((FactTarget::Host(d), slot_idx, v));
                }
            }
            ProducedScope::Global => {
                for v in scn.resolve_global(slot_idx, src) {
                    inserts.push((FactTarget::Global, slot_idx, v));
                }
            }
            ProducedScope::SubnetPeers => {
                for p in scn.subnet_peers(src) {
                    for v in scn.resolve(slot_idx, p) {
                        inserts.push((FactTarget::Host(p), slot_idx, v));
                    }
                    learned.push((src, p));
                }
            }
            ProducedScope::ReachableHosts => {
                for p in scn.one_hop_with_self(src) {
                    for v in scn.resolve(slot_idx, p) {
                        inserts.push((FactTarget::Host(p), slot_idx, v));
                    }
                    learned.push((src, p));
                }
            }
            ProducedScope::CredentialTargets => {
                for cred in &scn.scenario.hosts[src as usize].local_credentials {
                    match (cred, slot_idx) {
                        (Credential::User { host }, slot::USER_CREDENTIALS)
                        | (Credential::Admin { host }, slot::ADMIN_CREDENTIALS) => {
                            inserts.push((
                                FactTarget::Host(scn.index[host]),
                                slot_idx,
                                cred.to_string(),
                            ));
                        }
                        _ => {}
                    }
                }
            }
        }
    }

    let worth_of = |slot_idx: u8| -> f64 {
        scn.scenario
            .game
            .intermediate_worths
            .iter()
            .filter(|w| params::slot_index(&w.slot) == Some(slot_idx))
            .map(|w| w.worth)
            .sum()
    };

    let mut new = 0u32;
    for (target, slot_idx, v) in inserts {
        let fresh = match target {
            FactTarget::Host(h) => ws.facts.insert(h, slot_idx, v),
            FactTarget::Global => ws.facts.insert_global(slot_idx, v),
        };
        if fresh {
            new += 1;
            *worth += worth_of(slot_idx);
        }
    }
    for (a, b) in learned {
        ws.facts.learn_connectivity(a, b);
    }

    match cr.rule.effect {
        EffectKind::PrivilegeEscalate => {
            for hand in &mut ws.hands {
                if hand.host == src {
                    hand.privilege = Privilege::Admin;
                }
            }
        }
        EffectKind::LateralMove => {
            let d = dst.expect("destination-directed rule");
            if !ws.hands.iter().any(|h| h.host == d) {
                let privilege = if cr.required_dst.contains(&slot::ADMIN_CREDENTIALS) {
                    Privilege::Admin
                } else {
                    Privilege::User
                };
                ws.hands.push(Hand { host: d, privilege });
            }
        }
        _ => {}
    }

    new
}
