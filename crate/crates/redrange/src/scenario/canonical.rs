//! Bundled twelve-host example network.

use super::{load_scenario, NetworkScenario};

/// The canonical scenario document shipped with the tool. The kill chain it
/// admits is tuned so the deterministic optimum takes exactly eight actions.
pub const CANONICAL_JSON: &str = include_str!("../../../../scenarios/fig4.json");

/// Deterministic variant of the bundled network: every action succeeds.
pub fn canonical_scenario() -> NetworkScenario {
    load_scenario(CANONICAL_JSON).expect("bundled scenario is valid")
}

/// Stochastic variant: every action succeeds with probability 0.8.
pub fn stochastic_canonical() -> NetworkScenario {
    canonical_scenario().with_uniform_success_rate(0.8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ACTION_COUNT;
    use crate::scenario::{OsKind, Tactic};

    #[test]
    fn canonical_loads_and_validates() {
        let s = canonical_scenario();
        assert_eq!(s.hosts.len(), 12);
        assert_eq!(s.subnets.len(), 3);
        assert_eq!(s.foothold().unwrap().as_str(), "host2");
        assert_eq!(s.goal_host.as_str(), "host6");
    }

    #[test]
    fn canonical_goal_host_is_the_domain_controller() {
        let s = canonical_scenario();
        let dc = s.host(&s.goal_host).unwrap();
        assert_eq!(dc.os, OsKind::WindowsServer2016);
        assert!(dc.is_domain_controller);
    }

    #[test]
    fn canonical_linux_hosts() {
        let s = canonical_scenario();
        let linux: Vec<&str> = s
            .hosts
            .iter()
            .filter(|h| h.os == OsKind::Linux)
            .map(|h| h.id.as_str())
            .collect();
        assert_eq!(linux, ["host1", "host9"]);
    }

    #[test]
    fn canonical_rule_table_matches_the_published_action_set() {
        let s = canonical_scenario();
        assert_eq!(s.action_rules.len(), ACTION_COUNT);
        let expect: [(u8, Tactic, &str); 16] = [
            (0, Tactic::Discovery, "T1135"),
            (1, Tactic::LateralMovement, "T1021"),
            (2, Tactic::LateralMovement, "T1021"),
            (3, Tactic::LateralMovement, "T1021"),
            (4, Tactic::LateralMovement, "T1021"),
            (5, Tactic::LateralMovement, "T1570"),
            (6, Tactic::LateralMovement, "T1570"),
            (7, Tactic::CredentialAccess, "T1003"),
            (8, Tactic::PrivilegeEscalation, "T1548"),
            (9, Tactic::LateralMovement, "T1021"),
            (10, Tactic::CredentialAccess, "T1110"),
            (11, Tactic::Discovery, "T1087"),
            (12, Tactic::Discovery, "T1018"),
            (13, Tactic::Discovery, "T1016"),
            (14, Tactic::Reconnaissance, "T1590"),
            (15, Tactic::LateralMovement, "T1021"),
        ];
        for (index, tactic, technique) in expect {
            let rule = &s.action_rules[index as usize];
            assert_eq!(rule.index, index);
            assert_eq!(rule.tactic, tactic, "action {index}");
            assert_eq!(rule.technique, technique, "action {index}");
        }
    }

    #[test]
    fn canonical_success_rates_are_deterministic() {
        let s = canonical_scenario();
        assert!((0..16).all(|a| s.success_rate(a) == 1.0));
        let st = stochastic_canonical();
        assert!((0..16).all(|a| st.success_rate(a) == 0.8));
    }

    #[test]
    fn canonical_round_trips_bit_exactly() {
        let s = canonical_scenario();
        let text = s.to_json();
        let reparsed = load_scenario(&text).unwrap();
        assert_eq!(s, reparsed);
        assert_eq!(text, reparsed.to_json());
    }
}
