//! Policy evaluation across network variations: mutate the scenario, stand
//! up a fresh world per run, and measure whether the policy still walks to
//! the goal. The unmutated scenario serves as the baseline distribution.

use crate::agents::Policy;
use crate::embeddings::EmbeddingKind;
use crate::env::{Env, WorldEnv};
use crate::scenario::{mutate_scenario, NetworkScenario, VariationKind};
use crate::seeds;
use crate::world::{optimal_return_oracle, CompiledScenario, WorldError};
use serde::Serialize;
use std::fmt;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("runs must be at least 1")]
    NoRuns,
    #[error("policy expects {want}-wide observations but {kind} embeds {got}")]
    EmbeddingMismatch { kind: EmbeddingKind, got: usize, want: usize },
    #[error("the baseline scenario admits no path to the goal")]
    Unreachable,
    #[error("report holds no episodes")]
    Empty,
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Greedy episodes under one label: a variation class or the baseline.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeSet {
    pub label: String,
    pub returns: Vec<f64>,
    pub goal_reached: Vec<bool>,
    pub lengths: Vec<u32>,
    /// Set when the variation could not be generated; the suite continues.
    pub error: Option<String>,
}

impl EpisodeSet {
    fn new(label: &str) -> Self {
        EpisodeSet {
            label: label.to_string(),
            returns: Vec::new(),
            goal_reached: Vec::new(),
            lengths: Vec::new(),
            error: None,
        }
    }

    pub fn success_ratio(&self) -> f64 {
        let hits = self.goal_reached.iter().filter(|&&g| g).count();
        hits as f64 / self.returns.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneralizationReport {
    pub embedding: EmbeddingKind,
    pub runs_per_variant: u32,
    /// Best achievable return on the baseline scenario; no episode anywhere
    /// in the family may beat it.
    pub return_bound: f64,
    pub baseline: EpisodeSet,
    pub variants: Vec<EpisodeSet>,
}

impl GeneralizationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), GenError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    fn sets(&self) -> impl Iterator<Item = &EpisodeSet> {
        std::iter::once(&self.baseline).chain(self.variants.iter())
    }
}

/// Evaluate a policy greedily across variation classes. Every run draws its
/// own mutation seed, so `runs` episodes per class probe `runs` different
/// sibling networks rather than replaying one.
pub fn run_generalization_suite(
    policy: &Policy,
    s: &NetworkScenario,
    embedding: EmbeddingKind,
    kinds: &[VariationKind],
    runs: u32,
    seed: u64,
) -> Result<GeneralizationReport, GenError> {
    if runs == 0 {
        return Err(GenError::NoRuns);
    }
    if embedding.dim() != policy.obs_len {
        return Err(GenError::EmbeddingMismatch {
            kind: embedding,
            got: embedding.dim(),
            want: policy.obs_len,
        });
    }
    let oracle = optimal_return_oracle(s)?.ok_or(GenError::Unreachable)?;

    let mut variants = Vec::new();
    for &kind in kinds {
        let mut set = EpisodeSet::new(kind.as_str());
        for run in 0..runs {
            let mutation_seed = seeds::derive_indexed(seed, kind.as_str(), run as u64);
            let mutated = match mutate_scenario(s, kind, mutation_seed) {
                Ok(m) => m,
                Err(e) => {
                    set.error = Some(e.to_string());
                    break;
                }
            };
            let scn = match CompiledScenario::compile(&mutated) {
                Ok(c) => c,
                Err(e) => {
                    set.error = Some(e.to_string());
                    break;
                }
            };
            let mut env = WorldEnv::new(scn, embedding);
            run_greedy(&mut env, policy, mutation_seed, &mut set);
        }
        variants.push(set);
    }

    let mut baseline = EpisodeSet::new("baseline");
    let base = CompiledScenario::compile(s)?;
    let mut env = WorldEnv::new(base, embedding);
    for ep in 0..runs * kinds.len().max(1) as u32 {
        run_greedy(&mut env, policy, seeds::derive_indexed(seed, "baseline", ep as u64), &mut baseline);
    }

    Ok(GeneralizationReport {
        embedding,
        runs_per_variant: runs,
        return_bound: oracle.episode_return,
        baseline,
        variants,
    })
}

fn run_greedy(env: &mut WorldEnv, policy: &Policy, seed: u64, set: &mut EpisodeSet) {
    let mut obs = env.reset(seed);
    let mut total = 0.0;
    let mut len = 0u32;
    loop {
        let step = env.step(policy.act(&obs));
        total += step.reward;
        len += 1;
        obs = step.obs;
        if step.done {
            break;
        }
    }
    set.returns.push(total);
    set.goal_reached.push(total > 0.0);
    set.lengths.push(len);
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub label: String,
    pub episodes: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub success_ratio: f64,
    /// No return in the set beats the baseline optimum.
    pub within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub return_bound: f64,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("label,episodes,mean,median,min,max,success_ratio,within_bound\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.label, r.episodes, r.mean, r.median, r.min, r.max, r.success_ratio, r.within_bound
            ));
        }
        out
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<18} {:>8} {:>9} {:>9} {:>9} {:>9} {:>8} {:>6}",
            "variant", "episodes", "mean", "median", "min", "max", "success", "bound"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<18} {:>8} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>7.0}% {:>6}",
                r.label,
                r.episodes,
                r.mean,
                r.median,
                r.min,
                r.max,
                r.success_ratio * 100.0,
                if r.within_bound { "ok" } else { "OVER" }
            )?;
        }
        Ok(())
    }
}

pub fn summarize(report: &GeneralizationReport) -> Result<Summary, GenError> {
    let mut rows = Vec::new();
    for set in report.sets() {
        if set.returns.is_empty() {
            continue;
        }
        let mut sorted = set.returns.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median =
            if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        rows.push(SummaryRow {
            label: set.label.clone(),
            episodes: n,
            mean: set.returns.iter().sum::<f64>() / n as f64,
            median,
            min: sorted[0],
            max: sorted[n - 1],
            success_ratio: set.success_ratio(),
            within_bound: sorted[n - 1] <= report.return_bound + 1e-9,
        });
    }
    if rows.is_empty() {
        return Err(GenError::Empty);
    }
    Ok(Summary { return_bound: report.return_bound, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{trainer_for, Hyper};
    use crate::scenario::{canonical_scenario, ALL_VARIATIONS};

    fn untrained_policy(embedding: EmbeddingKind) -> Policy {
        let s = canonical_scenario();
        let scn = CompiledScenario::compile(&s).unwrap();
        let env = WorldEnv::new(scn, embedding);
        let hyper = Hyper { hidden: vec![8], ..Hyper::default() };
        trainer_for("dqn", &env, &hyper, 0).unwrap().policy()
    }

    #[test]
    fn zero_runs_is_an_error() {
        let p = untrained_policy(EmbeddingKind::Act);
        let r =
            run_generalization_suite(&p, &canonical_scenario(), EmbeddingKind::Act, &[], 0, 1);
        assert!(matches!(r, Err(GenError::NoRuns)));
    }

    #[test]
    fn embedding_must_match_the_policy() {
        let p = untrained_policy(EmbeddingKind::Act);
        let r = run_generalization_suite(
            &p,
            &canonical_scenario(),
            EmbeddingKind::Tact,
            &ALL_VARIATIONS,
            1,
            1,
        );
        assert!(matches!(r, Err(GenError::EmbeddingMismatch { .. })));
    }

    #[test]
    fn suite_covers_every_variant_and_the_baseline() {
        let p = untrained_policy(EmbeddingKind::Act);
        let s = canonical_scenario();
        let report =
            run_generalization_suite(&p, &s, EmbeddingKind::Act, &ALL_VARIATIONS, 2, 9).unwrap();
        assert_eq!(report.return_bound, 92.0);
        assert_eq!(report.variants.len(), 4);
        for v in &report.variants {
            assert!(v.error.is_none(), "{}: {:?}", v.label, v.error);
            assert_eq!(v.returns.len(), 2);
            assert!(v.lengths.iter().all(|&l| l <= 80));
        }
        assert_eq!(report.baseline.returns.len(), 8);

        let summary = summarize(&report).unwrap();
        assert_eq!(summary.rows.len(), 5);
        assert!(summary.rows.iter().all(|r| r.within_bound));
        assert_eq!(summary.rows[0].label, "baseline");
        assert!(report.to_json().contains("return_bound"));
        assert!(summary.to_csv().starts_with("label,"));
    }

    #[test]
    fn empty_report_refuses_to_summarize() {
        let report = GeneralizationReport {
            embedding: EmbeddingKind::Act,
            runs_per_variant: 1,
            return_bound: 92.0,
            baseline: EpisodeSet::new("baseline"),
            variants: vec![],
        };
        assert!(matches!(summarize(&report), Err(GenError::Empty)));
    }
}
