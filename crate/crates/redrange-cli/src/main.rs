//! Command-line driver tying the range together: scenario tooling, direct
//! and surrogate training, machine estimation, the unified loop, evaluation,
//! mutation, and report emission. Every run folder gets a manifest that
//! pins the config, seed, and tool version needed to reproduce it.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use redrange::agents::{self, evaluate, train, Hyper, Policy, TrainOptions};
use redrange::embeddings::{EmbeddingConfig, EmbeddingKind, ALL_EMBEDDINGS};
use redrange::env::WorldEnv;
use redrange::scenario::{load_scenario_path, mutate_scenario, NetworkScenario, VariationKind};
use redrange::seeds;
use redrange::simgen::{build_fsm, FsmEnv, FsmModel, TraceStore};
use redrange::unified_loop::{run_unified_loop, LoopConfig};
use redrange::world::{optimal_return_oracle, CompiledScenario};
use serde_json::json;
use std::cell::RefCell;
use std::path::{Path, PathBuf};
use std::rc::Rc;

#[derive(Parser)]
#[command(name = "redrange", version, about = "Self-contained training range for red-team RL agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scenario document tooling.
    Scenario {
        #[command(subcommand)]
        op: ScenarioOp,
    },
    /// Print the optimal action chain and its return.
    Oracle { file: PathBuf },
    /// Train an agent in the world, recording every transition it sees.
    TrainE(TrainEArgs),
    /// Estimate a finite-state machine from recorded traces.
    GenSim(GenSimArgs),
    /// Train an agent inside an estimated machine.
    TrainS(TrainSArgs),
    /// Run the unified loop: collect, estimate, train, evaluate, repeat.
    Loop(LoopArgs),
    /// Evaluate a saved policy greedily in the world.
    Eval(EvalArgs),
    /// Write a structural variation of a scenario.
    Mutate(MutateArgs),
    /// Emit CSV and JSON report files for a finished loop run.
    GenReport { run_dir: PathBuf },
}

#[derive(Subcommand)]
enum ScenarioOp {
    /// Parse and validate a scenario document.
    Validate { file: PathBuf },
}

#[derive(Args)]
struct TrainEArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "act")]
    embedding: EmbeddingKind,
    #[arg(long, default_value = "dqn")]
    algo: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to a seed-stamped folder under the run root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training episodes in the world.
    #[arg(long, default_value_t = 300)]
    episodes: u32,
}

#[derive(Args)]
struct GenSimArgs {
    /// Trace file written by train-e.
    traces: PathBuf,
    /// Scenario the traces were recorded against; supplies the game economy.
    #[arg(long)]
    scenario: PathBuf,
    /// Output path for the machine.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainSArgs {
    /// Machine file written by gen-sim.
    fsm: PathBuf,
    #[arg(long, default_value = "act")]
    embedding: EmbeddingKind,
    #[arg(long, default_value = "dqn")]
    algo: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Environment-step budget inside the machine.
    #[arg(long, default_value_t = 40_000)]
    steps: u64,
}

#[derive(Args)]
struct LoopArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "act")]
    embedding: EmbeddingKind,
    /// Algorithm for both the collecting and the surrogate trainer.
    #[arg(long)]
    algo: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on initial collection episodes.
    #[arg(long)]
    episodes: Option<u32>,
    /// Surrogate training step budget per iteration.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    iterations: Option<u32>,
    /// Satisfaction threshold on the world evaluation.
    #[arg(long)]
    r_star: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    policy: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Defaults to the embedding whose width matches the policy.
    #[arg(long)]
    embedding: Option<EmbeddingKind>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    episodes: u32,
}

#[derive(Args)]
struct MutateArgs {
    file: PathBuf,
    #[arg(long)]
    kind: VariationKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; defaults to a kind- and seed-stamped file under the run root.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Scenario { op: ScenarioOp::Validate { file } } => validate(&file),
        Command::Oracle { file } => oracle(&file),
        Command::TrainE(a) => train_e(a),
        Command::GenSim(a) => gen_sim(a),
        Command::TrainS(a) => train_s(a),
        Command::Loop(a) => run_loop(a),
        Command::Eval(a) => eval(a),
        Command::Mutate(a) => mutate(a),
        Command::GenReport { run_dir } => gen_report(&run_dir),
    }
}

fn load(path: &Path) -> Result<NetworkScenario> {
    load_scenario_path(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn validate(file: &Path) -> Result<()> {
    let s = load(file)?;
    println!("ok: {} hosts, {} subnets, {} action rules", s.hosts.len(), s.subnets.len(), s.action_rules.len());
    Ok(())
}

fn oracle(file: &Path) -> Result<()> {
    let s = load(file)?;
    let outcome = optimal_return_oracle(&s)?
        .ok_or_else(|| anyhow!("goal unreachable under full knowledge"))?;
    println!("return={} length={}", outcome.episode_return, outcome.chain.len());
    println!("chain={:?}", outcome.chain);
    Ok(())
}

fn train_e(a: TrainEArgs) -> Result<()> {
    let s = load(&a.scenario)?;
    let dir = run_dir(a.out.clone(), "train-e", a.seed)?;
    let scn = CompiledScenario::compile(&s)?;
    let store = Rc::new(RefCell::new(TraceStore::new(
        scn.content_hash().to_string(),
        EmbeddingConfig::for_scenario(&s),
    )));
    let mut env = WorldEnv::new(scn.clone(), a.embedding).with_recorder(store.clone());
    let mut trainer =
        agents::trainer_for(&a.algo, &env, &Hyper::default(), seeds::derive(a.seed, "train-e"))?;
    let mut returns = String::from("episode,return\n");
    for ep in 0..a.episodes {
        let r = trainer.train_episode(&mut env);
        returns.push_str(&format!("{ep},{r}\n"));
    }
    drop(env);
    let store = Rc::try_unwrap(store).expect("recorder released").into_inner();
    store.save(&dir.join("traces.jsonl"))?;
    std::fs::write(dir.join("returns.csv"), returns)?;
    let mut policy = trainer.policy();
    policy.save(&dir.join("policy.json"))?;
    let mut eval_env = WorldEnv::new(scn, a.embedding);
    let report = evaluate(&mut eval_env, &mut policy, 10, seeds::derive(a.seed, "train-e-eval"));
    manifest(
        &dir,
        "train-e",
        a.seed,
        json!({
            "scenario": a.scenario,
            "scenario_hash": s.content_hash(),
            "embedding": a.embedding.as_str(),
            "algo": a.algo,
            "episodes": a.episodes,
        }),
    )?;
    println!(
        "trained {} episodes; recorded {} transitions; greedy eval mean={:.1} success={:.2}",
        a.episodes,
        store.transition_count(),
        report.mean,
        report.success_ratio
    );
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn gen_sim(a: GenSimArgs) -> Result<()> {
    let store = TraceStore::load(&a.traces)
        .with_context(|| format!("loading traces {}", a.traces.display()))?;
    let s = load(&a.scenario)?;
    if store.provenance().scenario_hash != s.content_hash() {
        bail!(
            "traces were recorded against a different scenario (trace hash {}, scenario hash {})",
            store.provenance().scenario_hash,
            s.content_hash()
        );
    }
    let model = build_fsm(&store, &s.game)?;
    let cov = model.coverage();
    if let Some(parent) = a.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    model.save(&a.out)?;
    sibling_manifest(
        &a.out,
        "gen-sim",
        json!({
            "traces": a.traces,
            "scenario": a.scenario,
            "scenario_hash": s.content_hash(),
            "episodes": store.episode_count(),
        }),
    )?;
    println!(
        "estimated machine: {} states, {} pairs, {} observations -> {}",
        cov.states,
        cov.pairs,
        cov.observations,
        a.out.display()
    );
    Ok(())
}

fn train_s(a: TrainSArgs) -> Result<()> {
    let model = Rc::new(
        FsmModel::load(&a.fsm).with_context(|| format!("loading machine {}", a.fsm.display()))?,
    );
    let dir = run_dir(a.out.clone(), "train-s", a.seed)?;
    let mut env = FsmEnv::new(model, a.embedding);
    let opts = TrainOptions {
        max_env_steps: a.steps,
        eval_every_steps: 2_000,
        eval_episodes: 10,
        stop_at_eval_return: None,
        plateau: None,
    };
    let (policy, curve) =
        train(&a.algo, &mut env, &Hyper::default(), &opts, seeds::derive(a.seed, "train-s"))?;
    policy.save(&dir.join("policy.json"))?;
    curve.save_csv(&dir.join("s_curve.csv"))?;
    manifest(
        &dir,
        "train-s",
        a.seed,
        json!({
            "fsm": a.fsm,
            "embedding": a.embedding.as_str(),
            "algo": a.algo,
            "steps": a.steps,
        }),
    )?;
    let last = curve.points.last().map(|p| p.eval_return);
    match last {
        Some(e) => println!("trained {} machine steps; last eval {e:.1}", a.steps),
        None => println!("trained {} machine steps; no evaluation point fit the budget", a.steps),
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn run_loop(a: LoopArgs) -> Result<()> {
    let s = load(&a.scenario)?;
    let dir = run_dir(a.out.clone(), "loop", a.seed)?;
    let mut cfg = LoopConfig {
        embedding: a.embedding,
        run_dir: Some(dir.clone()),
        ..LoopConfig::default()
    };
    if let Some(algo) = &a.algo {
        cfg.e_algorithms = vec![algo.clone()];
        cfg.s_algorithms = vec![algo.clone()];
    }
    if let Some(episodes) = a.episodes {
        cfg.collect_cap = episodes;
    }
    if let Some(steps) = a.steps {
        cfg.s_max_steps = steps;
    }
    if let Some(iterations) = a.iterations {
        cfg.max_iterations = iterations;
    }
    if let Some(r_star) = a.r_star {
        cfg.r_star = r_star;
    }
    let (_, report) = run_unified_loop(&s, &cfg, a.seed)?;
    manifest(
        &dir,
        "loop",
        a.seed,
        json!({
            "scenario": a.scenario,
            "scenario_hash": s.content_hash(),
            "config": cfg,
        }),
    )?;
    println!(
        "decision={:?} iterations={} final_eval={:.1} e_episodes={}",
        report.decision,
        report.iterations.len(),
        report.final_eval_return,
        report.total_e_episodes
    );
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut policy = Policy::load(&a.policy)
        .with_context(|| format!("loading policy {}", a.policy.display()))?;
    let s = load(&a.scenario)?;
    let kind = match a.embedding {
        Some(k) => k,
        None => ALL_EMBEDDINGS
            .into_iter()
            .find(|k| k.dim() == policy.obs_len)
            .ok_or_else(|| anyhow!("no embedding matches policy width {}", policy.obs_len))?,
    };
    if kind.dim() != policy.obs_len {
        bail!("embedding {} is {} wide but the policy expects {}", kind.as_str(), kind.dim(), policy.obs_len);
    }
    let scn = CompiledScenario::compile(&s)?;
    let mut env = WorldEnv::new(scn, kind);
    let report = evaluate(&mut env, &mut policy, a.episodes, seeds::derive(a.seed, "eval"));
    let line = json!({
        "episodes": a.episodes,
        "embedding": kind.as_str(),
        "mean": report.mean,
        "min": report.min,
        "max": report.max,
        "success_ratio": report.success_ratio,
    });
    println!("{}", serde_json::to_string_pretty(&line)?);
    Ok(())
}

fn mutate(a: MutateArgs) -> Result<()> {
    let s = load(&a.file)?;
    let out = match a.out.clone() {
        Some(p) => p,
        None => {
            let stem = a
                .file
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("scenario");
            out_root().join(format!("{stem}.{}.{}.json", a.kind.as_str(), a.seed))
        }
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mutated = mutate_scenario(&s, a.kind, a.seed)?;
    std::fs::write(&out, mutated.to_json())?;
    sibling_manifest(
        &out,
        "mutate",
        json!({
            "file": a.file,
            "source_hash": s.content_hash(),
            "kind": a.kind.as_str(),
            "seed": a.seed,
            "result_hash": mutated.content_hash(),
        }),
    )?;
    println!("{}", out.display());
    Ok(())
}

fn gen_report(run_dir: &Path) -> Result<()> {
    let report_path = run_dir.join("report.json");
    let text = std::fs::read_to_string(&report_path)
        .with_context(|| format!("reading {}", report_path.display()))?;
    let report: serde_json::Value = serde_json::from_str(&text)?;
    let iterations = report["iterations"]
        .as_array()
        .context("report lists no iterations")?;

    let mut rows = String::from(
        "iteration,algorithm,eval_return,eval_success_ratio,s_steps,trace_transitions,\
         fsm_states,fsm_pairs,retry_episodes,decision\n",
    );
    let mut curves = String::from("iteration,steps,train_return,eval_return,ep_len\n");
    for it in iterations {
        rows.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            it["iteration"],
            it["algorithm"].as_str().unwrap_or(""),
            it["eval_return"],
            it["eval_success_ratio"],
            it["s_steps"],
            it["trace_transitions"],
            it["fsm"]["states"],
            it["fsm"]["pairs"],
            it["retry_episodes"],
            it["decision"].as_str().unwrap_or(""),
        ));
        let n = it["iteration"].as_u64().context("iteration number")?;
        for p in it["s_curve"]["points"].as_array().into_iter().flatten() {
            curves.push_str(&format!(
                "{n},{},{},{},{}\n",
                p["steps"], p["train_return"], p["eval_return"], p["episode_length"]
            ));
        }
    }
    std::fs::write(run_dir.join("iterations.csv"), rows)?;
    std::fs::write(run_dir.join("curves.csv"), curves)?;
    let summary = json!({
        "collect_episodes": report["collect_episodes"],
        "iterations": iterations.len(),
        "total_e_episodes": report["total_e_episodes"],
        "final_eval_return": report["final_eval_return"],
        "decision": report["decision"],
        "final_policy": report["final_policy"],
    });
    std::fs::write(
        run_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    println!(
        "wrote {}, {}, {}",
        run_dir.join("iterations.csv").display(),
        run_dir.join("curves.csv").display(),
        run_dir.join("summary.json").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// plumbing

fn out_root() -> PathBuf {
    std::env::var_os("REDRANGE_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn run_dir(explicit: Option<PathBuf>, command: &str, seed: u64) -> Result<PathBuf> {
    let dir = explicit.unwrap_or_else(|| out_root().join(format!("{command}-s{seed}")));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn manifest(dir: &Path, command: &str, seed: u64, config: serde_json::Value) -> Result<()> {
    write_manifest(&dir.join("manifest.json"), command, Some(seed), config)
}

/// Manifest for commands whose output is a single file rather than a folder.
fn sibling_manifest(artifact: &Path, command: &str, config: serde_json::Value) -> Result<()> {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    write_manifest(&artifact.with_file_name(name), command, None, config)
}

fn write_manifest(
    path: &Path,
    command: &str,
    seed: Option<u64>,
    config: serde_json::Value,
) -> Result<()> {
    let mut m = json!({
        "tool": "redrange",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    });
    if let Some(seed) = seed {
        m["seed"] = json!(seed);
    }
    std::fs::write(path, serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}
