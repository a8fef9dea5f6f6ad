//! File-level implementations of the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use bida_core::decision_mdp::DrivingEnv;
use bida_core::rl_training::{evaluate_policy, train, Algorithm, EvalReport, TrainResult, EVAL_MAX_STEPS};
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentKind, Networks};
use crate::aggregate::{comparison_csv, episodes_csv, summarize, CellKey, CellSummary};
use crate::config::ExperimentConfig;
use crate::episode::{metrics_from_trace, run_episodes, EpisodeMetrics, EpisodeTrace};
use crate::replay;
use crate::BenchError;

/// Episodes of the final greedy evaluation after training.
pub const FINAL_EVAL_EPISODES: usize = 100;

fn write(path: &Path, contents: &str) -> Result<(), BenchError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| BenchError::io(path, e))
}

fn read(path: &Path) -> Result<String, BenchError> {
    fs::read_to_string(path).map_err(|e| BenchError::io(path, e))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub result: TrainResult,
    /// Greedy evaluation of the final policy on the training scenario.
    pub eval: EvalReport,
}

/// Trains on the experiment's training scenario without touching the filesystem.
pub fn train_networks(cfg: &ExperimentConfig, algorithm: Algorithm, seed: u64) -> Result<TrainOutcome, BenchError> {
    cfg.validate()?;
    let tc = bida_core::rl_training::TrainConfig {
        algorithm,
        ..cfg.train.clone()
    };
    let env = cfg.training_env();
    let make = || DrivingEnv::new(env.clone());
    let result = train(make, &tc, seed).map_err(|e| match e {
        bida_core::rl_training::TrainError::Config(m) => BenchError::Config(m),
        other => BenchError::Runtime(other.to_string()),
    })?;
    let eval = evaluate_policy(
        &mut make(),
        &result.policy,
        FINAL_EVAL_EPISODES,
        tc.eval_seed,
        tc.gamma,
        EVAL_MAX_STEPS,
    );
    Ok(TrainOutcome { result, eval })
}

pub fn curve_csv(result: &TrainResult) -> String {
    let mut s = String::from("step,seed,mean_return,success_rate,collision_rate\n");
    for p in &result.curve {
        s.push_str(&format!(
            "{},{},{:.6},{:.4},{:.4}\n",
            p.step, p.seed, p.mean_return, p.success_rate, p.collision_rate
        ));
    }
    s
}

/// `train`: writes policy.json, value.json, curve.csv, eval.json and the resolved config.
pub fn train_command(cfg: &ExperimentConfig, algorithm: Algorithm, seed: u64, out: &Path) -> Result<TrainOutcome, BenchError> {
    let outcome = train_networks(cfg, algorithm, seed)?;
    write(&out.join("policy.json"), &outcome.result.policy.to_json())?;
    write(&out.join("value.json"), &outcome.result.value.to_json())?;
    write(&out.join("curve.csv"), &curve_csv(&outcome.result))?;
    write(
        &out.join("eval.json"),
        &serde_json::to_string_pretty(&outcome.eval).expect("report serializes"),
    )?;
    write(&out.join("config.json"), &cfg.to_json())?;
    Ok(outcome)
}

/// Metadata stored next to the traces of one evaluation cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellManifest {
    pub key: CellKey,
    pub episodes: usize,
    /// Discount of the reported returns.
    pub gamma: f64,
}

pub fn cell_key(cfg: &ExperimentConfig, agent: AgentKind) -> CellKey {
    CellKey {
        scenario: cfg.kind(),
        sv_count: cfg.scenario.sv_count,
        agent,
    }
}

/// Runs one cell in memory.
pub fn evaluate_traces(
    cfg: &ExperimentConfig,
    agent: AgentKind,
    nets: Option<&Networks>,
) -> Result<Vec<EpisodeTrace>, BenchError> {
    cfg.validate()?;
    let agent = Agent::new(agent, cfg, nets)?;
    run_episodes(cfg, &agent)
}

pub fn load_networks(cfg: &ExperimentConfig, agent: AgentKind) -> Result<Option<Networks>, BenchError> {
    if !(agent.needs_policy() || agent.needs_value()) {
        return Ok(None);
    }
    let dir = cfg
        .checkpoints
        .as_ref()
        .ok_or_else(|| BenchError::Config(format!("agent {agent} needs a checkpoints directory")))?;
    Networks::load(dir).map(Some)
}

fn trace_path(out: &Path, episode: usize) -> PathBuf {
    out.join("traces").join(format!("episode_{episode:04}.jsonl"))
}

/// `evaluate`: traces/episode_NNNN.jsonl, cell.json, episodes.csv and summary.csv.
pub fn evaluate_command(
    cfg: &ExperimentConfig,
    agent: AgentKind,
    nets: Option<&Networks>,
    out: &Path,
) -> Result<CellSummary, BenchError> {
    let traces = evaluate_traces(cfg, agent, nets)?;
    for (i, t) in traces.iter().enumerate() {
        write(&trace_path(out, i), &t.to_jsonl())?;
    }
    let manifest = CellManifest {
        key: cell_key(cfg, agent),
        episodes: traces.len(),
        gamma: cfg.reward.gamma,
    };
    write(
        &out.join("cell.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    write(&out.join("config.json"), &cfg.to_json())?;
    // Everything below is derived from the files just written.
    let (summary, metrics) = load_cell(out)?;
    write(&out.join("episodes.csv"), &episodes_csv(&metrics)?)?;
    write(&out.join("summary.csv"), &comparison_csv(std::slice::from_ref(&summary))?)?;
    Ok(summary)
}

/// Re-derives a cell's metrics from its stored traces.
pub fn load_cell(dir: &Path) -> Result<(CellSummary, Vec<EpisodeMetrics>), BenchError> {
    let manifest: CellManifest = serde_json::from_str(&read(&dir.join("cell.json"))?)
        .map_err(|e| BenchError::Config(format!("{}: {e}", dir.join("cell.json").display())))?;
    let mut metrics = Vec::with_capacity(manifest.episodes);
    for i in 0..manifest.episodes {
        let path = trace_path(dir, i);
        let trace = EpisodeTrace::from_jsonl(&read(&path)?).map_err(|e| match e {
            BenchError::Parse { line, message } => BenchError::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?;
        metrics.push(metrics_from_trace(&trace, manifest.gamma));
    }
    Ok((summarize(manifest.key, &metrics), metrics))
}

/// `compare`: one table over all input cells.
pub fn compare_command(inputs: &[PathBuf], out: &Path) -> Result<String, BenchError> {
    let cells = inputs
        .iter()
        .map(|d| load_cell(d).map(|(s, _)| s))
        .collect::<Result<Vec<_>, _>>()?;
    let csv = comparison_csv(&cells)?;
    write(out, &csv)?;
    Ok(csv)
}

/// `replay`: text rendering, plus speed, min-distance and root-visit SVGs when asked.
pub fn replay_command(trace: &Path, svg_dir: Option<&Path>) -> Result<String, BenchError> {
    let t = EpisodeTrace::from_jsonl(&read(trace)?)?;
    if let Some(dir) = svg_dir {
        write(&dir.join("speed.svg"), &replay::speed_svg(&t))?;
        write(&dir.join("min_distance.svg"), &replay::min_distance_svg(&t))?;
        write(&dir.join("root_visits.svg"), &replay::root_visits_svg(&t))?;
    }
    Ok(replay::render_text(&t))
}
