//! Closed-loop episodes, their JSONL traces and the metrics derived from them.

use bida_core::decision_mdp::{execute_action, ActionId, RewardBreakdown, SimSample, TerminalStatus};
use bida_core::search_tree::RootEdgeSummary;
use bida_core::traffic_world::{spawn_scenario, VehicleState, WorldState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::Agent;
use crate::config::ExperimentConfig;
use crate::BenchError;

/// Deceleration below which an ego-attributed vehicle counts as emergency braking, m/s².
pub const INVASIVE_DECEL: f64 = -2.0;
/// Acceleration above which a braking excursion is over, m/s².
pub const INVASIVE_RECOVERY: f64 = -1.0;

const AGENT_RNG_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleSnapshot {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub accel: f64,
    pub attributed: bool,
}

impl From<&VehicleState> for VehicleSnapshot {
    fn from(v: &VehicleState) -> Self {
        Self {
            id: v.id,
            x: v.x,
            y: v.y,
            heading: v.heading,
            speed: v.speed,
            accel: v.accel,
            attributed: v.ego_attributed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkerSnapshot {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

/// One decision of one episode; one JSONL line. Agent states are taken after the period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceFrame {
    pub episode: usize,
    pub seed: u64,
    pub decision: usize,
    pub time: f64,
    pub action: ActionId,
    pub fallback: bool,
    pub feasible: bool,
    pub status: TerminalStatus,
    pub reward: RewardBreakdown,
    pub ego: VehicleSnapshot,
    pub svs: Vec<VehicleSnapshot>,
    pub walkers: Vec<WalkerSnapshot>,
    pub samples: Vec<SimSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<Vec<RootEdgeSummary>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub frames: Vec<TraceFrame>,
}

impl EpisodeTrace {
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for f in &self.frames {
            s.push_str(&serde_json::to_string(f).expect("frame serializes"));
            s.push('\n');
        }
        s
    }

    /// Parses one frame per non-empty line; errors carry the 1-based line number.
    pub fn from_jsonl(text: &str) -> Result<Self, BenchError> {
        let mut frames = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f = serde_json::from_str(line).map_err(|e| BenchError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            frames.push(f);
        }
        Ok(Self { frames })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub seed: u64,
    pub outcome: TerminalStatus,
    /// Episode start to task completion; only present for TaskComplete.
    pub completion_time: Option<f64>,
    pub collision: bool,
    pub invasive_actions: usize,
    pub min_distance: f64,
    pub discounted_return: f64,
    pub decisions: usize,
    pub fallbacks: usize,
}

/// Counts emergency-braking excursions caused by the ego.
///
/// An excursion starts when an ego-attributed vehicle drops below [`INVASIVE_DECEL`] and lasts
/// until that vehicle recovers above [`INVASIVE_RECOVERY`]; each counts once.
pub fn detect_invasive<'a>(samples: impl IntoIterator<Item = &'a SimSample>) -> usize {
    let mut braking: std::collections::BTreeSet<u32> = Default::default();
    let mut count = 0;
    for s in samples {
        for sv in &s.svs {
            if braking.contains(&sv.id) {
                if sv.accel > INVASIVE_RECOVERY {
                    braking.remove(&sv.id);
                }
            } else if sv.attributed && sv.accel < INVASIVE_DECEL {
                braking.insert(sv.id);
                count += 1;
            }
        }
    }
    count
}

/// Metrics recomputed from the frames alone.
pub fn metrics_from_trace(trace: &EpisodeTrace, gamma: f64) -> EpisodeMetrics {
    let frames = &trace.frames;
    let outcome = frames.last().map_or(TerminalStatus::Running, |f| f.status);
    let min_distance = frames
        .iter()
        .flat_map(|f| {
            f.samples
                .iter()
                .map(|s| s.d_min)
                .chain(std::iter::once(f.reward.inputs.d_min))
        })
        .fold(f64::INFINITY, f64::min);
    let rewards: Vec<f64> = frames.iter().map(|f| f.reward.total).collect();
    EpisodeMetrics {
        episode: frames.first().map_or(0, |f| f.episode),
        seed: frames.first().map_or(0, |f| f.seed),
        outcome,
        completion_time: (outcome == TerminalStatus::TaskComplete).then(|| frames.last().unwrap().time),
        collision: outcome == TerminalStatus::Collided,
        invasive_actions: detect_invasive(frames.iter().flat_map(|f| &f.samples)),
        min_distance,
        discounted_return: bida_core::decision_mdp::discounted_return(&rewards, gamma),
        decisions: frames.len(),
        fallbacks: frames.iter().filter(|f| f.fallback).count(),
    }
}

fn snapshot_walkers(world: &WorldState) -> Vec<WalkerSnapshot> {
    world
        .walkers
        .iter()
        .map(|w| WalkerSnapshot { id: w.id, x: w.x, y: w.y })
        .collect()
}

/// Runs episode `index` of the experiment to termination.
pub fn run_episode(cfg: &ExperimentConfig, agent: &Agent<'_>, index: usize) -> Result<EpisodeTrace, BenchError> {
    let seed = cfg.seed.wrapping_add(index as u64);
    let env = agent.env();
    let mut world = spawn_scenario(&env.scenario.clone().with_seed(seed)).map_err(|e| BenchError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ AGENT_RNG_SALT);
    let max_decisions = (env.timeout / env.decision_period).ceil() as usize + 1;
    let mut frames = Vec::new();
    for decision in 0..max_decisions {
        let d = agent.decide(&world, &mut rng)?;
        let out = execute_action(&world, d.action, env);
        let mut status = out.status;
        if decision + 1 == max_decisions && !status.is_done() {
            status = TerminalStatus::Timeout;
        }
        frames.push(TraceFrame {
            episode: index,
            seed,
            decision,
            time: out.world.time,
            action: d.action,
            fallback: d.fallback,
            feasible: out.feasible,
            status,
            reward: out.reward,
            ego: (&out.world.ego).into(),
            svs: out.world.svs.iter().map(Into::into).collect(),
            walkers: snapshot_walkers(&out.world),
            samples: out.samples,
            root: d.root,
        });
        if status.is_done() {
            break;
        }
        world = out.world;
    }
    Ok(EpisodeTrace { frames })
}

/// Worker count from `BIDA_THREADS`, defaulting to the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("BIDA_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `cfg.episodes` episodes in parallel; results are in episode order.
pub fn run_episodes(cfg: &ExperimentConfig, agent: &Agent<'_>) -> Result<Vec<EpisodeTrace>, BenchError> {
    if cfg.episodes == 0 {
        return Err(BenchError::Config("episodes must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| BenchError::Runtime(e.to_string()))?;
    pool.install(|| {
        (0..cfg.episodes)
            .into_par_iter()
            .map(|i| run_episode(cfg, agent, i))
            .collect()
    })
}
