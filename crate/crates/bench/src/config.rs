use std::path::{Path, PathBuf};

use bida_core::decision_mdp::{EnvConfig, RewardConfig, DECISION_PERIOD, EPISODE_TIMEOUT};
use bida_core::motion::{FeasibilityLimits, NominalProfiles};
use bida_core::rl_training::TrainConfig;
use bida_core::search_tree::SearchConfig;
use bida_core::traffic_world::{ScenarioConfig, ScenarioKind};
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Surrounding-vehicle counts of the evaluation grid.
pub const HIGHWAY_DENSITIES: [usize; 3] = [5, 10, 20];
pub const T_DENSITIES: [usize; 3] = [4, 6, 8];
pub const EPISODES_PER_CELL: usize = 50;

/// Interaction weight of the T-intersection; the highway keeps the reward default.
pub const T_INTERACTION_WEIGHT: f64 = 0.5;

/// Discount shared by training and search in the shipped configurations.
pub const DEFAULT_GAMMA: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    /// Smallest accepted time-to-conflict at the T-intersection, s.
    pub gap_time: f64,
    /// IDM acceleration beyond which the highway rule agent accelerates or brakes, m/s².
    pub accel_band: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            gap_time: 4.0,
            accel_band: 0.5,
        }
    }
}

/// One experiment: scenario, reward, planners and training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    /// Scenario the networks are trained on; a reduced version of `scenario` when absent.
    pub training_scenario: Option<ScenarioConfig>,
    pub reward: RewardConfig,
    pub profiles: NominalProfiles,
    pub limits: FeasibilityLimits,
    pub decision_period: f64,
    pub timeout: f64,
    pub search: SearchConfig,
    pub train: TrainConfig,
    pub rule: RuleConfig,
    /// Decisions simulated by the random rollout of the plain tree search.
    pub rollout_depth: usize,
    pub episodes: usize,
    /// Episode `i` uses scenario seed `seed + i`.
    pub seed: u64,
    /// Directory holding `policy.json` and `value.json`, relative to the config file.
    pub checkpoints: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_kind(ScenarioKind::MultiLaneHighway)
    }
}

impl ExperimentConfig {
    pub fn for_kind(kind: ScenarioKind) -> Self {
        let train = TrainConfig {
            gamma: DEFAULT_GAMMA,
            policy_lr: 1e-3,
            total_steps: 30_000,
            target_entropy_ratio: 0.1,
            ..TrainConfig::default()
        };
        let search = SearchConfig {
            gamma: DEFAULT_GAMMA,
            ..SearchConfig::default()
        };
        let mut reward = RewardConfig::default();
        if kind == ScenarioKind::UnsignalizedTIntersection {
            reward.w_interaction = T_INTERACTION_WEIGHT;
        }
        Self {
            scenario: ScenarioConfig::for_kind(kind),
            training_scenario: None,
            reward,
            profiles: NominalProfiles::default(),
            limits: FeasibilityLimits::default(),
            decision_period: DECISION_PERIOD,
            timeout: EPISODE_TIMEOUT,
            search,
            train,
            rule: RuleConfig::default(),
            rollout_depth: 10,
            episodes: EPISODES_PER_CELL,
            seed: 10_000,
            checkpoints: None,
        }
    }

    pub fn kind(&self) -> ScenarioKind {
        self.scenario.scenario_kind
    }

    pub fn with_sv_count(mut self, n: usize) -> Self {
        self.scenario.sv_count = n;
        self
    }

    pub fn env(&self) -> EnvConfig {
        self.env_for(self.scenario.clone())
    }

    pub fn training_env(&self) -> EnvConfig {
        self.env_for(
            self.training_scenario
                .clone()
                .unwrap_or_else(|| lite_scenario(self.kind())),
        )
    }

    fn env_for(&self, scenario: ScenarioConfig) -> EnvConfig {
        EnvConfig {
            scenario,
            reward: self.reward.clone(),
            profiles: self.profiles.clone(),
            limits: self.limits.clone(),
            decision_period: self.decision_period,
            timeout: self.timeout,
        }
    }

    /// Search settings with the decision period and discount taken from the experiment.
    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            decision_period: self.decision_period,
            gamma: self.train.gamma,
            ..self.search.clone()
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let cfg = |m: String| Err(BenchError::Config(m));
        if let Err(e) = self.scenario.validate() {
            return cfg(e.to_string());
        }
        if let Some(t) = &self.training_scenario {
            if let Err(e) = t.validate() {
                return cfg(format!("training scenario: {e}"));
            }
            if t.scenario_kind != self.kind() {
                return cfg("training scenario kind differs from the evaluation scenario".into());
            }
        }
        if !self.reward.is_valid() {
            return cfg("reward weights must be non-negative and gamma in [0, 1]".into());
        }
        if !(self.decision_period > 0.0) || !(self.timeout > 0.0) {
            return cfg("decision_period and timeout must be positive".into());
        }
        if let Err(e) = self.search_config().validate() {
            return cfg(e.to_string());
        }
        if let Err(e) = self.train.validate() {
            return cfg(e.to_string());
        }
        if !(self.rule.gap_time > 0.0) || !(self.rule.accel_band >= 0.0) {
            return cfg("rule gap_time must be positive and accel_band non-negative".into());
        }
        Ok(())
    }

    /// Reads a JSON config; relative checkpoint paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = &cfg.checkpoints {
            if dir.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.checkpoints = Some(base.join(dir));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Reduced training scenarios: three highway lanes with five vehicles, or four at the T.
pub fn lite_scenario(kind: ScenarioKind) -> ScenarioConfig {
    let mut s = ScenarioConfig::for_kind(kind);
    match kind {
        ScenarioKind::MultiLaneHighway => {
            s.lane_count = 3;
            s.sv_count = 5;
        }
        ScenarioKind::UnsignalizedTIntersection => s.sv_count = 4,
    }
    s
}

pub fn densities(kind: ScenarioKind) -> [usize; 3] {
    match kind {
        ScenarioKind::MultiLaneHighway => HIGHWAY_DENSITIES,
        ScenarioKind::UnsignalizedTIntersection => T_DENSITIES,
    }
}
