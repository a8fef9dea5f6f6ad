//! Decision layer: meta-actions, observations, the five-component reward, termination and the
//! environment loop shared by training, search evaluation and benchmarking.

mod actions;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Vec2};
use crate::motion::{
    generate_plan, track_step, ControlCommand, FeasibilityLimits, Infeasible, NominalProfiles,
    Trajectory,
};
use crate::traffic_world::{
    ego_collides, ego_min_distance, spawn_scenario, ConfigError, Goal, ScenarioConfig, ScenarioKind,
    SurroundingBehavior, WorldState,
};

pub use actions::{action_set, ActionId};

/// Number of nearest agents encoded in an observation.
pub const K_NEAREST: usize = 6;
pub const EGO_FEATURES: usize = 5;
pub const OBS_DIM: usize = EGO_FEATURES + 4 * K_NEAREST;
/// Saturation range of relative positions, meters.
pub const OBS_RANGE: f64 = 100.0;
pub const EPISODE_TIMEOUT: f64 = 30.0;
pub const DECISION_PERIOD: f64 = 0.5;
/// Route distance that maps to 1 in the distance-to-goal feature at the T-intersection.
const GOAL_DISTANCE_SCALE: f64 = 50.0;
/// Lateral goal offsets are divided by this many lane widths.
const GOAL_LATERAL_LANES: f64 = 4.0;
/// Lane indices are normalized by the widest road, so one lane index maps to one feature
/// value regardless of how many lanes the current road has.
pub const REFERENCE_LANE_COUNT: usize = 5;
const GOAL_LATERAL_TOL: f64 = 0.2;
const GOAL_HEADING_TOL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Lateral offset of the ego with respect to the route, and heading error.
fn route_errors(world: &WorldState) -> (f64, f64, f64) {
    let (s, d) = world.map.ego_route.project(world.ego.position());
    let pose = world.map.ego_route.pose_at(s);
    (s, d, normalize_angle(world.ego.heading - pose.heading))
}

fn goal_distance(world: &WorldState) -> f64 {
    let map = &world.map;
    match (&map.goal, world.scenario.scenario_kind) {
        (Goal::Lane { lane }, _) => {
            (map.lanes[*lane].center_y - world.ego.y) / (GOAL_LATERAL_LANES * map.lane_width)
        }
        (Goal::Region { .. }, _) => {
            let (s, _, _) = route_errors(world);
            (map.goal_route_s.unwrap_or(s) - s) / GOAL_DISTANCE_SCALE
        }
    }
}

/// Fixed-length feature vector: five ego features followed by the [`K_NEAREST`] closest agents.
pub fn observe(world: &WorldState) -> Observation {
    let map = &world.map;
    let ego = &world.ego;
    let limit = world.scenario.speed_limit;
    let mut v = Vec::with_capacity(OBS_DIM);
    v.push(ego.speed / limit);
    let (_, d, heading_err) = route_errors(world);
    let lane = map.lane_at(ego.y);
    let offset = match world.scenario.scenario_kind {
        ScenarioKind::MultiLaneHighway => match lane {
            Some(i) => (ego.y - map.lanes[i].center_y) / map.lane_width,
            None => d / map.lane_width,
        },
        ScenarioKind::UnsignalizedTIntersection => d / map.lane_width,
    };
    v.push(offset.clamp(-1.0, 1.0));
    v.push(heading_err.clamp(-1.0, 1.0));
    v.push(match lane {
        Some(i) => (i as f64 / (REFERENCE_LANE_COUNT - 1) as f64).min(1.0),
        None => -1.0,
    });
    v.push(goal_distance(world).clamp(-1.0, 1.0));

    let ego_pos = ego.position();
    let ego_vel = ego.velocity();
    // (distance, kind, id, position, velocity, is_walker)
    let mut agents: Vec<(f64, u8, u32, Vec2, Vec2)> = world
        .svs
        .iter()
        .map(|sv| ((sv.position() - ego_pos).norm(), 0u8, sv.id, sv.position(), sv.velocity()))
        .chain(world.walkers.iter().map(|w| {
            let p = w.position();
            ((p - ego_pos).norm(), 1u8, w.id, p, Vec2::from_heading(w.heading) * w.speed)
        }))
        .collect();
    agents.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));
    for slot in 0..K_NEAREST {
        match agents.get(slot) {
            Some(&(dist, kind, _, pos, vel)) => {
                let rel = (pos - ego_pos).to_frame(ego.heading);
                let range_rate = if dist > 1e-9 {
                    (pos - ego_pos).dot(vel - ego_vel) / dist
                } else {
                    0.0
                };
                v.push(rel.x.clamp(-OBS_RANGE, OBS_RANGE) / OBS_RANGE);
                v.push(rel.y.clamp(-OBS_RANGE, OBS_RANGE) / OBS_RANGE);
                v.push(range_rate / limit);
                v.push(f64::from(kind));
            }
            None => v.extend_from_slice(&[1.0, 1.0, 0.0, 0.0]),
        }
    }
    Observation(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalStatus {
    Running,
    Collided,
    TaskComplete,
    Infeasible,
    Timeout,
}

impl TerminalStatus {
    pub fn is_done(self) -> bool {
        self != TerminalStatus::Running
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub w_success: f64,
    pub w_safety: f64,
    pub w_efficiency: f64,
    pub w_comfort: f64,
    pub w_interaction: f64,
    pub gamma: f64,
    /// Target speed of the efficiency term; the road speed limit when absent.
    pub v_target: Option<f64>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_success: 1.0,
            w_safety: 0.5,
            w_efficiency: 0.3,
            w_comfort: 0.1,
            w_interaction: 0.2,
            gamma: 0.99,
            v_target: None,
        }
    }
}

impl RewardConfig {
    pub fn is_valid(&self) -> bool {
        [
            self.w_success,
            self.w_safety,
            self.w_efficiency,
            self.w_comfort,
            self.w_interaction,
        ]
        .iter()
        .all(|w| *w >= 0.0)
            && (0.0..=1.0).contains(&self.gamma)
            && self.v_target.is_none_or(|v| v > 0.0)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            w_success: self.w_success * k,
            w_safety: self.w_safety * k,
            w_efficiency: self.w_efficiency * k,
            w_comfort: self.w_comfort * k,
            w_interaction: self.w_interaction * k,
            ..self.clone()
        }
    }

    /// Closed-form bounds on the per-decision total given the number of surrounding vehicles.
    /// Uses the actuator ranges for the comfort term and the emergency clamp for interaction.
    pub fn step_bounds(&self, sv_count: usize, emergency_decel: f64) -> (f64, f64) {
        use crate::traffic_world::{EGO_ACCEL_BOUNDS, EGO_STEER_BOUND};
        let da = EGO_ACCEL_BOUNDS.1 - EGO_ACCEL_BOUNDS.0;
        let ds = 2.0 * EGO_STEER_BOUND;
        let lo = -10.0 * self.w_success
            - 2.0 * self.w_safety
            - self.w_comfort * (0.5 * da + 0.2 * ds)
            - self.w_interaction * emergency_decel * sv_count as f64;
        let hi = 10.0 * self.w_success + self.w_efficiency;
        (lo, hi)
    }
}

/// JSON has no infinity; serde_json writes non-finite floats as `null`.
fn null_as_infinity<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// Quantities a reward is computed from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardInputs {
    /// Infinite with no other agent on the map; stored as JSON `null`.
    #[serde(deserialize_with = "null_as_infinity")]
    pub d_min: f64,
    pub offroad: bool,
    pub ego_speed: f64,
    pub delta_accel: f64,
    pub delta_steer: f64,
    /// Ego-attributed surrounding-vehicle accelerations considered by the interaction term.
    pub sv_accels: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub success: f64,
    pub safety: f64,
    pub efficiency: f64,
    pub comfort: f64,
    pub interaction: f64,
    pub total: f64,
    pub inputs: RewardInputs,
}

pub fn success_reward(status: TerminalStatus) -> f64 {
    match status {
        TerminalStatus::Collided => -10.0,
        TerminalStatus::TaskComplete => 10.0,
        TerminalStatus::Infeasible => -5.0,
        TerminalStatus::Running | TerminalStatus::Timeout => 0.0,
    }
}

pub fn safety_reward(d_min: f64, offroad: bool) -> f64 {
    let proximity = if d_min.is_finite() {
        -1.0 / (1.0 + 0.2 * d_min * d_min)
    } else {
        0.0
    };
    proximity + if offroad { -1.0 } else { 0.0 }
}

pub fn efficiency_reward(speed: f64, v_target: f64) -> f64 {
    (speed / v_target).clamp(0.0, 1.0)
}

pub fn comfort_reward(delta_accel: f64, delta_steer: f64) -> f64 {
    -0.5 * delta_accel.abs() - 0.2 * delta_steer.abs()
}

pub fn interaction_reward(sv_accels: &[f64]) -> f64 {
    sv_accels.iter().filter(|a| **a < 0.0).sum()
}

pub fn reward_from_inputs(
    inputs: RewardInputs,
    status: TerminalStatus,
    v_target: f64,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let success = success_reward(status);
    let safety = safety_reward(inputs.d_min, inputs.offroad);
    let efficiency = efficiency_reward(inputs.ego_speed, v_target);
    let comfort = comfort_reward(inputs.delta_accel, inputs.delta_steer);
    let interaction = interaction_reward(&inputs.sv_accels);
    let total = cfg.w_success * success
        + cfg.w_safety * safety
        + cfg.w_efficiency * efficiency
        + cfg.w_comfort * comfort
        + cfg.w_interaction * interaction;
    RewardBreakdown {
        success,
        safety,
        efficiency,
        comfort,
        interaction,
        total,
        inputs,
    }
}

fn v_target(world: &WorldState, cfg: &RewardConfig) -> f64 {
    cfg.v_target.unwrap_or(world.scenario.speed_limit)
}

fn is_offroad(world: &WorldState) -> bool {
    !world.map.drivable.contains_box(&world.ego.bounding_box())
}

/// Reward of one transition evaluated on its end state only.
pub fn compute_reward(
    prev: &WorldState,
    _action: ActionId,
    next: &WorldState,
    status: TerminalStatus,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let mut stats = PeriodStats::new(prev);
    stats.record(next);
    stats.finish(prev, next, status, cfg)
}

/// Accumulates the period quantities of the reward over several intermediate worlds.
#[derive(Clone, Debug)]
pub struct PeriodStats {
    d_min: f64,
    offroad: bool,
    worst: BTreeMap<u32, f64>,
}

impl PeriodStats {
    pub fn new(_start: &WorldState) -> Self {
        Self {
            d_min: f64::INFINITY,
            offroad: false,
            worst: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, world: &WorldState) {
        self.d_min = self.d_min.min(ego_min_distance(world));
        self.offroad |= is_offroad(world);
        for sv in world.svs.iter().filter(|sv| sv.ego_attributed) {
            let e = self.worst.entry(sv.id).or_insert(sv.accel);
            *e = e.min(sv.accel);
        }
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn finish(
        self,
        prev: &WorldState,
        next: &WorldState,
        status: TerminalStatus,
        cfg: &RewardConfig,
    ) -> RewardBreakdown {
        let inputs = RewardInputs {
            d_min: self.d_min,
            offroad: self.offroad,
            ego_speed: next.ego.speed,
            delta_accel: next.ego.accel - prev.ego.accel,
            delta_steer: next.ego.steer - prev.ego.steer,
            sv_accels: self.worst.into_values().collect(),
        };
        reward_from_inputs(inputs, status, v_target(next, cfg), cfg)
    }
}

/// Whether the episode goal holds in `world`.
pub fn goal_reached(world: &WorldState) -> bool {
    match &world.map.goal {
        Goal::Lane { lane } => {
            let center = world.map.lanes[*lane].center_y;
            let heading_err = normalize_angle(world.ego.heading - world.map.lanes[*lane].heading);
            (world.ego.y - center).abs() <= GOAL_LATERAL_TOL && heading_err.abs() < GOAL_HEADING_TOL
        }
        Goal::Region { min, max } => world.ego.bounding_box().corners().iter().all(|c| {
            c.x >= min.x && c.x <= max.x && c.y >= min.y && c.y <= max.y
        }),
    }
}

/// Status from individual flags, highest priority first.
pub fn resolve_status(collided: bool, goal: bool, feasible: bool, timed_out: bool) -> TerminalStatus {
    if collided {
        TerminalStatus::Collided
    } else if goal {
        TerminalStatus::TaskComplete
    } else if !feasible {
        TerminalStatus::Infeasible
    } else if timed_out {
        TerminalStatus::Timeout
    } else {
        TerminalStatus::Running
    }
}

pub fn terminal_status(world: &WorldState, planner_feasible: bool, elapsed: f64) -> TerminalStatus {
    resolve_status(
        ego_collides(world),
        goal_reached(world),
        planner_feasible,
        elapsed >= EPISODE_TIMEOUT - 1e-9,
    )
}

/// Everything the environment loop needs besides the world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub scenario: ScenarioConfig,
    pub reward: RewardConfig,
    pub profiles: NominalProfiles,
    pub limits: FeasibilityLimits,
    pub decision_period: f64,
    pub timeout: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::for_scenario(ScenarioConfig::highway())
    }
}

impl EnvConfig {
    pub fn for_scenario(scenario: ScenarioConfig) -> Self {
        Self {
            scenario,
            reward: RewardConfig::default(),
            profiles: NominalProfiles::default(),
            limits: FeasibilityLimits::default(),
            decision_period: DECISION_PERIOD,
            timeout: EPISODE_TIMEOUT,
        }
    }

    pub fn sim_steps_per_decision(&self) -> usize {
        ((self.decision_period * self.scenario.sim_frequency).round() as usize).max(1)
    }
}

/// Surrounding-vehicle sample recorded every simulation step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvSample {
    pub id: u32,
    pub accel: f64,
    pub attributed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSample {
    pub time: f64,
    pub ego_speed: f64,
    pub ego_accel: f64,
    pub ego_steer: f64,
    #[serde(deserialize_with = "null_as_infinity")]
    pub d_min: f64,
    pub svs: Vec<SvSample>,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub world: WorldState,
    pub reward: RewardBreakdown,
    pub status: TerminalStatus,
    pub feasible: bool,
    pub trajectory: Option<Trajectory>,
    pub infeasibility: Option<Infeasible>,
    pub samples: Vec<SimSample>,
}

fn sample_of(world: &WorldState) -> SimSample {
    SimSample {
        time: world.time,
        ego_speed: world.ego.speed,
        ego_accel: world.ego.accel,
        ego_steer: world.ego.steer,
        d_min: ego_min_distance(world),
        svs: world
            .svs
            .iter()
            .map(|sv| SvSample {
                id: sv.id,
                accel: sv.accel,
                attributed: sv.ego_attributed,
            })
            .collect(),
    }
}

/// Executes one decision: trajectory generation, feasibility, then one decision period of
/// closed-loop tracking in reactive traffic. Termination is checked after every simulation
/// step and the period stops early once the episode ends.
pub fn execute_action(world: &WorldState, action: ActionId, cfg: &EnvConfig) -> StepOutcome {
    let dt = world.dt();
    let planned = generate_plan(world, action, &cfg.limits, &cfg.profiles);
    let (plan, traj) = match planned {
        Ok(p) => p,
        Err(reason) => {
            let status = terminal_status(world, false, world.time);
            let mut stats = PeriodStats::new(world);
            stats.record(world);
            return StepOutcome {
                world: world.clone(),
                reward: stats.finish(world, world, status, &cfg.reward),
                status,
                feasible: false,
                trajectory: None,
                infeasibility: Some(reason),
                samples: Vec::new(),
            };
        }
    };
    let mut next = world.clone();
    let mut stats = PeriodStats::new(world);
    let mut samples = Vec::with_capacity(cfg.sim_steps_per_decision());
    let mut status = TerminalStatus::Running;
    let mut last = ControlCommand::default();
    let mut executed = 0.0;
    for k in 0..cfg.sim_steps_per_decision() {
        let t = k as f64 * dt;
        if let Ok(cmd) = track_step(&next.ego, &traj, t) {
            last = cmd;
        }
        next.advance(last.into(), dt, SurroundingBehavior::Reactive);
        executed = t + dt;
        stats.record(&next);
        samples.push(sample_of(&next));
        status = resolve_status(
            ego_collides(&next),
            goal_reached(&next),
            true,
            next.time >= cfg.timeout - 1e-9,
        );
        if status.is_done() {
            break;
        }
    }
    next.ego_plan = plan.ego_plan_after(executed);
    let reward = stats.finish(world, &next, status, &cfg.reward);
    StepOutcome {
        world: next,
        reward,
        status,
        feasible: true,
        trajectory: Some(traj),
        infeasibility: None,
        samples,
    }
}

/// Stateful wrapper around [`execute_action`] with reset-by-seed.
#[derive(Clone, Debug)]
pub struct DrivingEnv {
    pub config: EnvConfig,
    world: Option<WorldState>,
}

impl DrivingEnv {
    pub fn new(config: EnvConfig) -> Self {
        Self { config, world: None }
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation, ConfigError> {
        let world = spawn_scenario(&self.config.scenario.clone().with_seed(seed))?;
        let obs = observe(&world);
        self.world = Some(world);
        Ok(obs)
    }

    pub fn world(&self) -> &WorldState {
        self.world.as_ref().expect("reset before use")
    }

    pub fn action_count(&self) -> usize {
        action_set(self.config.scenario.scenario_kind).len()
    }

    pub fn step(&mut self, action: ActionId) -> StepOutcome {
        let outcome = execute_action(self.world(), action, &self.config);
        self.world = Some(outcome.world.clone());
        outcome
    }
}

/// Σ γᵗ rₜ.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic_world::ScenarioConfig;

    fn ego_only_highway() -> WorldState {
        let mut cfg = ScenarioConfig::highway();
        cfg.sv_count = 0;
        spawn_scenario(&cfg).unwrap()
    }

    #[test]
    fn infinite_distance_survives_json() {
        let out = execute_action(&ego_only_highway(), ActionId::MaintainLane, &EnvConfig::default());
        assert!(out.reward.inputs.d_min.is_infinite());
        let json = serde_json::to_string(&(&out.reward, &out.samples)).unwrap();
        let (reward, samples): (RewardBreakdown, Vec<SimSample>) = serde_json::from_str(&json).unwrap();
        assert_eq!(reward, out.reward);
        assert_eq!(samples, out.samples);
    }

    #[test]
    fn ego_only_observation_is_padded() {
        let w = ego_only_highway();
        let o = observe(&w);
        assert_eq!(o.0.len(), OBS_DIM);
        for k in 0..K_NEAREST {
            assert_eq!(&o.0[EGO_FEATURES + 4 * k..EGO_FEATURES + 4 * k + 4], &[1.0, 1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn single_vehicle_block() {
        let mut cfg = ScenarioConfig::highway();
        cfg.sv_count = 1;
        let mut w = spawn_scenario(&cfg).unwrap();
        w.svs[0].x = w.ego.x + 50.0;
        w.svs[0].y = w.ego.y;
        w.svs[0].heading = 0.0;
        w.svs[0].speed = w.ego.speed;
        let o = observe(&w);
        assert_eq!(&o.0[5..9], &[0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn observation_ignores_agent_order() {
        let w = spawn_scenario(&ScenarioConfig::highway().with_seed(4)).unwrap();
        let mut r = w.clone();
        r.svs.reverse();
        assert_eq!(observe(&w), observe(&r));
        assert!(observe(&w).0.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn reward_point_values() {
        assert_eq!(success_reward(TerminalStatus::Collided), -10.0);
        assert_eq!(success_reward(TerminalStatus::TaskComplete), 10.0);
        assert_eq!(success_reward(TerminalStatus::Infeasible), -5.0);
        assert_eq!(safety_reward(0.0, false), -1.0);
        assert!((safety_reward(2.0, false) + 1.0 / 1.8).abs() < 1e-12);
        assert_eq!(efficiency_reward(60.0 / 3.6, 120.0 / 3.6), 0.5);
        assert_eq!(efficiency_reward(40.0, 30.0), 1.0);
        assert_eq!(comfort_reward(0.0, 0.0), 0.0);
        assert_eq!(interaction_reward(&[-1.0, 0.5, -0.5]), -1.5);
    }

    #[test]
    fn linear_in_weights() {
        let inputs = RewardInputs {
            d_min: 3.0,
            offroad: true,
            ego_speed: 12.0,
            delta_accel: 1.0,
            delta_steer: -0.1,
            sv_accels: vec![-2.0, -0.3],
        };
        let cfg = RewardConfig::default();
        let a = reward_from_inputs(inputs.clone(), TerminalStatus::Collided, 30.0, &cfg);
        let b = reward_from_inputs(inputs, TerminalStatus::Collided, 30.0, &cfg.scaled(3.0));
        assert!((b.total - 3.0 * a.total).abs() < 1e-12);
        assert_eq!(a.safety, b.safety);
    }

    #[test]
    fn priority_order() {
        assert_eq!(resolve_status(true, true, false, true), TerminalStatus::Collided);
        assert_eq!(resolve_status(false, true, false, true), TerminalStatus::TaskComplete);
        assert_eq!(resolve_status(false, false, false, true), TerminalStatus::Infeasible);
        assert_eq!(resolve_status(false, false, true, true), TerminalStatus::Timeout);
        let w = ego_only_highway();
        assert_eq!(terminal_status(&w, true, 30.05), TerminalStatus::Timeout);
        assert_eq!(terminal_status(&w, true, 1.0), TerminalStatus::Running);
    }

    #[test]
    fn infeasible_action_ends_with_penalty() {
        let mut w = ego_only_highway();
        let top = w.map.lanes.len() - 1;
        w.ego.y = w.map.lanes[top].center_y;
        w.ego_plan.target_lane = Some(top);
        let cfg = EnvConfig::for_scenario(w.scenario.clone());
        let out = execute_action(&w, ActionId::LaneChangeLeft, &cfg);
        assert_eq!(out.status, TerminalStatus::Infeasible);
        assert_eq!(out.reward.success, -5.0);
        assert!(!out.feasible);
    }

    #[test]
    fn maintain_on_empty_road_keeps_lane() {
        let w = ego_only_highway();
        let cfg = EnvConfig::for_scenario(w.scenario.clone());
        let out = execute_action(&w, ActionId::MaintainLane, &cfg);
        assert_eq!(out.status, TerminalStatus::Running);
        assert!(out.world.ego.y.abs() < 0.1);
        assert_eq!(out.samples.len(), 10);
        assert!((out.world.time - 0.5).abs() < 1e-12);
    }

    #[test]
    fn discounted_return_matches_sum() {
        let r = [1.0, -2.0, 0.5, 3.0];
        let g: f64 = 0.9;
        let direct: f64 = r.iter().enumerate().map(|(t, x)| g.powi(t as i32) * x).sum();
        assert!((discounted_return(&r, g) - direct).abs() < 1e-12);
    }
}
