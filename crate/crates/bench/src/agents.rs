//! Decision makers compared by the harness.

use std::fmt;
use std::str::FromStr;

use bida_core::decision_mdp::{action_set, observe, ActionId, EnvConfig};
use bida_core::neural::NetworkParams;
use bida_core::rl_training::{argmax, sample_categorical};
use bida_core::search_tree::{plan, DrivingModel, LeafEvaluator, RootEdgeSummary, SearchConfig, SearchError};
use bida_core::traffic_world::{
    ego_mobil_neighbors, ego_neighbor, evaluate_change, idm_acceleration, Goal, ScenarioKind,
    WorldState, FREE_ROAD_GAP, LANE_CHANGE_DURATION, VEHICLE_WIDTH,
};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, RuleConfig};
use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    /// Policy-guided tree search with value-network leaves.
    Bida,
    /// Same tree with uniform priors and random-rollout leaves.
    Mcts,
    /// Greedy action of the policy network.
    Policy,
    /// MOBIL on the highway, IDM with gap acceptance at the T-intersection.
    Rule,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::Bida, AgentKind::Mcts, AgentKind::Policy, AgentKind::Rule];

    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Bida => "BIDA",
            AgentKind::Mcts => "PlainMCTS",
            AgentKind::Policy => "RawPolicy",
            AgentKind::Rule => "RuleBased",
        }
    }

    pub fn needs_policy(self) -> bool {
        matches!(self, AgentKind::Bida | AgentKind::Policy)
    }

    pub fn needs_value(self) -> bool {
        self == AgentKind::Bida
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AgentKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bida" => Ok(AgentKind::Bida),
            "mcts" | "plainmcts" => Ok(AgentKind::Mcts),
            "policy" | "rawpolicy" => Ok(AgentKind::Policy),
            "rule" | "rulebased" => Ok(AgentKind::Rule),
            other => Err(BenchError::Config(format!("unknown agent '{other}'"))),
        }
    }
}

/// Trained networks used by the network-bearing agents.
#[derive(Clone, Debug)]
pub struct Networks {
    pub policy: NetworkParams,
    pub value: NetworkParams,
}

impl Networks {
    pub fn load(dir: &std::path::Path) -> Result<Self, BenchError> {
        let read = |name: &str| {
            let path = dir.join(name);
            NetworkParams::load(&path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
        };
        Ok(Self {
            policy: read("policy.json")?,
            value: read("value.json")?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: ActionId,
    /// Root edge statistics of the search agents.
    pub root: Option<Vec<RootEdgeSummary>>,
    /// The search root had no feasible action and the conservative fallback was used.
    pub fallback: bool,
}

impl Decision {
    fn plain(action: ActionId) -> Self {
        Self {
            action,
            root: None,
            fallback: false,
        }
    }
}

/// An agent bound to one experiment. Shared read-only across episode workers.
#[derive(Clone, Debug)]
pub struct Agent<'a> {
    pub kind: AgentKind,
    env: EnvConfig,
    search: SearchConfig,
    rule: RuleConfig,
    rollout_depth: usize,
    nets: Option<&'a Networks>,
    /// Sample the raw policy instead of taking its argmax.
    sample_policy: bool,
}

impl<'a> Agent<'a> {
    pub fn new(kind: AgentKind, cfg: &ExperimentConfig, nets: Option<&'a Networks>) -> Result<Self, BenchError> {
        if (kind.needs_policy() || kind.needs_value()) && nets.is_none() {
            return Err(BenchError::Config(format!("agent {kind} needs policy and value checkpoints")));
        }
        if let Some(n) = nets {
            let obs = bida_core::decision_mdp::OBS_DIM;
            let actions = action_set(cfg.kind()).len();
            if n.policy.input_dim() != obs || n.policy.output_dim() != actions {
                return Err(BenchError::Config(format!(
                    "policy network is {}→{}, scenario needs {obs}→{actions}",
                    n.policy.input_dim(),
                    n.policy.output_dim()
                )));
            }
            if n.value.input_dim() != obs || n.value.output_dim() != 1 {
                return Err(BenchError::Config("value network must map the observation to a scalar".into()));
            }
        }
        Ok(Self {
            kind,
            env: cfg.env(),
            search: cfg.search_config(),
            rule: cfg.rule.clone(),
            rollout_depth: cfg.rollout_depth,
            nets,
            sample_policy: false,
        })
    }

    /// Raw policy that samples its action distribution.
    pub fn sampling_policy(cfg: &ExperimentConfig, nets: &'a Networks) -> Result<Self, BenchError> {
        let mut a = Self::new(AgentKind::Policy, cfg, Some(nets))?;
        a.sample_policy = true;
        Ok(a)
    }

    pub fn env(&self) -> &EnvConfig {
        &self.env
    }

    pub fn decide<R: RngCore>(&self, world: &WorldState, rng: &mut R) -> Result<Decision, BenchError> {
        let kind = self.env.scenario.scenario_kind;
        match self.kind {
            AgentKind::Bida | AgentKind::Mcts => {
                let model = match (self.kind, self.nets) {
                    (AgentKind::Bida, Some(n)) => DrivingModel::new(
                        &self.env,
                        Some(&n.policy),
                        LeafEvaluator::Value(&n.value),
                        self.search.gamma,
                    ),
                    _ => DrivingModel::new(
                        &self.env,
                        None,
                        LeafEvaluator::RandomRollout {
                            depth: self.rollout_depth,
                        },
                        self.search.gamma,
                    ),
                };
                match plan(world.clone(), &model, &self.search, rng) {
                    Ok((a, trace)) => Ok(Decision {
                        action: ActionId::from_index(kind, a).expect("action index in range"),
                        root: Some(trace.root),
                        fallback: false,
                    }),
                    Err(SearchError::DegenerateRoot) => Ok(Decision {
                        action: ActionId::fallback(kind),
                        root: None,
                        fallback: true,
                    }),
                    Err(e) => Err(BenchError::Runtime(e.to_string())),
                }
            }
            AgentKind::Policy => {
                let n = self.nets.expect("checked at construction");
                let probs = n
                    .policy
                    .forward(&observe(world).0)
                    .map_err(|e| BenchError::Runtime(e.to_string()))?;
                let i = if self.sample_policy {
                    sample_categorical(&probs, rng)
                } else {
                    argmax(&probs)
                };
                Ok(Decision::plain(ActionId::from_index(kind, i).expect("action index in range")))
            }
            AgentKind::Rule => Ok(Decision::plain(match kind {
                ScenarioKind::MultiLaneHighway => highway_rule(world, &self.rule),
                ScenarioKind::UnsignalizedTIntersection => t_rule(world, &self.rule, &self.env),
            })),
        }
    }
}

/// Maps a desired acceleration to the in-lane meta-actions.
fn longitudinal_action(a: f64, band: f64) -> ActionId {
    if a > band {
        ActionId::AccelInLane
    } else if a < -band {
        ActionId::DecelInLane
    } else {
        ActionId::MaintainLane
    }
}

/// MOBIL lane changes towards the goal lane with IDM speed keeping.
///
/// The goal lane makes the change mandatory, so only the MOBIL safety criterion is checked.
/// A new change starts only once the previous one has finished.
pub fn highway_rule(world: &WorldState, rule: &RuleConfig) -> ActionId {
    let lane = world
        .ego_plan
        .target_lane
        .or(world.ego.lane_index)
        .unwrap_or(0);
    let idm = &world.scenario.idm;
    let me = ego_neighbor(world);
    let n = ego_mobil_neighbors(world, lane);
    let settled = world.ego_plan.maneuver_elapsed >= LANE_CHANGE_DURATION - 1e-9;
    let goal = match world.map.goal {
        Goal::Lane { lane } => lane,
        Goal::Region { .. } => lane,
    };
    if settled {
        let side = if goal > lane {
            n.left.map(|l| (l, ActionId::LaneChangeLeft))
        } else if goal < lane {
            n.right.map(|l| (l, ActionId::LaneChangeRight))
        } else {
            None
        };
        if let Some((target, action)) = side {
            let eval = evaluate_change(&me, &n.current, &target, idm, &world.scenario.mobil);
            if eval.is_safe(&world.scenario.mobil) {
                return action;
            }
        }
    }
    let params = idm.with_desired_speed(world.scenario.speed_limit);
    let a = match n.current.leader {
        Some(l) => {
            let gap = l.position - me.position - 0.5 * (l.length + me.length);
            idm_acceleration(me.speed, gap, l.speed, &params)
        }
        None => idm_acceleration(me.speed, FREE_ROAD_GAP, me.speed, &params),
    };
    longitudinal_action(a, rule.accel_band)
}

/// Seconds until a main-road vehicle's footprint reaches the junction box `|x| ≤ w`,
/// zero when it is inside and infinite once it has left.
fn vehicle_time_to_conflict(x: f64, heading: f64, speed: f64, length: f64, w: f64) -> f64 {
    let dir = heading.cos().signum();
    let front = dir * x + 0.5 * length;
    let rear = dir * x - 0.5 * length;
    // Along the travel direction the box spans [−w, w].
    if rear > w {
        return f64::INFINITY;
    }
    if front >= -w {
        return 0.0;
    }
    (-w - front) / speed.max(0.1)
}

/// Seconds until a walker enters the band `[y_lo, y_hi]`, zero inside, infinite when leaving.
fn walker_time_to_band(y: f64, heading: f64, y_lo: f64, y_hi: f64) -> f64 {
    if (y_lo..=y_hi).contains(&y) {
        return 0.0;
    }
    let vy = bida_core::traffic_world::WALKER_SPEED * heading.sin();
    if y < y_lo && vy > 0.0 {
        (y_lo - y) / vy
    } else if y > y_hi && vy < 0.0 {
        (y - y_hi) / -vy
    } else {
        f64::INFINITY
    }
}

/// Smallest predicted time-to-conflict over the main-road vehicles and the crosswalk walkers.
pub fn t_time_to_conflict(world: &WorldState) -> f64 {
    let w = world.map.lane_width;
    let vehicles = world
        .svs
        .iter()
        .map(|sv| vehicle_time_to_conflict(sv.x, sv.heading, sv.speed, sv.length, w));
    // The ego crosses the crosswalk in the westbound lane, y ∈ [0, w].
    let margin = 0.5;
    let walkers = world
        .walkers
        .iter()
        .filter(|p| {
            world.map.conflict_zones.iter().any(|z| {
                z.kind == bida_core::traffic_world::ZoneKind::Crosswalk
                    && (z.min.x - margin..=z.max.x + margin).contains(&p.x)
            })
        })
        .map(|p| walker_time_to_band(p.y, p.heading, -margin, w + margin));
    vehicles.chain(walkers).fold(f64::INFINITY, f64::min)
}

/// Closest agent on the ego's route ahead: (bumper gap, speed along the route).
fn route_leader(world: &WorldState) -> Option<(f64, f64)> {
    let route = &world.map.ego_route;
    let (s_ego, _) = route.project(world.ego.position());
    let ego_front = s_ego + 0.5 * world.ego.length;
    let mut best: Option<(f64, f64)> = None;
    let mut consider = |p: bida_core::geometry::Vec2, half_len: f64, half_w: f64, speed_along: f64| {
        let (s, d) = route.project(p);
        if d.abs() > 0.5 * VEHICLE_WIDTH + half_w + 0.3 {
            return;
        }
        let gap = s - half_len - ego_front;
        if s > s_ego && best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, speed_along));
        }
    };
    for sv in &world.svs {
        let (s, _) = route.project(sv.position());
        let pose = route.pose_at(s);
        let along = (sv.speed * (sv.heading - pose.heading).cos()).max(0.0);
        consider(sv.position(), 0.5 * sv.length, 0.5 * sv.width, along);
    }
    for p in &world.walkers {
        // Treat a walker about to step onto the route as already on it.
        let ahead = p.position() + bida_core::geometry::Vec2::from_heading(p.heading) * (2.0 * p.speed);
        let (_, d_now) = route.project(p.position());
        let (_, d_soon) = route.project(ahead);
        let near = if d_now.abs() < d_soon.abs() { p.position() } else { ahead };
        consider(near, p.radius, p.radius, 0.0);
    }
    best
}

/// IDM along the route with gap acceptance at the junction.
///
/// Before entering the junction the ego waits until every main-road vehicle and crosswalk
/// walker is more than `gap_time` away from the conflict area. Once inside it follows the
/// closest agent on its route with IDM.
pub fn t_rule(world: &WorldState, rule: &RuleConfig, env: &EnvConfig) -> ActionId {
    let w = world.map.lane_width;
    let front_y = world.ego.y + 0.5 * world.ego.length * world.ego.heading.sin();
    let committed = front_y > -w;
    if !committed {
        let stop_line_gap = -w - front_y;
        if t_time_to_conflict(world) > rule.gap_time {
            return ActionId::Proceed;
        }
        return if stop_line_gap > 1.0 {
            ActionId::Creep
        } else {
            ActionId::Stop
        };
    }
    let params = world.scenario.idm.with_desired_speed(env.scenario.speed_limit);
    let v = world.ego.speed;
    let a = match route_leader(world) {
        Some((gap, speed)) => idm_acceleration(v, gap, speed, &params),
        None => idm_acceleration(v, FREE_ROAD_GAP, v, &params),
    };
    if a < -rule.accel_band.max(1.0) {
        ActionId::Stop
    } else if a < 0.0 && v > env.profiles.creep_speed {
        ActionId::Creep
    } else {
        ActionId::Proceed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_and_parsing() {
        for k in AgentKind::ALL {
            let s = serde_json::to_string(&k).unwrap();
            assert_eq!(s.trim_matches('"').parse::<AgentKind>().unwrap(), k);
        }
        assert!("greedy".parse::<AgentKind>().is_err());
    }

    #[test]
    fn time_to_conflict_of_a_vehicle() {
        // Eastbound, front bumper 20 m before the box at 10 m/s.
        let t = vehicle_time_to_conflict(-3.5 - 20.0 - 2.4, 0.0, 10.0, 4.8, 3.5);
        assert!((t - 2.0).abs() < 1e-12);
        // Westbound vehicle mirrored.
        let t = vehicle_time_to_conflict(3.5 + 20.0 + 2.4, std::f64::consts::PI, 10.0, 4.8, 3.5);
        assert!((t - 2.0).abs() < 1e-12);
        assert_eq!(vehicle_time_to_conflict(0.0, 0.0, 10.0, 4.8, 3.5), 0.0);
        assert!(vehicle_time_to_conflict(20.0, 0.0, 10.0, 4.8, 3.5).is_infinite());
    }

    #[test]
    fn walker_band() {
        let up = std::f64::consts::FRAC_PI_2;
        assert!((walker_time_to_band(-1.4, up, 0.0, 3.5) - 1.0).abs() < 1e-12);
        assert!(walker_time_to_band(-1.4, -up, 0.0, 3.5).is_infinite());
        assert_eq!(walker_time_to_band(1.0, -up, 0.0, 3.5), 0.0);
    }

    #[test]
    fn network_agents_need_checkpoints() {
        let cfg = ExperimentConfig::default();
        assert!(Agent::new(AgentKind::Bida, &cfg, None).is_err());
        assert!(Agent::new(AgentKind::Rule, &cfg, None).is_ok());
        assert!(Agent::new(AgentKind::Mcts, &cfg, None).is_ok());
    }
}
