//! Lower planning level: per-action reference trajectories, feasibility checks and tracking.
//!
//! A trajectory is the composition of a longitudinal speed profile along the ego route and a
//! quintic lateral offset profile. Lane changes last [`LANE_CHANGE_DURATION`]; when a decision
//! arrives mid-maneuver the quintic is re-solved from the current lateral state over the
//! remaining time, which reproduces the original curve when tracking is exact.

mod quintic;
mod tracker;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision_mdp::ActionId;
use crate::geometry::{normalize_angle, OrientedBox, PathSegment, Region, Vec2};
use crate::traffic_world::{
    EgoPlan, MapGeometry, ScenarioKind, VehicleState, WorldState, LANE_CHANGE_DURATION, WHEELBASE,
};

pub use quintic::Quintic;
pub use tracker::{
    cross_track_error, riccati_gains, track_step, ControlCommand, TrackerWeights, TrackingError, TRACKER_HORIZON,
};

/// Nominal longitudinal behavior of each meta-action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NominalProfiles {
    /// AccelInLane / ProceedFast rate, m/s².
    pub accel: f64,
    /// DecelInLane rate, m/s².
    pub decel: f64,
    /// Stop braking rate, m/s².
    pub stop_decel: f64,
    pub creep_speed: f64,
    pub creep_rate: f64,
    /// Proceed rate, m/s².
    pub proceed_accel: f64,
    /// Lateral acceleration used to cap speed on curved route segments.
    pub turn_lateral_accel: f64,
    /// Minimum lateral re-centering time once a lane change is over.
    pub lane_keep_duration: f64,
    /// Length of every generated trajectory.
    pub horizon: f64,
}

impl Default for NominalProfiles {
    fn default() -> Self {
        Self {
            accel: 2.0,
            decel: 2.0,
            stop_decel: 3.0,
            creep_speed: 2.0,
            creep_rate: 2.0,
            proceed_accel: 1.0,
            turn_lateral_accel: 3.0,
            lane_keep_duration: 1.0,
            horizon: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeasibilityLimits {
    pub max_curvature: f64,
    pub max_lateral_accel: f64,
    pub max_long_accel: f64,
    pub max_long_decel: f64,
    /// Below this speed curvature is not checked.
    pub curvature_check_speed: f64,
}

impl Default for FeasibilityLimits {
    fn default() -> Self {
        Self {
            max_curvature: 0.2,
            max_lateral_accel: 4.0,
            max_long_accel: 3.0,
            max_long_decel: 6.0,
            curvature_check_speed: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub curvature: f64,
    pub time: f64,
    pub accel: f64,
    pub lateral_accel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub dt: f64,
    pub duration: f64,
    pub meta_action: ActionId,
    /// Lane the ego settles on after this maneuver (highway).
    pub target_lane: Option<usize>,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
}

#[derive(Clone, Debug, Error, PartialEq, Serialize, Deserialize)]
pub enum Infeasible {
    #[error("no lane in the requested direction")]
    NoTargetLane,
    #[error("action {0:?} does not belong to this scenario")]
    WrongScenario(ActionId),
    #[error("{what} limit violated at t = {time:.2} s")]
    LimitViolated { what: String, time: f64 },
}

/// Speed the ego approaches and the rate used to approach it.
fn longitudinal_command(action: ActionId, v0: f64, profiles: &NominalProfiles, limit: f64) -> (f64, f64) {
    match action {
        ActionId::MaintainLane | ActionId::LaneChangeLeft | ActionId::LaneChangeRight => {
            (v0.min(limit), profiles.decel)
        }
        ActionId::AccelInLane => (limit, profiles.accel),
        ActionId::DecelInLane => (0.0, profiles.decel),
        ActionId::Stop => (0.0, profiles.stop_decel),
        ActionId::Creep => (profiles.creep_speed, profiles.creep_rate),
        ActionId::Proceed => (limit, profiles.proceed_accel),
        ActionId::ProceedFast => (limit, profiles.accel),
    }
}

fn move_toward(v: f64, target: f64, step: f64) -> f64 {
    if v < target {
        (v + step).min(target)
    } else {
        (v - step).max(target)
    }
}

/// Fully specified maneuver that can be sampled at any resolution.
#[derive(Clone, Debug)]
pub struct ManeuverPlan {
    map: Arc<MapGeometry>,
    s0: f64,
    sdot0: f64,
    initial_heading: f64,
    initial_position: Vec2,
    lateral: Quintic,
    target_speed: f64,
    rate: f64,
    speed_limit: f64,
    /// (start, end, cap) speed caps along the route.
    caps: Vec<(f64, f64, f64)>,
    pub action: ActionId,
    pub target_lane: Option<usize>,
    /// Lateral-maneuver clock at the start of the plan.
    pub maneuver_elapsed: f64,
    vehicle_length: f64,
    vehicle_width: f64,
}

/// Distance ahead of a curved segment from which its speed cap applies.
const CAP_LOOKAHEAD: f64 = 15.0;

fn route_caps(map: &MapGeometry, lateral_accel: f64) -> Vec<(f64, f64, f64)> {
    let mut caps = Vec::new();
    let mut acc = 0.0;
    for seg in &map.ego_route.segments {
        let len = seg.length();
        if let PathSegment::Arc { radius, .. } = seg {
            caps.push((acc - CAP_LOOKAHEAD, acc + len, (lateral_accel * radius).sqrt()));
        }
        acc += len;
    }
    caps
}

/// Ego state expressed relative to the route: (s, d, ṡ, ḋ, d̈).
fn frenet_state(map: &MapGeometry, ego: &VehicleState) -> (f64, f64, f64, f64, f64) {
    let (s, d) = map.ego_route.project(ego.position());
    let pose = map.ego_route.pose_at(s);
    let e = normalize_angle(ego.heading - pose.heading);
    let one_minus = (1.0 - pose.curvature * d).max(0.1);
    let sdot = ego.speed * e.cos() / one_minus;
    let ddot = ego.speed * e.sin();
    let yaw_rate = ego.speed * ego.steer.tan() / WHEELBASE;
    let dddot = ego.accel * e.sin() + ego.speed * e.cos() * (yaw_rate - pose.curvature * sdot);
    (s, d, sdot.max(0.0), ddot, dddot)
}

/// Builds the maneuver the ego would follow for `action` from the current world.
pub fn plan_maneuver(
    world: &WorldState,
    action: ActionId,
    profiles: &NominalProfiles,
) -> Result<ManeuverPlan, Infeasible> {
    let kind = world.scenario.scenario_kind;
    if action.scenario() != kind {
        return Err(Infeasible::WrongScenario(action));
    }
    let map = &world.map;
    let (s0, d0, sdot0, ddot0, dddot0) = frenet_state(map, &world.ego);
    let mut elapsed = world.ego_plan.maneuver_elapsed;
    let (target_lane, d_target) = match kind {
        ScenarioKind::MultiLaneHighway => {
            let current = world
                .ego_plan
                .target_lane
                .or(world.ego.lane_index)
                .unwrap_or(0);
            let target = match action {
                ActionId::LaneChangeLeft => {
                    if current + 1 >= map.lanes.len() {
                        return Err(Infeasible::NoTargetLane);
                    }
                    elapsed = 0.0;
                    current + 1
                }
                ActionId::LaneChangeRight => {
                    if current == 0 {
                        return Err(Infeasible::NoTargetLane);
                    }
                    elapsed = 0.0;
                    current - 1
                }
                _ => current,
            };
            (Some(target), map.lanes[target].center_y)
        }
        ScenarioKind::UnsignalizedTIntersection => (None, 0.0),
    };
    let remaining = LANE_CHANGE_DURATION - elapsed;
    let lateral_duration = remaining.max(profiles.lane_keep_duration);
    let lateral = Quintic::new([d0, ddot0, dddot0], [d_target, 0.0, 0.0], lateral_duration);
    let limit = world.scenario.speed_limit;
    let (target_speed, rate) = longitudinal_command(action, sdot0, profiles, limit);
    Ok(ManeuverPlan {
        map: Arc::clone(&world.map),
        s0,
        sdot0,
        initial_heading: world.ego.heading,
        initial_position: world.ego.position(),
        lateral,
        target_speed,
        rate,
        speed_limit: limit,
        caps: route_caps(map, profiles.turn_lateral_accel),
        action,
        target_lane,
        maneuver_elapsed: elapsed,
        vehicle_length: world.ego.length,
        vehicle_width: world.ego.width,
    })
}

impl ManeuverPlan {
    /// Maneuver bookkeeping once `t` seconds of this plan have been executed.
    pub fn ego_plan_after(&self, t: f64) -> EgoPlan {
        EgoPlan {
            target_lane: self.target_lane,
            maneuver_elapsed: (self.maneuver_elapsed + t).min(LANE_CHANGE_DURATION),
        }
    }

    fn cap_at(&self, s: f64) -> f64 {
        self.caps
            .iter()
            .filter(|(a, b, _)| s >= *a && s <= *b)
            .fold(self.speed_limit, |acc, (_, _, c)| acc.min(*c))
    }

    /// Samples the maneuver at `dt` from t = 0 to t = `duration` inclusive.
    pub fn sample(&self, duration: f64, dt: f64) -> Trajectory {
        let n = (duration / dt).round() as usize;
        let mut s = Vec::with_capacity(n + 1);
        let mut v = Vec::with_capacity(n + 1);
        s.push(self.s0);
        v.push(self.sdot0);
        for k in 0..n {
            let target = self.target_speed.min(self.cap_at(s[k]));
            let v_next = move_toward(v[k], target, self.rate * dt);
            s.push(s[k] + 0.5 * (v[k] + v_next) * dt);
            v.push(v_next);
        }
        let route = &self.map.ego_route;
        // Positions are anchored on the ego so the first sample reproduces it exactly.
        let anchor = {
            let pose = route.pose_at(s[0]);
            let d0 = self.lateral.eval(0.0)[0];
            self.initial_position - (pose.point + Vec2::from_heading(pose.heading).perp() * d0)
        };
        let points = (0..=n)
            .map(|k| {
                let t = k as f64 * dt;
                let sddot = if n == 0 {
                    0.0
                } else {
                    let j = k.min(n - 1);
                    (v[j + 1] - v[j]) / dt
                };
                let [d, ddot, dddot] = self.lateral.eval(t);
                let pose = route.pose_at(s[k]);
                let kappa = pose.curvature;
                let tangent = Vec2::from_heading(pose.heading);
                let normal = tangent.perp();
                let one_minus = 1.0 - kappa * d;
                let vel = tangent * (v[k] * one_minus) + normal * ddot;
                let acc = tangent * (sddot * one_minus - 2.0 * kappa * v[k] * ddot)
                    + normal * (kappa * v[k] * v[k] * one_minus + dddot);
                let speed = vel.norm();
                let pos = pose.point + normal * d + anchor;
                let (heading, curvature, accel, lateral_accel) = if speed > 1e-6 {
                    let cross = vel.cross(acc);
                    (
                        vel.y.atan2(vel.x),
                        cross / (speed * speed * speed),
                        vel.dot(acc) / speed,
                        cross / speed,
                    )
                } else {
                    let heading = if k == 0 { self.initial_heading } else { pose.heading };
                    (heading, kappa, sddot, 0.0)
                };
                TrajectoryPoint {
                    x: pos.x,
                    y: pos.y,
                    heading: normalize_angle(heading),
                    speed,
                    curvature,
                    time: t,
                    accel,
                    lateral_accel,
                }
            })
            .collect();
        Trajectory {
            points,
            dt,
            duration: n as f64 * dt,
            meta_action: self.action,
            target_lane: self.target_lane,
            vehicle_length: self.vehicle_length,
            vehicle_width: self.vehicle_width,
        }
    }
}

/// Whether every sample respects the limits and keeps the footprint on the drivable surface.
/// All bounds are closed.
pub fn check_feasibility(traj: &Trajectory, limits: &FeasibilityLimits, drivable: &Region) -> bool {
    first_violation(traj, limits, drivable).is_none()
}

fn first_violation(
    traj: &Trajectory,
    limits: &FeasibilityLimits,
    drivable: &Region,
) -> Option<Infeasible> {
    for p in &traj.points {
        let violation = if p.speed > limits.curvature_check_speed
            && p.curvature.abs() > limits.max_curvature
        {
            Some("curvature")
        } else if p.lateral_accel.abs() > limits.max_lateral_accel {
            Some("lateral acceleration")
        } else if p.accel > limits.max_long_accel || p.accel < -limits.max_long_decel {
            Some("longitudinal acceleration")
        } else if !drivable.contains_box(&OrientedBox::new(
            Vec2::new(p.x, p.y),
            p.heading,
            traj.vehicle_length,
            traj.vehicle_width,
        )) {
            Some("drivable region")
        } else {
            None
        };
        if let Some(what) = violation {
            return Some(Infeasible::LimitViolated {
                what: what.to_string(),
                time: p.time,
            });
        }
    }
    None
}

/// Maneuver plan for `action` with its sampled reference, or the reason none exists.
pub fn generate_plan(
    world: &WorldState,
    action: ActionId,
    limits: &FeasibilityLimits,
    profiles: &NominalProfiles,
) -> Result<(ManeuverPlan, Trajectory), Infeasible> {
    let plan = plan_maneuver(world, action, profiles)?;
    let traj = plan.sample(profiles.horizon, world.dt());
    match first_violation(&traj, limits, &world.map.drivable) {
        None => Ok((plan, traj)),
        Some(e) => Err(e),
    }
}

/// Reference trajectory for `action`, or the reason none exists.
pub fn generate_trajectory(
    world: &WorldState,
    action: ActionId,
    limits: &FeasibilityLimits,
    profiles: &NominalProfiles,
) -> Result<Trajectory, Infeasible> {
    generate_plan(world, action, limits, profiles).map(|(_, t)| t)
}
