//! Deterministic fixed-step 2D traffic simulation.
//!
//! Two scenarios are supported: a straight multi-lane highway where surrounding vehicles
//! follow IDM and change lanes with MOBIL, and an unsignalized T-intersection where the ego
//! turns left from a side road across two-way main-road traffic and a pedestrian crosswalk.
//! Surrounding vehicles yield to the ego and to walkers that occupy a conflict zone on their
//! lane by following a virtual stopped leader placed at the zone entry.

mod collision;
mod idm;
mod mobil;
mod predict;

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, OrientedBox, PathSegment, Polygon, Region, RoutePath, Vec2};

pub use collision::{check_collision, ego_collides, ego_min_distance, AgentRef, CollisionPair};
pub use idm::{idm_acceleration, IdmParams, FREE_ROAD_GAP};
pub use mobil::{
    evaluate_change, mobil_decision, LaneDecision, LaneNeighbors, MobilEvaluation, MobilNeighbors,
    MobilParams, Neighbor,
};
pub use predict::{annotate_interactions, predict_from_plan, predict_samples, predict_transition};

pub const VEHICLE_LENGTH: f64 = 4.8;
pub const VEHICLE_WIDTH: f64 = 1.8;
pub const WHEELBASE: f64 = 2.7;
/// Duration of every lane change, ego and surrounding vehicles alike.
pub const LANE_CHANGE_DURATION: f64 = 3.0;
/// Seconds between MOBIL evaluations of one surrounding vehicle.
pub const MOBIL_PERIOD: f64 = 1.0;
pub const WALKER_SPEED: f64 = 1.4;
pub const WALKER_RADIUS: f64 = 0.3;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid scenario config: {0}")]
    Invalid(String),
    #[error("could not place surrounding vehicle {index} without overlap in {attempts} attempts")]
    Placement { index: usize, attempts: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    MultiLaneHighway,
    UnsignalizedTIntersection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub scenario_kind: ScenarioKind,
    pub lane_count: usize,
    pub lane_width: f64,
    pub sv_count: usize,
    pub speed_limit: f64,
    pub sv_speed_range: [f64; 2],
    pub sim_frequency: f64,
    pub walker_count: usize,
    pub rng_seed: u64,
    pub idm: IdmParams,
    pub mobil: MobilParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::highway()
    }
}

impl ScenarioConfig {
    pub fn highway() -> Self {
        Self {
            scenario_kind: ScenarioKind::MultiLaneHighway,
            lane_count: 5,
            lane_width: 3.5,
            sv_count: 10,
            speed_limit: 120.0 / 3.6,
            sv_speed_range: [80.0 / 3.6, 120.0 / 3.6],
            sim_frequency: 20.0,
            walker_count: 0,
            rng_seed: 0,
            idm: IdmParams::default(),
            mobil: MobilParams::default(),
        }
    }

    pub fn t_intersection() -> Self {
        Self {
            scenario_kind: ScenarioKind::UnsignalizedTIntersection,
            lane_count: 2,
            lane_width: 3.5,
            sv_count: 6,
            speed_limit: 60.0 / 3.6,
            sv_speed_range: [30.0 / 3.6, 60.0 / 3.6],
            sim_frequency: 20.0,
            walker_count: 2,
            rng_seed: 0,
            idm: IdmParams::default(),
            mobil: MobilParams::default(),
        }
    }

    pub fn for_kind(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::MultiLaneHighway => Self::highway(),
            ScenarioKind::UnsignalizedTIntersection => Self::t_intersection(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sim_frequency
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.lane_count == 0 {
            return bad("lane_count must be positive");
        }
        if self.scenario_kind == ScenarioKind::UnsignalizedTIntersection && self.lane_count != 2 {
            return bad("the T-intersection has exactly two main-road lanes");
        }
        if !(self.lane_width > 0.0) {
            return bad("lane_width must be positive");
        }
        if !(self.sim_frequency > 0.0) {
            return bad("sim_frequency must be positive");
        }
        let [lo, hi] = self.sv_speed_range;
        if !(lo >= 0.0 && lo <= hi && hi <= self.speed_limit + 1e-9) {
            return bad("sv_speed_range must satisfy 0 <= low <= high <= speed_limit");
        }
        if !self.idm.is_valid() {
            return bad("IDM parameters must be strictly positive");
        }
        if !(0.0..=1.0).contains(&self.mobil.politeness) || !(self.mobil.safe_decel > 0.0) {
            return bad("MOBIL politeness must lie in [0, 1] and safe_decel must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Ego,
    SurroundingVehicle,
}

/// Lateral maneuver in progress for a surrounding vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneChange {
    pub from_y: f64,
    pub to_y: f64,
    pub target_lane: usize,
    pub elapsed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    /// Last applied longitudinal acceleration.
    pub accel: f64,
    /// Last applied road-wheel steering angle.
    pub steer: f64,
    pub lane_index: Option<usize>,
    pub length: f64,
    pub width: f64,
    pub role: Role,
    /// IDM desired speed; the ego uses the road speed limit.
    pub desired_speed: f64,
    pub lane_change: Option<LaneChange>,
    /// Whether `accel` was dictated by the ego (IDM leader or blocker of a conflict zone).
    pub ego_attributed: bool,
}

impl VehicleState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn bounding_box(&self) -> OrientedBox {
        OrientedBox::new(self.position(), self.heading, self.length, self.width)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_heading(self.heading) * self.speed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkerState {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub radius: f64,
}

impl WalkerState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Straight lane along the x axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub index: usize,
    pub center_y: f64,
    /// 0 for travel towards +x, π for travel towards −x.
    pub heading: f64,
}

impl Lane {
    pub fn direction(&self) -> f64 {
        self.heading.cos().signum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZoneKind {
    Intersection,
    Crosswalk,
}

/// Axis-aligned part of one lane where crossing agents have priority.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictZone {
    pub lane: usize,
    pub min: Vec2,
    pub max: Vec2,
    pub kind: ZoneKind,
}

impl ConflictZone {
    fn overlaps_aabb(&self, center: Vec2, half: Vec2) -> bool {
        center.x + half.x >= self.min.x
            && center.x - half.x <= self.max.x
            && center.y + half.y >= self.min.y
            && center.y - half.y <= self.max.y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Goal {
    /// Settle on the center of the given lane.
    Lane { lane: usize },
    /// Get the whole ego footprint inside the rectangle.
    Region { min: Vec2, max: Vec2 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapGeometry {
    pub lane_width: f64,
    pub lanes: Vec<Lane>,
    pub drivable: Region,
    /// Reference path the ego's lateral offsets are measured from.
    pub ego_route: RoutePath,
    pub conflict_zones: Vec<ConflictZone>,
    pub goal: Goal,
    /// Arc length along `ego_route` at which the goal is reached (region goals only).
    pub goal_route_s: Option<f64>,
}

impl MapGeometry {
    /// Range of lane indices whose strips intersect `[y - half, y + half]`.
    pub fn lanes_spanned(&self, y: f64, half: f64) -> Option<(usize, usize)> {
        let hw = 0.5 * self.lane_width;
        let mut lo = None;
        let mut hi = None;
        for lane in &self.lanes {
            if y + half > lane.center_y - hw && y - half < lane.center_y + hw {
                lo.get_or_insert(lane.index);
                hi = Some(lane.index);
            }
        }
        lo.zip(hi)
    }

    pub fn lane_at(&self, y: f64) -> Option<usize> {
        let hw = 0.5 * self.lane_width;
        self.lanes
            .iter()
            .find(|l| (y - l.center_y).abs() <= hw)
            .map(|l| l.index)
    }
}

/// Ego maneuver bookkeeping carried across decisions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EgoPlan {
    /// Lane the ego is settling on (highway only).
    pub target_lane: Option<usize>,
    /// Seconds since the current lateral maneuver began.
    pub maneuver_elapsed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub step: u64,
    pub ego: VehicleState,
    pub svs: Vec<VehicleState>,
    pub walkers: Vec<WalkerState>,
    pub scenario: ScenarioConfig,
    pub map: Arc<MapGeometry>,
    pub ego_plan: EgoPlan,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EgoControl {
    pub accel: f64,
    pub steer: f64,
}

/// How surrounding vehicles move during a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurroundingBehavior {
    /// IDM longitudinal control, conflict-zone yielding and MOBIL lane changes.
    Reactive,
    /// Zero acceleration along the current heading.
    ConstantVelocity,
}

pub const EGO_ACCEL_BOUNDS: (f64, f64) = (-8.0, 3.0);
pub const EGO_STEER_BOUND: f64 = 0.6;

fn new_vehicle(id: u32, role: Role, pos: Vec2, heading: f64, speed: f64, desired: f64) -> VehicleState {
    VehicleState {
        id,
        x: pos.x,
        y: pos.y,
        heading,
        speed,
        accel: 0.0,
        steer: 0.0,
        lane_index: None,
        length: VEHICLE_LENGTH,
        width: VEHICLE_WIDTH,
        role,
        desired_speed: desired,
        lane_change: None,
        ego_attributed: false,
    }
}

fn highway_map(cfg: &ScenarioConfig) -> MapGeometry {
    let w = cfg.lane_width;
    let lanes = (0..cfg.lane_count)
        .map(|i| Lane {
            index: i,
            center_y: i as f64 * w,
            heading: 0.0,
        })
        .collect();
    let top = (cfg.lane_count as f64 - 0.5) * w;
    MapGeometry {
        lane_width: w,
        lanes,
        drivable: Region {
            polygons: vec![Polygon::rectangle(
                Vec2::new(-1.0e5, -0.5 * w),
                Vec2::new(1.0e5, top),
            )],
        },
        ego_route: RoutePath::straight(Vec2::new(0.0, 0.0), 0.0, 1.0e5),
        conflict_zones: Vec::new(),
        goal: Goal::Lane {
            lane: 2.min(cfg.lane_count - 1),
        },
        goal_route_s: None,
    }
}

/// Layout: main road along x with the eastbound lane at y = −w/2 and the westbound lane at
/// y = +w/2; the side road enters from the south at x ∈ [−w, w]. The ego turns left from the
/// northbound side-road lane into the westbound lane and must clear a crosswalk west of the
/// junction.
fn t_intersection_map(cfg: &ScenarioConfig) -> MapGeometry {
    let w = cfg.lane_width;
    let radius = 2.0 * w;
    let crosswalk_x = -w - 3.0;
    let crosswalk_half = 1.5;
    let lane_x = 0.5 * w;
    let arc_start_y = 0.5 * w - radius;
    let approach = 100.0;
    let route = RoutePath {
        segments: vec![
            PathSegment::Line {
                start: Vec2::new(lane_x, -approach),
                heading: FRAC_PI_2,
                length: arc_start_y + approach,
            },
            PathSegment::Arc {
                start: Vec2::new(lane_x, arc_start_y),
                start_heading: FRAC_PI_2,
                radius,
                sweep: FRAC_PI_2,
            },
            PathSegment::Line {
                start: Vec2::new(lane_x - radius, 0.5 * w),
                heading: PI,
                length: 1000.0,
            },
        ],
    };
    let goal_max_x = crosswalk_x - crosswalk_half;
    // The route's last segment runs west along y = w/2; the goal is reached once the rear
    // bumper clears the crosswalk.
    let arc_end_s = (arc_start_y + approach) + radius * FRAC_PI_2;
    let goal_route_s = arc_end_s + ((lane_x - radius) - (goal_max_x - 0.5 * VEHICLE_LENGTH));
    let mut zones = Vec::new();
    for (lane, (y0, y1)) in [(0usize, (-w, 0.0)), (1usize, (0.0, w))] {
        zones.push(ConflictZone {
            lane,
            min: Vec2::new(-w, y0),
            max: Vec2::new(w, y1),
            kind: ZoneKind::Intersection,
        });
        zones.push(ConflictZone {
            lane,
            min: Vec2::new(crosswalk_x - crosswalk_half, y0),
            max: Vec2::new(crosswalk_x + crosswalk_half, y1),
            kind: ZoneKind::Crosswalk,
        });
    }
    MapGeometry {
        lane_width: w,
        lanes: vec![
            Lane {
                index: 0,
                center_y: -0.5 * w,
                heading: 0.0,
            },
            Lane {
                index: 1,
                center_y: 0.5 * w,
                heading: PI,
            },
        ],
        drivable: Region {
            polygons: vec![
                Polygon::rectangle(Vec2::new(-1000.0, -w), Vec2::new(1000.0, w)),
                Polygon::rectangle(Vec2::new(-w, -1000.0), Vec2::new(w, -w)),
            ],
        },
        ego_route: route,
        conflict_zones: zones,
        goal: Goal::Region {
            min: Vec2::new(-1000.0, 0.0),
            max: Vec2::new(goal_max_x, w),
        },
        goal_route_s: Some(goal_route_s),
    }
}

/// Required bumper gap between two same-lane vehicles at spawn time.
fn spawn_gap(follower_speed: f64, next_to_ego: bool) -> f64 {
    let base = (1.0 * follower_speed).max(10.0);
    if next_to_ego {
        base.max(25.0)
    } else {
        base
    }
}

/// Builds the initial world for `config`; identical configs give bit-identical worlds.
pub fn spawn_scenario(config: &ScenarioConfig) -> Result<WorldState, ConfigError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let [v_lo, v_hi] = config.sv_speed_range;
    let (map, ego, ego_plan) = match config.scenario_kind {
        ScenarioKind::MultiLaneHighway => {
            let map = highway_map(config);
            let v = 0.5 * (v_lo + v_hi);
            let mut ego = new_vehicle(0, Role::Ego, Vec2::new(0.0, 0.0), 0.0, v, config.speed_limit);
            ego.lane_index = Some(0);
            let plan = EgoPlan {
                target_lane: Some(0),
                maneuver_elapsed: LANE_CHANGE_DURATION,
            };
            (map, ego, plan)
        }
        ScenarioKind::UnsignalizedTIntersection => {
            let map = t_intersection_map(config);
            let w = config.lane_width;
            let start = Vec2::new(0.5 * w, -w - 0.5 - 0.5 * VEHICLE_LENGTH);
            let ego = new_vehicle(0, Role::Ego, start, FRAC_PI_2, 0.0, config.speed_limit);
            let plan = EgoPlan {
                target_lane: None,
                maneuver_elapsed: LANE_CHANGE_DURATION,
            };
            (map, ego, plan)
        }
    };

    let (x_lo, x_hi) = match config.scenario_kind {
        ScenarioKind::MultiLaneHighway => (-100.0, 160.0),
        ScenarioKind::UnsignalizedTIntersection => (-150.0, 150.0),
    };
    let mut svs: Vec<VehicleState> = Vec::with_capacity(config.sv_count);
    for index in 0..config.sv_count {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let lane = &map.lanes[rng.gen_range(0..map.lanes.len())];
            let x = rng.gen_range(x_lo..x_hi);
            let speed = if v_hi > v_lo {
                rng.gen_range(v_lo..=v_hi)
            } else {
                v_lo
            };
            let candidate = new_vehicle(
                index as u32 + 1,
                Role::SurroundingVehicle,
                Vec2::new(x, lane.center_y),
                lane.heading,
                speed,
                speed,
            );
            let ok_vs = |other: &VehicleState, is_ego: bool| {
                let same_lane = (other.y - candidate.y).abs() < 0.5 * map.lane_width;
                if !same_lane {
                    return !crate::geometry::boxes_overlap(
                        &other.bounding_box(),
                        &candidate.bounding_box(),
                    );
                }
                let dx = (other.x - candidate.x).abs() - VEHICLE_LENGTH;
                let follower_speed = if lane.direction() * (other.x - candidate.x) > 0.0 {
                    candidate.speed
                } else {
                    other.speed
                };
                dx >= spawn_gap(follower_speed, is_ego)
            };
            let ego_clear = match config.scenario_kind {
                ScenarioKind::MultiLaneHighway => ok_vs(&ego, true),
                // Keep the junction clear at t = 0.
                ScenarioKind::UnsignalizedTIntersection => {
                    (candidate.x).abs() > config.lane_width + 0.5 * VEHICLE_LENGTH + 1.0
                }
            };
            if ego_clear && svs.iter().all(|o| ok_vs(o, false)) {
                placed = Some(candidate);
                break;
            }
        }
        match placed {
            Some(mut sv) => {
                sv.lane_index = map.lane_at(sv.y);
                svs.push(sv);
            }
            None => {
                return Err(ConfigError::Placement {
                    index,
                    attempts: MAX_PLACEMENT_ATTEMPTS,
                })
            }
        }
    }

    let mut walkers = Vec::new();
    if config.scenario_kind == ScenarioKind::UnsignalizedTIntersection {
        let w = config.lane_width;
        let crosswalk_x = -w - 3.0;
        for i in 0..config.walker_count {
            let x = crosswalk_x + rng.gen_range(-1.0..1.0);
            let y = rng.gen_range(-w - 6.0..w + 6.0);
            let heading = if rng.gen_bool(0.5) { FRAC_PI_2 } else { -FRAC_PI_2 };
            walkers.push(WalkerState {
                id: i as u32 + 1,
                x,
                y,
                heading,
                speed: WALKER_SPEED,
                radius: WALKER_RADIUS,
            });
        }
    }

    Ok(WorldState {
        time: 0.0,
        step: 0,
        ego,
        svs,
        walkers,
        scenario: config.clone(),
        map: Arc::new(map),
        ego_plan,
    })
}

/// Quintic rest-to-rest blend on [0, 1] with its first derivative.
pub fn smoothstep5(tau: f64) -> (f64, f64) {
    let t = tau.clamp(0.0, 1.0);
    let p = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
    let dp = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    (p, dp)
}

/// Leader as seen by one surrounding vehicle.
#[derive(Clone, Copy, Debug)]
struct LeaderView {
    gap: f64,
    speed: f64,
    is_ego: bool,
}

/// Speed of `other` projected on the travel direction `heading`.
fn along_speed(other: &VehicleState, heading: f64) -> f64 {
    (other.speed * (other.heading - heading).cos()).max(0.0)
}

fn vehicle_lanes(map: &MapGeometry, v: &VehicleState) -> Option<(usize, usize)> {
    let half = v.bounding_box().aabb_half_extents();
    map.lanes_spanned(v.y, half.y)
}

fn spans_intersect(a: Option<(usize, usize)>, b: Option<(usize, usize)>) -> bool {
    match (a, b) {
        (Some((a0, a1)), Some((b0, b1))) => a0 <= b1 && b0 <= a1,
        _ => false,
    }
}

fn travel_heading(map: &MapGeometry, v: &VehicleState) -> f64 {
    map.lane_at(v.y)
        .map(|i| map.lanes[i].heading)
        .unwrap_or(if v.heading.cos() >= 0.0 { 0.0 } else { PI })
}

/// Closest vehicle ahead of `svs[i]` sharing a lane strip with it.
fn find_leader(world: &WorldState, i: usize) -> Option<LeaderView> {
    let map = &world.map;
    let me = &world.svs[i];
    let my_span = vehicle_lanes(map, me);
    let heading = travel_heading(map, me);
    let dir = heading.cos().signum();
    let mut best: Option<(f64, LeaderView)> = None;
    let others = std::iter::once((true, &world.ego))
        .chain(world.svs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| (false, v)));
    for (is_ego, other) in others {
        if !spans_intersect(my_span, vehicle_lanes(map, other)) {
            continue;
        }
        let dx = dir * (other.x - me.x);
        if dx <= 0.0 {
            continue;
        }
        let half_x = other.bounding_box().aabb_half_extents().x;
        let gap = dx - 0.5 * me.length - half_x;
        if best.as_ref().is_none_or(|(d, _)| dx < *d) {
            best = Some((
                dx,
                LeaderView {
                    gap,
                    speed: along_speed(other, heading),
                    is_ego,
                },
            ));
        }
    }
    best.map(|(_, l)| l)
}

/// Virtual stopped leaders in front of occupied conflict zones.
fn zone_blockers(world: &WorldState, i: usize) -> Vec<LeaderView> {
    let map = &world.map;
    let me = &world.svs[i];
    let Some(lane) = map.lane_at(me.y) else {
        return Vec::new();
    };
    let dir = map.lanes[lane].direction();
    let ego_box = world.ego.bounding_box();
    let ego_half = ego_box.aabb_half_extents();
    let mut out = Vec::new();
    for zone in map.conflict_zones.iter().filter(|z| z.lane == lane) {
        let by_ego = zone.overlaps_aabb(world.ego.position(), ego_half);
        let by_walker = world
            .walkers
            .iter()
            .any(|w| zone.overlaps_aabb(w.position(), Vec2::new(w.radius, w.radius)));
        if !by_ego && !by_walker {
            continue;
        }
        let entry = if dir > 0.0 { zone.min.x } else { zone.max.x };
        let d_entry = dir * (entry - me.x) - 0.5 * me.length;
        if d_entry > -0.5 {
            out.push(LeaderView {
                gap: d_entry.max(0.05),
                speed: 0.0,
                is_ego: by_ego,
            });
        }
    }
    out
}

/// IDM acceleration of every surrounding vehicle and whether the ego is the binding cause.
pub fn surrounding_accelerations(world: &WorldState) -> Vec<(f64, bool)> {
    (0..world.svs.len())
        .map(|i| {
            let sv = &world.svs[i];
            let params = world.scenario.idm.with_desired_speed(sv.desired_speed);
            let mut best = (
                idm_acceleration(sv.speed, FREE_ROAD_GAP, sv.speed, &params),
                false,
            );
            let leader = find_leader(world, i);
            for view in leader.into_iter().chain(zone_blockers(world, i)) {
                let a = idm_acceleration(sv.speed, view.gap, view.speed, &params);
                if a < best.0 || (a == best.0 && view.is_ego) {
                    best = (a, view.is_ego);
                }
            }
            best
        })
        .collect()
}

fn neighbor_of(v: &VehicleState) -> Neighbor {
    Neighbor {
        position: v.x,
        speed: v.speed,
        length: v.length,
        desired_speed: v.desired_speed,
    }
}

/// Leader and follower of `svs[i]` in `lane` (highway, +x travel).
fn lane_neighbors(world: &WorldState, i: usize, lane: usize) -> LaneNeighbors {
    let others = std::iter::once(&world.ego)
        .chain(world.svs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v));
    neighbors_in_lane(&world.map, &world.svs[i], others, lane)
}

fn neighbors_in_lane<'a>(
    map: &MapGeometry,
    me: &VehicleState,
    others: impl Iterator<Item = &'a VehicleState>,
    lane: usize,
) -> LaneNeighbors {
    let mut leader: Option<&VehicleState> = None;
    let mut follower: Option<&VehicleState> = None;
    for other in others {
        let Some((lo, hi)) = vehicle_lanes(map, other) else {
            continue;
        };
        if lane < lo || lane > hi {
            continue;
        }
        if other.x >= me.x {
            if leader.is_none_or(|l| other.x < l.x) {
                leader = Some(other);
            }
        } else if follower.is_none_or(|f| other.x > f.x) {
            follower = Some(other);
        }
    }
    LaneNeighbors {
        leader: leader.map(neighbor_of),
        follower: follower.map(neighbor_of),
    }
}

fn mobil_neighbors(world: &WorldState, i: usize, lane: usize) -> MobilNeighbors {
    let n = world.map.lanes.len();
    MobilNeighbors {
        current: lane_neighbors(world, i, lane),
        left: (lane + 1 < n).then(|| lane_neighbors(world, i, lane + 1)),
        right: (lane > 0).then(|| lane_neighbors(world, i, lane - 1)),
    }
}

/// MOBIL view of the ego in `lane` on the highway: leaders and followers among the SVs.
pub fn ego_mobil_neighbors(world: &WorldState, lane: usize) -> MobilNeighbors {
    let n = world.map.lanes.len();
    let at = |l: usize| neighbors_in_lane(&world.map, &world.ego, world.svs.iter(), l);
    MobilNeighbors {
        current: at(lane),
        left: (lane + 1 < n).then(|| at(lane + 1)),
        right: (lane > 0).then(|| at(lane - 1)),
    }
}

/// The ego as a MOBIL participant.
pub fn ego_neighbor(world: &WorldState) -> Neighbor {
    neighbor_of(&world.ego)
}

/// Advances along a straight line with constant acceleration, stopping at zero speed.
/// Returns (distance, new speed).
pub fn advance_longitudinal(speed: f64, accel: f64, dt: f64) -> (f64, f64) {
    let v_new = speed + accel * dt;
    if v_new >= 0.0 {
        (0.5 * (speed + v_new) * dt, v_new)
    } else {
        let t_stop = if accel < 0.0 { speed / -accel } else { 0.0 };
        (0.5 * speed * t_stop, 0.0)
    }
}

/// Kinematic bicycle step of the ego. The reference point is the vehicle center.
pub fn integrate_bicycle(ego: &mut VehicleState, control: EgoControl, dt: f64) {
    let accel = control.accel.clamp(EGO_ACCEL_BOUNDS.0, EGO_ACCEL_BOUNDS.1);
    let steer = control.steer.clamp(-EGO_STEER_BOUND, EGO_STEER_BOUND);
    let (dist, v_new) = advance_longitudinal(ego.speed, accel, dt);
    let dpsi = dist * steer.tan() / WHEELBASE;
    let mid = ego.heading + 0.5 * dpsi;
    ego.x += dist * mid.cos();
    ego.y += dist * mid.sin();
    ego.heading = normalize_angle(ego.heading + dpsi);
    ego.speed = v_new;
    ego.accel = accel;
    ego.steer = steer;
}

impl WorldState {
    pub fn dt(&self) -> f64 {
        self.scenario.dt()
    }

    /// Advances one simulation step in place.
    pub fn advance(&mut self, control: EgoControl, dt: f64, behavior: SurroundingBehavior) {
        match behavior {
            SurroundingBehavior::Reactive => self.advance_reactive(dt),
            SurroundingBehavior::ConstantVelocity => {
                for sv in &mut self.svs {
                    sv.x += sv.speed * sv.heading.cos() * dt;
                    sv.y += sv.speed * sv.heading.sin() * dt;
                    sv.accel = 0.0;
                    sv.ego_attributed = false;
                }
            }
        }
        for w in &mut self.walkers {
            w.x += w.speed * w.heading.cos() * dt;
            w.y += w.speed * w.heading.sin() * dt;
        }
        integrate_bicycle(&mut self.ego, control, dt);
        self.ego.lane_index = self.map.lane_at(self.ego.y);
        for sv in &mut self.svs {
            sv.lane_index = self.map.lane_at(sv.y);
        }
        self.step += 1;
        self.time = self.step as f64 * dt;
    }

    fn advance_reactive(&mut self, dt: f64) {
        let accels = surrounding_accelerations(self);
        let highway = self.scenario.scenario_kind == ScenarioKind::MultiLaneHighway;
        let period_steps = ((MOBIL_PERIOD / dt).round() as u64).max(1);
        let mut starts: Vec<Option<LaneChange>> = vec![None; self.svs.len()];
        if highway {
            for (i, start) in starts.iter_mut().enumerate() {
                let sv = &self.svs[i];
                if sv.lane_change.is_some()
                    || (self.step + 7 * sv.id as u64) % period_steps != 0
                {
                    continue;
                }
                let Some(lane) = self.map.lane_at(sv.y) else {
                    continue;
                };
                let n = mobil_neighbors(self, i, lane);
                let target = match mobil_decision(
                    &neighbor_of(sv),
                    &n,
                    &self.scenario.idm,
                    &self.scenario.mobil,
                ) {
                    LaneDecision::Stay => continue,
                    LaneDecision::Left => lane + 1,
                    LaneDecision::Right => lane - 1,
                };
                *start = Some(LaneChange {
                    from_y: sv.y,
                    to_y: self.map.lanes[target].center_y,
                    target_lane: target,
                    elapsed: 0.0,
                });
            }
        }
        for (i, sv) in self.svs.iter_mut().enumerate() {
            let (a, attributed) = accels[i];
            let lane_heading = if sv.heading.cos() >= 0.0 { 0.0 } else { PI };
            let dir = lane_heading.cos();
            let (dist, v_new) = advance_longitudinal(sv.speed, a, dt);
            sv.x += dir * dist;
            // Realized rate: a vehicle held at standstill is not braking.
            sv.accel = (v_new - sv.speed) / dt;
            sv.speed = v_new;
            sv.ego_attributed = attributed;
            if let Some(lc) = starts[i] {
                sv.lane_change = Some(lc);
            }
            if let Some(mut lc) = sv.lane_change {
                lc.elapsed += dt;
                let (p, dp) = smoothstep5(lc.elapsed / LANE_CHANGE_DURATION);
                sv.y = lc.from_y + (lc.to_y - lc.from_y) * p;
                let lateral_rate = (lc.to_y - lc.from_y) * dp / LANE_CHANGE_DURATION;
                sv.heading = normalize_angle(lane_heading + (dir * lateral_rate).atan2(sv.speed.max(0.1)));
                if lc.elapsed >= LANE_CHANGE_DURATION - 1e-9 {
                    sv.y = lc.to_y;
                    sv.heading = lane_heading;
                    sv.lane_change = None;
                } else {
                    sv.lane_change = Some(lc);
                }
            }
        }
    }
}

/// One simulation step with reactive surrounding traffic.
pub fn step_world(world: &WorldState, control: EgoControl, dt: f64) -> WorldState {
    let mut next = world.clone();
    next.advance(control, dt, SurroundingBehavior::Reactive);
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn highway_spawn_matches_table_speeds_and_is_collision_free() {
        let cfg = ScenarioConfig::highway().with_seed(42);
        let w = spawn_scenario(&cfg).unwrap();
        assert_eq!(w.svs.len(), 10);
        assert!(check_collision(&w).is_empty());
        for sv in &w.svs {
            assert!(sv.speed >= 22.22 && sv.speed <= 33.34, "{}", sv.speed);
        }
        assert_eq!(w.ego.lane_index, Some(0));
        assert!((w.ego.speed - 0.5 * (80.0 + 120.0) / 3.6).abs() < 1e-12);
    }

    #[test]
    fn spawn_is_deterministic() {
        for cfg in [ScenarioConfig::highway(), ScenarioConfig::t_intersection()] {
            let cfg = cfg.with_seed(7);
            assert_eq!(spawn_scenario(&cfg).unwrap(), spawn_scenario(&cfg).unwrap());
        }
    }

    #[test]
    fn empty_traffic_world() {
        let mut cfg = ScenarioConfig::highway();
        cfg.sv_count = 0;
        let w = spawn_scenario(&cfg).unwrap();
        assert!(w.svs.is_empty());
        assert!(check_collision(&w).is_empty());
    }

    #[test]
    fn overcrowded_config_fails_placement() {
        let mut cfg = ScenarioConfig::highway();
        cfg.lane_count = 1;
        cfg.sv_count = 40;
        assert!(matches!(
            spawn_scenario(&cfg),
            Err(ConfigError::Placement { .. })
        ));
    }

    #[test]
    fn invalid_speed_range_rejected() {
        let mut cfg = ScenarioConfig::highway();
        cfg.sv_speed_range = [30.0, 40.0];
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn t_intersection_layout() {
        let cfg = ScenarioConfig::t_intersection().with_seed(3);
        let w = spawn_scenario(&cfg).unwrap();
        assert_eq!(w.svs.len(), 6);
        assert_eq!(w.walkers.len(), 2);
        assert_eq!(w.ego.speed, 0.0);
        assert!(w.map.drivable.contains_box(&w.ego.bounding_box()));
        let (s, d) = w.map.ego_route.project(w.ego.position());
        assert!(d.abs() < 1e-9);
        assert!(s < w.map.goal_route_s.unwrap());
        // Route must stay on the drivable surface with an ego-sized footprint.
        let route = &w.map.ego_route;
        let mut s = s;
        while s < w.map.goal_route_s.unwrap() + 5.0 {
            let pose = route.pose_at(s);
            let b = OrientedBox::new(pose.point, pose.heading, VEHICLE_LENGTH, VEHICLE_WIDTH);
            assert!(w.map.drivable.contains_box(&b), "off-road at s = {s}");
            s += 0.25;
        }
    }

    #[test]
    fn resting_world_stays_put() {
        let mut cfg = ScenarioConfig::t_intersection();
        cfg.walker_count = 0;
        let mut w = spawn_scenario(&cfg).unwrap();
        for sv in &mut w.svs {
            sv.speed = 0.0;
            sv.desired_speed = 0.0;
        }
        let next = step_world(&w, EgoControl::default(), w.dt());
        for (a, b) in w.svs.iter().zip(&next.svs) {
            assert_eq!((a.x, a.y), (b.x, b.y));
        }
        assert_eq!((w.ego.x, w.ego.y), (next.ego.x, next.ego.y));
    }

    #[test]
    fn ego_kinematics_closed_form() {
        let mut cfg = ScenarioConfig::highway();
        cfg.sv_count = 0;
        let mut w = spawn_scenario(&cfg).unwrap();
        w.ego.speed = 10.0;
        let next = step_world(&w, EgoControl { accel: 1.0, steer: 0.0 }, 0.05);
        assert!((next.ego.speed - 10.05).abs() < 1e-12);
        assert!((next.ego.x - (10.0 * 0.05 + 0.5 * 0.05 * 0.05)).abs() < 1e-12);
        assert_eq!(next.ego.y, 0.0);
        assert!((next.time - 0.05).abs() < 1e-15);
    }

    #[test]
    fn follower_behind_slower_ego_brakes() {
        let mut cfg = ScenarioConfig::highway();
        cfg.sv_count = 1;
        let mut w = spawn_scenario(&cfg).unwrap();
        w.ego.speed = 20.0;
        let sv = &mut w.svs[0];
        sv.x = w.ego.x - 15.0;
        sv.y = 0.0;
        sv.heading = 0.0;
        sv.speed = 28.0;
        sv.lane_change = None;
        let next = step_world(&w, EgoControl::default(), w.dt());
        assert!(next.svs[0].accel < 0.0);
        assert!(next.svs[0].ego_attributed);
    }

    #[test]
    fn crossing_ego_makes_main_road_traffic_yield() {
        let mut cfg = ScenarioConfig::t_intersection();
        cfg.sv_count = 1;
        cfg.walker_count = 0;
        let mut w = spawn_scenario(&cfg).unwrap();
        let sv = &mut w.svs[0];
        sv.x = -40.0;
        sv.y = -0.5 * cfg.lane_width;
        sv.heading = 0.0;
        sv.speed = 15.0;
        // Ego front inside the eastbound half of the junction.
        w.ego.y = -cfg.lane_width + 1.0;
        let accels = surrounding_accelerations(&w);
        assert!(accels[0].0 < 0.0);
        assert!(accels[0].1);
        // Once the ego is gone the same vehicle accelerates freely.
        w.ego.y = -30.0;
        let accels = surrounding_accelerations(&w);
        assert!(!accels[0].1);
    }

    #[test]
    fn walkers_follow_straight_paths() {
        let cfg = ScenarioConfig::t_intersection().with_seed(5);
        let w = spawn_scenario(&cfg).unwrap();
        let next = step_world(&w, EgoControl::default(), 0.05);
        for (a, b) in w.walkers.iter().zip(&next.walkers) {
            assert!((b.x - a.x).abs() < 1e-12);
            assert!(((b.y - a.y).abs() - 1.4 * 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn speeds_stay_valid_over_long_runs() {
        for cfg in [ScenarioConfig::highway(), ScenarioConfig::t_intersection()] {
            let mut w = spawn_scenario(&cfg.with_seed(11)).unwrap();
            for k in 0..400 {
                let control = EgoControl {
                    accel: if k % 50 < 25 { -8.0 } else { 3.0 },
                    steer: 0.0,
                };
                w = step_world(&w, control, w.dt());
                for v in w.svs.iter().chain(std::iter::once(&w.ego)) {
                    assert!(v.speed >= 0.0 && v.speed.is_finite());
                    assert!(v.heading > -PI && v.heading <= PI);
                }
            }
        }
    }
}
