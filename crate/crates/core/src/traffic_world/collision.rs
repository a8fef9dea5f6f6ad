use serde::{Deserialize, Serialize};

use super::WorldState;
use crate::geometry::{box_distance, boxes_overlap, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentRef {
    Ego,
    Vehicle(u32),
    Walker(u32),
}

/// Unordered pair normalized so that `.0 < .1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CollisionPair(pub AgentRef, pub AgentRef);

impl CollisionPair {
    pub fn new(a: AgentRef, b: AgentRef) -> Self {
        if a <= b {
            Self(a, b)
        } else {
            Self(b, a)
        }
    }

    pub fn involves(&self, agent: AgentRef) -> bool {
        self.0 == agent || self.1 == agent
    }
}

/// All overlapping agent pairs, sorted, each reported once.
pub fn check_collision(world: &WorldState) -> Vec<CollisionPair> {
    let mut boxes = Vec::with_capacity(world.svs.len() + 1);
    boxes.push((AgentRef::Ego, world.ego.bounding_box()));
    for sv in &world.svs {
        boxes.push((AgentRef::Vehicle(sv.id), sv.bounding_box()));
    }
    let mut pairs = Vec::new();
    for i in 0..boxes.len() {
        for j in (i + 1)..boxes.len() {
            if boxes_overlap(&boxes[i].1, &boxes[j].1) {
                pairs.push(CollisionPair::new(boxes[i].0, boxes[j].0));
            }
        }
        for w in &world.walkers {
            if boxes[i].1.distance_to_point(Vec2::new(w.x, w.y)) <= w.radius {
                pairs.push(CollisionPair::new(boxes[i].0, AgentRef::Walker(w.id)));
            }
        }
    }
    pairs.sort();
    pairs
}

pub fn ego_collides(world: &WorldState) -> bool {
    let ego = world.ego.bounding_box();
    world.svs.iter().any(|sv| boxes_overlap(&ego, &sv.bounding_box()))
        || world
            .walkers
            .iter()
            .any(|w| ego.distance_to_point(Vec2::new(w.x, w.y)) <= w.radius)
}

/// Smallest clearance between the ego footprint and any other participant; infinite when alone.
pub fn ego_min_distance(world: &WorldState) -> f64 {
    let ego = world.ego.bounding_box();
    let mut best = f64::INFINITY;
    for sv in &world.svs {
        let other = sv.bounding_box();
        let coarse = (other.center - ego.center).norm() - other.bounding_radius() - ego.bounding_radius();
        if coarse >= best {
            continue;
        }
        best = best.min(box_distance(&ego, &other));
    }
    for w in &world.walkers {
        let d = (ego.distance_to_point(Vec2::new(w.x, w.y)) - w.radius).max(0.0);
        best = best.min(d);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic_world::{spawn_scenario, ScenarioConfig};

    #[test]
    fn far_apart_vehicles_do_not_collide() {
        let mut cfg = ScenarioConfig::highway();
        cfg.sv_count = 1;
        let mut w = spawn_scenario(&cfg).unwrap();
        w.svs[0].x = w.ego.x + 100.0;
        w.svs[0].y = w.ego.y;
        assert!(check_collision(&w).is_empty());
        assert!((ego_min_distance(&w) - (100.0 - 4.8)).abs() < 1e-9);
    }

    #[test]
    fn identical_pose_collides_once_and_order_independent() {
        let mut cfg = ScenarioConfig::highway();
        cfg.sv_count = 3;
        let mut w = spawn_scenario(&cfg).unwrap();
        w.svs[1].x = w.ego.x;
        w.svs[1].y = w.ego.y;
        w.svs[1].heading = w.ego.heading;
        let pairs = check_collision(&w);
        let id = w.svs[1].id;
        assert!(pairs.contains(&CollisionPair::new(AgentRef::Ego, AgentRef::Vehicle(id))));
        assert!(pairs.iter().all(|p| p.0 != p.1));
        let mut reversed = w.clone();
        reversed.svs.reverse();
        assert_eq!(check_collision(&reversed), pairs);
        assert!(ego_collides(&w));
        assert_eq!(ego_min_distance(&w), 0.0);
    }
}
