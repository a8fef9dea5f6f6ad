use serde::{Deserialize, Serialize};

use super::idm::{idm_acceleration, IdmParams, FREE_ROAD_GAP};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilParams {
    pub politeness: f64,
    pub accel_threshold: f64,
    /// Largest deceleration (positive, m/s²) a lane change may impose on the new follower.
    pub safe_decel: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self {
            politeness: 0.3,
            accel_threshold: 0.2,
            safe_decel: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaneDecision {
    Stay,
    Left,
    Right,
}

/// Another vehicle as seen along the lane axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    /// Longitudinal position of the vehicle center along the travel direction.
    pub position: f64,
    pub speed: f64,
    pub length: f64,
    pub desired_speed: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LaneNeighbors {
    pub leader: Option<Neighbor>,
    pub follower: Option<Neighbor>,
}

/// Leaders and followers of the deciding vehicle in its current lane and the adjacent lanes.
/// An adjacent lane is `None` when it does not exist.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MobilNeighbors {
    pub current: LaneNeighbors,
    pub left: Option<LaneNeighbors>,
    pub right: Option<LaneNeighbors>,
}

/// Acceleration of `follower` when `leader` is directly ahead of it.
fn accel_behind(follower: &Neighbor, leader: Option<&Neighbor>, idm: &IdmParams) -> f64 {
    let params = idm.with_desired_speed(follower.desired_speed);
    match leader {
        Some(l) => {
            let gap = l.position - follower.position - 0.5 * (l.length + follower.length);
            idm_acceleration(follower.speed, gap, l.speed, &params)
        }
        None => idm_acceleration(follower.speed, FREE_ROAD_GAP, follower.speed, &params),
    }
}

/// The two MOBIL quantities for moving `me` into a lane with the given neighbors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilEvaluation {
    /// Acceleration the target-lane follower would experience behind `me`.
    pub new_follower_accel: f64,
    /// Own advantage plus politeness-weighted follower changes, minus the threshold.
    pub incentive: f64,
}

impl MobilEvaluation {
    pub fn is_safe(&self, mobil: &MobilParams) -> bool {
        self.new_follower_accel >= -mobil.safe_decel
    }
}

pub fn evaluate_change(
    me: &Neighbor,
    current: &LaneNeighbors,
    target: &LaneNeighbors,
    idm: &IdmParams,
    mobil: &MobilParams,
) -> MobilEvaluation {
    let a_me = accel_behind(me, current.leader.as_ref(), idm);
    let a_me_new = accel_behind(me, target.leader.as_ref(), idm);

    let (a_new_f, a_new_f_after) = match &target.follower {
        Some(n) => (
            accel_behind(n, target.leader.as_ref(), idm),
            accel_behind(n, Some(me), idm),
        ),
        None => (0.0, 0.0),
    };
    let (a_old_f, a_old_f_after) = match &current.follower {
        Some(o) => (
            accel_behind(o, Some(me), idm),
            accel_behind(o, current.leader.as_ref(), idm),
        ),
        None => (0.0, 0.0),
    };

    let incentive = (a_me_new - a_me)
        + mobil.politeness * ((a_new_f_after - a_new_f) + (a_old_f_after - a_old_f))
        - mobil.accel_threshold;
    MobilEvaluation {
        new_follower_accel: if target.follower.is_some() {
            a_new_f_after
        } else {
            0.0
        },
        incentive,
    }
}

/// MOBIL lane-change decision: a change is returned only when the new follower stays above
/// `-safe_decel` and the incentive exceeds the threshold. When both sides qualify the larger
/// incentive wins, with ties going left.
pub fn mobil_decision(
    me: &Neighbor,
    neighbors: &MobilNeighbors,
    idm: &IdmParams,
    mobil: &MobilParams,
) -> LaneDecision {
    let score = |lane: &Option<LaneNeighbors>| {
        lane.as_ref().and_then(|t| {
            let eval = evaluate_change(me, &neighbors.current, t, idm, mobil);
            (eval.is_safe(mobil) && eval.incentive > 0.0).then_some(eval.incentive)
        })
    };
    match (score(&neighbors.left), score(&neighbors.right)) {
        (Some(l), Some(r)) if r > l => LaneDecision::Right,
        (Some(_), _) => LaneDecision::Left,
        (None, Some(_)) => LaneDecision::Right,
        (None, None) => LaneDecision::Stay,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn car(position: f64, speed: f64) -> Neighbor {
        Neighbor {
            position,
            speed,
            length: 4.8,
            desired_speed: 30.0,
        }
    }

    #[test]
    fn symmetric_lanes_stay() {
        let me = car(0.0, 25.0);
        let lane = LaneNeighbors {
            leader: Some(car(40.0, 25.0)),
            follower: Some(car(-40.0, 25.0)),
        };
        let n = MobilNeighbors {
            current: lane,
            left: Some(lane),
            right: Some(lane),
        };
        let d = mobil_decision(&me, &n, &IdmParams::default(), &MobilParams::default());
        assert_eq!(d, LaneDecision::Stay);
    }

    #[test]
    fn unsafe_new_follower_vetoes_change() {
        let me = car(0.0, 15.0);
        let current = LaneNeighbors {
            leader: Some(car(12.0, 5.0)),
            follower: None,
        };
        // Fast follower right behind in the target lane.
        let left = LaneNeighbors {
            leader: None,
            follower: Some(car(-7.0, 30.0)),
        };
        let n = MobilNeighbors {
            current,
            left: Some(left),
            right: None,
        };
        let idm = IdmParams::default();
        let mobil = MobilParams::default();
        let eval = evaluate_change(&me, &current, &left, &idm, &mobil);
        assert!(eval.incentive > 0.0, "incentive should favour the change");
        assert!(!eval.is_safe(&mobil));
        assert_eq!(mobil_decision(&me, &n, &idm, &mobil), LaneDecision::Stay);
    }

    #[test]
    fn slow_leader_and_empty_left_lane_changes() {
        let me = car(0.0, 25.0);
        let current = LaneNeighbors {
            leader: Some(car(30.0, 15.0)),
            follower: None,
        };
        let n = MobilNeighbors {
            current,
            left: Some(LaneNeighbors::default()),
            right: None,
        };
        let idm = IdmParams::default();
        let mobil = MobilParams {
            politeness: 0.0,
            ..MobilParams::default()
        };
        // Brute-force both criteria from the raw IDM law.
        let p = idm.with_desired_speed(30.0);
        let a_now = idm_acceleration(25.0, 30.0 - 4.8, 15.0, &p);
        let a_free = idm_acceleration(25.0, FREE_ROAD_GAP, 25.0, &p);
        let incentive = a_free - a_now - mobil.accel_threshold;
        assert!(incentive > 0.0);
        assert_eq!(mobil_decision(&me, &n, &idm, &mobil), LaneDecision::Left);
    }

    fn opt_car() -> impl Strategy<Value = Option<(f64, f64)>> {
        prop::option::of((5.0f64..80.0, 0.0f64..35.0))
    }

    proptest! {
        #[test]
        fn never_returns_an_unsafe_change(
            v in 0.0f64..35.0,
            cl in opt_car(), cf in opt_car(),
            ll in opt_car(), lf in opt_car(),
            rl in opt_car(), rf in opt_car(),
        ) {
            let me = car(0.0, v);
            let lane = |l: Option<(f64, f64)>, f: Option<(f64, f64)>| LaneNeighbors {
                leader: l.map(|(d, s)| car(d + 4.8, s)),
                follower: f.map(|(d, s)| car(-d - 4.8, s)),
            };
            let n = MobilNeighbors {
                current: lane(cl, cf),
                left: Some(lane(ll, lf)),
                right: Some(lane(rl, rf)),
            };
            let idm = IdmParams::default();
            let mobil = MobilParams::default();
            let d = mobil_decision(&me, &n, &idm, &mobil);
            let target = match d {
                LaneDecision::Stay => None,
                LaneDecision::Left => n.left,
                LaneDecision::Right => n.right,
            };
            if let Some(t) = target {
                if let Some(f) = t.follower {
                    let a = accel_behind(&f, Some(&me), &idm);
                    prop_assert!(a >= -mobil.safe_decel);
                }
            }
        }
    }
}
