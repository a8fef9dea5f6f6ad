//! Constant-velocity transition model used inside the search tree.

use super::{surrounding_accelerations, WorldState};
use crate::decision_mdp::ActionId;
use crate::motion::{plan_maneuver, Infeasible, ManeuverPlan, NominalProfiles};
use crate::traffic_world::WHEELBASE;

/// Sets every surrounding vehicle's `accel` and `ego_attributed` to the IDM demand it would
/// have in `world`, without moving anything.
pub fn annotate_interactions(world: &mut WorldState) {
    let accels = surrounding_accelerations(world);
    for (sv, (a, attributed)) in world.svs.iter_mut().zip(accels) {
        sv.accel = a;
        sv.ego_attributed = attributed;
    }
}

/// Predicted world after `delta` seconds: other agents hold speed and heading, the ego follows
/// the nominal profile of `action`.
pub fn predict_transition(
    state: &WorldState,
    action: ActionId,
    delta: f64,
    profiles: &NominalProfiles,
) -> Result<WorldState, Infeasible> {
    let mut states = predict_samples(state, action, delta, 1, profiles)?;
    Ok(states.pop().expect("at least one sample"))
}

/// Like [`predict_transition`] but returns `samples` evenly spaced predicted worlds whose last
/// element is the state at `delta`. Intermediate states let callers detect collisions that a
/// single end-point check would step over.
pub fn predict_samples(
    state: &WorldState,
    action: ActionId,
    delta: f64,
    samples: usize,
    profiles: &NominalProfiles,
) -> Result<Vec<WorldState>, Infeasible> {
    let plan = plan_maneuver(state, action, profiles)?;
    Ok(predict_from_plan(state, &plan, delta, samples))
}

/// Sampled predictions along an already planned maneuver.
pub fn predict_from_plan(
    state: &WorldState,
    plan: &ManeuverPlan,
    delta: f64,
    samples: usize,
) -> Vec<WorldState> {
    let dt = state.dt();
    let traj = plan.sample(delta, dt);
    let n = traj.points.len() - 1;
    let samples = samples.clamp(1, n.max(1));
    let mut out = Vec::with_capacity(samples);
    for j in 1..=samples {
        let k = if n == 0 { 0 } else { (j * n) / samples };
        let t = k as f64 * dt;
        let p = traj.points[k];
        let mut next = state.clone();
        for sv in &mut next.svs {
            sv.x += sv.speed * sv.heading.cos() * t;
            sv.y += sv.speed * sv.heading.sin() * t;
            sv.lane_index = next.map.lane_at(sv.y);
        }
        for w in &mut next.walkers {
            w.x += w.speed * w.heading.cos() * t;
            w.y += w.speed * w.heading.sin() * t;
        }
        let ego = &mut next.ego;
        ego.x = p.x;
        ego.y = p.y;
        ego.heading = p.heading;
        ego.speed = p.speed;
        ego.accel = p.accel;
        ego.steer = (WHEELBASE * p.curvature).atan();
        ego.lane_index = next.map.lane_at(p.y);
        next.ego_plan = plan.ego_plan_after(t);
        next.step = state.step + k as u64;
        next.time = next.step as f64 * dt;
        annotate_interactions(&mut next);
        out.push(next);
    }
    out
}
