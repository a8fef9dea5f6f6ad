use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Trajectory, TrajectoryPoint};
use crate::geometry::{normalize_angle, Vec2};
use crate::traffic_world::{EgoControl, VehicleState, EGO_ACCEL_BOUNDS, EGO_STEER_BOUND, WHEELBASE};

pub const TRACKER_HORIZON: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub accel: f64,
    pub steer: f64,
}

impl From<ControlCommand> for EgoControl {
    fn from(c: ControlCommand) -> Self {
        EgoControl {
            accel: c.accel,
            steer: c.steer,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerWeights {
    pub lateral: f64,
    pub heading: f64,
    pub speed: f64,
    pub effort: f64,
}

impl Default for TrackerWeights {
    fn default() -> Self {
        Self {
            lateral: 1.0,
            heading: 0.5,
            speed: 0.2,
            effort: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, Error, PartialEq)]
pub enum TrackingError {
    #[error("t = {t:.3} s lies past the trajectory end {duration:.3} s")]
    HorizonExhausted { t: f64, duration: f64 },
}

/// Error-state model [e_y, e_ψ, e_v] with inputs [Δδ, Δa] about a reference moving at `speed`
/// on curvature `curvature`, discretized with step `dt`.
pub fn error_dynamics(speed: f64, curvature: f64, dt: f64) -> (Matrix3<f64>, Matrix3x2<f64>) {
    let lk = WHEELBASE * curvature;
    let yaw_gain = speed * (1.0 + lk * lk) / WHEELBASE;
    let a = Matrix3::new(1.0, speed * dt, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
    let b = Matrix3x2::new(
        0.5 * speed * yaw_gain * dt * dt,
        0.0,
        yaw_gain * dt,
        0.0,
        0.0,
        dt,
    );
    (a, b)
}

/// Feedback gain of the first stage of a finite-horizon LQR over the given stage models.
/// Terminal and stage state weights are both `q`.
pub fn riccati_gains(
    models: &[(Matrix3<f64>, Matrix3x2<f64>)],
    q: &Matrix3<f64>,
    r: &Matrix2<f64>,
) -> Matrix2x3<f64> {
    let mut p = *q;
    let mut gain = Matrix2x3::zeros();
    for (a, b) in models.iter().rev() {
        let btp = b.transpose() * p;
        let s = r + btp * b;
        let s_inv = s.try_inverse().unwrap_or_else(Matrix2::zeros);
        gain = s_inv * btp * a;
        p = q + a.transpose() * p * (a - b * gain);
        p = 0.5 * (p + p.transpose());
    }
    gain
}

/// Reference interpolated at the point of `traj` nearest to `p`; returns it with its fractional index.
fn nearest_reference(traj: &Trajectory, p: Vec2) -> (TrajectoryPoint, f64) {
    let pts = &traj.points;
    if pts.len() == 1 {
        return (pts[0], 0.0);
    }
    let mut best = (f64::INFINITY, 0usize, 0.0f64);
    for i in 0..pts.len() - 1 {
        let a = Vec2::new(pts[i].x, pts[i].y);
        let b = Vec2::new(pts[i + 1].x, pts[i + 1].y);
        let ab = b - a;
        let len2 = ab.dot(ab);
        let u = if len2 > 1e-12 {
            ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let d = (p - (a + ab * u)).norm();
        if d < best.0 - 1e-12 {
            best = (d, i, u);
        }
    }
    let (_, i, u) = best;
    (lerp_point(&pts[i], &pts[i + 1], u), i as f64 + u)
}

/// Signed lateral distance from the nearest reference point to `p`, positive to the left.
pub fn cross_track_error(traj: &Trajectory, p: Vec2) -> f64 {
    let (reference, _) = nearest_reference(traj, p);
    let normal = Vec2::from_heading(reference.heading).perp();
    (p - Vec2::new(reference.x, reference.y)).dot(normal)
}

fn lerp_point(a: &TrajectoryPoint, b: &TrajectoryPoint, u: f64) -> TrajectoryPoint {
    let l = |x: f64, y: f64| x + (y - x) * u;
    TrajectoryPoint {
        x: l(a.x, b.x),
        y: l(a.y, b.y),
        heading: normalize_angle(a.heading + normalize_angle(b.heading - a.heading) * u),
        speed: l(a.speed, b.speed),
        curvature: l(a.curvature, b.curvature),
        time: l(a.time, b.time),
        accel: l(a.accel, b.accel),
        lateral_accel: l(a.lateral_accel, b.lateral_accel),
    }
}

fn point_at_index(traj: &Trajectory, idx: f64) -> TrajectoryPoint {
    let last = traj.points.len() - 1;
    if idx >= last as f64 {
        return traj.points[last];
    }
    let i = idx.floor() as usize;
    lerp_point(&traj.points[i], &traj.points[i + 1], idx - i as f64)
}

/// Tracking command at time `t` with the default weights.
pub fn track_step(ego: &VehicleState, traj: &Trajectory, t: f64) -> Result<ControlCommand, TrackingError> {
    track_step_with(ego, traj, t, &TrackerWeights::default())
}

/// Finite-horizon quadratic tracking: the ego is projected onto the trajectory, the error
/// dynamics are linearized along the next [`TRACKER_HORIZON`] reference samples, and the
/// first-stage Riccati feedback is added to the curvature and acceleration feedforward.
pub fn track_step_with(
    ego: &VehicleState,
    traj: &Trajectory,
    t: f64,
    weights: &TrackerWeights,
) -> Result<ControlCommand, TrackingError> {
    if t > traj.duration + 1e-9 || traj.points.is_empty() {
        return Err(TrackingError::HorizonExhausted {
            t,
            duration: traj.duration,
        });
    }
    let (reference, idx) = nearest_reference(traj, ego.position());
    let normal = Vec2::from_heading(reference.heading).perp();
    let offset = ego.position() - Vec2::new(reference.x, reference.y);
    let x0 = Vector3::new(
        offset.dot(normal),
        normalize_angle(ego.heading - reference.heading),
        ego.speed - reference.speed,
    );
    let models: Vec<_> = (0..TRACKER_HORIZON)
        .map(|k| {
            let p = point_at_index(traj, idx + k as f64);
            error_dynamics(p.speed.max(0.0), p.curvature, traj.dt)
        })
        .collect();
    let q = Matrix3::from_diagonal(&Vector3::new(weights.lateral, weights.heading, weights.speed));
    let r = Matrix2::from_diagonal(&Vector2::new(weights.effort, weights.effort));
    let gain = riccati_gains(&models, &q, &r);
    let u = -(gain * x0);
    let steer_ff = (WHEELBASE * reference.curvature).atan();
    let accel = reference.accel + u[1];
    let steer = steer_ff + u[0];
    Ok(ControlCommand {
        accel: accel.clamp(EGO_ACCEL_BOUNDS.0, EGO_ACCEL_BOUNDS.1),
        steer: steer.clamp(-EGO_STEER_BOUND, EGO_STEER_BOUND),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision_mdp::ActionId;
    use nalgebra::{DMatrix, DVector};

    fn straight(speed: f64, duration: f64) -> Trajectory {
        let dt = 0.05;
        let n = (duration / dt).round() as usize;
        Trajectory {
            points: (0..=n)
                .map(|k| TrajectoryPoint {
                    x: speed * k as f64 * dt,
                    y: 0.0,
                    heading: 0.0,
                    speed,
                    curvature: 0.0,
                    time: k as f64 * dt,
                    accel: 0.0,
                    lateral_accel: 0.0,
                })
                .collect(),
            dt,
            duration: n as f64 * dt,
            meta_action: ActionId::MaintainLane,
            target_lane: Some(0),
            vehicle_length: 4.8,
            vehicle_width: 1.8,
        }
    }

    fn ego_at(x: f64, y: f64, heading: f64, speed: f64) -> VehicleState {
        VehicleState {
            id: 0,
            x,
            y,
            heading,
            speed,
            accel: 0.0,
            steer: 0.0,
            lane_index: Some(0),
            length: 4.8,
            width: 1.8,
            role: crate::traffic_world::Role::Ego,
            desired_speed: 30.0,
            lane_change: None,
            ego_attributed: false,
        }
    }

    #[test]
    fn equilibrium_gives_zero_command() {
        let traj = straight(20.0, 3.0);
        let c = track_step(&ego_at(0.0, 0.0, 0.0, 20.0), &traj, 0.0).unwrap();
        assert!(c.accel.abs() < 1e-6 && c.steer.abs() < 1e-6);
    }

    #[test]
    fn lateral_offset_steers_back() {
        let traj = straight(20.0, 3.0);
        let left = track_step(&ego_at(0.0, 0.5, 0.0, 20.0), &traj, 0.0).unwrap();
        assert!(left.steer < 0.0);
        let right = track_step(&ego_at(0.0, -0.5, 0.0, 20.0), &traj, 0.0).unwrap();
        assert!(right.steer > 0.0);
    }

    #[test]
    fn past_the_end_is_an_error() {
        let traj = straight(20.0, 1.0);
        assert!(matches!(
            track_step(&ego_at(0.0, 0.0, 0.0, 20.0), &traj, 1.2),
            Err(TrackingError::HorizonExhausted { .. })
        ));
    }

    #[test]
    fn riccati_gain_matches_batch_least_squares() {
        // Stack the horizon into one quadratic program and solve it densely.
        let (v, dt, n) = (15.0, 0.05, TRACKER_HORIZON);
        let (a, b) = error_dynamics(v, 0.0, dt);
        let q = Matrix3::from_diagonal(&Vector3::new(1.0, 0.5, 0.2));
        let r = Matrix2::from_diagonal(&Vector2::new(0.05, 0.05));
        let gain = riccati_gains(&vec![(a, b); n], &q, &r);

        let mut phi = DMatrix::<f64>::zeros(3 * n, 3);
        let mut gamma = DMatrix::<f64>::zeros(3 * n, 2 * n);
        let mut a_pow = Matrix3::identity();
        for k in 0..n {
            a_pow = a * a_pow;
            phi.view_mut((3 * k, 0), (3, 3)).copy_from(&a_pow);
            for j in 0..=k {
                let mut m = b;
                for _ in j..k {
                    m = a * m;
                }
                gamma.view_mut((3 * k, 2 * j), (3, 2)).copy_from(&m);
            }
        }
        let mut q_bar = DMatrix::<f64>::zeros(3 * n, 3 * n);
        let mut r_bar = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for k in 0..n {
            q_bar.view_mut((3 * k, 3 * k), (3, 3)).copy_from(&q);
            r_bar.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&r);
        }
        let h = gamma.transpose() * &q_bar * &gamma + r_bar;
        let h_inv = h.try_inverse().unwrap();
        for x0 in [
            DVector::from_vec(vec![0.5, 0.0, 0.0]),
            DVector::from_vec(vec![-0.2, 0.05, 1.0]),
            DVector::from_vec(vec![0.0, -0.1, -2.0]),
        ] {
            let u = -(&h_inv * gamma.transpose() * &q_bar * &phi * &x0);
            let x = Vector3::new(x0[0], x0[1], x0[2]);
            let u_lqr = -(gain * x);
            assert!((u[0] - u_lqr[0]).abs() < 1e-9, "{} vs {}", u[0], u_lqr[0]);
            assert!((u[1] - u_lqr[1]).abs() < 1e-9);
        }
    }
}
