use serde::{Deserialize, Serialize};

/// Gap value that stands for "no leader".
pub const FREE_ROAD_GAP: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    /// Desired speed v0 in m/s. Surrounding vehicles override it with their own sampled speed.
    pub desired_speed: f64,
    /// Desired time headway T in s.
    pub time_headway: f64,
    /// Jam distance s0 in m.
    pub min_gap: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub exponent: f64,
    /// Lower clamp applied to every IDM output, in m/s² (positive number).
    pub emergency_decel: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 30.0,
            time_headway: 1.5,
            min_gap: 2.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            exponent: 4.0,
            emergency_decel: 8.0,
        }
    }
}

impl IdmParams {
    pub fn with_desired_speed(mut self, v0: f64) -> Self {
        self.desired_speed = v0;
        self
    }

    pub fn is_valid(&self) -> bool {
        [
            self.desired_speed,
            self.time_headway,
            self.min_gap,
            self.max_accel,
            self.comfort_decel,
            self.exponent,
            self.emergency_decel,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Intelligent-driver-model acceleration for a follower at speed `speed` behind a
/// leader at bumper gap `gap` moving at `lead_speed`.
///
/// Pass [`FREE_ROAD_GAP`] with `lead_speed = speed` when there is no leader; the interaction
/// term then vanishes.
pub fn idm_acceleration(speed: f64, gap: f64, lead_speed: f64, params: &IdmParams) -> f64 {
    let v = speed.max(0.0);
    let gap = gap.max(1e-3);
    let dv = v - lead_speed;
    let s_star = params.min_gap
        + (v * params.time_headway + v * dv / (2.0 * (params.max_accel * params.comfort_decel).sqrt()))
            .max(0.0);
    // A zero desired speed describes a parked vehicle: it holds still once stopped.
    let free = if params.desired_speed > 0.0 {
        (v / params.desired_speed).powf(params.exponent)
    } else if v > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    let interaction = if gap >= FREE_ROAD_GAP {
        0.0
    } else {
        (s_star / gap).powi(2)
    };
    let a = params.max_accel * (1.0 - free - interaction);
    a.clamp(-params.emergency_decel, params.max_accel)
}
