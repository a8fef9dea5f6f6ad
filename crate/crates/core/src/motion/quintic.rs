/// Quintic polynomial matching position, velocity and acceleration at both ends of `[0, duration]`.
/// Beyond `duration` the end state is held.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quintic {
    coeffs: [f64; 6],
    duration: f64,
    end: f64,
}

impl Quintic {
    pub fn new(start: [f64; 3], end: [f64; 3], duration: f64) -> Self {
        let [p0, v0, a0] = start;
        let [p1, v1, a1] = end;
        let t = duration;
        let (t2, t3, t4, t5) = (t * t, t * t * t, t * t * t * t, t * t * t * t * t);
        let c3 = (20.0 * (p1 - p0) - (8.0 * v1 + 12.0 * v0) * t - (3.0 * a0 - a1) * t2) / (2.0 * t3);
        let c4 = (30.0 * (p0 - p1) + (14.0 * v1 + 16.0 * v0) * t + (3.0 * a0 - 2.0 * a1) * t2)
            / (2.0 * t4);
        let c5 = (12.0 * (p1 - p0) - 6.0 * (v1 + v0) * t - (a0 - a1) * t2) / (2.0 * t5);
        Self {
            coeffs: [p0, v0, 0.5 * a0, c3, c4, c5],
            duration,
            end: p1,
        }
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Position, velocity and acceleration at time `t`.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        if t >= self.duration {
            return [self.end, 0.0, 0.0];
        }
        let t = t.max(0.0);
        let c = &self.coeffs;
        let p = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
        let v = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
        let a = 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
        [p, v, a]
    }
}
