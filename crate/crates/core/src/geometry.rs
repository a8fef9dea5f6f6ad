//! Planar geometry shared by the simulator, the planner and the tracker.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_heading(heading: f64) -> Self {
        Self::new(heading.cos(), heading.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Expresses `self` in a frame rotated by `heading`.
    pub fn to_frame(self, heading: f64) -> Vec2 {
        let (s, c) = heading.sin_cos();
        Vec2::new(c * self.x + s * self.y, -s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedBox {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            half_length: 0.5 * length,
            half_width: 0.5 * width,
        }
    }

    /// Corners in counter-clockwise order starting front-left.
    pub fn corners(&self) -> [Vec2; 4] {
        let f = Vec2::from_heading(self.heading);
        let l = f.perp();
        let a = f * self.half_length;
        let b = l * self.half_width;
        [
            self.center + a + b,
            self.center - a + b,
            self.center - a - b,
            self.center + a - b,
        ]
    }

    pub fn bounding_radius(&self) -> f64 {
        self.half_length.hypot(self.half_width)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let local = (p - self.center).to_frame(self.heading);
        local.x.abs() <= self.half_length && local.y.abs() <= self.half_width
    }

    /// Distance from a point to the box; zero inside.
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        let local = (p - self.center).to_frame(self.heading);
        let dx = (local.x.abs() - self.half_length).max(0.0);
        let dy = (local.y.abs() - self.half_width).max(0.0);
        dx.hypot(dy)
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn aabb_half_extents(&self) -> Vec2 {
        let (s, c) = self.heading.sin_cos();
        Vec2::new(
            self.half_length * c.abs() + self.half_width * s.abs(),
            self.half_length * s.abs() + self.half_width * c.abs(),
        )
    }
}

/// Separating-axis overlap test. Touching boxes count as overlapping.
pub fn boxes_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let d = b.center - a.center;
    if d.norm() > a.bounding_radius() + b.bounding_radius() {
        return false;
    }
    let axes = [
        Vec2::from_heading(a.heading),
        Vec2::from_heading(a.heading).perp(),
        Vec2::from_heading(b.heading),
        Vec2::from_heading(b.heading).perp(),
    ];
    let ra_axes = [
        Vec2::from_heading(a.heading) * a.half_length,
        Vec2::from_heading(a.heading).perp() * a.half_width,
    ];
    let rb_axes = [
        Vec2::from_heading(b.heading) * b.half_length,
        Vec2::from_heading(b.heading).perp() * b.half_width,
    ];
    axes.iter().all(|axis| {
        let ra = ra_axes[0].dot(*axis).abs() + ra_axes[1].dot(*axis).abs();
        let rb = rb_axes[0].dot(*axis).abs() + rb_axes[1].dot(*axis).abs();
        d.dot(*axis).abs() <= ra + rb
    })
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Minimum Euclidean distance between two boxes, zero when they overlap.
pub fn box_distance(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if boxes_overlap(a, b) {
        return 0.0;
    }
    let ca = a.corners();
    let cb = b.corners();
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let (a0, a1) = (ca[i], ca[(i + 1) % 4]);
        let (b0, b1) = (cb[i], cb[(i + 1) % 4]);
        for j in 0..4 {
            best = best.min(point_segment_distance(cb[j], a0, a1));
            best = best.min(point_segment_distance(ca[j], b0, b1));
        }
    }
    best
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

impl Polygon {
    pub fn rectangle(min: Vec2, max: Vec2) -> Self {
        Self {
            vertices: vec![
                min,
                Vec2::new(max.x, min.y),
                max,
                Vec2::new(min.x, max.y),
            ],
        }
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b - a).cross(p - a) >= -1e-9
        })
    }
}

/// Union of convex polygons.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub polygons: Vec<Polygon>,
}

impl Region {
    pub fn contains(&self, p: Vec2) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }

    pub fn contains_box(&self, b: &OrientedBox) -> bool {
        b.corners().iter().all(|c| self.contains(*c))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PathSegment {
    Line {
        start: Vec2,
        heading: f64,
        length: f64,
    },
    /// Circular arc; positive `sweep` turns left.
    Arc {
        start: Vec2,
        start_heading: f64,
        radius: f64,
        sweep: f64,
    },
}

impl PathSegment {
    pub fn length(&self) -> f64 {
        match self {
            PathSegment::Line { length, .. } => *length,
            PathSegment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn pose_at(&self, s: f64) -> PathPose {
        match *self {
            PathSegment::Line {
                start,
                heading,
                ..
            } => PathPose {
                point: start + Vec2::from_heading(heading) * s,
                heading,
                curvature: 0.0,
            },
            PathSegment::Arc {
                start,
                start_heading,
                radius,
                sweep,
            } => {
                let sign = sweep.signum();
                let center = start + Vec2::from_heading(start_heading).perp() * (sign * radius);
                let heading = start_heading + sign * s / radius;
                let radial = start - center;
                let angle = sign * s / radius;
                let (sn, cs) = angle.sin_cos();
                let rotated = Vec2::new(cs * radial.x - sn * radial.y, sn * radial.x + cs * radial.y);
                PathPose {
                    point: center + rotated,
                    heading: normalize_angle(heading),
                    curvature: sign / radius,
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathPose {
    pub point: Vec2,
    pub heading: f64,
    pub curvature: f64,
}

/// Piecewise line/arc reference path parameterized by arc length.
///
/// Outside `[0, length]` the path is extended along the end tangents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutePath {
    pub segments: Vec<PathSegment>,
}

impl RoutePath {
    pub fn straight(start: Vec2, heading: f64, length: f64) -> Self {
        Self {
            segments: vec![PathSegment::Line {
                start,
                heading,
                length,
            }],
        }
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(PathSegment::length).sum()
    }

    pub fn pose_at(&self, s: f64) -> PathPose {
        if s <= 0.0 {
            let p0 = self.segments[0].pose_at(0.0);
            return PathPose {
                point: p0.point + Vec2::from_heading(p0.heading) * s,
                curvature: 0.0,
                ..p0
            };
        }
        let mut acc = 0.0;
        for seg in &self.segments {
            let len = seg.length();
            if s <= acc + len {
                return seg.pose_at(s - acc);
            }
            acc += len;
        }
        let last = self.segments.last().expect("route has segments");
        let end = last.pose_at(last.length());
        PathPose {
            point: end.point + Vec2::from_heading(end.heading) * (s - acc),
            curvature: 0.0,
            ..end
        }
    }

    /// Arc length and signed lateral offset (left positive) of the closest path point.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut acc = 0.0;
        let n = self.segments.len();
        for (i, seg) in self.segments.iter().enumerate() {
            let len = seg.length();
            let (local_s, lateral) = match *seg {
                PathSegment::Line { start, heading, .. } => {
                    let rel = (p - start).to_frame(heading);
                    (rel.x, rel.y)
                }
                PathSegment::Arc {
                    start,
                    start_heading,
                    radius,
                    sweep,
                } => {
                    let sign = sweep.signum();
                    let center =
                        start + Vec2::from_heading(start_heading).perp() * (sign * radius);
                    let r0 = start - center;
                    let rp = p - center;
                    let ang = r0.cross(rp).atan2(r0.dot(rp));
                    let loc = sign * ang * radius;
                    let lateral = sign * (radius - rp.norm());
                    (loc, lateral)
                }
            };
            // Interior segments clamp; the ends extend along tangents.
            let lo = if i == 0 { f64::NEG_INFINITY } else { 0.0 };
            let hi = if i + 1 == n { f64::INFINITY } else { len };
            let clamped = local_s.clamp(lo, hi);
            let (dist, s_here, d_here) = if (clamped - local_s).abs() < 1e-12 {
                (lateral.abs(), acc + local_s, lateral)
            } else {
                let pose = seg.pose_at(clamped);
                let rel = (p - pose.point).to_frame(pose.heading);
                (rel.norm(), acc + clamped, rel.y)
            };
            if dist < best.0 {
                best = (dist, s_here, d_here);
            }
            acc += len;
        }
        (best.1, best.2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Sample points inside `a` and test membership in `b`.
    fn sampled_overlap(a: &OrientedBox, b: &OrientedBox, n: usize) -> bool {
        let f = Vec2::from_heading(a.heading);
        let l = f.perp();
        for i in 0..=n {
            for j in 0..=n {
                let u = -1.0 + 2.0 * i as f64 / n as f64;
                let v = -1.0 + 2.0 * j as f64 / n as f64;
                let p = a.center + f * (u * a.half_length) + l * (v * a.half_width);
                if b.contains(p) {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn disjoint_and_identical_boxes() {
        let a = OrientedBox::new(Vec2::new(0.0, 0.0), 0.0, 4.8, 1.8);
        let b = OrientedBox::new(Vec2::new(100.0, 0.0), 0.0, 4.8, 1.8);
        assert!(!boxes_overlap(&a, &b));
        assert!(boxes_overlap(&a, &a));
        assert!((box_distance(&a, &b) - 95.2).abs() < 1e-12);
    }

    #[test]
    fn corner_touch_cases_match_point_sampling() {
        // b rotated 45 degrees so that its corner points at a's front face.
        let a = OrientedBox::new(Vec2::new(0.0, 0.0), 0.0, 4.0, 2.0);
        let diag = 2f64.sqrt(); // half diagonal of a 2x2 square
        for (gap, expect) in [(-0.05, true), (0.05, false), (-0.2, true), (0.2, false)] {
            let b = OrientedBox::new(
                Vec2::new(2.0 + diag + gap, 0.0),
                std::f64::consts::FRAC_PI_4,
                2.0,
                2.0,
            );
            let oracle = sampled_overlap(&b, &a, 400) || sampled_overlap(&a, &b, 400);
            assert_eq!(oracle, expect, "oracle at gap {gap}");
            assert_eq!(boxes_overlap(&a, &b), expect, "sat at gap {gap}");
            if !expect {
                assert!((box_distance(&a, &b) - gap).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn angle_wraps_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn arc_route_poses_and_projection() {
        let route = RoutePath {
            segments: vec![
                PathSegment::Line {
                    start: Vec2::new(0.0, -10.0),
                    heading: PI / 2.0,
                    length: 5.0,
                },
                PathSegment::Arc {
                    start: Vec2::new(0.0, -5.0),
                    start_heading: PI / 2.0,
                    radius: 7.0,
                    sweep: PI / 2.0,
                },
                PathSegment::Line {
                    start: Vec2::new(-7.0, 2.0),
                    heading: PI,
                    length: 50.0,
                },
            ],
        };
        let end_of_arc = route.pose_at(5.0 + 7.0 * PI / 2.0);
        assert!((end_of_arc.point.x + 7.0).abs() < 1e-9);
        assert!((end_of_arc.point.y - 2.0).abs() < 1e-9);
        assert!((end_of_arc.heading - PI).abs() < 1e-9);
        for s in [1.0, 6.0, 9.0, 14.0, 30.0] {
            for d in [-0.7, 0.0, 0.4] {
                let pose = route.pose_at(s);
                let p = pose.point + Vec2::from_heading(pose.heading).perp() * d;
                let (ps, pd) = route.project(p);
                assert!((ps - s).abs() < 1e-9, "s {s} d {d} -> {ps}");
                assert!((pd - d).abs() < 1e-9, "s {s} d {d} -> {pd}");
            }
        }
    }
}
