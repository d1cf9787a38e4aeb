//! 2D geometry primitives: vectors, oriented rectangles, overlap and
//! distance queries used by collision detection and spacing metrics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).length()
    }

    pub fn normalized(self) -> Vec2 {
        let len = self.length();
        if len < 1e-12 {
            Vec2::new(1.0, 0.0)
        } else {
            self * (1.0 / len)
        }
    }

    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Oriented rectangle (vehicle footprint) given by center, heading and size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Obb {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Obb {
            center,
            heading,
            half_length: length * 0.5,
            half_width: width * 0.5,
        }
    }

    pub fn axes(&self) -> [Vec2; 2] {
        let fwd = Vec2::new(self.heading.cos(), self.heading.sin());
        [fwd, fwd.perp()]
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let [fwd, left] = self.axes();
        let l = fwd * self.half_length;
        let w = left * self.half_width;
        [
            self.center + l + w,
            self.center + l - w,
            self.center - l - w,
            self.center - l + w,
        ]
    }

    fn project(&self, axis: Vec2) -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for c in self.corners() {
            let p = c.dot(axis);
            min = min.min(p);
            max = max.max(p);
        }
        (min, max)
    }

    /// Separating-axis overlap test between two oriented rectangles.
    pub fn overlaps(&self, other: &Obb) -> bool {
        for axis in self.axes().iter().chain(other.axes().iter()) {
            let (min_a, max_a) = self.project(*axis);
            let (min_b, max_b) = other.project(*axis);
            if max_a < min_b || max_b < min_a {
                return false;
            }
        }
        true
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let [fwd, left] = self.axes();
        let d = p - self.center;
        d.dot(fwd).abs() <= self.half_length && d.dot(left).abs() <= self.half_width
    }
}

fn segment_point_distance(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 < 1e-18 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

pub fn segment_segment_distance(a1: Vec2, a2: Vec2, b1: Vec2, b2: Vec2) -> f64 {
    if segments_intersect(a1, a2, b1, b2) {
        return 0.0;
    }
    segment_point_distance(a1, a2, b1)
        .min(segment_point_distance(a1, a2, b2))
        .min(segment_point_distance(b1, b2, a1))
        .min(segment_point_distance(b1, b2, a2))
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_intersect(a1: Vec2, a2: Vec2, b1: Vec2, b2: Vec2) -> bool {
    let d1 = orient(b1, b2, a1);
    let d2 = orient(b1, b2, a2);
    let d3 = orient(a1, a2, b1);
    let d4 = orient(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    false
}

/// Minimum Euclidean distance between two oriented rectangles, 0 when they
/// overlap.
pub fn obb_distance(a: &Obb, b: &Obb) -> f64 {
    if a.overlaps(b) {
        return 0.0;
    }
    let ca = a.corners();
    let cb = b.corners();
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let (a1, a2) = (ca[i], ca[(i + 1) % 4]);
        for j in 0..4 {
            let (b1, b2) = (cb[j], cb[(j + 1) % 4]);
            best = best.min(segment_segment_distance(a1, a2, b1, b2));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_rectangles_do_not_overlap() {
        let a = Obb::new(Vec2::new(0.0, 0.0), 0.0, 4.5, 1.9);
        let b = Obb::new(Vec2::new(10.0, 0.0), 0.0, 4.5, 1.9);
        assert!(!a.overlaps(&b));
        assert!(obb_distance(&a, &b) > 5.0);
    }

    #[test]
    fn identical_poses_overlap_with_zero_distance() {
        let a = Obb::new(Vec2::new(3.0, -2.0), 0.7, 4.5, 1.9);
        assert!(a.overlaps(&a));
        assert_eq!(obb_distance(&a, &a), 0.0);
    }

    #[test]
    fn bumper_to_bumper_clearance() {
        // two axis-aligned sedans, 3 m of clearance between front and rear
        let a = Obb::new(Vec2::new(0.0, 0.0), 0.0, 4.5, 1.9);
        let b = Obb::new(Vec2::new(4.5 + 3.0, 0.0), 0.0, 4.5, 1.9);
        let d = obb_distance(&a, &b);
        assert!((d - 3.0).abs() < 1e-12, "d = {d}");
    }

    #[test]
    fn distance_is_symmetric() {
        let a = Obb::new(Vec2::new(1.0, 2.0), 0.3, 8.0, 2.5);
        let b = Obb::new(Vec2::new(7.0, -1.0), 2.1, 4.5, 1.9);
        assert_eq!(obb_distance(&a, &b), obb_distance(&b, &a));
    }

    #[test]
    fn rotated_pair_overlap() {
        let a = Obb::new(Vec2::new(0.0, 0.0), 0.0, 4.0, 2.0);
        let b = Obb::new(Vec2::new(2.5, 0.0), std::f64::consts::FRAC_PI_4, 4.0, 2.0);
        assert!(a.overlaps(&b));
        assert_eq!(obb_distance(&a, &b), 0.0);
    }
}
