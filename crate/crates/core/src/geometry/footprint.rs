//! Yaw-oriented rectangular object footprints in bird's-eye view.

use crate::model::ObjectObservation;

use super::polygon::{point_on_segment, segments_intersect, Point};

/// Counter-clockwise corner list of an oriented rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub corners: [Point; 4],
}

impl Footprint {
    /// Rectangle of extent `length` along the heading `yaw` and `width`
    /// across it, centered on (x, y).
    pub fn new(x: f64, y: f64, length: f64, width: f64, yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        let hl = 0.5 * length;
        let hw = 0.5 * width;
        let corner = |u: f64, v: f64| [x + u * c - v * s, y + u * s + v * c];
        Footprint {
            corners: [
                corner(hl, hw),
                corner(-hl, hw),
                corner(-hl, -hw),
                corner(hl, -hw),
            ],
        }
    }

    pub fn of(obs: &ObjectObservation) -> Self {
        Footprint::new(obs.x, obs.y, obs.length, obs.width, obs.yaw)
    }

    pub fn area(&self) -> f64 {
        super::polygon::shoelace_area(&self.corners).abs()
    }

    /// Containment for a convex CCW quad; boundary counts as inside.
    pub fn contains(&self, p: Point) -> bool {
        for i in 0..4 {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 4];
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            if cross < -1e-12 {
                return false;
            }
        }
        true
    }

    /// Whether the closed segment a-b touches this footprint at any point.
    pub fn intersects_segment(&self, a: Point, b: Point) -> bool {
        if self.contains(a) || self.contains(b) {
            return true;
        }
        for i in 0..4 {
            let c = self.corners[i];
            let d = self.corners[(i + 1) % 4];
            if segments_intersect(a, b, c, d) {
                return true;
            }
        }
        false
    }

    pub fn on_boundary(&self, p: Point, tol: f64) -> bool {
        (0..4).any(|i| point_on_segment(p, self.corners[i], self.corners[(i + 1) % 4], tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn axis_aligned_corners() {
        let f = Footprint::new(0.0, 0.0, 4.0, 2.0, 0.0);
        assert_relative_eq!(f.area(), 8.0, epsilon = 1e-12);
        assert!(f.contains([1.9, 0.9]));
        assert!(f.contains([2.0, 1.0]));
        assert!(!f.contains([2.1, 0.0]));
    }

    #[test]
    fn rotated_footprint_contains_center() {
        let f = Footprint::new(3.0, -2.0, 4.5, 1.8, 1.1);
        assert!(f.contains([3.0, -2.0]));
        assert_relative_eq!(f.area(), 4.5 * 1.8, epsilon = 1e-12);
    }

    #[test]
    fn segment_through_footprint_intersects() {
        let f = Footprint::new(10.0, 0.0, 2.0, 2.0, 0.0);
        assert!(f.intersects_segment([0.0, 0.0], [20.0, 0.0]));
        assert!(!f.intersects_segment([0.0, 5.0], [20.0, 5.0]));
        // segment ending inside
        assert!(f.intersects_segment([0.0, 0.0], [10.0, 0.0]));
    }
}
