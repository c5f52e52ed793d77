//! Simple polygons, point containment, boundary distances, and convex
//! clipping.

use serde::{Deserialize, Serialize};

use super::GeometryError;

pub type Point = [f64; 2];

/// Simple (non-self-intersecting), implicitly closed polygon with at least
/// three vertices. Construction validates the invariants once; afterwards the
/// shape can be trusted everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon2D {
    vertices: Vec<Point>,
}

impl TryFrom<Vec<Point>> for Polygon2D {
    type Error = GeometryError;

    fn try_from(vertices: Vec<Point>) -> Result<Self, Self::Error> {
        Polygon2D::new(vertices)
    }
}

impl From<Polygon2D> for Vec<Point> {
    fn from(p: Polygon2D) -> Self {
        p.vertices
    }
}

impl Polygon2D {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(GeometryError::InvalidPolygon(
                "non-finite vertex coordinate".to_string(),
            ));
        }
        let poly = Polygon2D { vertices };
        if poly.area() <= 0.0 {
            return Err(GeometryError::InvalidPolygon("zero area".to_string()));
        }
        if !poly.is_simple() {
            return Err(GeometryError::InvalidPolygon(
                "self-intersecting outline".to_string(),
            ));
        }
        Ok(poly)
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon2D::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]).expect("valid rectangle")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        shoelace_area(&self.vertices).abs()
    }

    fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let (a1, a2) = (self.vertices[i], self.vertices[(i + 1) % n]);
            for j in i + 1..n {
                // skip edges sharing a vertex
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (b1, b2) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_intersect(a1, a2, b1, b2) {
                    return false;
                }
            }
        }
        true
    }

    /// Even-odd containment; points on the boundary count as inside.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            if point_on_segment(p, self.vertices[i], self.vertices[(i + 1) % n], 1e-9) {
                return true;
            }
        }
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (vi, vj) = (self.vertices[i], self.vertices[j]);
            if (vi[1] > p[1]) != (vj[1] > p[1]) {
                let x_cross = (vj[0] - vi[0]) * (p[1] - vi[1]) / (vj[1] - vi[1]) + vi[0];
                if p[0] < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Distance from `p` to the polygon outline (zero on the outline itself).
    pub fn boundary_distance(&self, p: Point) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| point_segment_distance(p, self.vertices[i], self.vertices[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn shoelace_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * acc
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

pub fn point_on_segment(p: Point, a: Point, b: Point, tol: f64) -> bool {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    if len == 0.0 {
        return (p[0] - a[0]).abs() <= tol && (p[1] - a[1]).abs() <= tol;
    }
    let cr = cross(a, b, p).abs() / len;
    if cr > tol {
        return false;
    }
    let dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
    dot >= -tol * len && dot <= len * len + tol * len
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let abx = b[0] - a[0];
    let aby = b[1] - a[1];
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len2).clamp(0.0, 1.0)
    };
    let qx = a[0] + t * abx;
    let qy = a[1] + t * aby;
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

/// Closed-segment intersection test, collinear overlaps included.
pub fn segments_intersect(a1: Point, a2: Point, b1: Point, b2: Point) -> bool {
    let d1 = cross(b1, b2, a1);
    let d2 = cross(b1, b2, a2);
    let d3 = cross(a1, a2, b1);
    let d4 = cross(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |d: f64, p: Point, q1: Point, q2: Point| {
        d == 0.0
            && p[0] >= q1[0].min(q2[0])
            && p[0] <= q1[0].max(q2[0])
            && p[1] >= q1[1].min(q2[1])
            && p[1] <= q1[1].max(q2[1])
    };
    on(d1, a1, b1, b2) || on(d2, a2, b1, b2) || on(d3, b1, a1, a2) || on(d4, b2, a1, a2)
}

/// Sutherland-Hodgman clip of `subject` against a convex `clip` polygon given
/// in counter-clockwise order. Returns the clipped vertex list (possibly
/// empty).
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output: Vec<Point> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let next = input[(j + 1) % m];
            let cur_in = cross(a, b, cur) >= -1e-12;
            let next_in = cross(a, b, next) >= -1e-12;
            if cur_in {
                output.push(cur);
            }
            if cur_in != next_in {
                if let Some(p) = line_intersection(a, b, cur, next) {
                    output.push(p);
                }
            }
        }
    }
    output
}

fn line_intersection(a: Point, b: Point, c: Point, d: Point) -> Option<Point> {
    let r = [b[0] - a[0], b[1] - a[1]];
    let s = [d[0] - c[0], d[1] - c[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom.abs() < 1e-18 {
        return None;
    }
    let t = ((c[0] - a[0]) * s[1] - (c[1] - a[1]) * s[0]) / denom;
    Some([a[0] + t * r[0], a[1] + t * r[1]])
}
