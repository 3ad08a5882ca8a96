use crate::point::{BoundingBox, Point};

use super::GeometryError;

/// Relative tolerance used for vertex coincidence and strict convexity.
const VERTEX_EPS: f64 = 1e-12;

/// A strictly convex polygon with counterclockwise vertices. Face `i` is the
/// edge from vertex `i` to vertex `i + 1` (cyclically).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::InvalidPolygon(format!(
                "need at least 3 vertices, got {n}"
            )));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPolygon(format!("vertex {i} is not finite")));
        }
        for i in 0..n {
            for j in i + 1..n {
                if vertices[i].distance(vertices[j]) <= VERTEX_EPS {
                    return Err(GeometryError::InvalidPolygon(format!("vertices {i} and {j} coincide")));
                }
            }
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let turn = (b - a).cross(c - b);
            if turn <= VERTEX_EPS * (b - a).norm() * (c - b).norm() {
                return Err(GeometryError::InvalidPolygon(format!(
                    "vertex {} is not a strictly convex counterclockwise turn",
                    (i + 1) % n
                )));
            }
        }
        // A star-shaped winding (turning more than once) also has positive turns.
        let winding: f64 = (0..n)
            .map(|i| {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                let c = vertices[(i + 2) % n];
                let e1 = b - a;
                let e2 = c - b;
                e1.cross(e2).atan2(e1.dot(e2))
            })
            .sum();
        if (winding - std::f64::consts::TAU).abs() > 1e-6 {
            return Err(GeometryError::InvalidPolygon(
                "vertex chain winds more than once".into(),
            ));
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle `[x0,x1]×[y0,y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    /// Regular `n`-gon inscribed in the circle of given center and radius.
    pub fn regular(n: usize, center: Point, radius: f64) -> Result<Self, GeometryError> {
        let step = std::f64::consts::TAU / n as f64;
        Self::new(
            (0..n)
                .map(|k| center + Point::polar(k as f64 * step) * radius)
                .collect(),
        )
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn face_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face(&self, i: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    pub fn face_length(&self, i: usize) -> f64 {
        let (a, b) = self.face(i);
        a.distance(b)
    }

    pub fn outward_normal(&self, i: usize) -> Point {
        let (a, b) = self.face(i);
        let t = (b - a) / a.distance(b);
        Point::new(t.y, -t.x)
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.face_count()).map(|i| self.face_length(i)).sum()
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::from_points(&self.vertices).expect("polygon has vertices")
    }

    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut best = 0.0_f64;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                best = best.max(v[i].distance(v[j]));
            }
        }
        best
    }

    /// Closed containment test.
    pub fn contains(&self, x: Point) -> bool {
        (0..self.face_count()).all(|i| {
            let (a, b) = self.face(i);
            (b - a).cross(x - a) >= 0.0
        })
    }

    /// Signed distance from `x` to the supporting line of face `i`,
    /// positive on the interior side.
    pub fn line_distance(&self, i: usize, x: Point) -> f64 {
        let (a, _) = self.face(i);
        -(x - a).dot(self.outward_normal(i))
    }

    /// Closest point of face `i` (as a closed segment) and its distance.
    pub fn closest_on_face(&self, i: usize, x: Point) -> (Point, f64) {
        let (a, b) = self.face(i);
        closest_on_segment(a, b, x)
    }

    /// Mirror image of `x` across the supporting line of face `i`.
    pub fn reflect(&self, i: usize, x: Point) -> Point {
        let n = self.outward_normal(i);
        let (a, _) = self.face(i);
        x - n * (2.0 * (x - a).dot(n))
    }

    /// Parameter interval `[t0, t1] ⊂ [0, 1]` of the part of segment `a→b`
    /// inside the polygon (Cyrus–Beck), or `None` when they are disjoint.
    pub fn clip_segment(&self, a: Point, b: Point) -> Option<(f64, f64)> {
        let d = b - a;
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        for i in 0..self.face_count() {
            let n = self.outward_normal(i);
            let (p, _) = self.face(i);
            // inside: (x - p)·n <= 0
            let num = (a - p).dot(n);
            let den = d.dot(n);
            if den == 0.0 {
                if num > 0.0 {
                    return None;
                }
            } else {
                let t = -num / den;
                if den < 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some((t0, t1))
    }
}

pub(crate) fn closest_on_segment(a: Point, b: Point, x: Point) -> (Point, f64) {
    let d = b - a;
    let len_sq = d.norm_sq();
    let t = if len_sq == 0.0 {
        0.0
    } else {
        ((x - a).dot(d) / len_sq).clamp(0.0, 1.0)
    };
    let p = a + d * t;
    (p, p.distance(x))
}

/// Shoelace area (positive for counterclockwise chains).
pub fn polygon_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n).map(|i| vertices[i].cross(vertices[(i + 1) % n])).sum::<f64>()
}

/// Area centroid of a simple polygon; falls back to the vertex mean for
/// degenerate (zero-area) chains.
pub fn polygon_centroid(vertices: &[Point]) -> Point {
    let n = vertices.len();
    let area = polygon_area(vertices);
    if area.abs() < 1e-300 || n < 3 {
        let sum = vertices.iter().fold(Point::ORIGIN, |acc, &p| acc + p);
        return sum / n.max(1) as f64;
    }
    let mut c = Point::ORIGIN;
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        c += (p + q) * p.cross(q);
    }
    c / (6.0 * area)
}

/// Sutherland–Hodgman clip of an arbitrary convex or simple polygon against
/// a convex counterclockwise clip polygon.
pub fn clip_polygon(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % m];
        let edge = b - a;
        let inside = |p: Point| edge.cross(p - a) >= 0.0;
        let input = std::mem::take(&mut output);
        let k = input.len();
        for j in 0..k {
            let cur = input[j];
            let prev = input[(j + k - 1) % k];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn line_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    let e = b - a;
    let d = q - p;
    let den = e.cross(d);
    if den == 0.0 {
        return p;
    }
    let t = e.cross(a - p) / den;
    // e × (p + t d − a) = 0  ⇒  t = e×(a−p) / e×d
    p + d * t
}

/// Area of the intersection of two convex counterclockwise polygons.
pub fn intersection_area(a: &[Point], b: &[Point]) -> f64 {
    polygon_area(&clip_polygon(a, b)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_square() -> ConvexPolygon {
        ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_clockwise_and_degenerate() {
        let cw = vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ];
        assert!(ConvexPolygon::new(cw).is_err());
        let collinear = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        assert!(ConvexPolygon::new(collinear).is_err());
        let repeated = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert!(ConvexPolygon::new(repeated).is_err());
        assert!(ConvexPolygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn reflect_across_faces() {
        let sq = unit_square();
        let r = sq.reflect(0, Point::new(0.5, 0.2));
        assert_relative_eq!(r.x, 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.y, -0.2, epsilon = 1e-15);
        let r = sq.reflect(3, Point::new(0.1, 0.4));
        assert_relative_eq!(r.x, -0.1, epsilon = 1e-15);
        assert_relative_eq!(r.y, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn clip_segment_cases() {
        let sq = unit_square();
        let (t0, t1) = sq.clip_segment(Point::new(0.5, 0.5), Point::new(0.5, -0.5)).unwrap();
        assert_relative_eq!(t0, 0.0);
        assert_relative_eq!(t1, 0.5);
        assert!(sq.clip_segment(Point::new(2.0, 2.0), Point::new(3.0, 2.0)).is_none());
    }

    #[test]
    fn clipping_areas() {
        let sq = unit_square();
        let shifted = ConvexPolygon::rectangle(0.5, 0.5, 1.5, 1.5).unwrap();
        assert_relative_eq!(
            intersection_area(sq.vertices(), shifted.vertices()),
            0.25,
            epsilon = 1e-15
        );
        let tri = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert_relative_eq!(intersection_area(&tri, sq.vertices()), 0.5, epsilon = 1e-15);
        let c = polygon_centroid(&tri);
        assert_relative_eq!(c.x, 1.0 / 3.0, epsilon = 1e-15);
    }
}
