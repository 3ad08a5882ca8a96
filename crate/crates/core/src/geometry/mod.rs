//! Domains (convex polygons and round polygons), boundary distances and
//! projections, the face partition and round approximations of polygons.

mod polygon;
mod round;

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::point::{BoundingBox, Point};

pub use polygon::{clip_polygon, intersection_area, polygon_area, polygon_centroid, ConvexPolygon};
pub use round::{Arc, NearestCenter, RoundPolygon, DEFAULT_COMPONENT_RESOLUTION};

/// Distance ties closer than this are treated as ambiguous.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Largest admissible bounding-box diagonal. Predicates use absolute
/// tolerances tuned for unit-scale domains.
pub const MAX_DIAGONAL: f64 = 10.0;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("invalid round polygon: {0}")]
    InvalidRoundPolygon(String),
    #[error("point ({x}, {y}) is equidistant from faces {first} and {second}")]
    AmbiguousProjection {
        x: f64,
        y: f64,
        first: usize,
        second: usize,
    },
    #[error("spacing {spacing} must be below twice the radius {radius}")]
    InvalidSpacing { spacing: f64, radius: f64 },
    #[error("bounding-box diagonal {0} exceeds {MAX_DIAGONAL}; rescale the domain")]
    DomainTooLarge(f64),
    #[error("domain file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone)]
pub enum Shape {
    Polygon(ConvexPolygon),
    Round(RoundPolygon),
}

/// A validated domain with its cached diameter.
#[derive(Debug, Clone)]
pub struct Domain {
    shape: Shape,
    diameter: f64,
    bbox: BoundingBox,
}

/// Nearest boundary point of a query together with the face attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: Point,
    pub face: usize,
    /// Another face attains the distance within [`TIE_TOLERANCE`]; `face`
    /// is then the lowest such index.
    pub tied: bool,
}

/// On-disk description of a domain.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Polygon { vertices: Vec<[f64; 2]> },
    Round { centers: Vec<[f64; 2]>, radius: f64 },
}

impl DomainSpec {
    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        serde_json::from_str(text).map_err(|e| GeometryError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, GeometryError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GeometryError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn build(&self, component_resolution: usize) -> Result<Domain, GeometryError> {
        let pts = |v: &[[f64; 2]]| v.iter().map(|&p| Point::from(p)).collect::<Vec<_>>();
        match self {
            DomainSpec::Polygon { vertices } => Domain::polygon(ConvexPolygon::new(pts(vertices))?),
            DomainSpec::Round { centers, radius } => Domain::round(RoundPolygon::with_resolution(
                pts(centers),
                *radius,
                component_resolution,
            )?),
        }
    }
}

impl Domain {
    pub fn polygon(polygon: ConvexPolygon) -> Result<Self, GeometryError> {
        let bbox = polygon.bounding_box();
        let diameter = polygon.diameter();
        Self::checked(Shape::Polygon(polygon), diameter, bbox)
    }

    pub fn round(round: RoundPolygon) -> Result<Self, GeometryError> {
        let bbox = round.bounding_box();
        let diameter = round.diameter();
        Self::checked(Shape::Round(round), diameter, bbox)
    }

    fn checked(shape: Shape, diameter: f64, bbox: BoundingBox) -> Result<Self, GeometryError> {
        if bbox.diagonal() > MAX_DIAGONAL {
            return Err(GeometryError::DomainTooLarge(bbox.diagonal()));
        }
        Ok(Self { shape, diameter, bbox })
    }

    /// The unit square `[0,1]²`.
    pub fn unit_square() -> Self {
        Self::polygon(ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).expect("valid square")).expect("unit scale")
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn as_polygon(&self) -> Option<&ConvexPolygon> {
        match &self.shape {
            Shape::Polygon(p) => Some(p),
            Shape::Round(_) => None,
        }
    }

    pub fn as_round(&self) -> Option<&RoundPolygon> {
        match &self.shape {
            Shape::Round(r) => Some(r),
            Shape::Polygon(_) => None,
        }
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn bounding_box(&self) -> BoundingBox {
        self.bbox
    }

    pub fn face_count(&self) -> usize {
        match &self.shape {
            Shape::Polygon(p) => p.face_count(),
            Shape::Round(r) => r.face_count(),
        }
    }

    pub fn face_length(&self, i: usize) -> f64 {
        match &self.shape {
            Shape::Polygon(p) => p.face_length(i),
            Shape::Round(r) => r.face_length(i),
        }
    }

    /// Membership in the closed polygon, or the open round polygon.
    pub fn contains(&self, x: Point) -> bool {
        match &self.shape {
            Shape::Polygon(p) => p.contains(x),
            Shape::Round(r) => r.contains(x),
        }
    }

    /// Distance to the boundary, positive inside and negative outside.
    pub fn signed_distance(&self, x: Point) -> f64 {
        match &self.shape {
            Shape::Polygon(p) => {
                if p.contains(x) {
                    (0..p.face_count())
                        .map(|i| p.line_distance(i, x))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    -(0..p.face_count())
                        .map(|i| p.closest_on_face(i, x).1)
                        .fold(f64::INFINITY, f64::min)
                }
            }
            Shape::Round(r) => {
                if r.contains(x) {
                    r.nearest_center(x).distance - r.radius()
                } else {
                    -r.distance_to_arcs(x)
                }
            }
        }
    }

    /// Nearest boundary point with the lowest-index tie-break; never fails.
    pub fn projection(&self, x: Point) -> Projection {
        match &self.shape {
            Shape::Polygon(p) => {
                let hits: Vec<(Point, f64)> = (0..p.face_count()).map(|i| p.closest_on_face(i, x)).collect();
                let dmin = hits.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
                let face = hits
                    .iter()
                    .position(|h| h.1 <= dmin + TIE_TOLERANCE)
                    .expect("polygon has faces");
                let point = hits[face].0;
                // Faces meeting at a vertex share that closest point; not a tie.
                let tied = hits
                    .iter()
                    .any(|&(q, d)| d <= dmin + TIE_TOLERANCE && q.distance(point) > TIE_TOLERANCE);
                Projection { point, face, tied }
            }
            Shape::Round(r) => {
                let near = r.nearest_center(x);
                let b = r.centers()[near.index];
                let dir = x - b;
                let point = if near.distance > 0.0 {
                    b + dir * (r.radius() / near.distance)
                } else {
                    b + Point::new(r.radius(), 0.0)
                };
                Projection {
                    point,
                    face: near.index,
                    tied: near.ties > 1,
                }
            }
        }
    }

    /// Nearest boundary point; fails when two faces attain the distance.
    pub fn project_to_boundary(&self, x: Point) -> Result<(Point, usize), GeometryError> {
        let proj = self.projection(x);
        if proj.tied {
            let second = self.second_face(x, proj.face);
            return Err(GeometryError::AmbiguousProjection {
                x: x.x,
                y: x.y,
                first: proj.face,
                second,
            });
        }
        Ok((proj.point, proj.face))
    }

    fn second_face(&self, x: Point, first: usize) -> usize {
        let d = |i: usize| match &self.shape {
            Shape::Polygon(p) => p.closest_on_face(i, x).1,
            Shape::Round(r) => x.distance(r.centers()[i]),
        };
        let target = d(first);
        (0..self.face_count())
            .find(|&i| i != first && (d(i) - target).abs() <= TIE_TOLERANCE)
            .unwrap_or(first)
    }

    /// Index of the face region containing `x`, and whether the index came
    /// from a tie-break.
    pub fn region_index(&self, x: Point) -> (usize, bool) {
        let p = self.projection(x);
        (p.face, p.tied)
    }

    /// Arc-length coordinate of boundary point `p` along face `face`.
    pub fn face_coordinate(&self, face: usize, p: Point) -> f64 {
        match &self.shape {
            Shape::Polygon(poly) => {
                let (a, b) = poly.face(face);
                (p - a).dot(b - a) / poly.face_length(face)
            }
            Shape::Round(r) => r.face_coordinate(face, p),
        }
    }

    /// Boundary points with arc-length step at most `step`.
    pub fn boundary_samples(&self, step: f64) -> Vec<Point> {
        let mut out = Vec::new();
        match &self.shape {
            Shape::Polygon(p) => {
                for i in 0..p.face_count() {
                    let (a, b) = p.face(i);
                    let n = (p.face_length(i) / step).ceil().max(1.0) as usize;
                    out.extend((0..n).map(|k| a.lerp(b, k as f64 / n as f64)));
                }
            }
            Shape::Round(r) => {
                for i in 0..r.face_count() {
                    for arc in r.arcs(i) {
                        let n = (arc.len * r.radius() / step).ceil().max(1.0) as usize;
                        out.extend((0..=n).map(|k| r.arc_point(i, arc.start + arc.len * k as f64 / n as f64)));
                    }
                }
            }
        }
        out
    }

    /// Hausdorff distance between the two boundaries, measured from dense
    /// boundary samples of each side to the exact distance function of the
    /// other.
    pub fn boundary_hausdorff(&self, other: &Domain, step: f64) -> f64 {
        let one_way = |from: &Domain, to: &Domain| {
            from.boundary_samples(step)
                .into_iter()
                .map(|x| to.signed_distance(x).abs())
                .fold(0.0, f64::max)
        };
        one_way(self, other).max(one_way(other, self))
    }

    /// Points where the segment `a→b` meets the boundary, ordered from `a`,
    /// with near-duplicates (closer than `1e-9`) merged.
    pub fn boundary_crossings(&self, a: Point, b: Point) -> Vec<Point> {
        let mut hits = match &self.shape {
            Shape::Polygon(p) => {
                let mut hits = Vec::new();
                for i in 0..p.face_count() {
                    let (c, d) = p.face(i);
                    if let Some(q) = segment_intersection(a, b, c, d) {
                        hits.push(q);
                    }
                }
                hits
            }
            Shape::Round(r) => r.segment_crossings(a, b),
        };
        hits.sort_by(|p, q| p.distance(a).total_cmp(&q.distance(a)));
        hits.dedup_by(|p, q| p.distance(*q) < 1e-9);
        hits
    }

    /// Uniform sample of interior points by rejection from the bounding box.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Point> {
        let bb = self.bbox;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x = Point::new(
                rng.random_range(bb.min.x..bb.max.x),
                rng.random_range(bb.min.y..bb.max.y),
            );
            if self.contains(x) {
                out.push(x);
            }
        }
        out
    }
}

fn segment_intersection(a: Point, b: Point, c: Point, d: Point) -> Option<Point> {
    let r = b - a;
    let s = d - c;
    let den = r.cross(s);
    if den == 0.0 {
        return None;
    }
    let t = (c - a).cross(s) / den;
    let u = (c - a).cross(r) / den;
    let eps = 1e-12;
    ((-eps..=1.0 + eps).contains(&t) && (-eps..=1.0 + eps).contains(&u)).then(|| a + r * t)
}

/// Centers of equal-radius disks placed along the exterior offset curve of
/// `polygon` at distance `r`.
///
/// The curve is made of the outward-shifted edges and the vertex arcs. Each
/// piece is split uniformly with step at most
/// `2·sqrt(r² − (r − spacing²/(8r))²)`, which keeps every cusp of the
/// resulting scalloped boundary within `spacing²/(8r)` of the polygon.
pub fn offset_centers(polygon: &ConvexPolygon, r: f64, spacing: f64) -> Result<Vec<Point>, GeometryError> {
    if !(r > 0.0 && spacing > 0.0) || spacing >= 2.0 * r {
        return Err(GeometryError::InvalidSpacing { spacing, radius: r });
    }
    let sag = spacing * spacing / (8.0 * r);
    let step = 2.0 * (r * r - (r - sag) * (r - sag)).sqrt();
    let n = polygon.face_count();
    let mut centers = Vec::new();
    for i in 0..n {
        let (a, b) = polygon.face(i);
        let normal = polygon.outward_normal(i);
        let len = polygon.face_length(i);
        let k = (len / step).ceil().max(1.0) as usize;
        for j in 0..k {
            centers.push(a.lerp(b, j as f64 / k as f64) + normal * r);
        }
        // Vertex arc at b from this face's normal to the next face's normal.
        let next = polygon.outward_normal((i + 1) % n);
        let from = normal.angle();
        let sweep = (next.angle() - from).rem_euclid(TAU);
        let chord_angle = 2.0 * (step / (2.0 * r)).min(1.0).asin();
        let m = (sweep / chord_angle).ceil().max(1.0) as usize;
        for j in 0..m {
            centers.push(b + Point::polar(from + sweep * j as f64 / m as f64) * r);
        }
    }
    Ok(centers)
}

/// Round polygon containing `polygon`, built from disks along its exterior
/// offset curve.
pub fn round_approximate(polygon: &ConvexPolygon, r: f64, spacing: f64) -> Result<RoundPolygon, GeometryError> {
    round_approximate_with_resolution(polygon, r, spacing, DEFAULT_COMPONENT_RESOLUTION)
}

pub fn round_approximate_with_resolution(
    polygon: &ConvexPolygon,
    r: f64,
    spacing: f64,
    resolution: usize,
) -> Result<RoundPolygon, GeometryError> {
    let centers = offset_centers(polygon, r, spacing)?;
    RoundPolygon::with_resolution(centers, r, resolution)
}

/// Upper bound of the Hausdorff distance between a polygon and its round
/// approximation at the given spacing.
pub fn round_approximation_error(r: f64, spacing: f64) -> f64 {
    spacing * spacing / (8.0 * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn square_signed_distance() {
        let sq = Domain::unit_square();
        assert_relative_eq!(sq.signed_distance(p(0.3, 0.1)), 0.1, epsilon = 1e-15);
        assert_relative_eq!(sq.signed_distance(p(0.5, -0.2)), -0.2, epsilon = 1e-15);
        assert_relative_eq!(sq.signed_distance(p(1.3, 1.4)), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn square_projection_and_regions() {
        let sq = Domain::unit_square();
        let (q, face) = sq.project_to_boundary(p(0.3, 0.1)).unwrap();
        assert_eq!(face, 0);
        assert_relative_eq!(q.x, 0.3);
        assert_eq!(q.y, 0.0);
        assert!(matches!(
            sq.project_to_boundary(p(0.5, 0.5)),
            Err(GeometryError::AmbiguousProjection { .. })
        ));
        assert_eq!(sq.region_index(p(0.5, 0.2)), (0, false));
        assert_eq!(sq.region_index(p(0.2, 0.5)), (3, false));
        assert_eq!(sq.region_index(p(0.25, 0.25)), (0, true));
    }

    #[test]
    fn round_projection_along_center_ray() {
        // Four disks around the origin; the top disk is centered at (0, 2).
        let rp = RoundPolygon::new(
            vec![
                p(0.0, 2.0),
                p(2.0, 0.0),
                p(0.0, -2.0),
                p(-2.0, 0.0),
                p(1.6, 1.6),
                p(-1.6, 1.6),
                p(-1.6, -1.6),
                p(1.6, -1.6),
            ],
            1.0,
        )
        .unwrap();
        let dom = Domain::round(rp).unwrap();
        let (q, face) = dom.project_to_boundary(p(0.0, 0.5)).unwrap();
        assert_eq!(face, 0);
        assert_relative_eq!(q.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(q.y, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn round_signed_distance_matches_boundary_sampling() {
        let centers = (0..6).map(|k| Point::polar(k as f64 * PI / 3.0) * 1.9).collect();
        let dom = Domain::round(RoundPolygon::new(centers, 1.0).unwrap()).unwrap();
        let samples = dom.boundary_samples(1e-5);
        // Nearest center is (1.9, 0), at distance 1.35.
        let x = p(0.55, 0.0);
        assert!(dom.contains(x));
        let brute = samples.iter().map(|s| s.distance(x)).fold(f64::INFINITY, f64::min);
        assert_relative_eq!(dom.signed_distance(x), 0.35, epsilon = 1e-12);
        assert!((brute - 0.35).abs() < 1e-6, "{brute}");
    }

    #[test]
    fn square_diameter() {
        assert_relative_eq!(Domain::unit_square().diameter(), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn round_approximation_of_square() {
        let sq = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let approx = Domain::round(round_approximate(&sq, 0.5, 0.1).unwrap()).unwrap();
        let square = Domain::unit_square();
        let dh = approx.boundary_hausdorff(&square, 1e-3);
        assert!(dh <= 0.0026, "{dh}");
        assert!(dh <= round_approximation_error(0.5, 0.1) + 1e-12, "{dh}");
        let l = approx.diameter();
        assert!(l >= 2f64.sqrt() && l <= 2f64.sqrt() + 2.0, "{l}");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for x in square.sample_interior(&mut rng, 20_000) {
            assert!(approx.contains(x));
        }
    }

    #[test]
    fn round_approximation_refines() {
        let sq = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let square = Domain::unit_square();
        let mut last = f64::INFINITY;
        for spacing in [0.4, 0.2, 0.1, 0.05] {
            let d = Domain::round(round_approximate(&sq, 0.5, spacing).unwrap()).unwrap();
            let dh = d.boundary_hausdorff(&square, 1e-3);
            assert!(dh < last, "{spacing}: {dh} !< {last}");
            last = dh;
        }
    }

    #[test]
    fn spacing_at_twice_radius_is_rejected() {
        let tri = ConvexPolygon::new(vec![p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)]).unwrap();
        assert!(matches!(
            round_approximate(&tri, 0.25, 0.5),
            Err(GeometryError::InvalidSpacing { .. })
        ));
    }

    #[test]
    fn domain_spec_rejects_unknown_fields() {
        let ok = DomainSpec::from_json(r#"{"type":"polygon","vertices":[[0,0],[1,0],[0,1]]}"#);
        assert!(ok.unwrap().build(64).is_ok());
        let bad = DomainSpec::from_json(r#"{"type":"polygon","vertices":[[0,0],[1,0],[0,1]],"scale":2}"#);
        assert!(bad.is_err());
        let bad = DomainSpec::from_json(r#"{"type":"hexagon"}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn large_domains_are_rejected() {
        let big = ConvexPolygon::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
        assert!(matches!(Domain::polygon(big), Err(GeometryError::DomainTooLarge(_))));
    }

    #[test]
    fn ray_crosses_boundary_once_at_projection() {
        let sq = Domain::unit_square();
        let x = p(0.3, 0.1);
        let hits = sq.boundary_crossings(x, p(0.3, -0.1));
        assert_eq!(hits.len(), 1);
        assert_relative_eq!(hits[0].y, 0.0, epsilon = 1e-15);
    }
}

/// Area of `{x ≤ a, y ≤ b}` inside the disk of radius `r` centered at the
/// origin.
fn disk_quadrant_area(r: f64, a: f64, b: f64) -> f64 {
    if a <= -r || b <= -r {
        return 0.0;
    }
    let a = a.min(r);
    // ∫_{−r}^{a} max(0, min(b, s) + s) dx with s = √(r² − x²)
    let prim = |x: f64| {
        let x = x.clamp(-r, r);
        0.5 * (x * (r * r - x * x).max(0.0).sqrt() + r * r * (x / r).asin())
    };
    if b >= r {
        return 2.0 * (prim(a) - prim(-r));
    }
    let c = (r * r - b * b).sqrt();
    // for |x| > c the chord top s(x) is below |b|
    if b >= 0.0 {
        // |x| ≥ c: full chord 2s; |x| < c: b + s
        let left = 2.0 * (prim(a.min(-c)) - prim(-r));
        let mid = if a > -c {
            let hi = a.min(c);
            b * (hi + c) + prim(hi) - prim(-c)
        } else {
            0.0
        };
        let right = if a > c { 2.0 * (prim(a) - prim(c)) } else { 0.0 };
        left + mid + right
    } else {
        // only |x| < c contributes b + s > 0
        if a <= -c {
            return 0.0;
        }
        let hi = a.min(c);
        b * (hi + c) + prim(hi) - prim(-c)
    }
}

/// Exact area of the intersection of the disk `B(center, r)` with the
/// rectangle `[x0, x1] × [y0, y1]`.
pub fn disk_rectangle_area(center: Point, r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let (x0, x1) = (x0 - center.x, x1 - center.x);
    let (y0, y1) = (y0 - center.y, y1 - center.y);
    let f = |a: f64, b: f64| disk_quadrant_area(r, a, b);
    (f(x1, y1) - f(x0, y1) - f(x1, y0) + f(x0, y0)).max(0.0)
}

#[cfg(test)]
mod disk_tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn full_and_half_disks() {
        let c = Point::new(0.3, -0.2);
        assert_relative_eq!(
            disk_rectangle_area(c, 0.5, -5.0, 5.0, -5.0, 5.0),
            PI * 0.25,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            disk_rectangle_area(c, 0.5, -5.0, 0.3, -5.0, 5.0),
            PI * 0.125,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            disk_rectangle_area(c, 0.5, 0.3, 5.0, -0.2, 5.0),
            PI / 16.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn matches_supersampling() {
        let c = Point::new(0.0, 0.0);
        let r = 1.0;
        for &(x0, x1, y0, y1) in &[(-0.3, 0.9, 0.2, 1.5), (0.5, 0.8, -0.95, -0.1), (-2.0, 0.1, -0.5, 0.7)] {
            let n = 2000;
            let mut inside = 0usize;
            for i in 0..n {
                for j in 0..n {
                    let x = x0 + (x1 - x0) * (i as f64 + 0.5) / n as f64;
                    let y = y0 + (y1 - y0) * (j as f64 + 0.5) / n as f64;
                    inside += usize::from(x * x + y * y < r * r);
                }
            }
            let approx = inside as f64 / (n * n) as f64 * (x1 - x0) * (y1 - y0);
            let exact = disk_rectangle_area(c, r, x0, x1, y0, y1);
            assert!((approx - exact).abs() < 2e-4, "{approx} {exact}");
        }
    }
}
