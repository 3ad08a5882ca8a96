use std::collections::VecDeque;
use std::f64::consts::TAU;

use crate::point::{BoundingBox, Point};

use super::GeometryError;

/// Default number of flood-fill nodes along the longer side of the
/// component grid.
pub const DEFAULT_COMPONENT_RESOLUTION: usize = 512;

/// Distances closer than this are treated as ties between centers.
pub(crate) const TIE_EPS: f64 = 1e-12;

/// A circular arc on the circle of radius `r` around a center, covering the
/// angles `[start, start + len]` counterclockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub start: f64,
    pub len: f64,
}

impl Arc {
    /// Whether the direction `theta` lies in the arc (within `tol` radians).
    pub fn contains_angle(&self, theta: f64, tol: f64) -> bool {
        let rel = (theta - self.start).rem_euclid(TAU);
        rel <= self.len + tol || rel >= TAU - tol
    }

    /// Angular offset of `theta` from the arc start, clamped into the arc.
    pub fn offset_of(&self, theta: f64) -> f64 {
        let rel = (theta - self.start).rem_euclid(TAU);
        if rel <= self.len {
            rel
        } else if TAU - rel < rel - self.len {
            0.0
        } else {
            self.len
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.len
    }
}

/// Domain whose boundary consists of circular arcs of a common radius:
/// the union of the bounded connected components of the complement of
/// `⋃ B(b_i, r)`.
#[derive(Debug, Clone)]
pub struct RoundPolygon {
    centers: Vec<Point>,
    radius: f64,
    arcs: Vec<Vec<Arc>>,
    index: CenterIndex,
    components: ComponentGrid,
    resolution: usize,
}

/// Nearest-center lookup result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestCenter {
    pub index: usize,
    pub distance: f64,
    /// Number of centers within [`TIE_EPS`] of the minimal distance.
    pub ties: usize,
}

impl RoundPolygon {
    pub fn new(centers: Vec<Point>, radius: f64) -> Result<Self, GeometryError> {
        Self::with_resolution(centers, radius, DEFAULT_COMPONENT_RESOLUTION)
    }

    /// Builds the domain with an explicit flood-fill resolution (nodes along
    /// the longer side of the center bounding box).
    pub fn with_resolution(centers: Vec<Point>, radius: f64, resolution: usize) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidRoundPolygon(format!(
                "radius must be positive, got {radius}"
            )));
        }
        if resolution < 16 {
            return Err(GeometryError::InvalidRoundPolygon(format!(
                "component resolution {resolution} is below 16"
            )));
        }
        if centers.is_empty() {
            return Err(GeometryError::InvalidRoundPolygon("no centers".into()));
        }
        if let Some(i) = centers.iter().position(|c| !c.is_finite()) {
            return Err(GeometryError::InvalidRoundPolygon(format!("center {i} is not finite")));
        }
        let mut current = dedup_centers(centers);
        // Pruning centers whose arcs are empty leaves the bounded components
        // unchanged; a second pass confirms the fixed point.
        for _ in 0..4 {
            let index = CenterIndex::new(&current, 2.0 * radius);
            let components = ComponentGrid::build(&current, radius, &index, resolution);
            let arcs: Vec<Vec<Arc>> = (0..current.len())
                .map(|i| boundary_arcs(i, &current, radius, &index, &components))
                .collect();
            if arcs.iter().all(|a| !a.is_empty()) {
                if components.bounded_count == 0 {
                    break;
                }
                return Ok(Self {
                    centers: current,
                    radius,
                    arcs,
                    index,
                    components,
                    resolution,
                });
            }
            current = current
                .into_iter()
                .zip(&arcs)
                .filter(|(_, a)| !a.is_empty())
                .map(|(c, _)| c)
                .collect();
            if current.is_empty() {
                break;
            }
        }
        Err(GeometryError::InvalidRoundPolygon(
            "the disks do not enclose a bounded component".into(),
        ))
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Boundary arcs contributed by center `i` (face `F_i`).
    pub fn arcs(&self, i: usize) -> &[Arc] {
        &self.arcs[i]
    }

    pub fn face_count(&self) -> usize {
        self.centers.len()
    }

    pub fn face_length(&self, i: usize) -> f64 {
        self.radius * self.arcs[i].iter().map(|a| a.len).sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.face_count()).map(|i| self.face_length(i)).sum()
    }

    pub fn arc_point(&self, i: usize, theta: f64) -> Point {
        self.centers[i] + Point::polar(theta) * self.radius
    }

    pub fn nearest_center(&self, x: Point) -> NearestCenter {
        self.index.nearest(&self.centers, x)
    }

    /// Whether `x` lies in the open domain.
    pub fn contains(&self, x: Point) -> bool {
        let near = self.nearest_center(x);
        if near.distance <= self.radius {
            return false;
        }
        self.components
            .label_of(x, &self.centers, self.radius, &self.index)
            .is_some_and(|l| l >= FIRST_BOUNDED)
    }

    /// Distance from `x` to the boundary arcs.
    pub fn distance_to_arcs(&self, x: Point) -> f64 {
        let mut best = f64::INFINITY;
        for (i, arcs) in self.arcs.iter().enumerate() {
            let b = self.centers[i];
            let d = x - b;
            let rho = d.norm();
            let theta = d.angle();
            for arc in arcs {
                let dist = if rho > 0.0 && arc.contains_angle(theta, 0.0) {
                    (rho - self.radius).abs()
                } else {
                    let p0 = self.arc_point(i, arc.start);
                    let p1 = self.arc_point(i, arc.end());
                    x.distance(p0).min(x.distance(p1))
                };
                best = best.min(dist);
            }
        }
        best
    }

    /// Arc-length coordinate of boundary point `p` along face `i`, with the
    /// face's arcs concatenated in storage order.
    pub fn face_coordinate(&self, i: usize, p: Point) -> f64 {
        let theta = (p - self.centers[i]).angle();
        let arcs = &self.arcs[i];
        // Pick the arc that contains the direction, or the nearest one.
        let mut offset = 0.0;
        let mut best: Option<(f64, f64)> = None;
        for arc in arcs {
            let local = arc.offset_of(theta);
            let q = self.arc_point(i, arc.start + local);
            let miss = q.distance(p);
            if best.is_none_or(|(m, _)| miss < m) {
                best = Some((miss, offset + local));
            }
            offset += arc.len;
        }
        self.radius * best.map_or(0.0, |(_, s)| s)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let mut pts = Vec::new();
        for (i, arcs) in self.arcs.iter().enumerate() {
            for arc in arcs {
                pts.push(self.arc_point(i, arc.start));
                pts.push(self.arc_point(i, arc.end()));
                for k in 0..8 {
                    let axis = k as f64 * std::f64::consts::FRAC_PI_2;
                    if arc.contains_angle(axis, 0.0) {
                        pts.push(self.arc_point(i, axis));
                    }
                }
            }
        }
        BoundingBox::from_points(&pts).expect("round polygon has arcs")
    }

    /// Exact diameter of the union of the boundary arcs.
    pub fn diameter(&self) -> f64 {
        let r = self.radius;
        let mut flat: Vec<(usize, Arc)> = Vec::new();
        for (i, arcs) in self.arcs.iter().enumerate() {
            flat.extend(arcs.iter().map(|a| (i, *a)));
        }
        let endpoints: Vec<[Point; 2]> = flat
            .iter()
            .map(|&(i, a)| [self.arc_point(i, a.start), self.arc_point(i, a.end())])
            .collect();
        let mut best = 0.0_f64;
        for (ka, &(ia, arc_a)) in flat.iter().enumerate() {
            for (kb, &(ib, arc_b)) in flat.iter().enumerate() {
                // endpoint–endpoint and endpoint–interior of arc_b
                for &e in &endpoints[ka] {
                    for &f in &endpoints[kb] {
                        best = best.max(e.distance(f));
                    }
                    let away = self.centers[ib] - e;
                    if away.norm() > 0.0 && arc_b.contains_angle(away.angle(), 0.0) {
                        best = best.max(away.norm() + r);
                    }
                }
                // interior–interior: antipodal along the center line
                if kb <= ka {
                    continue;
                }
                let (ba, bb) = (self.centers[ia], self.centers[ib]);
                let dir = ba - bb;
                if ia == ib {
                    // same circle: a diameter needs opposite directions in the two arcs
                    for theta in [arc_a.start, arc_a.end()] {
                        if arc_b.contains_angle(theta + std::f64::consts::PI, 0.0) {
                            best = best.max(2.0 * r);
                        }
                    }
                } else if dir.norm() > 0.0 {
                    let u = dir.angle();
                    if arc_a.contains_angle(u, 0.0) && arc_b.contains_angle(u + std::f64::consts::PI, 0.0) {
                        best = best.max(dir.norm() + 2.0 * r);
                    }
                }
            }
        }
        best
    }

    /// Intersections of the segment `a→b` with the boundary arcs.
    pub fn segment_crossings(&self, a: Point, b: Point) -> Vec<Point> {
        let d = b - a;
        let dd = d.norm_sq();
        let mut out = Vec::new();
        if dd == 0.0 {
            return out;
        }
        for (i, arcs) in self.arcs.iter().enumerate() {
            let c = self.centers[i];
            let f = a - c;
            let half_b = f.dot(d);
            let cc = f.norm_sq() - self.radius * self.radius;
            let disc = half_b * half_b - dd * cc;
            if disc < 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            for t in [(-half_b - sq) / dd, (-half_b + sq) / dd] {
                if !(-1e-12..=1.0 + 1e-12).contains(&t) {
                    continue;
                }
                let p = a + d * t;
                let theta = (p - c).angle();
                if arcs.iter().any(|arc| arc.contains_angle(theta, 1e-12)) {
                    out.push(p);
                }
            }
        }
        out
    }
}

fn dedup_centers(centers: Vec<Point>) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(centers.len());
    for c in centers {
        if !out.iter().any(|o| o.distance(c) <= TIE_EPS) {
            out.push(c);
        }
    }
    out
}

/// Arcs of circle `i` not covered by other disks whose outer side belongs to
/// a bounded component.
fn boundary_arcs(i: usize, centers: &[Point], r: f64, index: &CenterIndex, components: &ComponentGrid) -> Vec<Arc> {
    let b = centers[i];
    let mut covered: Vec<(f64, f64)> = Vec::new();
    index.for_each_within(b, 2.0 * r, |j| {
        if j == i {
            return;
        }
        let dvec = centers[j] - b;
        let d = dvec.norm();
        if d >= 2.0 * r {
            return;
        }
        let half = (d / (2.0 * r)).clamp(-1.0, 1.0).acos();
        let start = (dvec.angle() - half).rem_euclid(TAU);
        let end = start + 2.0 * half;
        if end > TAU {
            covered.push((start, TAU));
            covered.push((0.0, end - TAU));
        } else {
            covered.push((start, end));
        }
    });
    covered.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut free: Vec<(f64, f64)> = Vec::new();
    let mut cursor = 0.0;
    for (s, e) in covered {
        if s > cursor {
            free.push((cursor, s));
        }
        cursor = cursor.max(e);
    }
    if cursor < TAU {
        free.push((cursor, TAU));
    }
    // Join the pieces that meet across angle 0.
    if free.len() >= 2 && free[0].0 == 0.0 && free[free.len() - 1].1 == TAU {
        let last = free.pop().expect("len >= 2");
        free[0] = (last.0, free[0].1 + TAU);
    }
    let arcs = free
        .into_iter()
        .map(|(s, e)| Arc { start: s, len: e - s })
        .filter(|a| a.len > 1e-12);
    arcs.filter(|arc| outer_side_is_bounded(b, r, arc, centers, index, components))
        .collect()
}

fn outer_side_is_bounded(
    b: Point,
    r: f64,
    arc: &Arc,
    centers: &[Point],
    index: &CenterIndex,
    components: &ComponentGrid,
) -> bool {
    let mid = arc.start + 0.5 * arc.len;
    let dir = Point::polar(mid);
    let mut delta = (1e-6 * r).min(0.1 * r * arc.len * arc.len);
    let mut probe = None;
    while delta > 1e-13 * r {
        let p = b + dir * (r + delta);
        if index.nearest(centers, p).distance > r {
            probe = Some(p);
            break;
        }
        delta *= 0.1;
    }
    let Some(mut p) = probe else {
        return false;
    };
    // March outward until the component grid can resolve the point.
    for _ in 0..8 {
        if index.nearest(centers, p).distance <= r {
            return false;
        }
        if let Some(label) = components.label_of(p, centers, r, index) {
            return label >= FIRST_BOUNDED;
        }
        p += dir * (0.5 * components.spacing);
    }
    false
}

/// Uniform bucket grid over the centers.
#[derive(Debug, Clone)]
pub(crate) struct CenterIndex {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
    bbox: BoundingBox,
}

impl CenterIndex {
    pub(crate) fn new(centers: &[Point], cell: f64) -> Self {
        let bbox = BoundingBox::from_points(centers).expect("nonempty centers");
        let nx = ((bbox.width() / cell).floor() as usize + 1).min(4096);
        let ny = ((bbox.height() / cell).floor() as usize + 1).min(4096);
        let cell = cell.max(bbox.width() / nx as f64).max(bbox.height() / ny as f64);
        let mut buckets = vec![Vec::new(); nx * ny];
        let origin = bbox.min;
        for (k, c) in centers.iter().enumerate() {
            let (i, j) = Self::bucket_of(origin, cell, nx, ny, *c);
            buckets[j * nx + i].push(k as u32);
        }
        Self {
            origin,
            cell,
            nx,
            ny,
            buckets,
            bbox,
        }
    }

    fn bucket_of(origin: Point, cell: f64, nx: usize, ny: usize, p: Point) -> (usize, usize) {
        let fi = ((p.x - origin.x) / cell).floor();
        let fj = ((p.y - origin.y) / cell).floor();
        ((fi.max(0.0) as usize).min(nx - 1), (fj.max(0.0) as usize).min(ny - 1))
    }

    pub(crate) fn nearest(&self, centers: &[Point], x: Point) -> NearestCenter {
        let (bi, bj) = Self::bucket_of(self.origin, self.cell, self.nx, self.ny, x);
        // distance from x to the bucket-grid rectangle (0 inside)
        let outside = Point::new(
            (self.bbox.min.x - x.x)
                .max(x.x - (self.origin.x + self.cell * self.nx as f64))
                .max(0.0),
            (self.bbox.min.y - x.y)
                .max(x.y - (self.origin.y + self.cell * self.ny as f64))
                .max(0.0),
        )
        .norm();
        let mut best = f64::INFINITY;
        let mut cands: Vec<(u32, f64)> = Vec::new();
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            let i0 = bi as isize - ring as isize;
            let i1 = bi as isize + ring as isize;
            let j0 = bj as isize - ring as isize;
            let j1 = bj as isize + ring as isize;
            for j in j0..=j1 {
                if j < 0 || j >= self.ny as isize {
                    continue;
                }
                let on_edge_row = j == j0 || j == j1;
                let mut i = i0;
                while i <= i1 {
                    if i >= 0 && i < self.nx as isize {
                        for &k in &self.buckets[j as usize * self.nx + i as usize] {
                            let d = x.distance(centers[k as usize]);
                            if d <= best + TIE_EPS {
                                if d < best {
                                    best = d;
                                    cands.retain(|&(_, dc)| dc <= best + TIE_EPS);
                                }
                                cands.push((k, d));
                            }
                        }
                    }
                    i += if on_edge_row || i == i1 { 1 } else { i1 - i0 };
                }
            }
            // every unvisited bucket is at least `ring * cell` away (minus
            // the part of that margin spent outside the grid)
            let reach = ring as f64 * self.cell - outside;
            if best + TIE_EPS < reach {
                break;
            }
        }
        let index = cands.iter().map(|&(k, _)| k).min().expect("centers nonempty") as usize;
        NearestCenter {
            index,
            distance: best,
            ties: cands.len(),
        }
    }

    /// Calls `f` with every center index in buckets that can hold a center
    /// within `radius` of `x` (a superset of the true neighborhood).
    pub(crate) fn for_each_within(&self, x: Point, radius: f64, mut f: impl FnMut(usize)) {
        let lo = x - Point::new(radius, radius);
        let hi = x + Point::new(radius, radius);
        let (i0, j0) = Self::bucket_of(self.origin, self.cell, self.nx, self.ny, lo);
        let (i1, j1) = Self::bucket_of(self.origin, self.cell, self.nx, self.ny, hi);
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &k in &self.buckets[j * self.nx + i] {
                    f(k as usize);
                }
            }
        }
    }

    fn segment_is_free(&self, centers: &[Point], r: f64, a: Point, b: Point) -> bool {
        let mid = a.lerp(b, 0.5);
        let half = 0.5 * a.distance(b);
        let mut free = true;
        self.for_each_within(mid, r + half, |k| {
            if free {
                let (_, d) = super::polygon::closest_on_segment(a, b, centers[k]);
                if d <= r {
                    free = false;
                }
            }
        });
        free
    }
}

const BLOCKED: u32 = 0;
const OUTER: u32 = 1;
const FIRST_BOUNDED: u32 = 2;

/// Node grid labelling the connected components of the disk complement.
#[derive(Debug, Clone)]
struct ComponentGrid {
    origin: Point,
    spacing: f64,
    nx: usize,
    ny: usize,
    labels: Vec<u32>,
    bounded_count: usize,
}

impl ComponentGrid {
    fn build(centers: &[Point], r: f64, index: &CenterIndex, resolution: usize) -> Self {
        let bbox = BoundingBox::from_points(centers).expect("nonempty");
        let extent = bbox.width().max(bbox.height()) + 2.0 * r;
        let spacing = extent / resolution as f64;
        let bbox = bbox.inflate(r + 2.0 * spacing);
        let nx = (bbox.width() / spacing).ceil() as usize + 1;
        let ny = (bbox.height() / spacing).ceil() as usize + 1;
        let origin = bbox.min;
        let node = |i: usize, j: usize| origin + Point::new(i as f64 * spacing, j as f64 * spacing);
        let mut free = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                free[j * nx + i] = index.nearest(centers, node(i, j)).distance > r;
            }
        }
        let mut labels = vec![BLOCKED; nx * ny];
        let mut next = OUTER;
        let mut bounded_count = 0;
        let mut queue = VecDeque::new();
        // Node 0 is a border node outside every disk, so the first fill is
        // the outer component.
        for seed in 0..nx * ny {
            if !free[seed] || labels[seed] != BLOCKED {
                continue;
            }
            let label = next;
            next += 1;
            if label >= FIRST_BOUNDED {
                bounded_count += 1;
            }
            labels[seed] = label;
            queue.push_back(seed);
            while let Some(k) = queue.pop_front() {
                let (i, j) = (k % nx, k / nx);
                let here = node(i, j);
                let mut visit = |ni: usize, nj: usize| {
                    let nk = nj * nx + ni;
                    if free[nk] && labels[nk] == BLOCKED && index.segment_is_free(centers, r, here, node(ni, nj)) {
                        labels[nk] = label;
                        queue.push_back(nk);
                    }
                };
                if i > 0 {
                    visit(i - 1, j);
                }
                if i + 1 < nx {
                    visit(i + 1, j);
                }
                if j > 0 {
                    visit(i, j - 1);
                }
                if j + 1 < ny {
                    visit(i, j + 1);
                }
            }
        }
        Self {
            origin,
            spacing,
            nx,
            ny,
            labels,
            bounded_count,
        }
    }

    /// Component label of a free point, resolved through a nearby node that
    /// is joined to it by a free segment.
    fn label_of(&self, x: Point, centers: &[Point], r: f64, index: &CenterIndex) -> Option<u32> {
        let fi = ((x.x - self.origin.x) / self.spacing).floor();
        let fj = ((x.y - self.origin.y) / self.spacing).floor();
        if fi < 0.0 || fj < 0.0 || fi >= (self.nx - 1) as f64 || fj >= (self.ny - 1) as f64 {
            return Some(OUTER);
        }
        let (ci, cj) = (fi as isize, fj as isize);
        let mut cands: Vec<(f64, usize)> = Vec::with_capacity(16);
        for j in cj - 1..=cj + 2 {
            for i in ci - 1..=ci + 2 {
                if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
                    continue;
                }
                let k = j as usize * self.nx + i as usize;
                if self.labels[k] == BLOCKED {
                    continue;
                }
                let p = self.origin + Point::new(i as f64 * self.spacing, j as f64 * self.spacing);
                cands.push((p.distance(x), k));
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cands.into_iter().find_map(|(_, k)| {
            let p = self.origin + Point::new((k % self.nx) as f64 * self.spacing, (k / self.nx) as f64 * self.spacing);
            index.segment_is_free(centers, r, x, p).then_some(self.labels[k])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn four_disks() -> RoundPolygon {
        let a = 0.9;
        RoundPolygon::new(
            vec![
                Point::new(a, a),
                Point::new(-a, a),
                Point::new(-a, -a),
                Point::new(a, -a),
            ],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn four_disks_enclose_origin() {
        let rp = four_disks();
        assert_eq!(rp.face_count(), 4);
        assert!(rp.contains(Point::new(0.0, 0.0)));
        assert!(!rp.contains(Point::new(0.0, 1.5)));
        assert!(!rp.contains(Point::new(3.0, 0.0)));
        assert!(!rp.contains(Point::new(0.9, 0.9)));
    }

    #[test]
    fn isolated_disks_have_no_bounded_component() {
        let err = RoundPolygon::new(vec![Point::new(0.0, 0.0), Point::new(5.0, 0.0)], 1.0);
        assert!(err.is_err());
    }

    #[test]
    fn arc_angles_wrap() {
        let arc = Arc { start: 6.0, len: 1.0 };
        assert!(arc.contains_angle(0.2, 0.0));
        assert!(!arc.contains_angle(1.0, 0.0));
        assert_relative_eq!(arc.offset_of(0.2), 0.2 + TAU - 6.0, epsilon = 1e-12);
    }

    #[test]
    fn nearest_center_matches_brute_force() {
        let rp = four_disks();
        for k in 0..200 {
            let x = Point::new((k as f64 * 0.37).sin() * 3.0, (k as f64 * 0.73).cos() * 3.0);
            let near = rp.nearest_center(x);
            let brute = rp.centers().iter().map(|c| c.distance(x)).fold(f64::INFINITY, f64::min);
            assert_relative_eq!(near.distance, brute, epsilon = 1e-15);
        }
    }
}
