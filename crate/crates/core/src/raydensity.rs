//! Map-induced transport plans, their transport densities, costs and
//! optimality certificates.
//!
//! The transport density of a plan `(x_k, y_k, w_k)` is the measure
//! `σ(A) = Σ_k w_k · length(A ∩ [x_k, y_k])`. It is deposited cell by cell
//! with an exact parametric walk along each segment, so the deposited total
//! equals the plan cost up to rounding.

use std::fmt::Display;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::exec::Exec;
use crate::fields::{DensityField, FieldError, GridSpec, Quadrature};
use crate::geometry::{
    round_approximate_with_resolution, round_approximation_error, ConvexPolygon, Domain, GeometryError,
};
use crate::point::{BoundingBox, Point};
use crate::symmetrize::{MapKind, SymmetrizationContext};

#[derive(Debug, Error)]
pub enum RayError {
    #[error("map failed at quadrature point {index}: {message}")]
    Map { index: usize, message: String },
    #[error("segment {index} leaves the grid")]
    OutOfGrid { index: usize },
    #[error("potential is not 1-Lipschitz: ratio {ratio} between {a:?} and {b:?}")]
    NotLip1 { ratio: f64, a: Point, b: Point },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Quadrature of the source paired with frozen destinations.
#[derive(Debug, Clone)]
pub struct MapPlan {
    pub source: Quadrature,
    pub dest: Vec<Point>,
    /// Source points whose image came from a tie-break between faces.
    pub ties: usize,
}

impl MapPlan {
    pub fn len(&self) -> usize {
        self.dest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dest.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.source.mass()
    }

    pub fn segment(&self, k: usize) -> (Point, Point, f64) {
        (self.source.points[k], self.dest[k], self.source.weights[k])
    }

    /// Bounding box of all sources and destinations.
    pub fn bounds(&self) -> Option<BoundingBox> {
        BoundingBox::from_points(self.source.points.iter().chain(&self.dest))
    }
}

/// Evaluates `map` once per quadrature point.
pub fn plan_from_map<E: Display>(q: &Quadrature, map: impl Fn(Point) -> Result<Point, E>) -> Result<MapPlan, RayError> {
    let dest = q
        .points
        .iter()
        .enumerate()
        .map(|(index, &x)| {
            map(x).map_err(|e| RayError::Map {
                index,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MapPlan {
        source: q.clone(),
        dest,
        ties: 0,
    })
}

/// Plan of a symmetrization map, counting tie-broken points.
pub fn plan_from_symmetrization(
    q: &Quadrature,
    ctx: &SymmetrizationContext,
    kind: MapKind,
    exec: Exec,
) -> Result<MapPlan, RayError> {
    let images = exec.map(q.len(), |k| kind.apply(ctx, q.points[k]));
    let mut dest = Vec::with_capacity(q.len());
    let mut ties = 0;
    for (index, image) in images.into_iter().enumerate() {
        let (y, tied) = image.map_err(|e| RayError::Map {
            index,
            message: e.to_string(),
        })?;
        ties += usize::from(tied);
        dest.push(y);
    }
    Ok(MapPlan {
        source: q.clone(),
        dest,
        ties,
    })
}

/// `Σ w |x − y|`.
pub fn transport_cost(plan: &MapPlan) -> f64 {
    (0..plan.len())
        .map(|k| {
            let (x, y, w) = plan.segment(k);
            w * x.distance(y)
        })
        .sum()
}

/// Calls `visit(i, j, length)` for every grid cell crossed by `a→b`, in
/// order along the segment. Coordinates are taken relative to the grid, so
/// translating the segment and the grid by a whole number of cells visits
/// the same cells with the same lengths.
pub fn walk_segment(grid: &GridSpec, a: Point, b: Point, mut visit: impl FnMut(usize, usize, f64)) {
    let la = (a - grid.origin) / grid.h;
    let lb = (b - grid.origin) / grid.h;
    let len = a.distance(b);
    if len == 0.0 {
        return;
    }
    let d = lb - la;
    let crossings = |a0: f64, d0: f64| -> Vec<f64> {
        if d0 == 0.0 {
            return Vec::new();
        }
        let (lo, hi) = if d0 > 0.0 { (a0, a0 + d0) } else { (a0 + d0, a0) };
        let first = lo.floor() as i64 + 1;
        let last = hi.ceil() as i64 - 1;
        let mut ts: Vec<f64> = (first..=last).map(|k| (k as f64 - a0) / d0).collect();
        if d0 < 0.0 {
            ts.reverse();
        }
        ts
    };
    let tx = crossings(la.x, d.x);
    let ty = crossings(la.y, d.y);
    let (mut ix, mut iy) = (0, 0);
    let mut t0 = 0.0;
    let (nx, ny) = (grid.nx as f64, grid.ny as f64);
    loop {
        let t1 = match (tx.get(ix), ty.get(iy)) {
            (Some(&u), Some(&v)) => {
                if u <= v {
                    ix += 1;
                    u
                } else {
                    iy += 1;
                    v
                }
            }
            (Some(&u), None) => {
                ix += 1;
                u
            }
            (None, Some(&v)) => {
                iy += 1;
                v
            }
            (None, None) => 1.0,
        };
        if t1 > t0 {
            let tm = 0.5 * (t0 + t1);
            let mx = (la.x + d.x * tm).floor().clamp(0.0, nx - 1.0) as usize;
            let my = (la.y + d.y * tm).floor().clamp(0.0, ny - 1.0) as usize;
            visit(mx, my, (t1 - t0) * len);
        }
        if t1 >= 1.0 {
            break;
        }
        t0 = t1;
    }
}

/// Transport density of `plan` on `grid` (mass per unit area).
pub fn deposit_transport_density(plan: &MapPlan, grid: &GridSpec, exec: Exec) -> Result<DensityField, RayError> {
    let g = *grid;
    if let Some(index) = (0..plan.len()).find(|&k| !g.contains(plan.source.points[k]) || !g.contains(plan.dest[k])) {
        return Err(RayError::OutOfGrid { index });
    }
    let acc = exec.accumulate(
        plan.len(),
        || Array2::<f64>::zeros((g.nx, g.ny)),
        |acc, k| {
            let (x, y, w) = plan.segment(k);
            walk_segment(&g, x, y, |i, j, len| acc[[i, j]] += w * len);
        },
        |acc, part| *acc += &part,
    );
    Ok(DensityField::new(g, acc / g.cell_area())?)
}

type Evaluator = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// A scalar field with a claimed Lipschitz constant.
#[derive(Clone)]
pub struct Potential {
    eval: Evaluator,
    pub lip: f64,
    pub name: String,
}

impl std::fmt::Debug for Potential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .field("lip", &self.lip)
            .finish()
    }
}

impl Potential {
    pub fn new(name: impl Into<String>, lip: f64, eval: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            lip,
            name: name.into(),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", 0.0, |_| 0.0)
    }

    /// `d(x, ∂Ω)` inside, `−d(x, ∂Ω)` outside.
    pub fn signed_distance(domain: &Domain) -> Self {
        let d = domain.clone();
        Self::new("signed distance", 1.0, move |x| d.signed_distance(x))
    }

    /// `min_i |x − b_i|` over the disk centers of a round polygon.
    pub fn nearest_center_distance(domain: &Domain) -> Option<Self> {
        let round = domain.as_round()?.clone();
        Some(Self::new("nearest center distance", 1.0, move |x| {
            round.nearest_center(x).distance
        }))
    }

    pub fn eval(&self, x: Point) -> f64 {
        (self.eval)(x)
    }

    /// Largest difference quotient over `pairs` random pairs in `region`
    /// and the endpoints of every plan segment; fails above `1 + 1e-9`.
    pub fn certify<R: Rng + ?Sized>(
        &self,
        plan: &MapPlan,
        region: BoundingBox,
        pairs: usize,
        rng: &mut R,
    ) -> Result<f64, RayError> {
        let mut worst = (0.0, Point::new(0.0, 0.0), Point::new(0.0, 0.0));
        let mut check = |a: Point, b: Point| {
            let d = a.distance(b);
            if d > 0.0 {
                let ratio = (self.eval(a) - self.eval(b)).abs() / d;
                if ratio > worst.0 {
                    worst = (ratio, a, b);
                }
            }
        };
        let sample = |rng: &mut R| {
            Point::new(
                rng.random_range(region.min.x..=region.max.x),
                rng.random_range(region.min.y..=region.max.y),
            )
        };
        for _ in 0..pairs {
            let a = sample(rng);
            let b = sample(rng);
            check(a, b);
        }
        for k in 0..plan.len() {
            check(plan.source.points[k], plan.dest[k]);
        }
        if worst.0 > 1.0 + 1e-9 {
            return Err(RayError::NotLip1 {
                ratio: worst.0,
                a: worst.1,
                b: worst.2,
            });
        }
        Ok(worst.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityGap {
    pub cost: f64,
    pub dual: f64,
    pub gap: f64,
    /// Largest sampled difference quotient of the potential.
    pub lipschitz: f64,
}

impl DualityGap {
    pub fn relative(&self) -> f64 {
        if self.cost == 0.0 {
            self.gap.abs()
        } else {
            self.gap / self.cost
        }
    }
}

/// Number of random pairs used to certify a potential.
pub const CERTIFICATION_PAIRS: usize = 100_000;

/// `cost − Σ w (u(x) − u(y))` after certifying `u` on
/// [`CERTIFICATION_PAIRS`] random pairs over the plan's bounding box.
pub fn duality_gap<R: Rng + ?Sized>(plan: &MapPlan, u: &Potential, rng: &mut R) -> Result<DualityGap, RayError> {
    let region = plan
        .bounds()
        .unwrap_or(BoundingBox::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0)));
    let lipschitz = u.certify(plan, region, CERTIFICATION_PAIRS, rng)?;
    let cost = transport_cost(plan);
    let dual: f64 = (0..plan.len())
        .map(|k| {
            let (x, y, w) = plan.segment(k);
            w * (u.eval(x) - u.eval(y))
        })
        .sum();
    Ok(DualityGap {
        cost,
        dual,
        gap: cost - dual,
        lipschitz,
    })
}

/// Relative L¹ difference `Σ|a − b| / Σ|b|` over cells whose centers lie in
/// the domain.
pub fn restriction_discrepancy(
    full: &DensityField,
    projected: &DensityField,
    domain: &Domain,
) -> Result<f64, RayError> {
    let (diff, base) = full.l1_distance_where(projected, |c| domain.contains(c))?;
    Ok(if base == 0.0 { diff } else { diff / base })
}

const GAUSS_8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// `∫_{[a,b]} φ ds` by composite 8-point Gauss–Legendre on pieces no longer
/// than `max_piece`.
pub fn segment_integral(a: Point, b: Point, phi: &impl Fn(Point) -> f64, max_piece: f64) -> f64 {
    let len = a.distance(b);
    if len == 0.0 {
        return 0.0;
    }
    let pieces = (len / max_piece).ceil().max(1.0) as usize;
    let mut total = 0.0;
    for p in 0..pieces {
        let t0 = p as f64 / pieces as f64;
        let t1 = (p + 1) as f64 / pieces as f64;
        let mid = 0.5 * (t0 + t1);
        let half = 0.5 * (t1 - t0);
        for &(node, weight) in &GAUSS_8 {
            total += weight * (phi(a.lerp(b, mid - half * node)) + phi(a.lerp(b, mid + half * node)));
        }
    }
    total * 0.5 * len / pieces as f64
}

/// `∫ φ dσ = Σ w ∫_{[x,y]} φ ds`, optionally keeping only the part of each
/// segment inside `clip`.
pub fn test_function_integral(
    plan: &MapPlan,
    phi: &(impl Fn(Point) -> f64 + Sync),
    clip: Option<&ConvexPolygon>,
    exec: Exec,
) -> f64 {
    exec.accumulate(
        plan.len(),
        || 0.0,
        |acc, k| {
            let (x, y, w) = plan.segment(k);
            let (a, b) = match clip {
                None => (x, y),
                Some(poly) => match poly.clip_segment(x, y) {
                    Some((t0, t1)) => (x.lerp(y, t0), x.lerp(y, t1)),
                    None => return,
                },
            };
            *acc += w * segment_integral(a, b, phi, 0.05);
        },
        |acc, part| *acc += part,
    )
}

/// `sin(a x₁ + c) cos(b x₂) + x₁ x₂`, one of a fixed family of smooth test
/// functions used to compare transport densities weakly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFunction {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TestFunction {
    pub fn eval(&self, p: Point) -> f64 {
        (self.a * p.x + self.c).sin() * (self.b * p.y).cos() + p.x * p.y
    }

    /// The `n` members with `a = 1 + 0.7k`, `b = 0.5 + 1.3k`, `c = 0.1k`.
    pub fn family(n: usize) -> Vec<Self> {
        (0..n)
            .map(|k| {
                let k = k as f64;
                Self {
                    a: 1.0 + 0.7 * k,
                    b: 0.5 + 1.3 * k,
                    c: 0.1 * k,
                }
            })
            .collect()
    }
}

/// `Σ_φ |∫φ dσ_a − ∫φ dσ_b|` with both plans clipped to `clip`.
pub fn weak_discrepancy(
    a: &MapPlan,
    b: &MapPlan,
    phis: &[TestFunction],
    clip: Option<&ConvexPolygon>,
    exec: Exec,
) -> f64 {
    phis.iter()
        .map(|phi| {
            let f = |p: Point| phi.eval(p);
            (test_function_integral(a, &f, clip, exec) - test_function_integral(b, &f, clip, exec)).abs()
        })
        .sum()
}

/// Boundary-projection plan `x ↦ P_∂Ω(x)` on `q`.
pub fn projection_plan(q: &Quadrature, domain: &Domain, exec: Exec) -> MapPlan {
    let proj = exec.map(q.len(), |k| domain.projection(q.points[k]));
    MapPlan {
        source: q.clone(),
        ties: proj.iter().filter(|p| p.tied).count(),
        dest: proj.into_iter().map(|p| p.point).collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub spacing: f64,
    /// Bound on the Hausdorff distance between the polygon and `Ω_k`.
    pub hausdorff_bound: f64,
    pub discrepancy: f64,
}

/// Compares the projection plans onto round approximations `Ω_k` of
/// `polygon` (one per spacing) with the projection plan onto `polygon`
/// itself, all restricted to the polygon and tested against `phis`.
pub fn stability_study(
    polygon: &ConvexPolygon,
    radius: f64,
    spacings: &[f64],
    q: &Quadrature,
    phis: &[TestFunction],
    resolution: usize,
    exec: Exec,
) -> Result<Vec<StabilityRow>, GeometryError> {
    let limit = projection_plan(q, &Domain::polygon(polygon.clone())?, exec);
    spacings
        .iter()
        .map(|&spacing| {
            let round = round_approximate_with_resolution(polygon, radius, spacing, resolution)?;
            let plan = projection_plan(q, &Domain::round(round)?, exec);
            Ok(StabilityRow {
                spacing,
                hausdorff_bound: round_approximation_error(radius, spacing),
                discrepancy: weak_discrepancy(&plan, &limit, phis, Some(polygon), exec),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::quadrature_of;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(a: Point, b: Point, w: f64) -> MapPlan {
        let mut q = Quadrature::default();
        q.push(a, w, 1.0);
        MapPlan {
            source: q,
            dest: vec![b],
            ties: 0,
        }
    }

    #[test]
    fn unit_segment_in_one_cell() {
        let plan = single(Point::new(0.0, 0.5), Point::new(1.0, 0.5), 1.0);
        let grid = GridSpec::unit(1);
        let s = deposit_transport_density(&plan, &grid, Exec::SERIAL).unwrap();
        assert_eq!(s.get(0, 0), 1.0);
    }

    #[test]
    fn walk_lengths_sum_to_segment_length() {
        let grid = GridSpec::new(Point::new(-1.0, -1.0), 0.1, 30, 30).unwrap();
        let a = Point::new(-0.93, 0.41);
        let b = Point::new(1.72, -0.88);
        let mut total = 0.0;
        let mut cells = 0;
        walk_segment(&grid, a, b, |_, _, l| {
            total += l;
            cells += 1;
        });
        assert_relative_eq!(total, a.distance(b), max_relative = 1e-14);
        // 27 vertical and 13 horizontal grid lines crossed
        assert_eq!(cells, 27 + 13 + 1);
    }

    #[test]
    fn diagonal_through_corners() {
        let grid = GridSpec::unit(4);
        let mut seen = Vec::new();
        walk_segment(&grid, Point::new(0.0, 0.0), Point::new(1.0, 1.0), |i, j, l| {
            seen.push((i, j, l))
        });
        assert_eq!(seen.len(), 4);
        for (k, &(i, j, l)) in seen.iter().enumerate() {
            assert_eq!((i, j), (k, k));
            assert_relative_eq!(l, 2f64.sqrt() / 4.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn out_of_grid_segment_is_reported() {
        let plan = single(Point::new(0.5, 0.5), Point::new(0.5, -0.5), 1.0);
        let err = deposit_transport_density(&plan, &GridSpec::unit(4), Exec::SERIAL);
        assert!(matches!(err, Err(RayError::OutOfGrid { index: 0 })));
    }

    fn strip_quadrature(n: usize) -> Quadrature {
        let grid = GridSpec::unit(n);
        let f = DensityField::from_fn(grid, |p| f64::from((0.3..0.7).contains(&p.x) && p.y < 0.2));
        quadrature_of(&f, 3).unwrap()
    }

    #[test]
    fn strip_costs() {
        let q = strip_quadrature(80);
        let ctx = SymmetrizationContext::new(Domain::unit_square());
        let proj = plan_from_symmetrization(&q, &ctx, MapKind::Projection, Exec::SERIAL).unwrap();
        let refl = plan_from_symmetrization(&q, &ctx, MapKind::Reflection, Exec::SERIAL).unwrap();
        assert_relative_eq!(transport_cost(&proj), 0.008, max_relative = 1e-12);
        assert_relative_eq!(transport_cost(&refl), 0.016, max_relative = 1e-12);
        let ident = plan_from_map(&q, Ok::<_, String>).unwrap();
        assert_eq!(transport_cost(&ident), 0.0);
    }

    #[test]
    fn strip_density_is_linear_profile() {
        let n = 80;
        let q = strip_quadrature(n);
        let ctx = SymmetrizationContext::new(Domain::unit_square());
        let proj = plan_from_symmetrization(&q, &ctx, MapKind::Projection, Exec::SERIAL).unwrap();
        let grid = GridSpec::unit(n);
        let sigma = deposit_transport_density(&proj, &grid, Exec::SERIAL).unwrap();
        assert_relative_eq!(sigma.mass(), transport_cost(&proj), max_relative = 1e-12);
        let exact = DensityField::from_fn(grid, |p| {
            if (0.3..0.7).contains(&p.x) && p.y < 0.2 {
                0.2 - p.y
            } else {
                0.0
            }
        });
        let (diff, base) = sigma.l1_distance_where(&exact, |_| true).unwrap();
        assert!(diff / base <= 2.0 * grid.h, "{}", diff / base);
        assert!((sigma.lp_norm(f64::INFINITY) - 0.2).abs() <= grid.h);
    }

    #[test]
    fn reflection_gap_vanishes() {
        let q = strip_quadrature(40);
        let sq = Domain::unit_square();
        let ctx = SymmetrizationContext::new(sq.clone());
        let refl = plan_from_symmetrization(&q, &ctx, MapKind::Reflection, Exec::SERIAL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gap = duality_gap(&refl, &Potential::signed_distance(&sq), &mut rng).unwrap();
        assert!(gap.relative().abs() <= 1e-12, "{gap:?}");
        let proj = plan_from_symmetrization(&q, &ctx, MapKind::Projection, Exec::SERIAL).unwrap();
        let zero = duality_gap(&proj, &Potential::zero(), &mut rng).unwrap();
        assert_eq!(zero.gap, zero.cost);
    }

    #[test]
    fn steep_potential_is_rejected() {
        let plan = single(Point::new(0.0, 0.0), Point::new(1.0, 0.0), 1.0);
        let u = Potential::new("double", 1.0, |x| 2.0 * x.x);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            duality_gap(&plan, &u, &mut rng),
            Err(RayError::NotLip1 { .. })
        ));
    }

    #[test]
    fn identical_fields_have_no_discrepancy() {
        let f = DensityField::from_fn(GridSpec::unit(8), |p| p.x);
        let d = restriction_discrepancy(&f, &f, &Domain::unit_square()).unwrap();
        assert_eq!(d, 0.0);
        let g = DensityField::from_fn(GridSpec::unit(4), |p| p.x);
        assert!(restriction_discrepancy(&f, &g, &Domain::unit_square()).is_err());
    }

    #[test]
    fn segment_integral_is_exact_for_polynomials() {
        let phi = |p: Point| p.x * p.x * p.y + 3.0;
        // ∫_0^1 (t² · t + 3) √2 dt along the diagonal
        let got = segment_integral(Point::new(0.0, 0.0), Point::new(1.0, 1.0), &phi, 0.3);
        assert_relative_eq!(got, 2f64.sqrt() * (0.25 + 3.0), max_relative = 1e-14);
    }

    #[test]
    fn test_integral_matches_deposit_for_constant() {
        let q = strip_quadrature(40);
        let ctx = SymmetrizationContext::new(Domain::unit_square());
        let refl = plan_from_symmetrization(&q, &ctx, MapKind::Reflection, Exec::SERIAL).unwrap();
        let square = ctx.domain().as_polygon().unwrap().clone();
        let inside = test_function_integral(&refl, &|_| 1.0, Some(&square), Exec::SERIAL);
        assert_relative_eq!(inside, 0.008, max_relative = 1e-12);
    }
}
