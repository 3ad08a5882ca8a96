use std::sync::LazyLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tdlab::fields::{
    boundary_pushforward, polygon_quadrature, pushforward_by_map, DensityField, GridSpec, PushforwardMode,
};
use tdlab::geometry::{round_approximate, ConvexPolygon, Domain, RoundPolygon};
use tdlab::raydensity::{deposit_transport_density, plan_from_symmetrization, transport_cost, MapPlan};
use tdlab::symmetrize::{MapKind, SymmetrizationContext};
use tdlab::{Exec, Point};

static RING: LazyLock<Domain> = LazyLock::new(|| {
    let centers = (0..12)
        .map(|k| Point::polar(std::f64::consts::TAU * k as f64 / 12.0) * 1.5)
        .collect();
    Domain::round(RoundPolygon::new(centers, 0.5).unwrap()).unwrap()
});

fn hexagon() -> Domain {
    Domain::polygon(ConvexPolygon::regular(6, Point::new(0.5, 0.5), 0.5).unwrap()).unwrap()
}

fn point_in(lo: f64, hi: f64) -> impl Strategy<Value = Point> {
    (lo..hi, lo..hi).prop_map(|(x, y)| Point::new(x, y))
}

proptest! {
    #[test]
    fn signed_distance_is_1_lipschitz(a in point_in(-2.5, 2.5), b in point_in(-2.5, 2.5)) {
        for d in [hexagon(), RING.clone()] {
            let lhs = (d.signed_distance(a) - d.signed_distance(b)).abs();
            prop_assert!(lhs <= a.distance(b) + 1e-12);
        }
    }

    #[test]
    fn projection_is_idempotent(x in point_in(0.0, 1.0)) {
        let d = hexagon();
        prop_assume!(d.contains(x));
        let p = d.projection(x).point;
        prop_assert!(d.projection(p).point.distance(p) <= 1e-12);
    }

    #[test]
    fn round_projection_is_idempotent(x in point_in(-1.1, 1.1)) {
        let d = &*RING;
        prop_assume!(d.contains(x));
        let p = d.projection(x).point;
        prop_assert!(d.projection(p).point.distance(p) <= 1e-12);
    }

    #[test]
    fn deposit_conserves_length_mass(
        segs in prop::collection::vec((point_in(0.0, 1.0), point_in(0.0, 1.0), 0.0_f64..2.0), 1..40),
        n in 4_usize..48,
    ) {
        let mut plan = MapPlan { source: Default::default(), dest: Vec::new(), ties: 0 };
        for &(a, b, w) in &segs {
            plan.source.push(a, w, 1.0);
            plan.dest.push(b);
        }
        let sigma = deposit_transport_density(&plan, &GridSpec::unit(n), Exec::SERIAL).unwrap();
        let cost = transport_cost(&plan);
        prop_assert!(sigma.values().iter().all(|&v| v >= 0.0));
        prop_assert!((sigma.mass() - cost).abs() <= 1e-12 * cost.max(1e-300));
    }

    #[test]
    fn projection_plan_respects_the_dirichlet_dual(scale in 0.0_f64..=1.0, cap in 0.01_f64..0.5) {
        let d = hexagon();
        let grid = GridSpec::unit(32);
        let q = polygon_quadrature(&grid, d.as_polygon().unwrap(), 1.0, 2).unwrap();
        let ctx = SymmetrizationContext::new(d.clone());
        let plan = plan_from_symmetrization(&q, &ctx, MapKind::Projection, Exec::SERIAL).unwrap();
        // any 1-Lipschitz u vanishing on the boundary
        let u = |x: Point| scale * d.signed_distance(x).min(cap);
        let dual: f64 = (0..plan.len()).map(|k| plan.source.weights[k] * u(plan.source.points[k])).sum();
        prop_assert!(dual <= transport_cost(&plan) * (1.0 + 1e-12));
    }

    #[test]
    fn norms_increase_with_p_on_unit_area(values in prop::collection::vec(0.0_f64..5.0, 64)) {
        let f = DensityField::new(GridSpec::unit(8), ndarray::Array2::from_shape_vec((8, 8), values).unwrap()).unwrap();
        let ps = [1.0, 1.5, 2.0, 3.0, 4.0, 8.0, f64::INFINITY];
        for w in ps.windows(2) {
            prop_assert!(f.lp_norm(w[0]) <= f.lp_norm(w[1]) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sup_norm_dominates_scaled_lp(values in prop::collection::vec(0.0_f64..5.0, 36), h in 0.05_f64..2.0) {
        let g = GridSpec::new(Point::new(0.0, 0.0), h, 6, 6).unwrap();
        let area = 36.0 * h * h;
        let f = DensityField::new(g, ndarray::Array2::from_shape_vec((6, 6), values).unwrap()).unwrap();
        for p in [1.0, 2.0, 4.0] {
            prop_assert!(f.lp_norm(f64::INFINITY) * (1.0 + 1e-12) >= f.lp_norm(p) * area.powf(-1.0 / p));
        }
    }

    #[test]
    fn mass_mode_pushforward_conserves_mass(shift in point_in(-0.3, 0.3), sub in 1_usize..4) {
        let d = hexagon();
        let grid = GridSpec::unit(16);
        let q = polygon_quadrature(&grid, d.as_polygon().unwrap(), 1.0, sub).unwrap();
        let target = GridSpec::new(Point::new(-0.5, -0.5), 1.0 / 16.0, 32, 32).unwrap();
        let out = pushforward_by_map(&q, |x| x + shift, |_| 1.0, &target, PushforwardMode::Mass, Exec::SERIAL).unwrap();
        prop_assert!((out.field.mass() - q.mass()).abs() <= 1e-12 * q.mass());
    }
}

#[test]
fn boundary_pushforward_conserves_mass() {
    for d in [hexagon(), RING.clone()] {
        let bb = d.bounding_box();
        let grid = GridSpec::covering(bb.min.x, bb.min.y, bb.max.x, bb.max.y, 1.0 / 32.0).unwrap();
        let q = tdlab::fields::region_quadrature(&grid, |x| d.contains(x), 1.0, 2).unwrap();
        let (measure, _) = boundary_pushforward(&q, &d, 1.0 / 32.0);
        let total: f64 = measure.faces.iter().flat_map(|f| &f.masses).sum();
        assert!((total - q.mass()).abs() <= 1e-12 * q.mass(), "{total} vs {}", q.mass());
    }
}

#[test]
fn round_approximation_contains_the_polygon() {
    let poly = ConvexPolygon::regular(5, Point::new(0.0, 0.0), 1.0).unwrap();
    let round = Domain::round(round_approximate(&poly, 0.25, 0.1).unwrap()).unwrap();
    let inner = Domain::polygon(poly).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for x in inner.sample_interior(&mut rng, 1_000_000) {
        assert!(round.contains(x), "{x:?} escapes the round approximation");
    }
}

#[test]
fn seam_fraction_shrinks_with_the_grid() {
    let d = hexagon();
    let mut last = f64::INFINITY;
    for n in [16, 32, 64] {
        let h = 1.0 / n as f64;
        let q = polygon_quadrature(&GridSpec::unit(n), d.as_polygon().unwrap(), 1.0, 1).unwrap();
        let ctx = SymmetrizationContext::new(d.clone());
        let plan = plan_from_symmetrization(&q, &ctx, MapKind::Reflection, Exec::SERIAL).unwrap();
        let fraction = plan.ties as f64 / plan.len() as f64;
        assert!(fraction <= 10.0 * h, "n={n}: {fraction}");
        assert!(fraction <= last);
        last = fraction;
    }
}

#[test]
fn deposit_is_translation_equivariant() {
    let h = 1.0 / 64.0;
    let d = Domain::unit_square();
    let grid = GridSpec::new(Point::new(-h, -h), h, 66, 66).unwrap();
    let strip = ConvexPolygon::rectangle(0.25, 0.0, 0.75, 0.25).unwrap();
    let q = polygon_quadrature(&grid, &strip, 1.0, 2).unwrap();
    let ctx = SymmetrizationContext::new(d);
    let plan = plan_from_symmetrization(&q, &ctx, MapKind::Projection, Exec::SERIAL).unwrap();
    let by = Point::new(3.0 * h, -5.0 * h);
    let moved = MapPlan {
        source: q.translated(by),
        dest: plan.dest.iter().map(|&y| y + by).collect(),
        ties: plan.ties,
    };
    let moved_grid = GridSpec::new(grid.origin + by, h, grid.nx, grid.ny).unwrap();
    let exec = Exec { deterministic: true };
    let a = deposit_transport_density(&plan, &grid, exec).unwrap();
    let b = deposit_transport_density(&moved, &moved_grid, exec).unwrap();
    assert!(a
        .values()
        .iter()
        .zip(b.values())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn reflection_images_stay_enclosed() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let d = hexagon();
    let ctx = SymmetrizationContext::new(d.clone());
    let images: Vec<Point> = d
        .sample_interior(&mut rng, 10_000)
        .into_iter()
        .map(|x| MapKind::Reflection.apply(&ctx, x).unwrap().0)
        .collect();
    ctx.check_enclosed(&images).unwrap();
}
