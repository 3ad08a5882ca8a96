use tdlab::beckmann::{flow_magnitude, mk_residuals, solve_min_flow, BoundaryMode, Init, SolveOptions};
use tdlab::fields::{polygon_quadrature, DensityField, GridSpec};
use tdlab::geometry::{ConvexPolygon, Domain};
use tdlab::raydensity::{deposit_transport_density, plan_from_symmetrization};
use tdlab::symmetrize::{MapKind, SymmetrizationContext};
use tdlab::{Exec, Point};

#[test]
fn strip_flow_matches_deposited_density() {
    let n = 64;
    let h = 1.0 / n as f64;
    let grid = GridSpec::new(Point::new(-h, -h), h, n + 2, n + 2).unwrap();
    let q_rect = ConvexPolygon::rectangle(0.3, 0.0, 0.7, 0.2).unwrap();
    let f = DensityField::polygon_indicator(grid, &q_rect, 1.0);
    let sol = solve_min_flow(&f, &SolveOptions::new(BoundaryMode::Dirichlet)).unwrap();
    assert!(sol.report.residual <= 1e-6, "residual {}", sol.report.residual);
    let quad = polygon_quadrature(&grid, &q_rect, 1.0, 3).unwrap();
    let ctx = SymmetrizationContext::new(Domain::unit_square());
    let plan = plan_from_symmetrization(&quad, &ctx, MapKind::Projection, Exec::SERIAL).unwrap();
    let sigma = deposit_transport_density(&plan, &grid, Exec::SERIAL).unwrap();
    let mag = flow_magnitude(&sol.flow);
    let inner = |p: Point| p.x > 0.0 && p.x < 1.0 && p.y > 0.0 && p.y < 1.0;
    let (d, b) = mag.l1_distance_where(&sigma, inner).unwrap();
    let r = mk_residuals(&mag, &sol.report.potential, &f, BoundaryMode::Dirichlet).unwrap();
    assert!(d / b <= 0.05, "relative L1 {}", d / b);
    assert!(r.gradient_excess <= 1e-5, "{r:?}");
    assert!(r.deficit <= 0.05, "{r:?}");
}

fn strip_source(n: usize) -> DensityField {
    let h = 1.0 / n as f64;
    let grid = GridSpec::new(Point::new(-h, -h), h, n + 2, n + 2).unwrap();
    DensityField::polygon_indicator(grid, &ConvexPolygon::rectangle(0.3, 0.0, 0.7, 0.2).unwrap(), 1.0)
}

#[test]
fn solution_is_positively_homogeneous() {
    let f = strip_source(24);
    let alpha = 3.7;
    let mut scaled = f.clone();
    scaled.values_mut().mapv_inplace(|v| alpha * v);
    let opts = SolveOptions::new(BoundaryMode::Dirichlet);
    let a = solve_min_flow(&f, &opts).unwrap();
    let b = solve_min_flow(&scaled, &opts).unwrap();
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-300);
    assert!(rel(b.report.objective, alpha * a.report.objective) <= 1e-9);
    let (ma, mb) = (flow_magnitude(&a.flow), flow_magnitude(&b.flow));
    let worst = ma
        .values()
        .iter()
        .zip(mb.values())
        .map(|(x, y)| (alpha * x - y).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-9 * alpha * ma.max(), "{worst:e}");
}

#[test]
fn objective_dominates_the_dual() {
    let f = strip_source(24);
    let sol = solve_min_flow(&f, &SolveOptions::new(BoundaryMode::Dirichlet)).unwrap();
    let h2 = f.grid().cell_area();
    let dual: f64 = sol
        .report
        .potential
        .iter()
        .zip(f.values())
        .map(|(u, v)| h2 * u * v)
        .sum();
    assert!(sol.report.objective >= dual - 1e-12);
    assert!(sol.report.gap >= 0.0);
}

#[test]
fn random_restarts_agree() {
    let f = strip_source(48);
    let mut opts = SolveOptions::new(BoundaryMode::Dirichlet);
    let a = flow_magnitude(&solve_min_flow(&f, &opts).unwrap().flow);
    opts.init = Init::Random { seed: 5 };
    let b = flow_magnitude(&solve_min_flow(&f, &opts).unwrap().flow);
    let (d, base) = b.l1_distance_where(&a, |_| true).unwrap();
    assert!(d / base <= 0.02, "relative L1 {}", d / base);
}
