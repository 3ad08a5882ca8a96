use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tdlab::counterexample::{
    analytic_agreement, ball_mass, eps_s_of_point, image_uniformity, mass_balance, plan, point_of, ray_jacobian,
    ray_of_eps, source_quadrature, study_grid, w_of_eps, APEX,
};
use tdlab::fields::DensityField;
use tdlab::raydensity::deposit_transport_density;
use tdlab::{Exec, Point};

#[test]
fn ray_coordinates_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0_f64;
    for _ in 0..100_000 {
        let eps: f64 = rng.random_range(1e-3..=1.0);
        let s: f64 = rng.random_range(0.0..=1.0);
        let (e2, s2) = eps_s_of_point(point_of(eps, s)).unwrap();
        worst = worst.max((e2 - eps).abs()).max((s2 - s).abs());
    }
    assert!(worst <= 1e-10, "round trip error {worst:e}");
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let d = 1e-6;
    for _ in 0..10_000 {
        let eps: f64 = rng.random_range(0.01..0.99);
        let s: f64 = rng.random_range(0.01..0.99);
        let de = (point_of(eps + d, s) - point_of(eps - d, s)) * (0.5 / d);
        let ds = (point_of(eps, s + d) - point_of(eps, s - d)) * (0.5 / d);
        let fd = de.x * ds.y - de.y * ds.x;
        let exact = ray_jacobian(eps, s);
        assert!(exact > 0.0);
        assert!(
            (fd - exact).abs() <= 1e-8 * exact.max(1.0),
            "ε={eps} s={s}: {fd} vs {exact}"
        );
    }
}

#[test]
fn rays_are_nested() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10_000 {
        let a: f64 = rng.random_range(0.0..1.0);
        let b: f64 = rng.random_range(0.0..1.0);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if hi - lo < 1e-9 {
            continue;
        }
        let (top, foot) = ray_of_eps(hi).unwrap();
        let s: f64 = rng.random_range(0.0..=1.0);
        let p = point_of(lo, s);
        assert!(p.x / foot.x + p.y / top.y < 1.0, "l_{lo} meets l_{hi}");
    }
}

#[test]
fn mass_balance_holds_on_a_fine_sweep() {
    let mut worst = 0.0_f64;
    for k in 1..=100 {
        let eps = k as f64 / 100.0;
        let (a, b) = mass_balance(eps).unwrap();
        worst = worst.max((a - b).abs());
    }
    assert!(worst <= 1e-12, "{worst:e}");
}

#[test]
fn pushforward_is_uniform_on_the_target() {
    let q = source_quadrature(1.0 / 512.0, 2).unwrap();
    assert!(q.len() >= 1_000_000, "{} points", q.len());
    let p = plan(&q, Exec::PARALLEL).unwrap();
    let u = image_uniformity(&p, 100);
    assert!(u.ks <= u.ks_bound, "KS {} > {}", u.ks, u.ks_bound);
    assert!(u.max_bin_deviation <= 1e-3, "bin deviation {}", u.max_bin_deviation);
}

#[test]
fn deposited_density_matches_closed_form() {
    // Away from the axis the grid must see several source rows per cell, so
    // the source is four times finer than the comparison grid.
    let q = source_quadrature(1.0 / 256.0, 4).unwrap();
    let p = plan(&q, Exec::PARALLEL).unwrap();
    let sigma = deposit_transport_density(&p, &study_grid(1.0 / 128.0).unwrap(), Exec::PARALLEL).unwrap();
    let agree = analytic_agreement(&sigma, 0.1);
    assert!(agree.cells > 1000, "{} cells", agree.cells);
    assert!(agree.max_relative_error <= 0.05, "{agree:?}");
    assert!(agree.mean_relative_error <= 0.01, "{agree:?}");
}

#[test]
fn ball_mass_of_unit_density_is_disk_area() {
    let grid = study_grid(1.0 / 64.0).unwrap();
    let one = DensityField::from_fn(grid, |_| 1.0);
    for r in [0.013, 0.05, 0.1, 0.2] {
        let m = ball_mass(&one, APEX, r).unwrap();
        let exact = std::f64::consts::PI * r * r;
        assert!((m - exact).abs() <= 1e-12 * exact.max(1.0), "r={r}: {m} vs {exact}");
    }
}

proptest! {
    #[test]
    fn inversion_recovers_coordinates(eps in 1e-4_f64..=1.0, s in 0.0_f64..=1.0) {
        let (e2, s2) = eps_s_of_point(point_of(eps, s)).unwrap();
        prop_assert!((e2 - eps).abs() <= 1e-10);
        prop_assert!((s2 - s).abs() <= 1e-10);
    }

    #[test]
    fn w_is_increasing(a in 0.0_f64..1.0, d in 1e-9_f64..1.0) {
        let b = (a + d).min(1.0);
        prop_assume!(b > a);
        prop_assert!(w_of_eps(b).unwrap() > w_of_eps(a).unwrap());
    }

    #[test]
    fn points_map_to_their_ray_foot(eps in 1e-3_f64..=1.0, s in 0.0_f64..0.99) {
        let x = point_of(eps, s);
        prop_assume!(x.distance(APEX) > 1e-9);
        let y = tdlab::counterexample::counterexample_map(x).unwrap();
        prop_assert!((y - Point::new(2.0 + eps, 0.0)).norm() <= 1e-10);
    }
}
