//! Transport from the trapeze `A = conv{(0,0), (1,0), (1,4/5), (0,6/5)}`
//! (unit density) to the segment `[2,3]×{0}` (unit linear density).
//!
//! Mass travels along the segments `l_ε` from `(0, w(ε))` to `(2+ε, 0)`,
//! `w(ε) = 2ε(2+ε)/(3+2ε)`, chosen so that the triangle `Δ_ε` cut off by
//! `l_ε` holds source mass exactly `ε`. All rays funnel through the corner
//! `(2, 0)`, where the transport density behaves like `1/(s+ε)` in ray
//! coordinates; it is `p`-integrable exactly for `p < 3`.

use serde::Serialize;
use thiserror::Error;

use crate::exec::Exec;
use crate::fields::{polygon_quadrature, DensityField, FieldError, GridSpec, Quadrature};
use crate::geometry::{disk_rectangle_area, intersection_area, ConvexPolygon};
use crate::point::Point;
use crate::raydensity::{deposit_transport_density, MapPlan, RayError};

/// Default upper end of the `(ε, s)` window for the density sweep.
pub const DEFAULT_EPS0: f64 = 0.2;

/// Corner of the target where all rays accumulate.
pub const APEX: Point = Point { x: 2.0, y: 0.0 };

#[derive(Debug, Error)]
pub enum CounterexampleError {
    #[error("{what} = {value} is outside {range}")]
    Domain {
        what: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("point ({x}, {y}) is the apex (2, 0)")]
    ApexDegenerate { x: f64, y: f64 },
    #[error("no convergence for ({x}, {y}); last ε = {eps}")]
    NoConvergence { x: f64, y: f64, eps: f64 },
    #[error("ball around ({x}, {y}) of radius {radius} leaves the grid")]
    OutOfGrid { x: f64, y: f64, radius: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Ray(#[from] RayError),
}

fn check_eps(eps: f64) -> Result<(), CounterexampleError> {
    if (0.0..=1.0).contains(&eps) {
        Ok(())
    } else {
        Err(CounterexampleError::Domain {
            what: "ε",
            value: eps,
            range: "[0, 1]",
        })
    }
}

pub fn trapeze() -> ConvexPolygon {
    ConvexPolygon::new(vec![
        Point::new(0.0, 0.0),
        Point::new(1.0, 0.0),
        Point::new(1.0, 0.8),
        Point::new(0.0, 1.2),
    ])
    .expect("trapeze is convex")
}

/// `2ε(2+ε)/(3+2ε)`.
pub fn w_of_eps(eps: f64) -> Result<f64, CounterexampleError> {
    check_eps(eps)?;
    Ok(w(eps))
}

fn w(eps: f64) -> f64 {
    2.0 * eps * (2.0 + eps) / (3.0 + 2.0 * eps)
}

/// `w′(ε) = 4(3 + 3ε + ε²)/(3 + 2ε)²`.
pub fn w_prime(eps: f64) -> f64 {
    4.0 * (3.0 + 3.0 * eps + eps * eps) / ((3.0 + 2.0 * eps) * (3.0 + 2.0 * eps))
}

/// Endpoints `(0, w(ε))` and `(2+ε, 0)` of the ray `l_ε`.
pub fn ray_of_eps(eps: f64) -> Result<(Point, Point), CounterexampleError> {
    check_eps(eps)?;
    Ok((Point::new(0.0, w(eps)), Point::new(2.0 + eps, 0.0)))
}

/// Triangle `Δ_ε` bounded by the axes and `l_ε`.
pub fn triangle(eps: f64) -> Result<Vec<Point>, CounterexampleError> {
    let (top, foot) = ray_of_eps(eps)?;
    Ok(vec![Point::new(0.0, 0.0), foot, top])
}

/// `(f⁺(Δ_ε), f⁻(Δ_ε))`: the clipped area of the trapeze and the target
/// length `ε`.
pub fn mass_balance(eps: f64) -> Result<(f64, f64), CounterexampleError> {
    check_eps(eps)?;
    if eps == 0.0 {
        return Ok((0.0, 0.0));
    }
    let tri = triangle(eps)?;
    Ok((intersection_area(&tri, trapeze().vertices()), eps))
}

/// Point with ray coordinates `(ε, s)`: `(1−s)(2+ε, 0) + s(0, w(ε))`.
pub fn point_of(eps: f64, s: f64) -> Point {
    Point::new((1.0 - s) * (2.0 + eps), s * w(eps))
}

/// Ray coordinates `(ε, s)` of a point of `Δ₁`.
pub fn eps_s_of_point(x: Point) -> Result<(f64, f64), CounterexampleError> {
    if x.distance(APEX) <= 1e-12 {
        return Err(CounterexampleError::ApexDegenerate { x: x.x, y: x.y });
    }
    let outside = || CounterexampleError::Domain {
        what: "point",
        value: x.x,
        range: "the triangle Δ₁",
    };
    if x.x < 0.0 || x.y < 0.0 {
        return Err(outside());
    }
    if x.y == 0.0 {
        return if x.x >= 2.0 {
            if x.x > 3.0 {
                return Err(outside());
            }
            Ok((x.x - 2.0, 0.0))
        } else {
            Ok((0.0, 1.0 - x.x / 2.0))
        };
    }
    // F(ε) = x₁/(2+ε) + x₂/w(ε) − 1 decreases from +∞ at 0⁺.
    let f = |e: f64| x.x / (2.0 + e) + x.y / w(e) - 1.0;
    let df = |e: f64| -x.x / ((2.0 + e) * (2.0 + e)) - x.y * w_prime(e) / (w(e) * w(e));
    if f(1.0) > 1e-12 {
        return Err(outside());
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut e = 0.5;
    for _ in 0..200 {
        let fe = f(e);
        if fe.abs() <= 1e-14 {
            break;
        }
        if fe > 0.0 {
            lo = e;
        } else {
            hi = e;
        }
        let newton = e - fe / df(e);
        e = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-16 * hi.max(1e-300) {
            break;
        }
    }
    if !(f(e).abs() <= 1e-12) {
        return Err(CounterexampleError::NoConvergence { x: x.x, y: x.y, eps: e });
    }
    Ok((e, x.y / w(e)))
}

/// `T(x) = (2 + ε(x), 0)`.
pub fn counterexample_map(x: Point) -> Result<Point, CounterexampleError> {
    let (eps, _) = eps_s_of_point(x)?;
    Ok(Point::new(2.0 + eps, 0.0))
}

/// Jacobian determinant of `(ε, s) ↦ x`, `(1−s) w + s (2+ε) w′`.
pub fn ray_jacobian(eps: f64, s: f64) -> f64 {
    (1.0 - s) * w(eps) + s * (2.0 + eps) * w_prime(eps)
}

/// `∫_a^1 J(ε, t) dt`.
fn jacobian_tail(eps: f64, a: f64) -> f64 {
    let (wv, wp) = (w(eps), (2.0 + eps) * w_prime(eps));
    let prim = |t: f64| wv * (t - 0.5 * t * t) + wp * 0.5 * t * t;
    prim(1.0) - prim(a)
}

/// Closed-form transport density at ray coordinates `(ε, s)`: the ray
/// length times the source mass upstream of `s`, over `J(ε, s)`.
pub fn analytic_sigma(eps: f64, s: f64) -> Result<f64, CounterexampleError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(CounterexampleError::Domain {
            what: "ε",
            value: eps,
            range: "(0, 1]",
        });
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(CounterexampleError::Domain {
            what: "s",
            value: s,
            range: "[0, 1]",
        });
    }
    // sources lie in x₁ ≤ 1, i.e. t ≥ 1 − 1/(2+ε)
    let t0 = 1.0 - 1.0 / (2.0 + eps);
    let length = (2.0 + eps).hypot(w(eps));
    Ok(length * jacobian_tail(eps, s.max(t0)) / ray_jacobian(eps, s))
}

/// Smallest and largest `σ(ε, s)·(s + ε)` over an `n × n` grid of
/// `(0, eps0]²`.
pub fn sigma_constant_window(eps0: f64, n: usize) -> Result<(f64, f64), CounterexampleError> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for a in 1..=n {
        for b in 1..=n {
            let eps = eps0 * a as f64 / n as f64;
            let s = eps0 * b as f64 / n as f64;
            let v = analytic_sigma(eps, s)? * (s + eps);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Ok((lo, hi))
}

/// `ε` at which `l_ε` is tangent to the circle of radius `r` around the
/// apex; the distance from the apex to `l_ε` is `εw/√(w² + (2+ε)²)`.
pub fn tangency_eps(r: f64) -> Result<f64, CounterexampleError> {
    let dist = |e: f64| e * w(e) / w(e).hypot(2.0 + e);
    if !(r > 0.0 && r <= dist(1.0)) {
        return Err(CounterexampleError::Domain {
            what: "radius",
            value: r,
            range: "(0, d(apex, l₁)]",
        });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dist(mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Grid of cell size `h` covering `[−0.1, 3.1] × [−0.25, 1.3]` with the apex
/// on a cell corner. The extra margin below the axis keeps the balls
/// `B((2,0), 2r)`, `r ≤ 0.1`, inside the grid.
pub fn study_grid(h: f64) -> Result<GridSpec, FieldError> {
    let left = (2.1 / h - 1e-9).ceil();
    let below = (0.25 / h - 1e-9).ceil();
    let origin = Point::new(2.0 - left * h, -below * h);
    let nx = ((3.1 - origin.x) / h - 1e-9).ceil() as usize;
    let ny = ((1.3 - origin.y) / h - 1e-9).ceil() as usize;
    GridSpec::new(origin, h, nx, ny)
}

/// Quadrature of the trapeze: cells of size `h` split into
/// `subdivision²` subcells clipped against `A`.
pub fn source_quadrature(h: f64, subdivision: usize) -> Result<Quadrature, FieldError> {
    let a = trapeze();
    let grid = GridSpec::covering(0.0, 0.0, 1.0, 1.2, h)?;
    polygon_quadrature(&grid, &a, 1.0, subdivision)
}

/// Plan of [`counterexample_map`] on a quadrature of the trapeze.
pub fn plan(q: &Quadrature, exec: Exec) -> Result<MapPlan, CounterexampleError> {
    let dest = exec.map(q.len(), |k| counterexample_map(q.points[k]));
    let dest = dest.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(MapPlan {
        source: q.clone(),
        dest,
        ties: 0,
    })
}

/// `σ(B(center, radius))` from a cell density, with exact cell–disk overlap
/// areas.
pub fn ball_mass(sigma: &DensityField, center: Point, radius: f64) -> Result<f64, CounterexampleError> {
    let g = sigma.grid();
    let b = g.bounds();
    if center.x - radius < b.min.x
        || center.x + radius > b.max.x
        || center.y - radius < b.min.y
        || center.y + radius > b.max.y
    {
        return Err(CounterexampleError::OutOfGrid {
            x: center.x,
            y: center.y,
            radius,
        });
    }
    let lo = g.cell_of(center - Point::new(radius, radius)).expect("inside");
    let hi = g.cell_of(center + Point::new(radius, radius)).expect("inside");
    let mut total = 0.0;
    for j in lo.1..=hi.1 {
        for i in lo.0..=hi.0 {
            let v = sigma.get(i, j);
            if v == 0.0 {
                continue;
            }
            let c = g.cell_corner(i, j);
            total += v * disk_rectangle_area(center, radius, c.x, c.x + g.h, c.y, c.y + g.h);
        }
    }
    Ok(total)
}

/// Largest cell value among cells meeting `B(center, radius)`.
pub fn ball_max(sigma: &DensityField, center: Point, radius: f64) -> f64 {
    let g = sigma.grid();
    let mut best = 0.0_f64;
    for ((i, j), &v) in sigma.values().indexed_iter() {
        let c = g.cell_corner(i, j);
        if v > best && disk_rectangle_area(center, radius, c.x, c.x + g.h, c.y, c.y + g.h) > 0.0 {
            best = v;
        }
    }
    best
}

#[derive(Debug, Clone, Serialize)]
pub struct BallScaling {
    /// `(r, σ(B_{2r}))` pairs.
    pub samples: Vec<(f64, f64)>,
    /// Least-squares slope of `log σ(B_{2r})` against `log r`.
    pub slope: f64,
    /// `exp(intercept)`, the fitted constant `C` in `σ(B_{2r}) ≈ C r^slope`.
    pub constant: f64,
}

/// Log–log regression of `σ(B_{2r})` around the apex for `r` in `radii`.
pub fn ball_scaling(sigma: &DensityField, radii: &[f64]) -> Result<BallScaling, CounterexampleError> {
    let samples = radii
        .iter()
        .map(|&r| Ok((r, ball_mass(sigma, APEX, 2.0 * r)?)))
        .collect::<Result<Vec<_>, CounterexampleError>>()?;
    let (slope, intercept) = log_log_fit(&samples);
    Ok(BallScaling {
        samples,
        slope,
        constant: intercept.exp(),
    })
}

/// Least-squares `(slope, intercept)` of `ln y` against `ln x`.
pub fn log_log_fit(samples: &[(f64, f64)]) -> (f64, f64) {
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Classification {
    Convergent,
    Divergent,
    Inconclusive,
}

/// Relative change between the last two refinements at or below which a
/// sequence counts as converged.
pub const CONVERGENT_CHANGE: f64 = 0.05;
/// Growth per refinement at or above which a sequence counts as divergent.
pub const DIVERGENT_GROWTH: f64 = 0.15;

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRow {
    pub p: f64,
    pub h: f64,
    /// `‖σ_h‖_p`
    pub norm: f64,
    /// `‖σ_h‖_p^p`
    pub norm_pow: f64,
    /// `∫∫_{s+ε ≥ √h} σ(ε,s)^p J dε ds`, the closed-form density with the
    /// effective cutoff of a grid of size `h`.
    pub analytic_pow: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdSummary {
    pub p: f64,
    pub classification: Classification,
    /// `log₂` of the ratio of `‖σ_h‖_p^p` between successive refinements.
    pub growth_exponents: Vec<f64>,
    /// Growth exponent predicted by the effective cutoff `√h`: `(p − 3)/2`.
    pub predicted_exponent: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdStudy {
    pub rows: Vec<ThresholdRow>,
    pub summary: Vec<ThresholdSummary>,
}

/// Classifies a refinement sequence of `‖σ_h‖_p^p`.
pub fn classify(values: &[f64]) -> Classification {
    if values.len() < 2 {
        return Classification::Inconclusive;
    }
    let grows = values.windows(2).all(|w| w[1] >= (1.0 + DIVERGENT_GROWTH) * w[0]);
    if grows {
        return Classification::Divergent;
    }
    let n = values.len();
    let change = (values[n - 1] - values[n - 2]).abs() / values[n - 2].abs();
    if change <= CONVERGENT_CHANGE {
        Classification::Convergent
    } else {
        Classification::Inconclusive
    }
}

/// `∫∫ σ^p J dε ds` over `(0,1]×[0,1]` restricted to `s + ε ≥ cutoff`,
/// by a midpoint rule on a grid graded toward the corner.
pub fn analytic_lp_pow(p: f64, cutoff: f64, n: usize) -> f64 {
    // geometric grading in both variables resolves the 1/(s+ε) singularity
    let nodes: Vec<f64> = {
        let lo = (cutoff * 1e-3).max(1e-12);
        let mut v = vec![0.0];
        v.extend((0..=n).map(|k| lo * (1.0 / lo).powf(k as f64 / n as f64)));
        v
    };
    let mut total = 0.0;
    for a in 0..nodes.len() - 1 {
        for b in 0..nodes.len() - 1 {
            let (e0, e1) = (nodes[a], nodes[a + 1]);
            let (s0, s1) = (nodes[b], nodes[b + 1]);
            let (e, s) = (0.5 * (e0 + e1), 0.5 * (s0 + s1));
            if e <= 0.0 || s + e < cutoff {
                continue;
            }
            // skip the part of the (ε, s) square outside the support (x₁ beyond the source is fine)
            let sigma = analytic_sigma(e, s).unwrap_or(0.0);
            total += sigma.powf(p) * ray_jacobian(e, s) * (e1 - e0) * (s1 - s0);
        }
    }
    total
}

/// Transport densities of [`plan`] on [`study_grid`] for each cell size.
pub fn refinement_fields(plan: &MapPlan, h_list: &[f64], exec: Exec) -> Result<Vec<DensityField>, CounterexampleError> {
    h_list
        .iter()
        .map(|&h| Ok(deposit_transport_density(plan, &study_grid(h)?, exec)?))
        .collect()
}

/// Classifies `‖σ_h‖_p^p` over a refinement sequence of deposited
/// densities (coarsest first) for every `p`.
pub fn lp_threshold_study(p_list: &[f64], fields: &[DensityField]) -> ThresholdStudy {
    let h_list: Vec<f64> = fields.iter().map(|f| f.grid().h).collect();
    let mut rows = Vec::new();
    let mut pows: Vec<Vec<f64>> = vec![Vec::new(); p_list.len()];
    for (sigma, &h) in fields.iter().zip(&h_list) {
        for (k, &p) in p_list.iter().enumerate() {
            let norm = sigma.lp_norm(p);
            let norm_pow = norm.powf(p);
            pows[k].push(norm_pow);
            rows.push(ThresholdRow {
                p,
                h,
                norm,
                norm_pow,
                analytic_pow: analytic_lp_pow(p, h.sqrt(), 400),
            });
        }
    }
    let summary = p_list
        .iter()
        .zip(&pows)
        .map(|(&p, values)| {
            let growth_exponents = values
                .windows(2)
                .zip(h_list.windows(2))
                .map(|(v, hh)| (v[1] / v[0]).ln() / (hh[0] / hh[1]).ln())
                .collect();
            ThresholdSummary {
                p,
                classification: classify(values),
                growth_exponents,
                predicted_exponent: 0.5 * (p - 3.0),
            }
        })
        .collect();
    ThresholdStudy { rows, summary }
}

/// Uniformity of the image of a plan on `[2, 3] × {0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageUniformity {
    pub points: usize,
    /// Weighted Kolmogorov–Smirnov distance to the uniform law on `[2, 3]`.
    pub ks: f64,
    /// `2/√N`.
    pub ks_bound: f64,
    pub bins: usize,
    /// Largest `|bin mass − 1/bins|`.
    pub max_bin_deviation: f64,
}

pub fn image_uniformity(plan: &MapPlan, bins: usize) -> ImageUniformity {
    let total = plan.mass();
    let mut pairs: Vec<(f64, f64)> = plan
        .dest
        .iter()
        .zip(&plan.source.weights)
        .map(|(y, &w)| (y.x - 2.0, w / total))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ks = 0.0_f64;
    let mut cdf = 0.0;
    let mut hist = vec![0.0; bins];
    for &(t, w) in &pairs {
        ks = ks.max((cdf - t).abs());
        cdf += w;
        ks = ks.max((cdf - t).abs());
        let b = ((t * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        hist[b] += w;
    }
    let target = 1.0 / bins as f64;
    ImageUniformity {
        points: pairs.len(),
        ks,
        ks_bound: 2.0 / (pairs.len() as f64).sqrt(),
        bins,
        max_bin_deviation: hist.iter().map(|m| (m - target).abs()).fold(0.0, f64::max),
    }
}

/// Deposited cell values against the closed form averaged over the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticAgreement {
    pub cells: usize,
    pub max_relative_error: f64,
    pub mean_relative_error: f64,
}

/// Compares `sigma` with [`analytic_sigma`] on cells lying inside `Δ₁`
/// whose corners all have `s + ε ≥ min_sum`.
pub fn analytic_agreement(sigma: &DensityField, min_sum: f64) -> AnalyticAgreement {
    let g = *sigma.grid();
    let inside = |p: Point| match eps_s_of_point(p) {
        Ok((e, s)) => e > 0.0 && e + s >= min_sum,
        Err(_) => false,
    };
    const SUB: usize = 4;
    let mut cells = 0;
    let mut worst = 0.0_f64;
    let mut sum = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.cell_corner(i, j);
            let corners = [
                c,
                c + Point::new(g.h, 0.0),
                c + Point::new(0.0, g.h),
                c + Point::new(g.h, g.h),
            ];
            if !corners.iter().all(|&p| inside(p)) {
                continue;
            }
            let mut avg = 0.0;
            for b in 0..SUB {
                for a in 0..SUB {
                    let p = c + Point::new(a as f64 + 0.5, b as f64 + 0.5) * (g.h / SUB as f64);
                    let (e, s) = eps_s_of_point(p).expect("inside Δ₁");
                    avg += analytic_sigma(e, s).expect("valid coordinates");
                }
            }
            avg /= (SUB * SUB) as f64;
            let err = (sigma.get(i, j) - avg).abs() / avg;
            worst = worst.max(err);
            sum += err;
            cells += 1;
        }
    }
    AnalyticAgreement {
        cells,
        max_relative_error: worst,
        mean_relative_error: if cells > 0 { sum / cells as f64 } else { 0.0 },
    }
}
