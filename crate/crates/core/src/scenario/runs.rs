use serde::Serialize;
use serde_json::{json, Value};

use super::{Artifacts, Exponent, MapChoice, RunContext, ScenarioConfig, ScenarioError};
use crate::beckmann::{flow_magnitude, mk_residuals, solve_min_flow, BoundaryMode, Init, SolveOptions};
use crate::counterexample::{self as cx, APEX};
use crate::fields::{
    boundary_pushforward, polygon_quadrature, pushforward_by_map, region_quadrature, DensityField, GridSpec,
    PushforwardMode, Quadrature,
};
use crate::geometry::{clip_polygon, round_approximate_with_resolution, ConvexPolygon, Domain, DomainSpec, Shape};
use crate::point::{BoundingBox, Point};
use crate::raydensity::{
    deposit_transport_density, duality_gap, plan_from_symmetrization, projection_plan, restriction_discrepancy,
    stability_study, transport_cost, Potential, TestFunction,
};
use crate::symmetrize::{
    default_exterior_c, jacobian_check, jacobian_lower_bound, lp_constant, radial_jacobian, MapKind,
    SymmetrizationContext,
};

fn invalid(field: &'static str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field,
        message: message.into(),
    }
}

fn load_domain(cfg: &ScenarioConfig) -> Result<Domain, ScenarioError> {
    let path = cfg.domain_path().ok_or_else(|| invalid("domain", "missing"))?;
    Ok(DomainSpec::load(&path)?.build(cfg.component_resolution)?)
}

fn require_polygon<'a>(domain: &'a Domain, scenario: &str) -> Result<&'a ConvexPolygon, ScenarioError> {
    domain
        .as_polygon()
        .ok_or_else(|| invalid("domain", format!("`{scenario}` needs a polygon domain")))
}

fn exponents(cfg: &ScenarioConfig, default: &[f64]) -> Vec<f64> {
    if cfg.p.is_empty() {
        default.to_vec()
    } else {
        cfg.p.iter().map(|e| e.0).collect()
    }
}

/// The polygon clipped to the configured source rectangle.
fn source_polygon(cfg: &ScenarioConfig, poly: &ConvexPolygon) -> Result<ConvexPolygon, ScenarioError> {
    match cfg.source {
        None => Ok(poly.clone()),
        Some([x0, y0, x1, y1]) => {
            let rect = ConvexPolygon::rectangle(x0, y0, x1, y1)?;
            let clipped = clip_polygon(rect.vertices(), poly.vertices());
            ConvexPolygon::new(clipped).map_err(|_| invalid("source", "does not meet the domain"))
        }
    }
}

/// Unit density on the source region, on subcells of a grid anchored at the
/// lower corner of the domain.
fn source_quadrature(cfg: &ScenarioConfig, domain: &Domain, h: f64) -> Result<Quadrature, ScenarioError> {
    let bb = domain.bounding_box();
    let grid = GridSpec::covering(bb.min.x, bb.min.y, bb.max.x, bb.max.y, h)?;
    let q = match domain.shape() {
        Shape::Polygon(poly) => polygon_quadrature(&grid, &source_polygon(cfg, poly)?, 1.0, cfg.subdivision)?,
        Shape::Round(_) => {
            let in_source = |x: Point| match cfg.source {
                None => true,
                Some([x0, y0, x1, y1]) => (x0..=x1).contains(&x.x) && (y0..=y1).contains(&x.y),
            };
            region_quadrature(&grid, |x| domain.contains(x) && in_source(x), 1.0, cfg.subdivision)?
        }
    };
    if q.is_empty() {
        return Err(invalid("source", "contains no quadrature points"));
    }
    Ok(q)
}

/// Grid of cell size `h` covering `bounds`, with `anchor` sitting `offset`
/// cells inside a grid cell.
fn anchored_grid(anchor: Point, bounds: BoundingBox, h: f64, offset: f64) -> Result<GridSpec, ScenarioError> {
    let below = ((anchor.x - bounds.min.x).max(anchor.y - bounds.min.y).max(0.0) / h).ceil() + 1.0;
    let origin = anchor - Point::new(below + offset, below + offset) * h;
    let nx = ((bounds.max.x - origin.x) / h).ceil() as usize + 1;
    let ny = ((bounds.max.y - origin.y) / h).ceil() as usize + 1;
    Ok(GridSpec::new(origin, h, nx, ny)?)
}

/// `(Σ a (w/a)^p)^{1/p}`, the `L^p` norm of the density a quadrature
/// represents.
fn quadrature_lp_norm(q: &Quadrature, p: f64) -> f64 {
    let dens = q.weights.iter().zip(&q.areas).map(|(w, a)| w / a);
    if p.is_infinite() {
        return dens.fold(0.0, f64::max);
    }
    dens.zip(&q.areas)
        .map(|(d, a)| a * d.powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

fn masked(field: &DensityField, keep: impl Fn(Point) -> bool) -> DensityField {
    let g = *field.grid();
    let mut out = field.clone();
    for ((i, j), v) in out.values_mut().indexed_iter_mut() {
        if !keep(g.cell_center(i, j)) {
            *v = 0.0;
        }
    }
    out
}

fn write_field(art: &mut Artifacts, stem: &str, field: &DensityField) -> Result<(), ScenarioError> {
    let csv = art.path(&format!("{stem}.csv"));
    let header = art.path(&format!("{stem}.json"));
    field.write(&csv, &header)?;
    Ok(())
}

fn write_rows<T: Serialize>(art: &mut Artifacts, name: &str, rows: &[T]) -> Result<(), ScenarioError> {
    let path = art.path(name);
    let mut w = csv::Writer::from_path(&path).map_err(crate::fields::FieldError::from)?;
    for row in rows {
        w.serialize(row).map_err(crate::fields::FieldError::from)?;
    }
    w.flush().map_err(|source| ScenarioError::Io { path, source })?;
    Ok(())
}

#[derive(Serialize)]
struct NormRow {
    p: Exponent,
    value: f64,
}

fn norm_rows(field: &DensityField, ps: &[f64]) -> Vec<NormRow> {
    ps.iter()
        .map(|&p| NormRow {
            p: Exponent(p),
            value: field.lp_norm(p),
        })
        .collect()
}

fn map_kind(cfg: &ScenarioConfig, ctx: &SymmetrizationContext) -> Result<MapKind, ScenarioError> {
    let round = ctx.radius();
    let choice = cfg.map.unwrap_or(if round.is_some() {
        MapChoice::Radial
    } else {
        MapChoice::Reflection
    });
    Ok(match choice {
        MapChoice::Reflection => MapKind::Reflection,
        MapChoice::Radial => MapKind::Radial,
        MapChoice::Projection => MapKind::Projection,
        MapChoice::Exterior => {
            let c = match (cfg.exterior_c, round) {
                (Some(c), _) => c,
                (None, Some(r)) => default_exterior_c(r, ctx.diameter()),
                (None, None) => return Err(invalid("exterior_c", "required for polygon domains")),
            };
            if !(c > 0.0) {
                return Err(invalid("exterior_c", "must be positive"));
            }
            MapKind::Exterior { c }
        }
    })
}

fn symmetrization_context(cfg: &ScenarioConfig, domain: Domain) -> Result<SymmetrizationContext, ScenarioError> {
    match cfg.diameter {
        None => Ok(SymmetrizationContext::new(domain)),
        Some(l) => SymmetrizationContext::with_diameter(domain, l)
            .ok_or_else(|| invalid("diameter", "is smaller than the domain diameter")),
    }
}

pub(super) fn project(ctx: &mut RunContext, art: &mut Artifacts) -> Result<Value, ScenarioError> {
    let cfg = ctx.cfg;
    let domain = load_domain(cfg)?;
    let h = cfg.h();
    let q = source_quadrature(cfg, &domain, h)?;
    let (measure, ties) = boundary_pushforward(&q, &domain, h);
    measure.write_csv(&art.path("boundary.csv"))?;
    ctx.mark("boundary");
    let plan = projection_plan(&q, &domain, ctx.exec);
    let bb = domain.bounding_box();
    let sigma = deposit_transport_density(&plan, &anchored_grid(bb.min, bb, h, 0.0)?, ctx.exec)?;
    write_field(art, "sigma", &sigma)?;
    ctx.mark("density");
    let source_mass = q.mass();
    let ps = exponents(cfg, &[1.0, 2.0, f64::INFINITY]);
    Ok(json!({
        "source_mass": source_mass,
        "boundary_mass": measure.mass(),
        "mass_error": (measure.mass() - source_mass).abs() / source_mass,
        "ties": ties,
        "boundary_max_density": measure.max_density(),
        "transport_cost": transport_cost(&plan),
        "sigma_mass": sigma.mass(),
        "sigma_norms": norm_rows(&sigma, &ps),
    }))
}

pub(super) fn symmetrize(ctx: &mut RunContext, art: &mut Artifacts) -> Result<Value, ScenarioError> {
    let cfg = ctx.cfg;
    let domain = load_domain(cfg)?;
    let sctx = symmetrization_context(cfg, domain.clone())?;
    let kind = map_kind(cfg, &sctx)?;
    let h = cfg.h();
    let q = source_quadrature(cfg, &domain, h)?;
    let plan = plan_from_symmetrization(&q, &sctx, kind, ctx.exec)?;
    sctx.check_enclosed(&plan.dest)?;
    let potential = match kind {
        MapKind::Radial => Potential::nearest_center_distance(&domain).expect("radial map needs a round domain"),
        _ => Potential::signed_distance(&domain),
    };
    let gap = duality_gap(&plan, &potential, &mut ctx.rng)?;
    ctx.mark("certificate");

    let radius = sctx.radius();
    let l = sctx.diameter();
    let jacobian = match kind {
        MapKind::Radial => {
            let points = domain.sample_interior(&mut ctx.rng, cfg.samples);
            Some(jacobian_check(&sctx, &points, cfg.tolerance.fd_step)?)
        }
        _ => None,
    };
    ctx.mark("jacobian");

    let mode = match kind {
        MapKind::Reflection | MapKind::Radial => Some(PushforwardMode::Density),
        MapKind::Exterior { .. } => Some(PushforwardMode::Mass),
        MapKind::Projection => None,
    };
    let pushforward = match mode {
        None => Value::Null,
        Some(mode) => {
            let bb = domain.bounding_box();
            let target = anchored_grid(bb.min, sctx.enclosure(), h, 0.0)?;
            let push = pushforward_by_map(
                &q,
                |x| kind.apply(&sctx, x).map(|r| r.0).unwrap_or(x),
                |x| match kind {
                    MapKind::Radial => radial_jacobian(&sctx, x).map(|j| j.det).unwrap_or(0.0),
                    _ => 1.0,
                },
                &target,
                mode,
                ctx.exec,
            )?;
            write_field(art, "f_minus", &push.field)?;
            let ps = exponents(cfg, &[1.0, 2.0, 4.0, f64::INFINITY]);
            let norms: Vec<Value> = ps
                .iter()
                .map(|&p| {
                    let f_minus = push.field.lp_norm(p);
                    let f_plus = quadrature_lp_norm(&q, p);
                    let constant = match (kind, radius) {
                        (MapKind::Radial, Some(r)) => lp_constant(r, l, 2, p),
                        (MapKind::Reflection, _) => 1.0,
                        _ => f64::NAN,
                    };
                    json!({
                        "p": Exponent(p),
                        "f_minus": f_minus,
                        "f_plus": f_plus,
                        "ratio": f_minus / f_plus,
                        "lp_constant": constant,
                    })
                })
                .collect();
            json!({
                "mode": mode,
                "mass": push.field.mass(),
                "max": push.field.max(),
                "max_pointwise": push.max_pointwise,
                "min_jacobian": push.min_jacobian,
                "norms": norms,
            })
        }
    };
    ctx.mark("pushforward");
    Ok(json!({
        "map": kind,
        "potential": potential.name,
        "quadrature_points": q.len(),
        "ties": plan.ties,
        "transport_cost": gap.cost,
        "dual_value": gap.dual,
        "duality_gap": gap.gap,
        "relative_gap": gap.relative(),
        "certified_lipschitz": gap.lipschitz,
        "diameter": l,
        "radius": radius,
        "jacobian_lower_bound": radius.map(|r| jacobian_lower_bound(r, l, 2)),
        "jacobian_check": jacobian,
        "pushforward": pushforward,
    }))
}

pub(super) fn density(ctx: &mut RunContext, art: &mut Artifacts) -> Result<Value, ScenarioError> {
    let cfg = ctx.cfg;
    let domain = load_domain(cfg)?;
    let sctx = symmetrization_context(cfg, domain.clone())?;
    let kind = map_kind(cfg, &sctx)?;
    let h = cfg.h();
    let q = source_quadrature(cfg, &domain, h)?;
    let full = plan_from_symmetrization(&q, &sctx, kind, ctx.exec)?;
    let projected = projection_plan(&q, &domain, ctx.exec);
    let bb = domain.bounding_box();
    let bounds = full.bounds().map_or(bb, |b| b.union(bb));
    let grid = anchored_grid(bb.min, bounds, h, cfg.grid_offset)?;
    let sigma_full = deposit_transport_density(&full, &grid, ctx.exec)?;
    let sigma_projected = deposit_transport_density(&projected, &grid, ctx.exec)?;
    ctx.mark("deposit");
    let discrepancy = restriction_discrepancy(&sigma_full, &sigma_projected, &domain)?;
    write_field(art, "sigma_full", &sigma_full)?;
    write_field(art, "sigma_projected", &sigma_projected)?;
    Ok(json!({
        "map": kind,
        "h": h,
        "grid_offset": cfg.grid_offset,
        "restriction_discrepancy": discrepancy,
        "cost_full": transport_cost(&full),
        "cost_projected": transport_cost(&projected),
        "ties": full.ties,
        "source_mass": q.mass(),
    }))
}

pub(super) fn beckmann(ctx: &mut RunContext, art: &mut Artifacts) -> Result<Value, ScenarioError> {
    let cfg = ctx.cfg;
    let domain = load_domain(cfg)?;
    let poly = require_polygon(&domain, "beckmann")?;
    let bb = domain.bounding_box();
    if (poly.area() - bb.width() * bb.height()).abs() > 1e-12 * poly.area() {
        return Err(invalid("domain", "`beckmann` needs an axis-aligned rectangle"));
    }
    let h = cfg.h();
    let cells = |len: f64| {
        let n = (len / h).round();
        ((n * h - len).abs() <= 1e-9).then_some(n as usize)
    };
    let (Some(nx), Some(ny)) = (cells(bb.width()), cells(bb.height())) else {
        return Err(invalid("grid", "the rectangle sides must be whole numbers of cells"));
    };
    // One ring of cells outside the rectangle carries the boundary condition.
    let grid = GridSpec::new(bb.min - Point::new(h, h), h, nx + 2, ny + 2)?;
    let src = source_polygon(cfg, poly)?;
    let f = DensityField::polygon_indicator(grid, &src, 1.0);
    let opts = SolveOptions {
        mode: BoundaryMode::Dirichlet,
        tol: cfg.tolerance.beckmann,
        max_iter: cfg.tolerance.max_iter,
        init: Init::Zero,
    };
    let sol = solve_min_flow(&f, &opts)?;
    ctx.mark("solve");
    let q = polygon_quadrature(&grid, &src, 1.0, cfg.subdivision)?;
    let plan = projection_plan(&q, &domain, ctx.exec);
    let sigma = deposit_transport_density(&plan, &grid, ctx.exec)?;
    let magnitude = flow_magnitude(&sol.flow);
    let (diff, base) = magnitude.l1_distance_where(&sigma, |c| domain.contains(c))?;
    let mk = mk_residuals(&magnitude, &sol.report.potential, &f, BoundaryMode::Dirichlet)?;
    ctx.mark("compare");
    sol.flow.write_csv(&art.path("flow_vx.csv"), &art.path("flow_vy.csv"))?;
    write_field(art, "flow_magnitude", &magnitude)?;
    write_field(art, "sigma", &sigma)?;
    let potential = DensityField::signed(grid, sol.report.potential.clone())?;
    write_field(art, "potential", &potential)?;
    let mass = f.mass();
    Ok(json!({
        "solver": sol.report,
        "mass": mass,
        "divergence_residual": sol.report.residual * mass,
        "transport_cost": transport_cost(&plan),
        "flow_sigma_relative_l1": diff / base,
        "mk_residuals": mk,
    }))
}

#[derive(Serialize)]
struct BallRow {
    r: f64,
    ball_mass: f64,
}

#[derive(Serialize)]
struct ThresholdCsvRow {
    p: f64,
    h: f64,
    norm: f64,
    norm_pow: f64,
    analytic_pow: f64,
    classification: cx::Classification,
}

pub(super) fn counterexample(ctx: &mut RunContext, art: &mut Artifacts) -> Result<Value, ScenarioError> {
    let cfg = ctx.cfg;
    let s = &cfg.counterexample;
    let mut balance_error = 0.0_f64;
    for k in 0..100 {
        let eps = k as f64 / 99.0;
        let (source, target) = cx::mass_balance(eps)?;
        balance_error = balance_error.max((source - target).abs());
    }
    let (c1, c2) = cx::sigma_constant_window(s.eps0, 200)?;
    let tangency: Vec<Value> = [1e-4, 1e-3, 1e-2]
        .into_iter()
        .map(|r| {
            let eps = cx::tangency_eps(r)?;
            Ok(json!({ "r": r, "eps_r": eps, "ratio": eps / r.sqrt() }))
        })
        .collect::<Result<_, ScenarioError>>()?;
    ctx.mark("analytics");

    let q = cx::source_quadrature(1.0 / s.quadrature_grid as f64, s.quadrature_subdivision)?;
    let plan = cx::plan(&q, ctx.exec)?;
    let uniformity = cx::image_uniformity(&plan, 100);
    ctx.mark("plan");

    let mut resolutions = s.refinements.clone();
    if !resolutions.contains(&cfg.grid) {
        resolutions.push(cfg.grid);
    }
    let h_all: Vec<f64> = resolutions.iter().map(|&n| 1.0 / n as f64).collect();
    let fields = cx::refinement_fields(&plan, &h_all, ctx.exec)?;
    ctx.mark("deposit");
    let refinement = &fields[..s.refinements.len()];
    let ps = exponents(cfg, &[2.0, 2.5, 3.5, 4.0]);
    let study = cx::lp_threshold_study(&ps, refinement);
    let ball_max: Vec<f64> = refinement.iter().map(|f| cx::ball_max(f, APEX, s.max_ball)).collect();
    let l4: Vec<f64> = refinement.iter().map(|f| f.lp_norm(4.0)).collect();
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);

    let finest = &fields[resolutions.iter().position(|&n| n == cfg.grid).expect("pushed above")];
    let [r0, r1] = s.radii;
    let radii: Vec<f64> = (0..s.radius_samples)
        .map(|k| r0 * (r1 / r0).powf(k as f64 / (s.radius_samples - 1) as f64))
        .collect();
    let scaling = cx::ball_scaling(finest, &radii)?;
    // Near the axis the rays run almost along grid rows; the comparison is
    // only meaningful when each cell sees many source rows, so it uses the
    // coarsest grid.
    let agreement = cx::analytic_agreement(&refinement[0], 0.1);
    ctx.mark("analysis");

    let classification = |p: f64| {
        study
            .summary
            .iter()
            .find(|r| r.p == p)
            .map(|r| r.classification)
            .expect("every p is summarised")
    };
    let rows: Vec<ThresholdCsvRow> = study
        .rows
        .iter()
        .map(|r| ThresholdCsvRow {
            p: r.p,
            h: r.h,
            norm: r.norm,
            norm_pow: r.norm_pow,
            analytic_pow: r.analytic_pow,
            classification: classification(r.p),
        })
        .collect();
    write_rows(art, "threshold.csv", &rows)?;
    let balls: Vec<BallRow> = scaling
        .samples
        .iter()
        .map(|&(r, m)| BallRow { r, ball_mass: m })
        .collect();
    write_rows(art, "ball_mass.csv", &balls)?;
    write_field(art, "sigma", finest)?;
    Ok(json!({
        "mass_balance_max_error": balance_error,
        "sigma_constants": { "eps0": s.eps0, "c1": c1, "c2": c2, "ratio": c2 / c1 },
        "tangency": tangency,
        "image_uniformity": uniformity,
        "quadrature_points": q.len(),
        "threshold": study,
        "ball_scaling": {
            "h": finest.grid().h,
            "slope": scaling.slope,
            "constant": scaling.constant,
            "samples": scaling.samples,
        },
        "analytic_agreement": { "h": refinement[0].grid().h, "min_sum": 0.1, "result": agreement },
        "ball_max": { "radius": s.max_ball, "values": ball_max, "strictly_increasing": increasing(&ball_max) },
        "l4_norms": { "values": l4, "strictly_increasing": increasing(&l4) },
    }))
}

#[derive(Serialize)]
struct EstimateRow {
    p: String,
    sigma: f64,
    sigma_round: f64,
    f_plus: f64,
    ratio: f64,
    ratio_round: f64,
    lp_constant: f64,
    diam_factor: f64,
    bound: f64,
    holds: bool,
}

pub(super) fn estimate(ctx: &mut RunContext, art: &mut Artifacts) -> Result<Value, ScenarioError> {
    let cfg = ctx.cfg;
    let domain = load_domain(cfg)?;
    let poly = require_polygon(&domain, "estimate")?;
    let approx = &cfg.approximation;
    let spacing = *approx.spacings.last().expect("validated");
    let round = round_approximate_with_resolution(poly, approx.radius, spacing, cfg.component_resolution)?;
    let round = Domain::round(round)?;
    let sctx = SymmetrizationContext::new(round.clone());
    let l = sctx.diameter();
    // Every ray lies in the enclosing box, so its diagonal bounds ray lengths.
    let diam_factor = sctx.enclosure().diagonal();
    ctx.mark("approximation");

    let h = cfg.h();
    let bb = domain.bounding_box();
    let q = polygon_quadrature(
        &GridSpec::covering(bb.min.x, bb.min.y, bb.max.x, bb.max.y, h)?,
        poly,
        1.0,
        cfg.subdivision,
    )?;
    let grid = anchored_grid(bb.min, round.bounding_box().union(bb), h, 0.0)?;
    let sigma = deposit_transport_density(&projection_plan(&q, &domain, ctx.exec), &grid, ctx.exec)?;
    let sigma_round = deposit_transport_density(&projection_plan(&q, &round, ctx.exec), &grid, ctx.exec)?;
    let sigma_round = masked(&sigma_round, |c| domain.contains(c));
    let f_plus = DensityField::polygon_indicator(grid, poly, 1.0);
    ctx.mark("deposit");

    let rows: Vec<EstimateRow> = exponents(cfg, &[1.0, 2.0, 4.0, f64::INFINITY])
        .into_iter()
        .map(|p| {
            let (s, sr, fp) = (sigma.lp_norm(p), sigma_round.lp_norm(p), f_plus.lp_norm(p));
            let constant = lp_constant(approx.radius, l, 2, p);
            let bound = constant * diam_factor;
            EstimateRow {
                p: Exponent(p).label(),
                sigma: s,
                sigma_round: sr,
                f_plus: fp,
                ratio: s / fp,
                ratio_round: sr / fp,
                lp_constant: constant,
                diam_factor,
                bound,
                holds: s / fp <= bound && sr / fp <= bound,
            }
        })
        .collect();
    write_rows(art, "estimate.csv", &rows)?;
    write_field(art, "sigma", &sigma)?;
    write_field(art, "sigma_round", &sigma_round)?;
    Ok(json!({
        "radius": approx.radius,
        "spacing": spacing,
        "round_diameter": l,
        "diam_factor": diam_factor,
        "jacobian_lower_bound": jacobian_lower_bound(approx.radius, l, 2),
        "rows": rows,
        "all_hold": rows.iter().all(|r| r.holds),
    }))
}

pub(super) fn approxstudy(ctx: &mut RunContext, art: &mut Artifacts) -> Result<Value, ScenarioError> {
    let cfg = ctx.cfg;
    let domain = load_domain(cfg)?;
    let poly = require_polygon(&domain, "approxstudy")?;
    let h = cfg.h();
    let bb = domain.bounding_box();
    let q = polygon_quadrature(
        &GridSpec::covering(bb.min.x, bb.min.y, bb.max.x, bb.max.y, h)?,
        poly,
        1.0,
        cfg.subdivision,
    )?;
    let phis = TestFunction::family(10);
    let approx = &cfg.approximation;
    let rows = stability_study(
        poly,
        approx.radius,
        &approx.spacings,
        &q,
        &phis,
        cfg.component_resolution,
        ctx.exec,
    )?;
    ctx.mark("study");
    write_rows(art, "stability.csv", &rows)?;
    let d: Vec<f64> = rows.iter().map(|r| r.discrepancy).collect();
    Ok(json!({
        "radius": approx.radius,
        "test_functions": phis,
        "rows": rows,
        "monotone": d.windows(2).all(|w| w[1] <= w[0]),
        "final_over_initial": d.last().copied().unwrap_or(0.0) / d[0],
    }))
}
