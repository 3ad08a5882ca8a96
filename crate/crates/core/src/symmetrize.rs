//! Symmetrization maps sending an interior density outside the domain so
//! that every transport ray crosses the boundary at the projection point:
//! face reflections for convex polygons, a radial contraction toward the
//! nearest disk center for round polygons, and the direct exterior map
//! `x ↦ P(x) + c (P(x) − x)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Domain, Shape};
use crate::point::{BoundingBox, Point};

/// Distances to a disk center below this make the radial direction undefined.
pub const DEGENERATE_CENTER: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum SymmetrizeError {
    #[error("point ({x}, {y}) coincides with disk center {center}")]
    DegenerateCenter { x: f64, y: f64, center: usize },
    #[error("{map} needs a {needs} domain")]
    WrongDomain { map: &'static str, needs: &'static str },
    #[error("image ({x}, {y}) leaves the enclosing box")]
    OutsideEnclosure { x: f64, y: f64 },
}

/// A domain together with the constants its maps depend on.
#[derive(Debug, Clone)]
pub struct SymmetrizationContext {
    domain: Domain,
    diameter: f64,
    radius: Option<f64>,
    enclosure: BoundingBox,
}

impl SymmetrizationContext {
    /// `L` is the diameter of `domain` itself (for a round approximation,
    /// the approximating domain). The enclosing box is the bounding box
    /// inflated by `r + L/2` (`L/2` for polygons).
    pub fn new(domain: Domain) -> Self {
        let diameter = domain.diameter();
        let radius = domain.as_round().map(|r| r.radius());
        let enclosure = domain.bounding_box().inflate(radius.unwrap_or(0.0) + 0.5 * diameter);
        Self {
            domain,
            diameter,
            radius,
            enclosure,
        }
    }

    /// Uses `l` in place of the domain diameter; any `l ≥ diam(Ω)` keeps
    /// the radial map's Jacobian bound valid. Returns `None` for smaller `l`.
    pub fn with_diameter(domain: Domain, l: f64) -> Option<Self> {
        let mut ctx = Self::new(domain);
        if !(l >= ctx.diameter) || !l.is_finite() {
            return None;
        }
        ctx.diameter = l;
        ctx.enclosure = ctx.domain.bounding_box().inflate(ctx.radius.unwrap_or(0.0) + 0.5 * l);
        Some(ctx)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    pub fn enclosure(&self) -> BoundingBox {
        self.enclosure
    }

    pub fn check_enclosed(&self, images: &[Point]) -> Result<(), SymmetrizeError> {
        match images.iter().find(|p| !self.enclosure.contains(**p)) {
            Some(p) => Err(SymmetrizeError::OutsideEnclosure { x: p.x, y: p.y }),
            None => Ok(()),
        }
    }
}

/// Mirror of `x` across the face whose region contains it. The flag reports
/// a face tie resolved to the lowest index.
pub fn reflect_map(ctx: &SymmetrizationContext, x: Point) -> Result<(Point, bool), SymmetrizeError> {
    let Shape::Polygon(poly) = ctx.domain.shape() else {
        return Err(SymmetrizeError::WrongDomain {
            map: "reflection",
            needs: "polygon",
        });
    };
    let (face, tied) = ctx.domain.region_index(x);
    Ok((poly.reflect(face, x), tied))
}

/// `b + (r − (ρ − r) r / (2L)) e` with `b` the nearest center, `ρ = |x − b|`
/// and `e = (x − b)/ρ`.
pub fn radial_map(ctx: &SymmetrizationContext, x: Point) -> Result<(Point, bool), SymmetrizeError> {
    let (b, rho, r, tied) = nearest_center(ctx, x, "radial map")?;
    let l = ctx.diameter;
    let g = r - (rho - r) / l * (r / 2.0);
    Ok((b + (x - b) * (g / rho), tied))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialJacobian {
    /// Eigenvalue along `x − b`, equal to `−r/(2L)`.
    pub normal: f64,
    /// Eigenvalue in the tangent direction, `(r/2L)((r + 2L)/ρ − 1)`.
    pub tangent: f64,
    /// `|normal · tangent|`.
    pub det: f64,
}

pub fn radial_jacobian(ctx: &SymmetrizationContext, x: Point) -> Result<RadialJacobian, SymmetrizeError> {
    let (_, rho, r, _) = nearest_center(ctx, x, "radial map")?;
    Ok(radial_jacobian_at(r, ctx.diameter, rho))
}

/// Radial-map Jacobian at distance `rho` from the center.
pub fn radial_jacobian_at(r: f64, l: f64, rho: f64) -> RadialJacobian {
    let k = r / (2.0 * l);
    let normal = -k;
    let tangent = k * ((r + 2.0 * l) / rho - 1.0);
    RadialJacobian {
        normal,
        tangent,
        det: (normal * tangent).abs(),
    }
}

fn nearest_center(
    ctx: &SymmetrizationContext,
    x: Point,
    map: &'static str,
) -> Result<(Point, f64, f64, bool), SymmetrizeError> {
    let Shape::Round(round) = ctx.domain.shape() else {
        return Err(SymmetrizeError::WrongDomain {
            map,
            needs: "round polygon",
        });
    };
    let near = round.nearest_center(x);
    if near.distance <= DEGENERATE_CENTER {
        return Err(SymmetrizeError::DegenerateCenter {
            x: x.x,
            y: x.y,
            center: near.index,
        });
    }
    Ok((
        round.centers()[near.index],
        near.distance,
        round.radius(),
        near.ties > 1,
    ))
}

/// `r^d / (2^d (r + L)^{d−1} L)`, a lower bound of the radial-map Jacobian
/// on points within `r + L` of their center.
pub fn jacobian_lower_bound(r: f64, l: f64, d: u32) -> f64 {
    let d = d as i32;
    r.powi(d) / (2f64.powi(d) * (r + l).powi(d - 1) * l)
}

/// `jacobian_lower_bound^{1/p − 1}`; the exponent is `−1` for `p = ∞`.
pub fn lp_constant(r: f64, l: f64, d: u32, p: f64) -> f64 {
    let exponent = if p.is_infinite() { -1.0 } else { 1.0 / p - 1.0 };
    jacobian_lower_bound(r, l, d).powf(exponent)
}

/// Default `c = r/(4L)` for [`direct_exterior_map`].
pub fn default_exterior_c(r: f64, l: f64) -> f64 {
    r / (4.0 * l)
}

/// `P(x) + c (P(x) − x)` with `P` the boundary projection (lowest-index
/// tie-break).
pub fn direct_exterior_map(domain: &Domain, c: f64, x: Point) -> (Point, bool) {
    let proj = domain.projection(x);
    (proj.point + (proj.point - x) * c, proj.tied)
}

/// Which symmetrization to apply to quadrature points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum MapKind {
    Reflection,
    Radial,
    Exterior { c: f64 },
    Projection,
}

impl MapKind {
    pub fn apply(&self, ctx: &SymmetrizationContext, x: Point) -> Result<(Point, bool), SymmetrizeError> {
        match *self {
            MapKind::Reflection => reflect_map(ctx, x),
            MapKind::Radial => radial_map(ctx, x),
            MapKind::Exterior { c } => Ok(direct_exterior_map(&ctx.domain, c, x)),
            MapKind::Projection => {
                let p = ctx.domain.projection(x);
                Ok((p.point, p.tied))
            }
        }
    }
}

/// Analytic versus central-difference radial-map Jacobians over a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacobianCheck {
    pub samples: usize,
    pub min_det: f64,
    /// Largest `|det_fd − det| / det` over points whose stencil stays in
    /// one center's region.
    pub max_fd_relative_error: f64,
    pub fd_compared: usize,
    /// Points skipped because the stencil crosses a seam between regions.
    pub fd_skipped: usize,
}

pub fn jacobian_check(
    ctx: &SymmetrizationContext,
    points: &[Point],
    step: f64,
) -> Result<JacobianCheck, SymmetrizeError> {
    let Shape::Round(round) = ctx.domain.shape() else {
        return Err(SymmetrizeError::WrongDomain {
            map: "radial map",
            needs: "round polygon",
        });
    };
    let mut check = JacobianCheck {
        samples: points.len(),
        min_det: f64::INFINITY,
        max_fd_relative_error: 0.0,
        fd_compared: 0,
        fd_skipped: 0,
    };
    for &x in points {
        let det = radial_jacobian(ctx, x)?.det;
        check.min_det = check.min_det.min(det);
        let own = round.nearest_center(x).index;
        let stencil = [
            Point::new(step, 0.0),
            Point::new(-step, 0.0),
            Point::new(0.0, step),
            Point::new(0.0, -step),
        ];
        let single_region = stencil.iter().all(|&d| {
            let near = round.nearest_center(x + d);
            near.index == own && near.ties == 1
        });
        if !single_region {
            check.fd_skipped += 1;
            continue;
        }
        let fd = finite_difference_jacobian(|y| radial_map(ctx, y).map(|r| r.0).unwrap_or(y), x, step);
        let err = (det2(fd).abs() - det).abs() / det;
        check.max_fd_relative_error = check.max_fd_relative_error.max(err);
        check.fd_compared += 1;
    }
    Ok(check)
}

/// Central-difference Jacobian `[[∂f₁/∂x, ∂f₁/∂y], [∂f₂/∂x, ∂f₂/∂y]]`.
pub fn finite_difference_jacobian(f: impl Fn(Point) -> Point, x: Point, step: f64) -> [[f64; 2]; 2] {
    let dx = Point::new(step, 0.0);
    let dy = Point::new(0.0, step);
    let cx = (f(x + dx) - f(x - dx)) / (2.0 * step);
    let cy = (f(x + dy) - f(x - dy)) / (2.0 * step);
    [[cx.x, cy.x], [cx.y, cy.y]]
}

pub fn det2(m: [[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: [[f64; 2]; 2]) -> [f64; 2] {
    let a = m[0][0];
    let d = m[1][1];
    let b = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    [mean - rad, mean + rad]
}
