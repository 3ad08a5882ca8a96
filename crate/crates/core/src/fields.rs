//! Cell-centered grid densities, boundary measures, quadratures and
//! pushforwards.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::geometry::{clip_polygon, polygon_area, polygon_centroid, ConvexPolygon, Domain};
use crate::point::{BoundingBox, Point};

/// Default subcells per cell side for [`quadrature_of`].
pub const DEFAULT_SUBDIVISION: usize = 3;

/// Jacobians at or below this are treated as singular.
pub const SINGULAR_JACOBIAN: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("negative density {value} at cell ({i}, {j})")]
    NegativeDensity { i: usize, j: usize, value: f64 },
    #[error("grids differ: {0:?} vs {1:?}")]
    GridMismatch(GridSpec, GridSpec),
    #[error("jacobian {jac} at quadrature point {index} is singular")]
    SingularJacobian { index: usize, jac: f64 },
    #[error("image ({x}, {y}) of quadrature point {index} is outside the grid")]
    OutOfGrid { index: usize, x: f64, y: f64 },
    #[error("subdivision must be at least 1")]
    InvalidSubdivision,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed field file: {0}")]
    Malformed(String),
}

/// Uniform grid of `nx × ny` square cells of side `h`; cell `(i, j)` covers
/// `origin + [i h, (i+1) h] × [j h, (j+1) h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Point,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(origin: Point, h: f64, nx: usize, ny: usize) -> Result<Self, FieldError> {
        if !(h > 0.0 && h.is_finite()) || !origin.is_finite() {
            return Err(FieldError::InvalidGrid(format!("cell size {h} at {origin:?}")));
        }
        if nx == 0 || ny == 0 {
            return Err(FieldError::InvalidGrid(format!("{nx}×{ny} cells")));
        }
        Ok(Self { origin, h, nx, ny })
    }

    /// Grid with cell size `h` covering `[x0, x1] × [y0, y1]` from its lower
    /// corner (the upper edge is rounded up to a whole cell).
    pub fn covering(x0: f64, y0: f64, x1: f64, y1: f64, h: f64) -> Result<Self, FieldError> {
        let nx = ((x1 - x0) / h - 1e-9).ceil().max(1.0) as usize;
        let ny = ((y1 - y0) / h - 1e-9).ceil().max(1.0) as usize;
        Self::new(Point::new(x0, y0), h, nx, ny)
    }

    /// `[0,1]²` with `n × n` cells.
    pub fn unit(n: usize) -> Self {
        Self::new(Point::new(0.0, 0.0), 1.0 / n as f64, n, n).expect("n >= 1")
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        self.origin + Point::new((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    pub fn cell_corner(&self, i: usize, j: usize) -> Point {
        self.origin + Point::new(i as f64 * self.h, j as f64 * self.h)
    }

    /// Corners of cell `(i, j)` in counterclockwise order.
    pub fn cell_polygon(&self, i: usize, j: usize) -> [Point; 4] {
        let a = self.cell_corner(i, j);
        let h = self.h;
        [a, a + Point::new(h, 0.0), a + Point::new(h, h), a + Point::new(0.0, h)]
    }

    /// Cell containing `p`; points on the upper boundary belong to the last
    /// row/column.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.h;
        let fy = (p.y - self.origin.y) / self.h;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= self.nx as f64 && fy <= self.ny as f64) {
            return None;
        }
        Some(((fx as usize).min(self.nx - 1), (fy as usize).min(self.ny - 1)))
    }

    pub fn bounds(&self) -> BoundingBox {
        BoundingBox::new(
            self.origin,
            self.origin + Point::new(self.nx as f64 * self.h, self.ny as f64 * self.h),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        self.bounds().contains(p)
    }

    /// Exact equality of the two grids.
    pub fn ensure_same(&self, other: &GridSpec) -> Result<(), FieldError> {
        if self == other {
            Ok(())
        } else {
            Err(FieldError::GridMismatch(*self, *other))
        }
    }
}

/// Cell-centered density (mass per unit area).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: GridSpec,
    values: Array2<f64>,
}

impl DensityField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: Array2::zeros((grid.nx, grid.ny)),
        }
    }

    /// Nonnegative density from values indexed `[i, j]`.
    pub fn new(grid: GridSpec, values: Array2<f64>) -> Result<Self, FieldError> {
        let field = Self::signed(grid, values)?;
        if let Some(((i, j), &value)) = field.values.indexed_iter().find(|(_, v)| !(**v >= 0.0)) {
            return Err(FieldError::NegativeDensity { i, j, value });
        }
        Ok(field)
    }

    /// Field that may take negative values (signed data such as `f⁺ − f⁻`).
    pub fn signed(grid: GridSpec, values: Array2<f64>) -> Result<Self, FieldError> {
        if values.dim() != (grid.nx, grid.ny) {
            return Err(FieldError::InvalidGrid(format!(
                "values are {:?}, grid is {}×{}",
                values.dim(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: GridSpec, f: impl Fn(Point) -> f64) -> Self {
        let values = Array2::from_shape_fn((grid.nx, grid.ny), |(i, j)| f(grid.cell_center(i, j)));
        Self { grid, values }
    }

    /// Covered area fraction of `polygon` in each cell, times `density`.
    pub fn polygon_indicator(grid: GridSpec, polygon: &ConvexPolygon, density: f64) -> Self {
        let values = Array2::from_shape_fn((grid.nx, grid.ny), |(i, j)| {
            let cell = grid.cell_polygon(i, j);
            density * polygon_area(&clip_polygon(&cell, polygon.vertices())) / grid.cell_area()
        });
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn mass(&self) -> f64 {
        self.grid.cell_area() * self.values.sum()
    }

    /// `(h² Σ |v|^p)^{1/p}`, or `max |v|` when `p` is infinite.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm(self, p)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn positive_part(&self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.mapv(|v| v.max(0.0)),
        }
    }

    /// Sum of `|a − b|·h²` over cells where `mask(center)` holds.
    pub fn l1_distance_where(
        &self,
        other: &DensityField,
        mask: impl Fn(Point) -> bool,
    ) -> Result<(f64, f64), FieldError> {
        self.grid.ensure_same(&other.grid)?;
        let (mut diff, mut base) = (0.0, 0.0);
        for ((i, j), &a) in self.values.indexed_iter() {
            if mask(self.grid.cell_center(i, j)) {
                diff += (a - other.values[[i, j]]).abs();
                base += other.values[[i, j]].abs();
            }
        }
        let area = self.grid.cell_area();
        Ok((diff * area, base * area))
    }

    /// Writes `x_index,y_index,value` rows to `csv_path` and the grid header
    /// to `header_path` as JSON.
    pub fn write(&self, csv_path: &Path, header_path: &Path) -> Result<(), FieldError> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(["x_index", "y_index", "value"])?;
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                w.serialize((i, j, self.values[[i, j]]))?;
            }
        }
        w.flush()?;
        let header = GridHeader::from(self.grid);
        let mut f = BufWriter::new(File::create(header_path)?);
        serde_json::to_writer_pretty(&mut f, &header)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn read(csv_path: &Path, header_path: &Path) -> Result<Self, FieldError> {
        let header: GridHeader = serde_json::from_reader(File::open(header_path)?)?;
        let grid = GridSpec::new(header.origin.into(), header.h, header.nx, header.ny)?;
        let mut values = Array2::from_elem((grid.nx, grid.ny), f64::NAN);
        let mut r = csv::Reader::from_path(csv_path)?;
        for row in r.deserialize() {
            let (i, j, v): (usize, usize, f64) = row?;
            if i >= grid.nx || j >= grid.ny {
                return Err(FieldError::Malformed(format!("cell ({i}, {j}) outside grid")));
            }
            values[[i, j]] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(FieldError::Malformed("missing cells".into()));
        }
        Self::signed(grid, values)
    }
}

/// JSON header stored next to a density CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    pub origin: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl From<GridSpec> for GridHeader {
    fn from(g: GridSpec) -> Self {
        Self {
            origin: g.origin.into(),
            h: g.h,
            nx: g.nx,
            ny: g.ny,
        }
    }
}

/// `(h² Σ |v|^p)^{1/p}` for finite `p`, `max |v|` for `p = ∞`.
pub fn lp_norm(field: &DensityField, p: f64) -> f64 {
    assert!(p >= 1.0, "p must be at least 1, got {p}");
    if p.is_infinite() {
        return field.values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let s: f64 = field.values.iter().map(|v| v.abs().powf(p)).sum();
    (field.grid.cell_area() * s).powf(1.0 / p)
}

/// Weighted points discretizing a density. `areas[k]` is the source area
/// the point stands for, so `weights[k] / areas[k]` is the density there.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Quadrature {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub areas: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn push(&mut self, point: Point, weight: f64, area: f64) {
        self.points.push(point);
        self.weights.push(weight);
        self.areas.push(area);
    }

    pub fn translated(&self, by: Point) -> Self {
        Self {
            points: self.points.iter().map(|&p| p + by).collect(),
            weights: self.weights.clone(),
            areas: self.areas.clone(),
        }
    }
}

/// Midpoint rule on `subdivision × subdivision` subcells of every cell with
/// positive density. Zero-density cells contribute no points.
pub fn quadrature_of(field: &DensityField, subdivision: usize) -> Result<Quadrature, FieldError> {
    if subdivision == 0 {
        return Err(FieldError::InvalidSubdivision);
    }
    let g = field.grid;
    let sub_h = g.h / subdivision as f64;
    let sub_area = sub_h * sub_h;
    let mut q = Quadrature::default();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let v = field.values[[i, j]];
            if v == 0.0 {
                continue;
            }
            let corner = g.cell_corner(i, j);
            for b in 0..subdivision {
                for a in 0..subdivision {
                    let p = corner + Point::new((a as f64 + 0.5) * sub_h, (b as f64 + 0.5) * sub_h);
                    q.push(p, v * sub_area, sub_area);
                }
            }
        }
    }
    Ok(q)
}

/// Quadrature of `density · 1_polygon` on the subcells of `grid`: every
/// subcell is clipped against the polygon and contributes its clipped
/// centroid with weight `density · clipped area`, so the total mass is
/// `density · area(polygon ∩ grid)` up to rounding.
pub fn polygon_quadrature(
    grid: &GridSpec,
    polygon: &ConvexPolygon,
    density: f64,
    subdivision: usize,
) -> Result<Quadrature, FieldError> {
    if subdivision == 0 {
        return Err(FieldError::InvalidSubdivision);
    }
    let sub_h = grid.h / subdivision as f64;
    let sub = GridSpec::new(grid.origin, sub_h, grid.nx * subdivision, grid.ny * subdivision)?;
    let bb = polygon.bounding_box();
    let lo = sub.cell_of(bb.min).unwrap_or((0, 0));
    let hi = sub.cell_of(bb.max).unwrap_or((sub.nx - 1, sub.ny - 1));
    let full = sub_h * sub_h;
    let mut q = Quadrature::default();
    for j in lo.1..=hi.1 {
        for i in lo.0..=hi.0 {
            let cell = sub.cell_polygon(i, j);
            let clipped = clip_polygon(&cell, polygon.vertices());
            let area = polygon_area(&clipped);
            if area <= 1e-15 * full {
                continue;
            }
            let point = if area >= full * (1.0 - 1e-12) {
                sub.cell_center(i, j)
            } else {
                polygon_centroid(&clipped)
            };
            q.push(point, density * area, area);
        }
    }
    Ok(q)
}

/// Midpoint rule for `density · 1_region` on the subcells of `grid`,
/// keeping subcells whose centers satisfy `inside`. Used for regions
/// without an exact clipper, such as round polygons.
pub fn region_quadrature(
    grid: &GridSpec,
    inside: impl Fn(Point) -> bool,
    density: f64,
    subdivision: usize,
) -> Result<Quadrature, FieldError> {
    if subdivision == 0 {
        return Err(FieldError::InvalidSubdivision);
    }
    let sub_h = grid.h / subdivision as f64;
    let sub = GridSpec::new(grid.origin, sub_h, grid.nx * subdivision, grid.ny * subdivision)?;
    let area = sub_h * sub_h;
    let mut q = Quadrature::default();
    for j in 0..sub.ny {
        for i in 0..sub.nx {
            let c = sub.cell_center(i, j);
            if inside(c) {
                q.push(c, density * area, area);
            }
        }
    }
    Ok(q)
}

/// How [`pushforward_by_map`] turns image points into a density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PushforwardMode {
    /// Change of variables: each image cell receives `Σ w / Σ a·J`, the
    /// deposited mass over the image area of the sources landing there.
    Density,
    /// Deposit weights and divide by the cell area.
    Mass,
}

#[derive(Debug, Clone)]
pub struct Pushforward {
    pub field: DensityField,
    /// Largest pointwise `f⁺(x)/J(x)` (density mode), the exact image
    /// density at the quadrature points.
    pub max_pointwise: f64,
    /// Smallest Jacobian met (density mode).
    pub min_jacobian: f64,
}

pub fn pushforward_by_map(
    q: &Quadrature,
    map: impl Fn(Point) -> Point + Sync,
    jac: impl Fn(Point) -> f64 + Sync,
    target: &GridSpec,
    mode: PushforwardMode,
    exec: Exec,
) -> Result<Pushforward, FieldError> {
    let g = *target;
    let images: Vec<(Point, f64)> = exec.map(q.len(), |k| {
        let x = q.points[k];
        let j = match mode {
            PushforwardMode::Density => jac(x),
            PushforwardMode::Mass => 1.0,
        };
        (map(x), j)
    });
    let mut max_pointwise = 0.0_f64;
    let mut min_jacobian = f64::INFINITY;
    for (k, &(y, j)) in images.iter().enumerate() {
        if mode == PushforwardMode::Density {
            if !(j > SINGULAR_JACOBIAN) {
                return Err(FieldError::SingularJacobian { index: k, jac: j });
            }
            min_jacobian = min_jacobian.min(j);
            max_pointwise = max_pointwise.max(q.weights[k] / q.areas[k] / j);
        }
        if g.cell_of(y).is_none() {
            return Err(FieldError::OutOfGrid {
                index: k,
                x: y.x,
                y: y.y,
            });
        }
    }
    let (mass, image_area) = exec.accumulate(
        images.len(),
        || (Array2::<f64>::zeros((g.nx, g.ny)), Array2::<f64>::zeros((g.nx, g.ny))),
        |(m, a), k| {
            let (y, j) = images[k];
            let cell = g.cell_of(y).expect("checked");
            m[cell] += q.weights[k];
            a[cell] += q.areas[k] * j;
        },
        |(m, a), (m2, a2)| {
            *m += &m2;
            *a += &a2;
        },
    );
    let values = match mode {
        PushforwardMode::Mass => mass / g.cell_area(),
        PushforwardMode::Density => {
            let mut v = mass;
            v.zip_mut_with(&image_area, |m, &a| *m = if a > 0.0 { *m / a } else { 0.0 });
            v
        }
    };
    Ok(Pushforward {
        field: DensityField { grid: g, values },
        max_pointwise,
        min_jacobian: if min_jacobian.is_finite() { min_jacobian } else { 1.0 },
    })
}

/// Piecewise-constant linear density on arclength bins of each face.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMeasure {
    pub faces: Vec<FaceBins>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceBins {
    pub length: f64,
    /// Bin edges `0 = s_0 < … < s_n = length`.
    pub edges: Vec<f64>,
    /// Mass in each bin.
    pub masses: Vec<f64>,
}

impl FaceBins {
    fn new(length: f64, bin_width: f64) -> Self {
        let n = (length / bin_width).ceil().max(1.0) as usize;
        let edges = (0..=n).map(|k| length * k as f64 / n as f64).collect();
        Self {
            length,
            edges,
            masses: vec![0.0; n],
        }
    }

    pub fn densities(&self) -> Vec<f64> {
        self.masses
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, e)| m / (e[1] - e[0]))
            .collect()
    }

    fn bin_of(&self, s: f64) -> usize {
        let n = self.masses.len();
        ((s / self.length * n as f64).floor().max(0.0) as usize).min(n - 1)
    }
}

impl BoundaryMeasure {
    pub fn mass(&self) -> f64 {
        self.faces.iter().flat_map(|f| f.masses.iter()).sum()
    }

    pub fn max_density(&self) -> f64 {
        self.faces.iter().flat_map(|f| f.densities()).fold(0.0, f64::max)
    }

    /// Writes `face_id,s_start,s_end,density` rows.
    pub fn write_csv(&self, path: &Path) -> Result<(), FieldError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["face_id", "s_start", "s_end", "density"])?;
        for (i, face) in self.faces.iter().enumerate() {
            for (k, d) in face.densities().into_iter().enumerate() {
                w.serialize((i, face.edges[k], face.edges[k + 1], d))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `(P_∂Ω)_# q` binned by arclength. Ties between faces go to the lowest
/// index; their number is returned alongside.
pub fn boundary_pushforward(q: &Quadrature, domain: &Domain, bin_width: f64) -> (BoundaryMeasure, usize) {
    let mut faces: Vec<FaceBins> = (0..domain.face_count())
        .map(|i| FaceBins::new(domain.face_length(i), bin_width))
        .collect();
    let mut ties = 0;
    for (x, w) in q.points.iter().zip(&q.weights) {
        let proj = domain.projection(*x);
        ties += usize::from(proj.tied);
        let face = &mut faces[proj.face];
        let bin = face.bin_of(domain.face_coordinate(proj.face, proj.point));
        face.masses[bin] += w;
    }
    (BoundaryMeasure { faces }, ties)
}
