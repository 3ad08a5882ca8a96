//! Grid solver for the minimal-flow problem
//! `min ∫|v| subject to ∇·v = f`, with a primal–dual iteration whose dual
//! variable is the Kantorovich potential.
//!
//! Discretization: `vx[i, j]` is the flux density through the west face of
//! cell `(i, j)` (so `i` runs to `nx`), `vy[i, j]` through the south face.
//! Faces on the outer grid boundary carry no flux. The cost pairs each cell
//! with its east and north faces, `∫|v| ≈ h² Σ |(vx[i+1, j], vy[i, j+1])|`,
//! and the divergence is the negative transpose of the forward-difference
//! gradient.
//!
//! In Dirichlet mode the outer ring of cells is left unconstrained: mass may
//! leave the inner cells through it and the potential is pinned to zero
//! there. Pad the region of interest with one ghost ring to use it.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{DensityField, FieldError, GridSpec};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 200_000;

/// Iterations between convergence checks and history entries.
pub const CHECK_EVERY: usize = 100;

#[derive(Debug, Error)]
pub enum BeckmannError {
    #[error("net mass {net} is not zero (total variation {total})")]
    Infeasible { net: f64, total: f64 },
    #[error("no convergence after {} iterations (residual {})", .0.report.iterations, .0.report.residual)]
    MaxIterExceeded(Box<Solution>),
    #[error("grid needs at least 3×3 cells in dirichlet mode")]
    GridTooSmall,
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// Zero normal flux; data must have zero net mass.
    NoFlux,
    /// Divergence prescribed on inner cells only; the outer ring absorbs mass.
    Dirichlet,
}

impl BoundaryMode {
    fn constrained(self, grid: &GridSpec, i: usize, j: usize) -> bool {
        match self {
            BoundaryMode::NoFlux => true,
            BoundaryMode::Dirichlet => i > 0 && j > 0 && i + 1 < grid.nx && j + 1 < grid.ny,
        }
    }
}

/// Face-centered flux density on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredFlow {
    pub grid: GridSpec,
    /// `(nx + 1) × ny`
    pub vx: Array2<f64>,
    /// `nx × (ny + 1)`
    pub vy: Array2<f64>,
}

impl StaggeredFlow {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            vx: Array2::zeros((grid.nx + 1, grid.ny)),
            vy: Array2::zeros((grid.nx, grid.ny + 1)),
        }
    }

    /// Forward-difference gradient of a cell field; boundary faces are zero.
    pub fn gradient(grid: GridSpec, u: &Array2<f64>) -> Self {
        let mut g = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 1..grid.nx {
                g.vx[[i, j]] = (u[[i, j]] - u[[i - 1, j]]) / grid.h;
            }
        }
        for j in 1..grid.ny {
            for i in 0..grid.nx {
                g.vy[[i, j]] = (u[[i, j]] - u[[i, j - 1]]) / grid.h;
            }
        }
        g
    }

    /// `h² Σ` over face pairs of `|(vx_east, vy_north)|`.
    pub fn cost(&self) -> f64 {
        let g = &self.grid;
        let mut total = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                total += self.vx[[i + 1, j]].hypot(self.vy[[i, j + 1]]);
            }
        }
        total * g.cell_area()
    }

    /// Faces-weighted inner product `h² Σ a·b`.
    pub fn dot(&self, other: &StaggeredFlow) -> f64 {
        let s: f64 = self.vx.iter().zip(&other.vx).map(|(a, b)| a * b).sum::<f64>()
            + self.vy.iter().zip(&other.vy).map(|(a, b)| a * b).sum::<f64>();
        s * self.grid.cell_area()
    }

    /// Writes the two face tables `i,j,value`.
    pub fn write_csv(&self, vx_path: &std::path::Path, vy_path: &std::path::Path) -> Result<(), FieldError> {
        for (path, arr) in [(vx_path, &self.vx), (vy_path, &self.vy)] {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["i", "j", "value"])?;
            let (ni, nj) = arr.dim();
            for j in 0..nj {
                for i in 0..ni {
                    w.serialize((i, j, arr[[i, j]]))?;
                }
            }
            w.flush()?;
        }
        Ok(())
    }
}

/// Cell divergence `(vx[i+1] − vx[i] + vy[j+1] − vy[j]) / h`. In Dirichlet
/// mode unconstrained cells report zero.
pub fn divergence(v: &StaggeredFlow, mode: BoundaryMode) -> DensityField {
    let g = v.grid;
    let values = Array2::from_shape_fn((g.nx, g.ny), |(i, j)| {
        if !mode.constrained(&g, i, j) {
            return 0.0;
        }
        (v.vx[[i + 1, j]] - v.vx[[i, j]] + v.vy[[i, j + 1]] - v.vy[[i, j]]) / g.h
    });
    DensityField::signed(g, values).expect("shape matches grid")
}

/// Cell-centered `|v|` from the averages of opposite faces.
pub fn flow_magnitude(v: &StaggeredFlow) -> DensityField {
    let g = v.grid;
    let values = Array2::from_shape_fn((g.nx, g.ny), |(i, j)| {
        let ax = 0.5 * (v.vx[[i, j]] + v.vx[[i + 1, j]]);
        let ay = 0.5 * (v.vy[[i, j]] + v.vy[[i, j + 1]]);
        ax.hypot(ay)
    });
    DensityField::new(g, values).expect("magnitudes are nonnegative")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Zero,
    /// Uniform random flow and potential in `[-1, 1]`, scaled to the data.
    Random {
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub mode: BoundaryMode,
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
}

impl SolveOptions {
    pub fn new(mode: BoundaryMode) -> Self {
        Self {
            mode,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            init: Init::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `∫|v|` of the returned flow.
    pub objective: f64,
    /// `Σ h² |∇·v − f|` over constrained cells, relative to `Σ h² |f|`.
    pub residual: f64,
    /// `objective − Σ h² u f` for the feasible potential below.
    pub gap: f64,
    /// Largest cell gradient of the raw dual iterate; the reported potential
    /// is divided by this when it exceeds one.
    pub raw_gradient_max: f64,
    #[serde(skip)]
    pub potential: Array2<f64>,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub flow: StaggeredFlow,
    pub report: SolveReport,
}

/// Length of the cell gradient built from the east and north differences,
/// which is the quantity the dual constraint bounds.
fn cell_gradient_norm(g: &GridSpec, u: &Array2<f64>, i: usize, j: usize) -> f64 {
    let gx = if i + 1 < g.nx { u[[i + 1, j]] - u[[i, j]] } else { 0.0 };
    let gy = if j + 1 < g.ny { u[[i, j + 1]] - u[[i, j]] } else { 0.0 };
    gx.hypot(gy) / g.h
}

/// Solves `min ∫|v|` subject to `∇·v = f` (on constrained cells) with a
/// first-order primal–dual iteration.
pub fn solve_min_flow(f: &DensityField, opts: &SolveOptions) -> Result<Solution, BeckmannError> {
    let g = *f.grid();
    let (nx, ny) = (g.nx, g.ny);
    let h = g.h;
    let mode = opts.mode;
    if mode == BoundaryMode::Dirichlet && (nx < 3 || ny < 3) {
        return Err(BeckmannError::GridTooSmall);
    }
    let constrained = Array2::from_shape_fn((nx, ny), |(i, j)| mode.constrained(&g, i, j));
    // Cell masses m = h² f on constrained cells.
    let m = Array2::from_shape_fn(
        (nx, ny),
        |(i, j)| {
            if constrained[[i, j]] {
                f.get(i, j) * h * h
            } else {
                0.0
            }
        },
    );
    let total: f64 = m.iter().map(|x| x.abs()).sum();
    if mode == BoundaryMode::NoFlux {
        let net: f64 = m.sum();
        if net.abs() > 1e-9 * total {
            return Err(BeckmannError::Infeasible { net, total });
        }
    }
    if total == 0.0 {
        return Ok(Solution {
            flow: StaggeredFlow::zeros(g),
            report: SolveReport {
                iterations: 0,
                objective: 0.0,
                residual: 0.0,
                gap: 0.0,
                raw_gradient_max: 0.0,
                potential: Array2::zeros((nx, ny)),
                history: Vec::new(),
            },
        });
    }

    // Unknowns: face fluxes w = h v and the potential u. In these units the
    // problem is min h Σ|w_c| s.t. D w = m with D the unnormalized
    // divergence, ‖D‖² ≤ 8, and its dual is max ⟨u, m⟩ s.t. |G u| ≤ h.
    let scale = total / constrained.iter().filter(|c| **c).count() as f64 / h;
    let tau = 0.99 * scale / 8f64.sqrt();
    let sigma = 0.99 / (8f64.sqrt() * scale);

    let mut wx = Array2::<f64>::zeros((nx + 1, ny));
    let mut wy = Array2::<f64>::zeros((nx, ny + 1));
    let mut u = Array2::<f64>::zeros((nx, ny));
    if let Init::Random { seed } = opts.init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for j in 0..ny {
            for i in 1..nx {
                wx[[i, j]] = scale * h * rng.random_range(-1.0..1.0);
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                wy[[i, j]] = scale * h * rng.random_range(-1.0..1.0);
            }
        }
        for (c, x) in constrained.iter().zip(u.iter_mut()) {
            if *c {
                *x = rng.random_range(-1.0..1.0);
            }
        }
    }
    let mut wx_bar = wx.clone();
    let mut wy_bar = wy.clone();
    let mut history = Vec::new();
    let mut last_objective = f64::INFINITY;

    let objective_of = |wx: &Array2<f64>, wy: &Array2<f64>| {
        let mut s = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                s += wx[[i + 1, j]].hypot(wy[[i, j + 1]]);
            }
        }
        s * h
    };
    let residual_of = |wx: &Array2<f64>, wy: &Array2<f64>| {
        let mut s = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                if constrained[[i, j]] {
                    let d = wx[[i + 1, j]] - wx[[i, j]] + wy[[i, j + 1]] - wy[[i, j]];
                    s += (d - m[[i, j]]).abs();
                }
            }
        }
        s / total
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        // dual ascent: u += σ (m − D w̄)
        for j in 0..ny {
            for i in 0..nx {
                if constrained[[i, j]] {
                    let d = wx_bar[[i + 1, j]] - wx_bar[[i, j]] + wy_bar[[i, j + 1]] - wy_bar[[i, j]];
                    u[[i, j]] += sigma * (m[[i, j]] - d);
                }
            }
        }
        // primal step: w = shrink(w − τ G u, τ h), cell by cell on (east, north)
        let thresh = tau * h;
        for j in 0..ny {
            for i in 0..nx {
                let east = i + 1 < nx;
                let north = j + 1 < ny;
                let ax = if east {
                    wx[[i + 1, j]] - tau * (u[[i + 1, j]] - u[[i, j]])
                } else {
                    0.0
                };
                let ay = if north {
                    wy[[i, j + 1]] - tau * (u[[i, j + 1]] - u[[i, j]])
                } else {
                    0.0
                };
                let norm = ax.hypot(ay);
                let k = if norm > thresh { 1.0 - thresh / norm } else { 0.0 };
                if east {
                    let new = k * ax;
                    wx_bar[[i + 1, j]] = 2.0 * new - wx[[i + 1, j]];
                    wx[[i + 1, j]] = new;
                }
                if north {
                    let new = k * ay;
                    wy_bar[[i, j + 1]] = 2.0 * new - wy[[i, j + 1]];
                    wy[[i, j + 1]] = new;
                }
            }
        }
        iterations += 1;
        if iterations % CHECK_EVERY == 0 || iterations == opts.max_iter {
            let objective = objective_of(&wx, &wy);
            let residual = residual_of(&wx, &wy);
            history.push(HistoryEntry {
                iteration: iterations,
                objective,
                residual,
            });
            let change = (objective - last_objective).abs() / objective.max(f64::MIN_POSITIVE);
            last_objective = objective;
            if residual <= opts.tol && change <= opts.tol {
                converged = true;
                break;
            }
        }
    }

    let flow = StaggeredFlow {
        grid: g,
        vx: &wx / h,
        vy: &wy / h,
    };
    for (c, x) in constrained.iter().zip(u.iter_mut()) {
        if !*c {
            *x = 0.0;
        }
    }
    let raw_gradient_max = (0..nx)
        .flat_map(|i| (0..ny).map(move |j| (i, j)))
        .map(|(i, j)| cell_gradient_norm(&g, &u, i, j))
        .fold(0.0, f64::max);
    if raw_gradient_max > 1.0 {
        u.mapv_inplace(|x| x / raw_gradient_max);
    }
    let objective = flow.cost();
    let dual: f64 = u.iter().zip(&m).map(|(a, b)| a * b).sum();
    let report = SolveReport {
        iterations,
        objective,
        residual: residual_of(&wx, &wy),
        gap: objective - dual,
        raw_gradient_max,
        potential: u,
        history,
    };
    let solution = Solution { flow, report };
    if converged {
        Ok(solution)
    } else {
        Err(BeckmannError::MaxIterExceeded(Box::new(solution)))
    }
}

/// Optimality-system residuals of a pair `(σ, u)` against data `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MkResiduals {
    /// `Σ h² |−∇·(σ∇u) − f| / Σ h² |f|` over constrained cells.
    pub equation: f64,
    /// `max (|∇u| − 1)₊`.
    pub gradient_excess: f64,
    /// `Σ σ (1 − |∇u|)₊ / Σ σ`.
    pub deficit: f64,
}

/// Residuals of `−∇·(σ∇u) = f`, `|∇u| ≤ 1` and `|∇u| = 1` on `{σ > 0}`.
/// Face conductivities are averages of the two adjacent cells; `|∇u|` is
/// the cell gradient used by the solver's dual constraint.
pub fn mk_residuals(
    sigma: &DensityField,
    u: &Array2<f64>,
    f: &DensityField,
    mode: BoundaryMode,
) -> Result<MkResiduals, FieldError> {
    let g = *sigma.grid();
    g.ensure_same(f.grid())?;
    if u.dim() != (g.nx, g.ny) {
        return Err(FieldError::InvalidGrid(format!("potential is {:?}", u.dim())));
    }
    let grad = StaggeredFlow::gradient(g, u);
    let mut flux = StaggeredFlow::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            flux.vx[[i, j]] = -0.5 * (sigma.get(i - 1, j) + sigma.get(i, j)) * grad.vx[[i, j]];
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            flux.vy[[i, j]] = -0.5 * (sigma.get(i, j - 1) + sigma.get(i, j)) * grad.vy[[i, j]];
        }
    }
    let div = divergence(&flux, mode);
    let (mut res, mut base) = (0.0, 0.0);
    for j in 0..g.ny {
        for i in 0..g.nx {
            if mode.constrained(&g, i, j) {
                res += (div.get(i, j) - f.get(i, j)).abs();
                base += f.get(i, j).abs();
            }
        }
    }
    let (mut excess, mut deficit, mut mass) = (0.0_f64, 0.0, 0.0);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let norm = cell_gradient_norm(&g, u, i, j);
            excess = excess.max(norm - 1.0);
            let s = sigma.get(i, j);
            deficit += s * (1.0 - norm).max(0.0);
            mass += s;
        }
    }
    Ok(MkResiduals {
        equation: if base > 0.0 { res / base } else { res * g.cell_area() },
        gradient_excess: excess.max(0.0),
        deficit: if mass > 0.0 { deficit / mass } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::Point;
    use approx::assert_relative_eq;

    #[test]
    fn divergence_is_negative_adjoint_of_gradient() {
        let g = GridSpec::new(Point::new(0.3, -0.2), 0.07, 9, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut v = StaggeredFlow::zeros(g);
        for j in 0..g.ny {
            for i in 1..g.nx {
                v.vx[[i, j]] = rng.random_range(-1.0..1.0);
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                v.vy[[i, j]] = rng.random_range(-1.0..1.0);
            }
        }
        let phi = Array2::from_shape_fn((g.nx, g.ny), |_| rng.random_range(-1.0..1.0));
        let div = divergence(&v, BoundaryMode::NoFlux);
        let lhs: f64 = div.values().iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() * g.cell_area();
        let rhs = v.dot(&StaggeredFlow::gradient(g, &phi));
        assert!((lhs + rhs).abs() <= 1e-12, "{lhs} {rhs}");
    }

    #[test]
    fn constant_flow_is_divergence_free_inside() {
        let g = GridSpec::unit(8);
        let mut v = StaggeredFlow::zeros(g);
        v.vx.fill(1.0);
        let div = divergence(&v, BoundaryMode::NoFlux);
        for j in 0..8 {
            for i in 1..7 {
                assert_eq!(div.get(i, j), 0.0);
            }
        }
        let mag = flow_magnitude(&v);
        assert!(mag.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn zero_data_gives_zero_flow() {
        let f = DensityField::zeros(GridSpec::unit(8));
        let sol = solve_min_flow(&f, &SolveOptions::new(BoundaryMode::NoFlux)).unwrap();
        assert_eq!(sol.report.objective, 0.0);
        assert!(sol.flow.vx.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unbalanced_noflux_is_infeasible() {
        let f = DensityField::from_fn(GridSpec::unit(8), |_| 1.0);
        assert!(matches!(
            solve_min_flow(&f, &SolveOptions::new(BoundaryMode::NoFlux)),
            Err(BeckmannError::Infeasible { .. })
        ));
    }

    #[test]
    fn one_dimensional_rearrangement() {
        // f = +1 on x < 1/2, −1 on x > 1/2: W₁ = ∫|F⁺ − F⁻| = 1/4.
        let n = 32;
        let f = DensityField::from_fn(GridSpec::unit(n), |p| if p.x < 0.5 { 1.0 } else { -1.0 });
        let sol = solve_min_flow(&f, &SolveOptions::new(BoundaryMode::NoFlux)).unwrap();
        assert_relative_eq!(sol.report.objective, 0.25, max_relative = 0.01);
        assert!(sol.report.residual <= 1e-6);
        assert!(sol.report.gap >= -1e-9);
    }
}
