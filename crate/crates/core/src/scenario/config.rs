use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::beckmann::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::counterexample::DEFAULT_EPS0;
use crate::fields::DEFAULT_SUBDIVISION;
use crate::geometry::DEFAULT_COMPONENT_RESOLUTION;

/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "TDLAB_WORKERS";

/// Smallest accepted `grid` value.
pub const MIN_GRID: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Project,
    Symmetrize,
    Density,
    Beckmann,
    Counterexample,
    Estimate,
    Approxstudy,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 7] = [
        Self::Project,
        Self::Symmetrize,
        Self::Density,
        Self::Beckmann,
        Self::Counterexample,
        Self::Estimate,
        Self::Approxstudy,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Project => "project",
            Self::Symmetrize => "symmetrize",
            Self::Density => "density",
            Self::Beckmann => "beckmann",
            Self::Counterexample => "counterexample",
            Self::Estimate => "estimate",
            Self::Approxstudy => "approxstudy",
        }
    }

    fn needs_domain(&self) -> bool {
        !matches!(self, Self::Counterexample)
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|n| n.as_str()).collect();
            format!("unknown scenario `{s}`, expected one of {}", names.join(", "))
        })
    }
}

/// An exponent `p ∈ [1, ∞]`, written as a number or as `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(pub f64);

impl Exponent {
    pub fn label(&self) -> String {
        if self.0.is_infinite() {
            "inf".into()
        } else {
            format!("{}", self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let p = match Raw::deserialize(d)? {
            Raw::Int(i) => i as f64,
            Raw::Float(x) => x,
            Raw::Text(s) if s == "inf" || s == "infinity" => f64::INFINITY,
            Raw::Text(s) => return Err(serde::de::Error::custom(format!("invalid exponent `{s}`"))),
        };
        if !(p >= 1.0) {
            return Err(serde::de::Error::custom(format!("exponent {p} is below 1")));
        }
        Ok(Exponent(p))
    }
}

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapChoice {
    Reflection,
    Radial,
    Exterior,
    Projection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerance {
    /// Stopping tolerance of the minimal-flow solver.
    pub beckmann: f64,
    pub max_iter: usize,
    /// Step of the central differences used to check Jacobians.
    pub fd_step: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            beckmann: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            fd_step: 1e-5,
        }
    }
}

/// Round approximations of a polygonal domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Approximation {
    pub radius: f64,
    pub spacings: Vec<f64>,
}

impl Default for Approximation {
    fn default() -> Self {
        Self {
            radius: 0.25,
            spacings: vec![0.2, 0.1, 0.05, 0.025],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleSettings {
    /// Cells per unit length of the refinement sequence.
    pub refinements: Vec<usize>,
    /// Cells per unit length of the source quadrature grid.
    pub quadrature_grid: usize,
    pub quadrature_subdivision: usize,
    /// Range of `r` for the ball-mass regression of `σ(B_{2r})`.
    pub radii: [f64; 2],
    pub radius_samples: usize,
    pub eps0: f64,
    /// Radius of the ball around the apex whose maximum is tracked.
    pub max_ball: f64,
}

impl Default for CounterexampleSettings {
    fn default() -> Self {
        Self {
            refinements: vec![128, 256, 512],
            quadrature_grid: 256,
            quadrature_subdivision: 2,
            radii: [0.01, 0.1],
            radius_samples: 10,
            eps0: DEFAULT_EPS0,
            max_ball: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Optional; must agree with the scenario requested on the command line.
    #[serde(default)]
    pub scenario: Option<ScenarioName>,
    /// Domain JSON file, relative to the config file.
    #[serde(default)]
    pub domain: Option<PathBuf>,
    /// Cells per unit length.
    pub grid: usize,
    #[serde(default = "default_subdivision")]
    pub subdivision: usize,
    #[serde(default)]
    pub p: Vec<Exponent>,
    #[serde(default)]
    pub tolerance: Tolerance,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_resolution")]
    pub component_resolution: usize,
    /// Source rectangle `[x0, y0, x1, y1]`; the whole domain when absent.
    #[serde(default)]
    pub source: Option<[f64; 4]>,
    #[serde(default)]
    pub map: Option<MapChoice>,
    /// `c` of the direct exterior map; `r/(4L)` when absent.
    #[serde(default)]
    pub exterior_c: Option<f64>,
    /// `L` used by the radial map in place of the domain diameter.
    #[serde(default)]
    pub diameter: Option<f64>,
    /// Shift of the deposit grid against the domain, in cells.
    #[serde(default = "default_grid_offset")]
    pub grid_offset: f64,
    /// Points sampled for Jacobian checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub approximation: Approximation,
    #[serde(default)]
    pub counterexample: CounterexampleSettings,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_subdivision() -> usize {
    DEFAULT_SUBDIVISION
}

fn default_resolution() -> usize {
    DEFAULT_COMPONENT_RESOLUTION
}

fn default_grid_offset() -> f64 {
    0.125
}

fn default_samples() -> usize {
    100_000
}

fn invalid(field: &'static str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field,
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))
    }

    /// Parses `path`; relative paths inside are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg =
            Self::from_toml(&text).map_err(|e| ScenarioError::Config(format!("{}: {}", path.display(), e)))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn h(&self) -> f64 {
        1.0 / self.grid as f64
    }

    pub fn domain_path(&self) -> Option<PathBuf> {
        self.domain.as_ref().map(|d| self.base_dir.join(d))
    }

    /// Worker count: the environment override, then the config, then the
    /// rayon default.
    pub fn worker_count(&self) -> Result<Option<usize>, ScenarioError> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .map(Some)
                .ok_or_else(|| invalid("workers", format!("{WORKERS_ENV}=`{v}` is not a positive integer"))),
            Err(_) => Ok(self.workers),
        }
    }

    /// Checks cross-field invariants for `scenario`.
    pub fn validate(&self, scenario: ScenarioName) -> Result<(), ScenarioError> {
        if let Some(named) = self.scenario {
            if named != scenario {
                return Err(invalid(
                    "scenario",
                    format!("config is for `{named}` but `{scenario}` was requested"),
                ));
            }
        }
        if self.grid < MIN_GRID {
            return Err(invalid(
                "grid",
                format!("{} is below the minimum {MIN_GRID}", self.grid),
            ));
        }
        if self.subdivision == 0 {
            return Err(invalid("subdivision", "must be at least 1"));
        }
        if self.deterministic && self.seed.is_none() {
            return Err(invalid("seed", "a fixed seed is required when deterministic"));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.grid_offset) {
            return Err(invalid("grid_offset", "must lie in [0, 1)"));
        }
        if scenario.needs_domain() {
            let path = self
                .domain_path()
                .ok_or_else(|| invalid("domain", format!("required by `{scenario}`")))?;
            if !path.is_file() {
                return Err(invalid("domain", format!("{} does not exist", path.display())));
            }
        }
        if let Some([x0, y0, x1, y1]) = self.source {
            if !(x0 < x1 && y0 < y1) {
                return Err(invalid("source", "expected [x0, y0, x1, y1] with x0 < x1 and y0 < y1"));
            }
        }
        let a = &self.approximation;
        if !(a.radius > 0.0) || a.spacings.is_empty() || a.spacings.iter().any(|&s| !(s > 0.0)) {
            return Err(invalid(
                "approximation",
                "needs a positive radius and positive spacings",
            ));
        }
        let c = &self.counterexample;
        if c.refinements.is_empty() || c.refinements.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("counterexample.refinements", "must be nonempty and increasing"));
        }
        if !(0.0 < c.radii[0] && c.radii[0] < c.radii[1]) || c.radius_samples < 2 {
            return Err(invalid(
                "counterexample.radii",
                "needs 0 < r_min < r_max and two samples",
            ));
        }
        if !(c.eps0 > 0.0 && c.eps0 <= 1.0) {
            return Err(invalid("counterexample.eps0", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let cfg = ScenarioConfig::from_toml("grid = 64\np = [1, 2.5, \"inf\"]\n").unwrap();
        assert_eq!(cfg.grid, 64);
        assert_eq!(cfg.subdivision, DEFAULT_SUBDIVISION);
        let p: Vec<f64> = cfg.p.iter().map(|e| e.0).collect();
        assert_eq!(p, [1.0, 2.5, f64::INFINITY]);
    }

    #[test]
    fn toml_inf_literal() {
        let cfg = ScenarioConfig::from_toml("grid = 64\np = [inf]\n").unwrap();
        assert!(cfg.p[0].0.is_infinite());
    }

    #[test]
    fn missing_grid_is_named() {
        let err = ScenarioConfig::from_toml("subdivision = 2\n").unwrap_err();
        assert!(err.to_string().contains("grid"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioConfig::from_toml("grid = 64\ncolour = 3\n").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = ScenarioConfig::from_toml("grid = 64\n[tolerance]\nbeckman = 1e-6\n").unwrap_err();
        assert!(err.to_string().contains("beckman"), "{err}");
    }

    #[test]
    fn small_exponents_are_rejected() {
        assert!(ScenarioConfig::from_toml("grid = 64\np = [0.5]\n").is_err());
    }

    #[test]
    fn validation() {
        let cfg = ScenarioConfig::from_toml("grid = 4\n").unwrap();
        let err = cfg.validate(ScenarioName::Counterexample).unwrap_err();
        assert!(err.to_string().contains("grid"));
        let cfg = ScenarioConfig::from_toml("grid = 64\ndeterministic = true\n").unwrap();
        assert!(cfg
            .validate(ScenarioName::Counterexample)
            .unwrap_err()
            .to_string()
            .contains("seed"));
        let cfg = ScenarioConfig::from_toml("grid = 64\n").unwrap();
        assert!(cfg
            .validate(ScenarioName::Project)
            .unwrap_err()
            .to_string()
            .contains("domain"));
        let cfg = ScenarioConfig::from_toml("grid = 64\nscenario = \"beckmann\"\n").unwrap();
        assert!(cfg.validate(ScenarioName::Counterexample).is_err());
    }

    #[test]
    fn scenario_names_round_trip() {
        for name in ScenarioName::ALL {
            assert_eq!(name.as_str().parse::<ScenarioName>().unwrap(), name);
        }
        assert!("nope".parse::<ScenarioName>().is_err());
    }
}
