//! Batch experiments driven by a TOML config. Every run writes its CSV
//! tables, one `report.json` with all metrics, a `manifest.json` with the
//! SHA-256 of every artifact, and a `timings.json` kept out of the manifest
//! so that deterministic runs hash identically.

mod config;
mod runs;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    Approximation, CounterexampleSettings, Exponent, MapChoice, ScenarioConfig, ScenarioName, Tolerance, MIN_GRID,
    WORKERS_ENV,
};

use crate::beckmann::BeckmannError;
use crate::counterexample::CounterexampleError;
use crate::fields::FieldError;
use crate::geometry::GeometryError;
use crate::raydensity::RayError;
use crate::symmetrize::SymmetrizeError;
use crate::Exec;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Symmetrize(#[from] SymmetrizeError),
    #[error(transparent)]
    Ray(#[from] RayError),
    #[error(transparent)]
    Beckmann(#[from] BeckmannError),
    #[error(transparent)]
    Counterexample(#[from] CounterexampleError),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub artifacts: Vec<ManifestEntry>,
}

/// Files written by one run, in write order.
pub(crate) struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn create(dir: &Path) -> Result<Self, ScenarioError> {
        std::fs::create_dir_all(dir).map_err(|source| ScenarioError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Registers `name` as an artifact and returns its path.
    pub(crate) fn path(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub(crate) fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), ScenarioError> {
        let path = self.path(name);
        write_json(&path, value)
    }

    fn manifest(&self, scenario: ScenarioName) -> Result<Manifest, ScenarioError> {
        let mut artifacts = Vec::with_capacity(self.files.len());
        let mut names = self.files.clone();
        names.sort();
        for file in names {
            let path = self.dir.join(&file);
            let bytes = std::fs::read(&path).map_err(|source| ScenarioError::Io { path, source })?;
            artifacts.push(ManifestEntry {
                file,
                sha256: hex::encode(Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            });
        }
        Ok(Manifest {
            scenario: scenario.to_string(),
            artifacts,
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ScenarioError> {
    let io = |source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(io)?;
    w.flush().map_err(io)
}

/// Shared state handed to each scenario.
pub(crate) struct RunContext<'a> {
    pub cfg: &'a ScenarioConfig,
    pub exec: Exec,
    pub rng: ChaCha8Rng,
    pub timings: Vec<(String, f64)>,
    started: Instant,
}

impl RunContext<'_> {
    /// Records the time since the previous mark under `phase`.
    pub(crate) fn mark(&mut self, phase: &str) {
        let now = Instant::now();
        self.timings
            .push((phase.to_string(), (now - self.started).as_secs_f64()));
        self.started = now;
    }
}

#[derive(Debug, Clone, Serialize)]
struct Report {
    scenario: ScenarioName,
    deterministic: bool,
    seed: u64,
    grid: usize,
    subdivision: usize,
    metrics: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: serde_json::Value,
    pub manifest: Manifest,
    pub seconds: f64,
}

/// Runs `scenario` and writes its artifacts to `out`.
pub fn run(scenario: ScenarioName, cfg: &ScenarioConfig, out: &Path) -> Result<RunOutcome, ScenarioError> {
    cfg.validate(scenario)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.worker_count()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| ScenarioError::Pool(e.to_string()))?;
    pool.install(|| run_in_pool(scenario, cfg, out))
}

fn run_in_pool(scenario: ScenarioName, cfg: &ScenarioConfig, out: &Path) -> Result<RunOutcome, ScenarioError> {
    let start = Instant::now();
    let seed = cfg.seed.unwrap_or_else(rand::random);
    let mut ctx = RunContext {
        cfg,
        exec: Exec {
            deterministic: cfg.deterministic,
        },
        rng: ChaCha8Rng::seed_from_u64(seed),
        timings: Vec::new(),
        started: start,
    };
    let mut artifacts = Artifacts::create(out)?;
    let metrics = match scenario {
        ScenarioName::Project => runs::project(&mut ctx, &mut artifacts)?,
        ScenarioName::Symmetrize => runs::symmetrize(&mut ctx, &mut artifacts)?,
        ScenarioName::Density => runs::density(&mut ctx, &mut artifacts)?,
        ScenarioName::Beckmann => runs::beckmann(&mut ctx, &mut artifacts)?,
        ScenarioName::Counterexample => runs::counterexample(&mut ctx, &mut artifacts)?,
        ScenarioName::Estimate => runs::estimate(&mut ctx, &mut artifacts)?,
        ScenarioName::Approxstudy => runs::approxstudy(&mut ctx, &mut artifacts)?,
    };
    let report = serde_json::to_value(Report {
        scenario,
        deterministic: cfg.deterministic,
        seed,
        grid: cfg.grid,
        subdivision: cfg.subdivision,
        metrics,
    })?;
    artifacts.json("report.json", &report)?;
    let manifest = artifacts.manifest(scenario)?;
    write_json(&out.join("manifest.json"), &manifest)?;
    let seconds = start.elapsed().as_secs_f64();
    let mut timings = serde_json::Map::new();
    for (phase, secs) in &ctx.timings {
        timings.insert(phase.clone(), (*secs).into());
    }
    timings.insert("total".into(), seconds.into());
    write_json(&out.join("timings.json"), &timings)?;
    Ok(RunOutcome {
        dir: out.to_path_buf(),
        report,
        manifest,
        seconds,
    })
}
