//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::Cell;
use crate::guards::Guards;
use crate::increments::WeightScheme;
use crate::process::{ProcessKind, ProcessSpec};
use crate::qvar::ClassifyThresholds;
use crate::simulate::QuadratureRule;

use super::Command;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Inclusive range of dyadic levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRange {
    pub min: u32,
    pub max: u32,
}

impl Default for LevelRange {
    fn default() -> Self {
        Self { min: 1, max: 10 }
    }
}

impl LevelRange {
    pub fn iter(&self) -> impl Iterator<Item = u32> {
        self.min..=self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsEmit {
    /// Every checked `(cell, bound)` pair.
    All,
    /// The tightest cell per bound and block, plus every violation.
    #[default]
    Tightest,
}

const DEFAULT_GRID: [f64; 5] = [0.2, 0.35, 0.5, 0.65, 0.8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsGrid {
    pub h_values: Vec<f64>,
    pub k_values: Vec<f64>,
    pub levels: LevelRange,
    pub emit: BoundsEmit,
    /// Restricts the report to one cell (the `m`, `n` here override `levels`).
    pub cell: Option<Cell>,
}

impl Default for BoundsGrid {
    fn default() -> Self {
        Self {
            h_values: DEFAULT_GRID.to_vec(),
            k_values: DEFAULT_GRID.to_vec(),
            levels: LevelRange { min: 1, max: 8 },
            emit: BoundsEmit::default(),
            cell: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    #[default]
    Cholesky,
    LeiNualart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub node_count: usize,
    /// Defaults to `10^4 (2^n / T)^{2H}`.
    pub s_max: Option<f64>,
    pub rule: QuadratureRule,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            node_count: 512,
            s_max: None,
            rule: QuadratureRule::MidpointLog,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub generator: Generator,
    pub quadrature: QuadratureConfig,
}

fn default_horizon() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub process: ProcessSpec,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub levels: LevelRange,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub num_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub guards: Guards,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub classify: ClassifyThresholds,
    /// Time grid for `cov-table` (multiplied by the horizon).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Evaluation points for `asymptotics`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_values: Option<Vec<f64>>,
    /// Weight for `amn-table`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<WeightScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

pub const DEFAULT_TIMES: [f64; 6] = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0];
pub const DEFAULT_T_VALUES: [f64; 4] = [10.0, 100.0, 1000.0, 10000.0];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn times(&self) -> Vec<f64> {
        self.times
            .clone()
            .unwrap_or_else(|| DEFAULT_TIMES.to_vec())
            .into_iter()
            .map(|t| t * self.horizon)
            .collect()
    }

    pub fn t_values(&self) -> Vec<f64> {
        self.t_values
            .clone()
            .unwrap_or_else(|| DEFAULT_T_VALUES.to_vec())
    }

    pub fn bounds_grid(&self) -> BoundsGrid {
        self.bounds.clone().unwrap_or_default()
    }

    pub fn simulation(&self) -> SimulationConfig {
        self.simulation.unwrap_or_default()
    }

    fn is_tri(&self) -> bool {
        self.process.kind() == ProcessKind::TriFbm
    }

    /// Checks everything that can be checked before computing.
    pub fn validate(&self, command: Command) -> Result<(), String> {
        let g = &self.guards;
        ensure(self.horizon > 0.0 && self.horizon.is_finite(), || {
            format!("horizon must be positive and finite (got {})", self.horizon)
        })?;
        ensure(self.levels.min <= self.levels.max, || {
            format!(
                "levels.min ({}) exceeds levels.max ({})",
                self.levels.min, self.levels.max
            )
        })?;
        ensure(all_finite(&self.alphas), || "alphas must be finite".into())?;
        ensure(self.output_dir.is_some(), || {
            "no output directory: set output_dir or pass --out".into()
        })?;
        let c = &self.classify;
        ensure(
            c.growth > 1.0 && c.stable_low <= 1.0 && c.stable_high >= 1.0 && c.steps >= 1,
            || "classify thresholds need growth > 1, stable_low <= 1 <= stable_high, steps >= 1".into(),
        )?;
        let within = |what: &str, level: u32, guard: u32| {
            ensure(level <= guard, || {
                format!("{what} level {level} exceeds the configured guard {guard}")
            })
        };
        match command {
            Command::CovTable => {
                let times = self.times();
                ensure(!times.is_empty(), || "times must not be empty".into())?;
                ensure(times.iter().all(|t| *t >= 0.0 && t.is_finite()), || {
                    "times must be nonnegative and finite".into()
                })?;
            }
            Command::QvSweep => {
                ensure(!self.alphas.is_empty(), || "qv-sweep needs at least one alpha".into())?;
                ensure(self.num_paths != 1, || {
                    "num_paths must be 0 or at least 2 for standard errors".into()
                })?;
            }
            Command::BoundsVerify => {
                ensure(self.is_tri(), || {
                    "bounds-verify applies to tri-fBm only; the bounds are specific to its covariance".into()
                })?;
                ensure(self.horizon == 1.0, || {
                    "bounds-verify works on the unit horizon; set horizon to 1".into()
                })?;
                let grid = self.bounds_grid();
                ensure(!grid.h_values.is_empty() && !grid.k_values.is_empty(), || {
                    "bounds grid needs at least one H and one K".into()
                })?;
                for &h in &grid.h_values {
                    for &k in &grid.k_values {
                        ProcessSpec::tri_fbm(h, k).map_err(|e| e.to_string())?;
                    }
                }
                match grid.cell {
                    Some(cell) => {
                        within("cross-increment matrix", cell.m.max(cell.n), g.matrix_level)?;
                        ensure(
                            cell.j >= 1 && cell.k >= 1 && cell.j <= 1u64 << cell.m && cell.k <= 1u64 << cell.n,
                            || format!("cell ({}, {}) is outside levels ({}, {})", cell.j, cell.k, cell.m, cell.n),
                        )?;
                    }
                    None => {
                        ensure(grid.levels.min >= 1 && grid.levels.min <= grid.levels.max, || {
                            "bounds levels must satisfy 1 <= min <= max".into()
                        })?;
                        within("cross-increment matrix", grid.levels.max, g.matrix_level)?;
                    }
                }
            }
            Command::AmnTable => {
                within("double-sequence", self.levels.max, g.double_sequence_sum)?;
            }
            Command::Estimate => {
                ensure(self.is_tri(), || {
                    "estimate applies to tri-fBm only; the index is identified through HK".into()
                })?;
                let hk = self.process.self_similarity();
                ensure(hk <= 0.5, || {
                    format!(
                        "estimate refuses HK = {hk} > 1/2: above 1/2 the critical exponent of the \
                         quadratic variation is 1, so -log2(S_n)/(2n) tends to 1/2 and carries no \
                         information about HK"
                    )
                })?;
                ensure(self.levels.min >= 1, || "estimate needs levels.min >= 1".into())?;
                within("mean", self.levels.max, g.mean_level)?;
            }
            Command::Simulate => {
                ensure(self.num_paths >= 1, || "simulate needs num_paths >= 1".into())?;
                let sim = self.simulation();
                match sim.generator {
                    Generator::Cholesky => within("simulation", self.levels.max, g.simulation_level)?,
                    Generator::LeiNualart => {
                        ensure(self.is_tri(), || {
                            "the lei_nualart generator simulates tri-fBm only".into()
                        })?;
                        within("simulation", self.levels.max, g.simulation_level)?;
                        let q = sim.quadrature;
                        ensure(q.node_count >= 16, || "quadrature node_count must be >= 16".into())?;
                        if let Some(s) = q.s_max {
                            ensure(s > 0.0 && s.is_finite(), || "quadrature s_max must be positive".into())?;
                        }
                    }
                }
            }
            Command::Asymptotics => {
                ensure(
                    self.process.kind() == ProcessKind::NthFbm && self.process.order().unwrap_or(0) >= 2,
                    || "asymptotics applies to n-fBm with order >= 2".into(),
                )?;
                let ts = self.t_values();
                ensure(!ts.is_empty(), || "t_values must not be empty".into())?;
                ensure(ts.iter().all(|t| *t >= 1.0 && t.is_finite()), || {
                    "t_values must be finite and >= 1".into()
                })?;
            }
            Command::Moments => {
                within("mean", self.levels.max, g.mean_level)?;
            }
        }
        Ok(())
    }
}
