//! Drivers behind each subcommand. They compute tables in memory; writing
//! happens afterwards in one place.

use std::time::Instant;

use rayon::prelude::*;

use crate::bounds::{for_each_bound_check, tri_bounds, verify_tri_bounds, BoundCheck, BoundId, Cell, BOUND_RTOL};
use crate::error::Result;
use crate::guards::Guards;
use crate::increments::{double_sequence, exact_moments, phi, DyadicGrid, MomentPair, WeightScheme};
use crate::process::{psi_adjacent, psi_asymptotic_coeff, ProcessSpec};
use crate::qvar::{ensemble_qv, estimate_hk, estimate_hk_exact_proxy, EmpiricalStat, QvSweepResult};
use crate::simulate::{
    simulate_increments, simulate_lei_nualart, stream_key, PathEnsemble, QuadratureSpec,
};

use super::config::{BoundsEmit, ExperimentConfig, Generator};
use super::output::{StageTiming, Table, Value};

/// Everything a command produces besides the manifest.
#[derive(Debug, Default)]
pub struct CommandOutput {
    pub tables: Vec<Table>,
    pub ensemble: Option<PathEnsemble>,
    pub jitter: Option<f64>,
    pub violations: usize,
    pub stages: Vec<StageTiming>,
}

impl CommandOutput {
    fn timed<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.stages.push(StageTiming {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    fn note_jitter(&mut self, j: f64) {
        self.jitter = Some(self.jitter.map_or(j, |old| old.max(j)));
    }
}

pub fn cov_table(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let spec = cfg.process;
    let times = cfg.times();
    let table = out.timed("covariance", || {
        let mut t = Table::new("cov_table", &["s", "t", "cov", "psi", "identity_residual"]);
        for (i, &s) in times.iter().enumerate() {
            for &u in &times[i..] {
                let cov = spec.covariance(s, u)?;
                let psi = spec.structure_function(s, u)?;
                let vs = spec.covariance(s, s)?;
                let vu = spec.covariance(u, u)?;
                let scale = vs.abs() + vu.abs();
                let diff = (psi - (vs + vu - 2.0 * cov)).abs();
                let residual = if scale > 0.0 { diff / scale } else { diff };
                t.push(vec![s.into(), u.into(), cov.into(), psi.into(), residual.into()]);
            }
        }
        Ok(t)
    })?;
    out.tables.push(table);
    Ok(out)
}

fn base_moments(spec: &ProcessSpec, levels: &[u32], horizon: f64, guards: &Guards) -> Result<Vec<Option<MomentPair>>> {
    levels
        .iter()
        .map(|&n| {
            if n <= guards.mean_level {
                exact_moments(spec, n, 0.0, horizon, guards).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

fn guard_note(n: u32, guards: &Guards, simulated: bool, wants_paths: bool) -> String {
    let mut notes = Vec::new();
    if n > guards.mean_level {
        notes.push(format!("level exceeds mean guard {}", guards.mean_level));
    } else if n > guards.variance_level {
        notes.push(format!("variance guard {} exceeded: mean only", guards.variance_level));
    }
    if wants_paths && !simulated {
        notes.push(format!("simulation guard {} exceeded", guards.simulation_level));
    }
    notes.join("; ")
}

pub fn qv_sweep(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let spec = cfg.process;
    let guards = cfg.guards;
    let levels: Vec<u32> = cfg.levels.iter().collect();
    let base = out.timed("exact-moments", || base_moments(&spec, &levels, cfg.horizon, &guards))?;

    let wants_paths = cfg.num_paths >= 2;
    let mut ensembles: Vec<Option<PathEnsemble>> = vec![None; levels.len()];
    if wants_paths {
        ensembles = out.timed("simulation", || {
            levels
                .iter()
                .map(|&n| {
                    if n > guards.simulation_level {
                        return Ok(None);
                    }
                    let grid = DyadicGrid::new(n, cfg.horizon)?;
                    simulate_increments(&spec, &grid, cfg.num_paths, stream_key(cfg.seed, n as u64), &guards)
                        .map(Some)
                })
                .collect()
        })?;
        for e in ensembles.iter().flatten() {
            out.note_jitter(e.jitter);
        }
    }

    let table = out.timed("sweep", || {
        let mut t = Table::new(
            "qv_sweep",
            &["n", "alpha", "exact_mean", "exact_var", "mc_mean", "mc_se", "classification", "note"],
        );
        for &alpha in &cfg.alphas {
            let sweep = QvSweepResult::from_base_moments(&spec, alpha, cfg.horizon, &base, &cfg.classify);
            let class = sweep.classification.as_str();
            for (i, &n) in levels.iter().enumerate() {
                let weight = (alpha * n as f64).exp2();
                let exact = base[i];
                let emp = match &ensembles[i] {
                    Some(e) => EmpiricalStat::from_samples(&ensemble_qv(e.paths(), alpha, &e.grid)?),
                    None => None,
                };
                t.push(vec![
                    n.into(),
                    alpha.into(),
                    exact.map(|m| weight * m.mean).into(),
                    exact.and_then(|m| m.variance).map(|v| weight * weight * v).into(),
                    emp.map(|s| s.mean).into(),
                    emp.map(|s| s.std_error).into(),
                    class.into(),
                    guard_note(n, &guards, ensembles[i].is_some(), wants_paths).into(),
                ]);
            }
        }
        Ok(t)
    })?;
    out.tables.push(table);
    Ok(out)
}

const BOUND_COLUMNS: [&str; 10] = ["H", "K", "m", "n", "j", "k", "bound_id", "phi", "bound", "slack"];

fn bound_row(c: &BoundCheck) -> Vec<Value> {
    vec![
        c.h.into(),
        c.k.into(),
        c.cell.m.into(),
        c.cell.n.into(),
        c.cell.j.into(),
        c.cell.k.into(),
        c.bound.as_str().into(),
        c.phi.into(),
        c.value.into(),
        c.slack().into(),
    ]
}

fn block_rows(h: f64, k: f64, m: u32, n: u32, emit: BoundsEmit, guards: &Guards) -> Result<(Vec<BoundCheck>, usize)> {
    match emit {
        BoundsEmit::All => {
            let mut rows = Vec::new();
            for_each_bound_check(h, k, m, n, guards, |c| rows.push(*c))?;
            let violations = rows.iter().filter(|c| c.is_violation()).count();
            Ok((rows, violations))
        }
        BoundsEmit::Tightest => {
            let s = verify_tri_bounds(h, k, m, n, guards)?;
            let violations = s.violations.len();
            let mut rows = s.violations;
            for t in s.tightest {
                if !rows.iter().any(|v| v.cell == t.cell && v.bound == t.bound) {
                    rows.push(t);
                }
            }
            rows.sort_by_key(|c| (c.cell.j, c.cell.k, c.bound));
            Ok((rows, violations))
        }
    }
}

pub fn bounds_verify(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let grid = cfg.bounds_grid();
    let guards = cfg.guards;
    let pairs: Vec<(f64, f64)> = grid
        .h_values
        .iter()
        .flat_map(|&h| grid.k_values.iter().map(move |&k| (h, k)))
        .collect();
    let mut table = Table::new("bounds_verify", &BOUND_COLUMNS);

    if let Some(cell) = grid.cell {
        let violations = out.timed("single-cell", || {
            let mut violations = 0;
            for &(h, k) in &pairs {
                let spec = ProcessSpec::tri_fbm(h, k)?;
                let value = phi(&spec, cell.m, cell.n, cell.j, cell.k, 1.0)?;
                let bounds = tri_bounds(h, k, cell)?;
                for id in BoundId::ALL {
                    let (bound, slack) = match bounds.get(id) {
                        Some(b) => {
                            if b - value < -BOUND_RTOL * b.abs() {
                                violations += 1;
                            }
                            (Value::Float(b), Value::Float(b - value))
                        }
                        None => (Value::Empty, Value::Empty),
                    };
                    let Cell { m, n, j, k: kk } = cell;
                    table.push(vec![
                        h.into(),
                        k.into(),
                        m.into(),
                        n.into(),
                        j.into(),
                        kk.into(),
                        id.as_str().into(),
                        value.into(),
                        bound,
                        slack,
                    ]);
                }
            }
            Ok(violations)
        })?;
        out.violations = violations;
    } else {
        let blocks: Vec<(f64, f64, u32, u32)> = pairs
            .iter()
            .flat_map(|&(h, k)| {
                grid.levels
                    .iter()
                    .flat_map(move |m| grid.levels.iter().map(move |n| (h, k, m, n)))
            })
            .collect();
        let results = out.timed("verify", || {
            blocks
                .par_iter()
                .map(|&(h, k, m, n)| block_rows(h, k, m, n, grid.emit, &guards))
                .collect::<Result<Vec<_>>>()
        })?;
        for (rows, violations) in results {
            out.violations += violations;
            for c in &rows {
                table.push(bound_row(c));
            }
        }
    }
    out.tables.push(table);
    Ok(out)
}

pub fn amn_table(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let scheme = cfg.scheme.unwrap_or(WeightScheme::UnitWeight);
    let ds = out.timed("double-sequence", || {
        double_sequence(&cfg.process, cfg.levels.max, scheme, cfg.horizon, &cfg.guards)
    })?;
    let mut t = Table::new("amn_table", &["m", "n", "a_mn", "product_bound"]);
    for (m, n, v) in ds.iter() {
        t.push(vec![m.into(), n.into(), v.into(), ds.product_bound(m, n).into()]);
    }
    out.tables.push(t);
    Ok(out)
}

pub fn estimate(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let spec = cfg.process;
    let guards = cfg.guards;
    let levels: Vec<u32> = cfg.levels.iter().collect();
    let proxies = out.timed("exact-proxy", || {
        levels
            .iter()
            .map(|&n| estimate_hk_exact_proxy(&spec, n, cfg.horizon, &guards))
            .collect::<Result<Vec<_>>>()
    })?;
    let paths = out.timed("simulation", || {
        levels
            .iter()
            .map(|&n| {
                if cfg.num_paths == 0 || n > guards.simulation_level {
                    return Ok(None);
                }
                let grid = DyadicGrid::new(n, cfg.horizon)?;
                let e = simulate_increments(&spec, &grid, cfg.num_paths, stream_key(cfg.seed, n as u64), &guards)?;
                let est = e
                    .paths()
                    .map(|p| estimate_hk(p, n).map(|x| x.value))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Some((e.jitter, est)))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut t = Table::new(
        "estimate",
        &["n", "hk", "exact_proxy", "path_mean", "path_sd", "num_paths"],
    );
    let hk = spec.self_similarity();
    for ((&n, proxy), sim) in levels.iter().zip(&proxies).zip(&paths) {
        let (mean, sd, count) = match sim {
            Some((jitter, est)) => {
                out.note_jitter(*jitter);
                let stat = EmpiricalStat::from_samples(est);
                let mean = crate::sum::compensated_sum(est.iter().copied()) / est.len() as f64;
                (Some(mean), stat.map(|s| s.variance.sqrt()), est.len())
            }
            None => (None, None, 0),
        };
        t.push(vec![n.into(), hk.into(), proxy.value.into(), mean.into(), sd.into(), count.into()]);
    }
    out.tables.push(t);
    Ok(out)
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let grid = DyadicGrid::new(cfg.levels.max, cfg.horizon)?;
    let sim = cfg.simulation();
    let ensemble = out.timed("simulation", || match sim.generator {
        Generator::Cholesky => simulate_increments(&cfg.process, &grid, cfg.num_paths, cfg.seed, &cfg.guards),
        Generator::LeiNualart => {
            let (h, k) = (cfg.process.h(), cfg.process.k().unwrap_or_default());
            let mut quad = QuadratureSpec::for_grid(h, &grid, sim.quadrature.node_count, sim.quadrature.rule);
            if let Some(s) = sim.quadrature.s_max {
                quad.s_max = s;
            }
            simulate_lei_nualart(h, k, &grid, &quad, cfg.num_paths, cfg.seed)
        }
    })?;
    if sim.generator == Generator::Cholesky {
        out.note_jitter(ensemble.jitter);
    }
    out.ensemble = Some(ensemble);
    Ok(out)
}

pub fn asymptotics(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let spec = cfg.process;
    let order = spec.order().unwrap_or_default();
    let coeff = psi_asymptotic_coeff(spec.h(), order)?;
    let ts = cfg.t_values();
    let table = out.timed("asymptotics", || {
        let mut t = Table::new(
            "asymptotics",
            &["t", "psi", "coefficient", "exponent", "leading", "ratio"],
        );
        for &x in &ts {
            let psi = psi_adjacent(&spec, x)?;
            let leading = coeff.coefficient * x.powf(coeff.exponent);
            t.push(vec![
                x.into(),
                psi.into(),
                coeff.coefficient.into(),
                coeff.exponent.into(),
                leading.into(),
                (psi / leading).into(),
            ]);
        }
        Ok(t)
    })?;
    out.tables.push(table);
    Ok(out)
}

pub fn moments(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::default();
    let levels: Vec<u32> = cfg.levels.iter().collect();
    let base = out.timed("exact-moments", || base_moments(&cfg.process, &levels, cfg.horizon, &cfg.guards))?;
    let alphas = if cfg.alphas.is_empty() { vec![0.0] } else { cfg.alphas.clone() };
    let mut t = Table::new("moments", &["n", "alpha", "mean", "variance", "mean_only"]);
    for &alpha in &alphas {
        for m in base.iter().flatten() {
            let w = (alpha * m.level as f64).exp2();
            t.push(vec![
                m.level.into(),
                alpha.into(),
                (w * m.mean).into(),
                m.variance.map(|v| w * w * v).into(),
                Value::Int(m.is_mean_only() as i64),
            ]);
        }
    }
    out.tables.push(t);
    Ok(out)
}
