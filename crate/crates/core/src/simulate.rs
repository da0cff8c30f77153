//! Exact Gaussian sampling of dyadic increments, and a quadrature-based
//! Lei–Nualart simulator for tri-fBm used as an independent cross-check.
//!
//! Every path draws its normals from its own ChaCha20 stream keyed by
//! `(seed, path index)`, so ensembles do not depend on the thread count.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guards::Guards;
use crate::increments::{phi_matrix, DyadicGrid};
use crate::linalg::{cholesky_with_jitter, CholeskyFactor};
use crate::process::ProcessSpec;
use crate::special::gamma;

pub const CHOLESKY_GENERATOR: &str = "cholesky-increments/chacha20/v1";

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stream key for path `index` under `seed`.
pub fn stream_key(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

pub fn path_rng(seed: u64, index: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(stream_key(seed, index))
}

/// Simulated increments, one row per path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub spec: ProcessSpec,
    pub grid: DyadicGrid,
    pub seed: u64,
    pub generator_id: String,
    /// Diagonal jitter used by the sampler (zero for the quadrature sampler).
    pub jitter: f64,
    num_paths: usize,
    increments: Vec<f64>,
}

impl PathEnsemble {
    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    pub fn increments_per_path(&self) -> usize {
        self.grid.num_increments()
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let w = self.increments_per_path();
        &self.increments[p * w..(p + 1) * w]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.increments.chunks_exact(self.increments_per_path())
    }

    /// Path values at grid points `0..=2^n`, starting from zero.
    pub fn values(&self, p: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.increments_per_path() + 1);
        out.push(0.0);
        let mut acc = 0.0;
        for d in self.path(p) {
            acc += d;
            out.push(acc);
        }
        out
    }

    /// One row per path, increments with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.increments_per_path())
            .map(|k| format!("dx{k}"))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for path in self.paths() {
            let row: Vec<String> = path.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn sidecar(&self, created_at: &str) -> serde_json::Value {
        serde_json::json!({
            "spec": self.spec,
            "grid": self.grid,
            "num_paths": self.num_paths,
            "seed": self.seed,
            "generator_id": self.generator_id,
            "jitter": self.jitter,
            "created_at": created_at,
        })
    }
}

/// Factor of the increment covariance matrix at `grid`.
pub fn increment_factor(spec: &ProcessSpec, grid: &DyadicGrid, guards: &Guards) -> Result<CholeskyFactor> {
    let level = grid.level();
    let guards = Guards {
        matrix_level: guards.matrix_level.max(level),
        ..*guards
    };
    let mat = phi_matrix(spec, level, level, grid.horizon(), &guards)?;
    let dim = mat.rows();
    cholesky_with_jitter(mat.as_slice(), dim)
}

/// Draws `num_paths` exact samples of the increment vector at `grid`.
pub fn simulate_increments(
    spec: &ProcessSpec,
    grid: &DyadicGrid,
    num_paths: usize,
    seed: u64,
    guards: &Guards,
) -> Result<PathEnsemble> {
    Guards::check("simulation", grid.level(), guards.simulation_level)?;
    let factor = increment_factor(spec, grid, guards)?;
    Ok(sample_with_factor(spec, grid, &factor, num_paths, seed))
}

pub fn sample_with_factor(
    spec: &ProcessSpec,
    grid: &DyadicGrid,
    factor: &CholeskyFactor,
    num_paths: usize,
    seed: u64,
) -> PathEnsemble {
    let dim = factor.dim();
    let mut increments = vec![0.0; num_paths * dim];
    if dim > 0 {
        increments
            .par_chunks_mut(dim)
            .enumerate()
            .for_each_init(
                || vec![0.0; dim],
                |z, (p, out)| {
                    let mut rng = path_rng(seed, p as u64);
                    for v in z.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                    factor.mul_vec(z, out);
                },
            );
    }
    PathEnsemble {
        spec: *spec,
        grid: *grid,
        seed,
        generator_id: CHOLESKY_GENERATOR.to_string(),
        jitter: factor.jitter(),
        num_paths,
        increments,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    /// Geometric midpoints of log-spaced cells.
    MidpointLog,
    /// Two-point Gauss–Legendre in `log s` on each pair of log cells.
    GaussLog,
}

/// Discretization of `int_0^inf (1 - e^{-st}) s^{-(1+K)/2} dB_s`.
///
/// Nodes cover `[s_max 2^{-node_count/4}, s_max]` with four cells per octave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub node_count: usize,
    pub s_max: f64,
    pub rule: QuadratureRule,
}

impl QuadratureSpec {
    /// `s_max = 10^4 (2^n / T)^{2H}`, so `e^{-s t}` has decayed at the first grid time.
    pub fn for_grid(h: f64, grid: &DyadicGrid, node_count: usize, rule: QuadratureRule) -> Self {
        let s_max = 1e4 * (grid.num_increments() as f64 / grid.horizon()).powf(2.0 * h);
        Self {
            node_count,
            s_max,
            rule,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count < 16 {
            return Err(Error::InvalidParameter(format!(
                "quadrature needs at least 16 nodes (got {})",
                self.node_count
            )));
        }
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "s_max must be positive (got {})",
                self.s_max
            )));
        }
        Ok(())
    }

    /// `(node, weight)` pairs; weights are the variances of the Brownian
    /// increments attached to each node.
    pub fn nodes(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        let octaves = self.node_count as f64 / 4.0;
        let log_hi = self.s_max.ln();
        let log_lo = log_hi - octaves * std::f64::consts::LN_2;
        let out: Vec<(f64, f64)> = match self.rule {
            QuadratureRule::MidpointLog => {
                let du = (log_hi - log_lo) / self.node_count as f64;
                (0..self.node_count)
                    .map(|i| {
                        let a = (log_lo + i as f64 * du).exp();
                        let b = (log_lo + (i + 1) as f64 * du).exp();
                        ((a * b).sqrt(), b - a)
                    })
                    .collect()
            }
            QuadratureRule::GaussLog => {
                let panels = self.node_count / 2;
                let du = (log_hi - log_lo) / panels as f64;
                let g = 1.0 / 3f64.sqrt();
                (0..panels)
                    .flat_map(|i| {
                        let mid = log_lo + (i as f64 + 0.5) * du;
                        [-g, g].map(|x| {
                            let s = (mid + 0.5 * du * x).exp();
                            (s, 0.5 * du * s)
                        })
                    })
                    .collect()
            }
        };
        if out.iter().any(|&(s, w)| !(s > 0.0 && w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("quadrature produced nonpositive weights".into()));
        }
        Ok(out)
    }

    /// Variance of the discretized tri-fBm at time `t`.
    pub fn marginal_variance(&self, h: f64, k: f64, t: f64) -> Result<f64> {
        ProcessSpec::tri_fbm(h, k)?;
        let tau = t.powf(2.0 * h);
        let scale = k / gamma(1.0 - k);
        let nodes = self.nodes()?;
        Ok(scale
            * crate::sum::compensated_sum(nodes.iter().map(|&(s, w)| {
                let f = -(-s * tau).exp_m1();
                f * f * s.powf(-1.0 - k) * w
            })))
    }
}

pub fn lei_nualart_generator_id(rule: QuadratureRule) -> String {
    let r = match rule {
        QuadratureRule::MidpointLog => "midpoint-log",
        QuadratureRule::GaussLog => "gauss-log",
    };
    format!("lei-nualart/{r}/chacha20/v1")
}

/// Approximate tri-fBm sample paths via `Z(t) = sqrt(K / Gamma(1-K)) X_K(t^{2H})`.
pub fn simulate_lei_nualart(
    h: f64,
    k: f64,
    grid: &DyadicGrid,
    quad: &QuadratureSpec,
    num_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let spec = ProcessSpec::tri_fbm(h, k)?;
    let nodes = quad.nodes()?;
    let scale = (k / gamma(1.0 - k)).sqrt();
    let times = grid.points();
    let n_inc = grid.num_increments();
    let n_nodes = nodes.len();
    // loadings[p * n_nodes + i] for grid point p = 1..=n_inc
    let mut loadings = Vec::with_capacity(n_inc * n_nodes);
    for &t in &times[1..] {
        let tau = t.powf(2.0 * h);
        for &(s, w) in &nodes {
            loadings.push(scale * -(-s * tau).exp_m1() * s.powf(-0.5 * (1.0 + k)) * w.sqrt());
        }
    }
    let mut increments = vec![0.0; num_paths * n_inc];
    increments
        .par_chunks_mut(n_inc)
        .enumerate()
        .for_each_init(
            || vec![0.0; n_nodes],
            |xi, (p, out)| {
                let mut rng = path_rng(seed, p as u64);
                for v in xi.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let mut prev = 0.0;
                for (q, o) in out.iter_mut().enumerate() {
                    let row = &loadings[q * n_nodes..(q + 1) * n_nodes];
                    let value: f64 = row.iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
                    *o = value - prev;
                    prev = value;
                }
            },
        );
    Ok(PathEnsemble {
        spec,
        grid: *grid,
        seed,
        generator_id: lei_nualart_generator_id(quad.rule),
        jitter: 0.0,
        num_paths,
        increments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_paths_is_valid() {
        let spec = ProcessSpec::tri_fbm(0.6, 0.5).unwrap();
        let grid = DyadicGrid::new(3, 1.0).unwrap();
        let e = simulate_increments(&spec, &grid, 0, 1, &Guards::default()).unwrap();
        assert_eq!(e.num_paths(), 0);
        assert_eq!(e.paths().count(), 0);
    }

    #[test]
    fn guard_is_enforced() {
        let spec = ProcessSpec::tri_fbm(0.6, 0.5).unwrap();
        let grid = DyadicGrid::new(12, 1.0).unwrap();
        assert!(matches!(
            simulate_increments(&spec, &grid, 1, 1, &Guards::default()),
            Err(Error::GuardExceeded { .. })
        ));
    }

    #[test]
    fn same_seed_same_paths_different_seed_differs() {
        let spec = ProcessSpec::nth_fbm(1.5, 2).unwrap();
        let grid = DyadicGrid::new(4, 1.0).unwrap();
        let g = Guards::default();
        let a = simulate_increments(&spec, &grid, 20, 7, &g).unwrap();
        let b = simulate_increments(&spec, &grid, 20, 7, &g).unwrap();
        let c = simulate_increments(&spec, &grid, 20, 8, &g).unwrap();
        assert_eq!(a.increments, b.increments);
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn values_start_at_zero() {
        let spec = ProcessSpec::tri_fbm(0.6, 0.5).unwrap();
        let grid = DyadicGrid::new(3, 1.0).unwrap();
        let e = simulate_increments(&spec, &grid, 3, 1, &Guards::default()).unwrap();
        let v = e.values(1);
        assert_eq!(v.len(), 9);
        assert_eq!(v[0], 0.0);
        assert!((v[8] - e.path(1).iter().sum::<f64>()).abs() < 1e-14);
    }

    #[test]
    fn lei_nualart_value_at_zero_vanishes() {
        // the first grid point carries loading (1 - e^0) = 0 at t = 0
        let quad = QuadratureSpec {
            node_count: 64,
            s_max: 1e4,
            rule: QuadratureRule::MidpointLog,
        };
        assert_eq!(quad.marginal_variance(0.6, 0.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn invalid_quadrature() {
        let q = QuadratureSpec {
            node_count: 8,
            s_max: 1.0,
            rule: QuadratureRule::MidpointLog,
        };
        assert!(q.nodes().is_err());
        let q = QuadratureSpec {
            node_count: 32,
            s_max: -1.0,
            rule: QuadratureRule::GaussLog,
        };
        assert!(q.nodes().is_err());
    }

    #[test]
    fn csv_has_one_row_per_path() {
        let spec = ProcessSpec::tri_fbm(0.6, 0.5).unwrap();
        let grid = DyadicGrid::new(2, 1.0).unwrap();
        let e = simulate_increments(&spec, &grid, 3, 1, &Guards::default()).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "dx1,dx2,dx3,dx4");
        let v: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
        assert_eq!(v, e.path(0)[0]);
    }
}
