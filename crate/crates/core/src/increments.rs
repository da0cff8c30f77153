//! Exact covariances of dyadic increments and the quantities built from
//! them: Isserlis moments of the quadratic variation and the double
//! sequence `a_{m,n}` of squared cross-increment covariances.
//!
//! Increment `j` at level `m` is `X(jT/2^m) - X((j-1)T/2^m)`, with `j`
//! running from 1 to `2^m`. All entry accessors use that 1-based index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guards::Guards;
use crate::process::{CovarianceKernel, IncrementTable, ProcessKind, ProcessSpec};
use crate::sum::{compensated_sum, NeumaierSum};

/// Points `kT/2^level`, `k = 0..=2^level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicGrid {
    level: u32,
    horizon: f64,
}

impl DyadicGrid {
    pub fn new(level: u32, horizon: f64) -> Result<Self> {
        if level > 40 {
            return Err(Error::InvalidParameter(format!("level {level} is too large")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive and finite (got {horizon})"
            )));
        }
        Ok(Self { level, horizon })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_increments(&self) -> usize {
        1usize << self.level
    }

    pub fn num_points(&self) -> usize {
        self.num_increments() + 1
    }

    pub fn point(&self, k: usize) -> f64 {
        k as f64 * self.horizon / (1u64 << self.level) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.num_points()).map(|k| self.point(k)).collect()
    }
}

/// Row-wise evaluator of cross-increment covariances between two grids.
pub(crate) struct CrossEvaluator<'a> {
    kernel: &'a CovarianceKernel,
    xs: Vec<f64>,
    tx: IncrementTable,
    ty: IncrementTable,
    same_grid: bool,
}

impl<'a> CrossEvaluator<'a> {
    pub(crate) fn new(kernel: &'a CovarianceKernel, gx: &DyadicGrid, gy: &DyadicGrid) -> Self {
        let xs = gx.points();
        let ys = gy.points();
        Self {
            kernel,
            tx: kernel.increment_table(&xs),
            ty: kernel.increment_table(&ys),
            xs,
            same_grid: gx == gy,
        }
    }

    pub(crate) fn rows(&self) -> usize {
        self.xs.len() - 1
    }

    pub(crate) fn cols(&self) -> usize {
        self.ty.len()
    }

    /// Fills `out` (length `cols`) with row `j` (1-based).
    pub(crate) fn row(&self, j: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.cols());
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.kernel.increment_cov(&self.tx, j, &self.ty, k + 1);
        }
        if self.same_grid {
            out[j - 1] = self.kernel.structure(self.xs[j - 1], self.xs[j]);
        }
    }

    /// Compensated `sum_k entry(j,k)^2` for every row, in row order.
    pub(crate) fn row_square_sums(&self) -> Vec<f64> {
        let n = self.cols();
        (1..=self.rows())
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |buf, j| {
                    self.row(j, buf);
                    compensated_sum(buf.iter().map(|v| v * v))
                },
            )
            .collect()
    }
}

const CHUNK: usize = 4096;

fn diagonal_sum(kernel: &CovarianceKernel, xs: &[f64]) -> f64 {
    let n = xs.len() - 1;
    let partials: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK + 1;
            let hi = ((c + 1) * CHUNK).min(n);
            compensated_sum((lo..=hi).map(|k| kernel.structure(xs[k - 1], xs[k])))
        })
        .collect();
    compensated_sum(partials)
}

fn check_index(level: u32, idx: u64, name: &str) -> Result<()> {
    if idx == 0 || idx > (1u64 << level) {
        return Err(Error::IndexOutOfRange(format!(
            "{name}={idx} must lie in 1..={} at level {level}",
            1u64 << level
        )));
    }
    Ok(())
}

/// Covariance of increment `j` at level `m` with increment `k` at level `n`.
pub fn phi(spec: &ProcessSpec, m: u32, n: u32, j: u64, k: u64, horizon: f64) -> Result<f64> {
    let gm = DyadicGrid::new(m, horizon)?;
    let gn = DyadicGrid::new(n, horizon)?;
    check_index(m, j, "j")?;
    check_index(n, k, "k")?;
    let kernel = spec.kernel();
    let (j, k) = (j as usize, k as usize);
    if m == n && j == k {
        return Ok(kernel.structure(gm.point(j - 1), gm.point(j)));
    }
    Ok(kernel.increment_covariance(gm.point(j - 1), gm.point(j), gn.point(k - 1), gn.point(k)))
}

/// Dense `2^m x 2^n` matrix of increment covariances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossIncrementMatrix {
    pub spec: ProcessSpec,
    pub m: u32,
    pub n: u32,
    pub horizon: f64,
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl CrossIncrementMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// 1-based entry `(j, k)`.
    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.entries[(j - 1) * self.cols + (k - 1)]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        compensated_sum((0..self.rows.min(self.cols)).map(|i| self.entries[i * self.cols + i]))
    }
}

pub fn phi_matrix(
    spec: &ProcessSpec,
    m: u32,
    n: u32,
    horizon: f64,
    guards: &Guards,
) -> Result<CrossIncrementMatrix> {
    Guards::check("cross-increment matrix", m.max(n), guards.matrix_level)?;
    let gm = DyadicGrid::new(m, horizon)?;
    let gn = DyadicGrid::new(n, horizon)?;
    let kernel = spec.kernel();
    let eval = CrossEvaluator::new(&kernel, &gm, &gn);
    let (rows, cols) = (eval.rows(), eval.cols());
    let mut entries = vec![0.0; rows * cols];
    entries
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, out)| eval.row(i + 1, out));
    if m == n {
        // mirror the upper triangle so the matrix is exactly symmetric
        for j in 0..rows {
            for k in 0..j {
                entries[j * cols + k] = entries[k * cols + j];
            }
        }
    }
    Ok(CrossIncrementMatrix {
        spec: *spec,
        m,
        n,
        horizon,
        rows,
        cols,
        entries,
    })
}

/// Exact mean and (optionally) variance of `S_n^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub mean: f64,
    /// `None` for mean-only results beyond the variance guard.
    pub variance: Option<f64>,
    pub level: u32,
    pub alpha: f64,
}

impl MomentPair {
    pub fn is_mean_only(&self) -> bool {
        self.variance.is_none()
    }
}

/// `sum_k phi^{(n)}_{k,k}`, the expected plain quadratic variation.
pub fn diagonal_sum_at_level(spec: &ProcessSpec, n: u32, horizon: f64) -> Result<f64> {
    let grid = DyadicGrid::new(n, horizon)?;
    Ok(diagonal_sum(&spec.kernel(), &grid.points()))
}

/// `sum_{j,k} (phi^{(n)}_{j,k})^2`.
pub fn square_sum_at_level(spec: &ProcessSpec, n: u32, horizon: f64) -> Result<f64> {
    let grid = DyadicGrid::new(n, horizon)?;
    let kernel = spec.kernel();
    let eval = CrossEvaluator::new(&kernel, &grid, &grid);
    Ok(compensated_sum(eval.row_square_sums()))
}

/// Isserlis moments: `E S = 2^{an} sum phi_kk`, `var S = 2^{2an+1} sum phi_jk^2`.
///
/// Levels above `guards.variance_level` (but within `guards.mean_level`)
/// return a mean-only result.
pub fn exact_moments(
    spec: &ProcessSpec,
    n: u32,
    alpha: f64,
    horizon: f64,
    guards: &Guards,
) -> Result<MomentPair> {
    Guards::check("mean", n, guards.mean_level)?;
    let scale = (alpha * n as f64).exp2();
    let mean = scale * diagonal_sum_at_level(spec, n, horizon)?;
    let variance = if n <= guards.variance_level {
        Some(2.0 * scale * scale * square_sum_at_level(spec, n, horizon)?)
    } else {
        None
    };
    Ok(MomentPair {
        mean,
        variance,
        level: n,
        alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// `2^{m+n}`
    UnitWeight,
    /// `2^{2 gamma (m+n)}` with the self-similarity exponent `gamma`.
    SelfSimilarWeight,
}

impl WeightScheme {
    /// Per-level log2 weight exponent.
    pub fn rate(&self, spec: &ProcessSpec) -> f64 {
        match self {
            WeightScheme::UnitWeight => 1.0,
            WeightScheme::SelfSimilarWeight => 2.0 * spec.self_similarity(),
        }
    }
}

/// `a_{m,n} = w^{m+n} sum_{j,k} (phi^{(m,n)}_{j,k})^2` for `m, n <= max_level`
/// and `m + n` within the guard.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoubleSequenceTable {
    pub spec: ProcessSpec,
    pub scheme: WeightScheme,
    pub horizon: f64,
    pub max_level: u32,
    entries: Vec<Vec<Option<f64>>>,
    /// `w^n sum_k phi^{(n)}_{k,k}` per level.
    level_means: Vec<f64>,
}

impl DoubleSequenceTable {
    pub fn get(&self, m: u32, n: u32) -> Option<f64> {
        self.entries
            .get(m as usize)
            .and_then(|row| row.get(n as usize))
            .copied()
            .flatten()
    }

    /// Computed `(m, n, a_{m,n})` triples in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.entries.iter().enumerate().flat_map(|(m, row)| {
            row.iter()
                .enumerate()
                .filter_map(move |(n, v)| v.map(|v| (m as u32, n as u32, v)))
        })
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..=self.max_level).map_while(|n| self.get(n, n)).collect()
    }

    /// `(m, a_{m,n})` for fixed `n`, over every computed `m`.
    pub fn column(&self, n: u32) -> Vec<(u32, f64)> {
        (0..=self.max_level)
            .filter_map(|m| self.get(m, n).map(|v| (m, v)))
            .collect()
    }

    pub fn level_mean(&self, n: u32) -> f64 {
        self.level_means[n as usize]
    }

    /// Cauchy–Schwarz product bound `(w^m sum phi^{(m)}_{jj})(w^n sum phi^{(n)}_{kk})`.
    pub fn product_bound(&self, m: u32, n: u32) -> f64 {
        self.level_mean(m) * self.level_mean(n)
    }

    /// Every computed entry is at most its successor in each index
    /// (up to relative tolerance `rtol`).
    pub fn is_monotone(&self, rtol: f64) -> bool {
        self.iter().all(|(m, n, v)| {
            let ok = |next: Option<f64>| next.is_none_or(|w| v <= w * (1.0 + rtol));
            ok(self.get(m, n + 1)) && ok(self.get(m + 1, n))
        })
    }

    pub fn within_product_bound(&self, rtol: f64) -> bool {
        self.iter()
            .all(|(m, n, v)| v <= self.product_bound(m, n) * (1.0 + rtol))
    }
}

pub fn double_sequence(
    spec: &ProcessSpec,
    max_level: u32,
    scheme: WeightScheme,
    horizon: f64,
    guards: &Guards,
) -> Result<DoubleSequenceTable> {
    let limit = guards.double_sequence_sum;
    Guards::check("double-sequence", max_level, limit)?;
    let kernel = spec.kernel();
    let rate = scheme.rate(spec);
    let grids = (0..=max_level)
        .map(|l| DyadicGrid::new(l, horizon))
        .collect::<Result<Vec<_>>>()?;
    let level_means: Vec<f64> = grids
        .iter()
        .map(|g| (rate * g.level() as f64).exp2() * diagonal_sum(&kernel, &g.points()))
        .collect();

    let size = max_level as usize + 1;
    let mut entries = vec![vec![None; size]; size];
    for m in 0..=max_level {
        for n in m..=max_level {
            if m + n > limit {
                break;
            }
            let eval = CrossEvaluator::new(&kernel, &grids[m as usize], &grids[n as usize]);
            let sq = compensated_sum(eval.row_square_sums());
            let value = (rate * (m + n) as f64).exp2() * sq;
            entries[m as usize][n as usize] = Some(value);
            entries[n as usize][m as usize] = Some(value);
        }
    }
    Ok(DoubleSequenceTable {
        spec: *spec,
        scheme,
        horizon,
        max_level,
        entries,
        level_means,
    })
}

/// One entry `a_{m,n}` computed on its own, without a guard on `m + n`.
/// Cost is `O(2^{m+n})`.
pub fn double_sequence_entry(
    spec: &ProcessSpec,
    m: u32,
    n: u32,
    scheme: WeightScheme,
    horizon: f64,
) -> Result<f64> {
    let gm = DyadicGrid::new(m, horizon)?;
    let gn = DyadicGrid::new(n, horizon)?;
    let kernel = spec.kernel();
    let eval = CrossEvaluator::new(&kernel, &gm, &gn);
    let sq = compensated_sum(eval.row_square_sums());
    Ok((scheme.rate(spec) * (m + n) as f64).exp2() * sq)
}

/// Tri-fBm increment covariance through the integral of the mixed partial
/// over the cell, using a tensor Gauss–Legendre rule on `subdivisions^2`
/// sub-cells. Only defined away from the axes (`j, k > 1`).
pub fn phi_tri_integral(
    spec: &ProcessSpec,
    m: u32,
    n: u32,
    j: u64,
    k: u64,
    horizon: f64,
    subdivisions: usize,
) -> Result<f64> {
    if spec.kind() != ProcessKind::TriFbm {
        return Err(Error::Unsupported("integral representation is tri-fBm only".into()));
    }
    check_index(m, j, "j")?;
    check_index(n, k, "k")?;
    if j < 2 || k < 2 {
        return Err(Error::InvalidParameter(
            "integral representation requires j, k > 1".into(),
        ));
    }
    let (h, kp) = (spec.h(), spec.k().unwrap_or_default());
    let gm = DyadicGrid::new(m, horizon)?;
    let gn = DyadicGrid::new(n, horizon)?;
    let (s0, s1) = (gm.point(j as usize - 1), gm.point(j as usize));
    let (t0, t1) = (gn.point(k as usize - 1), gn.point(k as usize));
    // 4-point Gauss–Legendre on [-1, 1]
    const NODES: [f64; 4] = [
        -0.861_136_311_594_052_6,
        -0.339_981_043_584_856_3,
        0.339_981_043_584_856_3,
        0.861_136_311_594_052_6,
    ];
    const WEIGHTS: [f64; 4] = [
        0.347_854_845_137_453_9,
        0.652_145_154_862_546_1,
        0.652_145_154_862_546_1,
        0.347_854_845_137_453_9,
    ];
    let ds = (s1 - s0) / subdivisions as f64;
    let dt = (t1 - t0) / subdivisions as f64;
    let mut acc = NeumaierSum::new();
    for a in 0..subdivisions {
        for b in 0..subdivisions {
            let sc = s0 + (a as f64 + 0.5) * ds;
            let tc = t0 + (b as f64 + 0.5) * dt;
            for (xi, wi) in NODES.iter().zip(WEIGHTS) {
                for (yi, wj) in NODES.iter().zip(WEIGHTS) {
                    let s = sc + 0.5 * ds * xi;
                    let t = tc + 0.5 * dt * yi;
                    let d = crate::process::mixed_partial_cov_tri(h, kp, s, t)?;
                    acc.add(wi * wj * d);
                }
            }
        }
    }
    Ok(acc.value() * 0.25 * ds * dt)
}
