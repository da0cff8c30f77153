//! Weighted quadratic variation, the self-similarity index estimator, and
//! the finite-level classification of `S_n^alpha` trends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guards::Guards;
use crate::increments::{exact_moments, DyadicGrid, MomentPair};
use crate::process::{ProcessKind, ProcessSpec};
use crate::sum::compensated_sum;

fn check_len(increments: &[f64], n: u32) -> Result<()> {
    let expected = 1usize
        .checked_shl(n)
        .ok_or_else(|| Error::InvalidParameter(format!("level {n} is too large")))?;
    if increments.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: increments.len(),
        });
    }
    Ok(())
}

/// `S_n^alpha = 2^{alpha n} sum_k dx_k^2`.
pub fn weighted_qv(increments: &[f64], alpha: f64, n: u32) -> Result<f64> {
    check_len(increments, n)?;
    Ok((alpha * n as f64).exp2() * compensated_sum(increments.iter().map(|x| x * x)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSource {
    SinglePath,
    ExactMeanProxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HkEstimate {
    pub level: u32,
    pub value: f64,
    pub source: EstimateSource,
}

fn log_estimate(quadratic_sum: f64, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("estimator needs level n >= 1".into()));
    }
    if !(quadratic_sum > 0.0) {
        return Err(Error::Degenerate(format!(
            "quadratic sum must be positive (got {quadratic_sum})"
        )));
    }
    Ok(-quadratic_sum.log2() / (2.0 * n as f64))
}

/// `-log2(sum_k dx_k^2) / (2n)` for a single observed path.
pub fn estimate_hk(increments: &[f64], n: u32) -> Result<HkEstimate> {
    let q = weighted_qv(increments, 0.0, n)?;
    Ok(HkEstimate {
        level: n,
        value: log_estimate(q, n)?,
        source: EstimateSource::SinglePath,
    })
}

/// The estimator applied to the exact expected quadratic sum instead of a
/// sample. Deterministic; converges to `HK` with `O(1/n)` bias when `HK <= 1/2`.
pub fn estimate_hk_exact_proxy(
    spec: &ProcessSpec,
    n: u32,
    horizon: f64,
    guards: &Guards,
) -> Result<HkEstimate> {
    if spec.kind() != ProcessKind::TriFbm {
        return Err(Error::Unsupported(
            "the self-similarity estimator is defined for tri-fBm only".into(),
        ));
    }
    let mean_only = Guards {
        variance_level: 0,
        ..*guards
    };
    let moments = exact_moments(spec, n, 0.0, horizon, &mean_only)?;
    Ok(HkEstimate {
        level: n,
        value: log_estimate(moments.mean, n)?,
        source: EstimateSource::ExactMeanProxy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Vanishing,
    Diverging,
    Stabilizing,
    Inconclusive,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Vanishing => "vanishing",
            Classification::Diverging => "diverging",
            Classification::Stabilizing => "stabilizing",
            Classification::Inconclusive => "inconclusive",
        }
    }
}

/// Per-level factors used to read a trend off the last three steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyThresholds {
    /// A step counts as growth (decay) if the ratio is at least `growth`
    /// (at most `1/growth`). 1.1 separates a `2^{0.2 n}` drift (ratio 1.149).
    pub growth: f64,
    pub stable_low: f64,
    pub stable_high: f64,
    /// Number of trailing steps inspected.
    pub steps: usize,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        Self {
            growth: 1.1,
            stable_low: 0.95,
            stable_high: 1.05,
            steps: 3,
        }
    }
}

/// Sample statistics of `S_n^alpha` over an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStat {
    pub mean: f64,
    pub std_error: f64,
    pub variance: f64,
    pub num_paths: usize,
}

impl EmpiricalStat {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        let n = samples.len();
        if n < 2 {
            return None;
        }
        let mean = compensated_sum(samples.iter().copied()) / n as f64;
        let variance = compensated_sum(samples.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
        Some(Self {
            mean,
            std_error: (variance / n as f64).sqrt(),
            variance,
            num_paths: n,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QvSweepResult {
    pub spec: ProcessSpec,
    pub alpha: f64,
    pub horizon: f64,
    pub levels: Vec<u32>,
    pub exact_mean: Vec<Option<f64>>,
    pub exact_var: Vec<Option<f64>>,
    pub empirical: Vec<Option<EmpiricalStat>>,
    pub classification: Classification,
}

impl QvSweepResult {
    /// Sweep with exact means (and variances where the guard allows) at the
    /// given levels, classified with the default thresholds.
    pub fn exact(
        spec: &ProcessSpec,
        alpha: f64,
        levels: &[u32],
        horizon: f64,
        guards: &Guards,
    ) -> Result<Self> {
        let base = levels
            .iter()
            .map(|&n| {
                if n <= guards.mean_level {
                    exact_moments(spec, n, 0.0, horizon, guards).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_base_moments(
            spec,
            alpha,
            horizon,
            &base,
            &ClassifyThresholds::default(),
        ))
    }

    /// Builds a sweep from unweighted (`alpha = 0`) moments; the weight
    /// `2^{alpha n}` is applied here so one set of moments serves every alpha.
    pub fn from_base_moments(
        spec: &ProcessSpec,
        alpha: f64,
        horizon: f64,
        base: &[Option<MomentPair>],
        thresholds: &ClassifyThresholds,
    ) -> Self {
        let levels: Vec<u32> = base.iter().flatten().map(|m| m.level).collect();
        let weight = |n: u32| (alpha * n as f64).exp2();
        let present: Vec<&MomentPair> = base.iter().flatten().collect();
        let mut sweep = Self {
            spec: *spec,
            alpha,
            horizon,
            levels,
            exact_mean: present.iter().map(|m| Some(weight(m.level) * m.mean)).collect(),
            exact_var: present
                .iter()
                .map(|m| m.variance.map(|v| weight(m.level).powi(2) * v))
                .collect(),
            empirical: vec![None; present.len()],
            classification: Classification::Inconclusive,
        };
        if let Ok(c) = classify_convergence(&sweep, thresholds) {
            sweep.classification = c;
        }
        sweep
    }

    /// Fills the empirical column from simulated ensembles.
    pub fn attach_empirical(&mut self, level: u32, samples: &[f64]) {
        if let Some(i) = self.levels.iter().position(|&l| l == level) {
            self.empirical[i] = EmpiricalStat::from_samples(samples);
        }
    }
}

/// Reads the trend of the exact means over the trailing levels.
pub fn classify_convergence(
    sweep: &QvSweepResult,
    thresholds: &ClassifyThresholds,
) -> Result<Classification> {
    let present: Vec<(u32, f64)> = sweep
        .levels
        .iter()
        .zip(&sweep.exact_mean)
        .filter_map(|(&l, m)| m.map(|m| (l, m)))
        .collect();
    let need = thresholds.steps + 1;
    if present.len() < need {
        return Err(Error::Insufficient(format!(
            "need {need} levels with exact means, have {}",
            present.len()
        )));
    }
    let tail = &present[present.len() - need..];
    if tail.windows(2).any(|w| w[1].0 != w[0].0 + 1) {
        return Err(Error::Insufficient(
            "trailing levels with exact means are not consecutive".into(),
        ));
    }
    if tail.iter().any(|&(_, m)| !(m > 0.0)) {
        return Ok(Classification::Inconclusive);
    }
    let ratios: Vec<f64> = tail.windows(2).map(|w| w[1].1 / w[0].1).collect();
    let g = thresholds.growth;
    Ok(if ratios.iter().all(|&r| r <= 1.0 / g) {
        Classification::Vanishing
    } else if ratios.iter().all(|&r| r >= g) {
        Classification::Diverging
    } else if ratios
        .iter()
        .all(|&r| r >= thresholds.stable_low && r <= thresholds.stable_high)
    {
        Classification::Stabilizing
    } else {
        Classification::Inconclusive
    })
}

/// `S_n^alpha` for every path of an ensemble.
pub fn ensemble_qv(paths: impl Iterator<Item = impl AsRef<[f64]>>, alpha: f64, grid: &DyadicGrid) -> Result<Vec<f64>> {
    paths
        .map(|p| weighted_qv(p.as_ref(), alpha, grid.level()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_qv_examples() {
        assert_eq!(weighted_qv(&[0.0; 8], 1.3, 3).unwrap(), 0.0);
        assert_eq!(weighted_qv(&[0.5], 1.0, 0).unwrap(), 0.25);
        assert!(matches!(
            weighted_qv(&[1.0; 3], 1.0, 2),
            Err(Error::LengthMismatch { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn estimator_on_constant_increments() {
        for n in 1..12u32 {
            let inc = vec![(-(n as f64)).exp2(); 1 << n];
            let e = estimate_hk(&inc, n).unwrap();
            assert!((e.value - 0.5).abs() < 1e-15);
            assert_eq!(e.source, EstimateSource::SinglePath);
        }
    }

    #[test]
    fn estimator_errors() {
        assert!(matches!(estimate_hk(&[0.0; 4], 2), Err(Error::Degenerate(_))));
        assert!(estimate_hk(&[1.0], 0).is_err());
        let n2 = ProcessSpec::nth_fbm(1.5, 2).unwrap();
        assert!(estimate_hk_exact_proxy(&n2, 4, 1.0, &Guards::default()).is_err());
    }

    fn sweep_of(means: &[f64]) -> QvSweepResult {
        QvSweepResult {
            spec: ProcessSpec::tri_fbm(0.5, 0.5).unwrap(),
            alpha: 1.0,
            horizon: 1.0,
            levels: (0..means.len() as u32).collect(),
            exact_mean: means.iter().map(|&m| Some(m)).collect(),
            exact_var: vec![None; means.len()],
            empirical: vec![None; means.len()],
            classification: Classification::Inconclusive,
        }
    }

    #[test]
    fn classification_rules() {
        let t = ClassifyThresholds::default();
        assert_eq!(classify_convergence(&sweep_of(&[1.0; 5]), &t).unwrap(), Classification::Stabilizing);
        let up: Vec<f64> = (0..6).map(|n| (0.2 * n as f64).exp2()).collect();
        assert_eq!(classify_convergence(&sweep_of(&up), &t).unwrap(), Classification::Diverging);
        let down: Vec<f64> = (0..6).map(|n| (-0.2 * n as f64).exp2()).collect();
        assert_eq!(classify_convergence(&sweep_of(&down), &t).unwrap(), Classification::Vanishing);
        let mixed = [1.0, 2.0, 1.0, 2.0];
        assert_eq!(classify_convergence(&sweep_of(&mixed), &t).unwrap(), Classification::Inconclusive);
        assert!(classify_convergence(&sweep_of(&[1.0, 1.0, 1.0]), &t).is_err());
    }

    #[test]
    fn classification_needs_consecutive_levels() {
        let mut s = sweep_of(&[1.0; 4]);
        s.levels = vec![0, 1, 2, 4];
        assert!(classify_convergence(&s, &ClassifyThresholds::default()).is_err());
    }

    #[test]
    fn empirical_stats() {
        let s = EmpiricalStat::from_samples(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!(EmpiricalStat::from_samples(&[1.0]).is_none());
    }
}
