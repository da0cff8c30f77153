//! Covariance and structure functions of trifractional Brownian motion and
//! n-th order fractional Brownian motion.
//!
//! A [`ProcessSpec`] can only be built from parameters inside the open
//! parameter domain, so the evaluation routines below never re-check ranges.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{gen_binomial, normalizing_constant};
use crate::sum::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    TriFbm,
    NthFbm,
}

/// Validated description of a process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ProcessSpec {
    kind: ProcessKind,
    h: f64,
    k: f64,
    order: u32,
}

/// Wire form of a [`ProcessSpec`]; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RawSpec {
    TriFbm { h: f64, k: f64 },
    NthFbm { h: f64, order: u32 },
    Fbm { h: f64 },
}

impl TryFrom<RawSpec> for ProcessSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        match raw {
            RawSpec::TriFbm { h, k } => ProcessSpec::tri_fbm(h, k),
            RawSpec::NthFbm { h, order } => ProcessSpec::nth_fbm(h, order),
            RawSpec::Fbm { h } => ProcessSpec::fbm(h),
        }
    }
}

impl From<ProcessSpec> for RawSpec {
    fn from(spec: ProcessSpec) -> Self {
        match spec.kind {
            ProcessKind::TriFbm => RawSpec::TriFbm {
                h: spec.h,
                k: spec.k,
            },
            ProcessKind::NthFbm => RawSpec::NthFbm {
                h: spec.h,
                order: spec.order,
            },
        }
    }
}

impl fmt::Display for ProcessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ProcessKind::TriFbm => write!(f, "tri-fBm(H={}, K={})", self.h, self.k),
            ProcessKind::NthFbm => write!(f, "{}-fBm(H={})", self.order, self.h),
        }
    }
}

impl ProcessSpec {
    /// Trifractional Brownian motion, `0 < H < 1`, `0 < K < 1`.
    pub fn tri_fbm(h: f64, k: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) || !(k > 0.0 && k < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tri-fBm requires 0 < H < 1 and 0 < K < 1 (got H={h}, K={k})"
            )));
        }
        Ok(Self {
            kind: ProcessKind::TriFbm,
            h,
            k,
            order: 0,
        })
    }

    /// n-th order fractional Brownian motion, `order - 1 < H < order`.
    pub fn nth_fbm(h: f64, order: u32) -> Result<Self> {
        // also rejects integer H
        normalizing_constant(h, order)?;
        Ok(Self {
            kind: ProcessKind::NthFbm,
            h,
            k: f64::NAN,
            order,
        })
    }

    /// Fractional Brownian motion as the order-one case.
    pub fn fbm(h: f64) -> Result<Self> {
        Self::nth_fbm(h, 1)
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn k(&self) -> Option<f64> {
        (self.kind == ProcessKind::TriFbm).then_some(self.k)
    }

    pub fn order(&self) -> Option<u32> {
        (self.kind == ProcessKind::NthFbm).then_some(self.order)
    }

    /// `HK` for tri-fBm, `H` for n-fBm.
    pub fn self_similarity(&self) -> f64 {
        match self.kind {
            ProcessKind::TriFbm => self.h * self.k,
            ProcessKind::NthFbm => self.h,
        }
    }

    pub fn kernel(&self) -> CovarianceKernel {
        CovarianceKernel::new(self)
    }

    pub fn covariance(&self, s: f64, t: f64) -> Result<f64> {
        check_times(s, t)?;
        Ok(self.kernel().covariance(s, t))
    }

    /// `E[(X(t) - X(s))^2]`.
    pub fn structure_function(&self, s: f64, t: f64) -> Result<f64> {
        check_times(s, t)?;
        Ok(self.kernel().structure(s, t))
    }
}

fn check_times(s: f64, t: f64) -> Result<()> {
    if s >= 0.0 && t >= 0.0 && s.is_finite() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NegativeTime { s, t })
    }
}

/// Precomputed constants for fast covariance evaluation.
#[derive(Debug, Clone)]
pub enum CovarianceKernel {
    Tri {
        h2: f64,
        hk2: f64,
        k: f64,
    },
    Nth {
        h2: f64,
        order: u32,
        /// `(-1)^n C_H^n`
        signed_c: f64,
        /// `(-1)^j binom(2H, j)` for `j < order`
        signed_binom: Vec<f64>,
    },
}

impl CovarianceKernel {
    pub fn new(spec: &ProcessSpec) -> Self {
        match spec.kind {
            ProcessKind::TriFbm => CovarianceKernel::Tri {
                h2: 2.0 * spec.h,
                hk2: 2.0 * spec.h * spec.k,
                k: spec.k,
            },
            ProcessKind::NthFbm => {
                let c = normalizing_constant(spec.h, spec.order)
                    .expect("validated at construction");
                let sign = if spec.order % 2 == 0 { 1.0 } else { -1.0 };
                let signed_binom = (0..spec.order)
                    .map(|j| {
                        let b = gen_binomial(2.0 * spec.h, j);
                        if j % 2 == 0 {
                            b
                        } else {
                            -b
                        }
                    })
                    .collect();
                CovarianceKernel::Nth {
                    h2: 2.0 * spec.h,
                    order: spec.order,
                    signed_c: sign * c,
                    signed_binom,
                }
            }
        }
    }

    /// Covariance for `s, t >= 0`. Exactly symmetric and exactly zero when
    /// either argument is zero.
    pub fn covariance(&self, s: f64, t: f64) -> f64 {
        if s == 0.0 || t == 0.0 {
            return 0.0;
        }
        match self {
            CovarianceKernel::Tri { h2, hk2, k } => {
                (s.powf(*hk2) + t.powf(*hk2)) - (s.powf(*h2) + t.powf(*h2)).powf(*k)
            }
            CovarianceKernel::Nth {
                h2,
                signed_c,
                signed_binom,
                ..
            } => {
                let mut acc = NeumaierSum::new();
                acc.add((t - s).abs().powf(*h2));
                for (j, b) in signed_binom.iter().enumerate() {
                    let jf = j as f64;
                    let st = t.powf(jf) * s.powf(h2 - jf);
                    let ts = s.powf(jf) * t.powf(h2 - jf);
                    acc.add(-b * (st + ts));
                }
                0.5 * signed_c * acc.value()
            }
        }
    }

    /// Structure function in a regrouped form that avoids the leading-order
    /// cancellation between terms of size `t^(2 gamma)`.
    pub fn structure(&self, s: f64, t: f64) -> f64 {
        let (s, t) = if s <= t { (s, t) } else { (t, s) };
        if t == 0.0 || s == t {
            return 0.0;
        }
        // s = t (1 - delta), delta in (0, 1]
        let delta = (t - s) / t;
        let log_ratio = (-delta).ln_1p();
        // (1 - delta)^a - 1, with a = 0 handled exactly
        let pow_m1 = |a: f64| {
            if a == 0.0 {
                0.0
            } else {
                (a * log_ratio).exp_m1()
            }
        };
        match self {
            CovarianceKernel::Tri { h2, hk2, k } => {
                // eps = 1 - (s/t)^(2H)
                let eps = -pow_m1(*h2);
                let em = |x: f64| (k * (-x).ln_1p()).exp_m1();
                let bracket = 2.0 * em(0.5 * eps) - em(eps);
                2f64.powf(*k) * t.powf(*hk2) * bracket
            }
            CovarianceKernel::Nth {
                h2,
                signed_c,
                signed_binom,
                ..
            } => {
                let mut acc = NeumaierSum::new();
                let e_full = pow_m1(*h2);
                for (j, b) in signed_binom.iter().enumerate() {
                    let jf = j as f64;
                    let mut inner = NeumaierSum::new();
                    inner.add(pow_m1(h2 - jf));
                    inner.add(pow_m1(jf));
                    inner.add(-e_full);
                    acc.add(b * inner.value());
                }
                acc.add(-delta.powf(*h2));
                signed_c * t.powf(*h2) * acc.value()
            }
        }
    }

    /// Per-point quantities shared by every increment covariance on `points`
    /// (an increasing grid starting at a nonnegative time).
    pub fn increment_table(&self, points: &[f64]) -> IncrementTable {
        let n = points.len().saturating_sub(1);
        match self {
            CovarianceKernel::Tri { h2, .. } => IncrementTable {
                points: points.to_vec(),
                pow: points.iter().map(|x| x.powf(*h2)).collect(),
                diffs: (1..=n).map(|i| pow_diff(points[i - 1], points[i], *h2)).collect(),
                stride: 0,
            },
            CovarianceKernel::Nth { h2, order, .. } => {
                let stride = 2 * (*order as usize - 1);
                let mut diffs = Vec::with_capacity(n * stride);
                for i in 1..=n {
                    for j in 1..*order {
                        let jf = j as f64;
                        diffs.push(pow_diff(points[i - 1], points[i], h2 - jf));
                        diffs.push(pow_diff(points[i - 1], points[i], jf));
                    }
                }
                IncrementTable {
                    points: points.to_vec(),
                    pow: Vec::new(),
                    diffs,
                    stride,
                }
            }
        }
    }

    /// `Cov(X(a_j) - X(a_{j-1}), X(b_k) - X(b_{k-1}))` for 1-based increments
    /// of two tables built by this kernel. Symmetric under swapping the
    /// arguments, and free of cancellation at the scale of `C` itself.
    pub fn increment_cov(&self, ta: &IncrementTable, j: usize, tb: &IncrementTable, k: usize) -> f64 {
        match self {
            CovarianceKernel::Tri { k: kk, .. } => {
                let x = ta.pow[j - 1] + tb.pow[k - 1];
                -second_diff_pow(x, ta.diffs[j - 1], tb.diffs[k - 1], *kk)
            }
            CovarianceKernel::Nth {
                h2,
                signed_c,
                signed_binom,
                ..
            } => {
                let (a0, a1) = (ta.points[j - 1], ta.points[j]);
                let (b0, b1) = (tb.points[k - 1], tb.points[k]);
                let mut acc = NeumaierSum::new();
                acc.add(-abs_pow_second_diff(a0, a1, b0, b1, *h2));
                let da = &ta.diffs[(j - 1) * ta.stride..j * ta.stride];
                let db = &tb.diffs[(k - 1) * tb.stride..k * tb.stride];
                for (i, b) in signed_binom.iter().enumerate().skip(1) {
                    let o = 2 * (i - 1);
                    acc.add(-b * (da[o] * db[o + 1] + da[o + 1] * db[o]));
                }
                0.5 * signed_c * acc.value()
            }
        }
    }

    /// Single increment covariance for `0 <= a0 < a1`, `0 <= b0 < b1`.
    pub fn increment_covariance(&self, a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
        let ta = self.increment_table(&[a0, a1]);
        let tb = self.increment_table(&[b0, b1]);
        self.increment_cov(&ta, 1, &tb, 1)
    }

    /// Structure function as `C(s,s) + C(t,t) - 2 C(s,t)`.
    pub fn structure_from_covariance(&self, s: f64, t: f64) -> f64 {
        let mut acc = NeumaierSum::new();
        acc.add(self.covariance(s, s));
        acc.add(self.covariance(t, t));
        acc.add(-2.0 * self.covariance(s, t));
        acc.value()
    }
}

/// Cached grid data for [`CovarianceKernel::increment_cov`].
#[derive(Debug, Clone)]
pub struct IncrementTable {
    points: Vec<f64>,
    /// Tri-fBm: `x_i^{2H}`.
    pow: Vec<f64>,
    /// Tri-fBm: `x_i^{2H} - x_{i-1}^{2H}` per increment. n-fBm: for each
    /// `j = 1..order`, the pair of differences of `x^{2H-j}` and `x^j`.
    diffs: Vec<f64>,
    stride: usize,
}

impl IncrementTable {
    /// Number of increments.
    pub fn len(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `x1^p - x0^p` for `0 <= x0 <= x1`, accurate when the two are close.
fn pow_diff(x0: f64, x1: f64, p: f64) -> f64 {
    if p == 0.0 || x0 == x1 {
        0.0
    } else if x0 == 0.0 {
        x1.powf(p)
    } else {
        -x1.powf(p) * (p * ((x0 - x1) / x1).ln_1p()).exp_m1()
    }
}

/// `(x+u+v)^p - (x+u)^p - (x+v)^p + x^p` for `x >= 0`, `u, v > 0`,
/// exactly symmetric in `u` and `v`.
fn second_diff_pow(x: f64, u: f64, v: f64, p: f64) -> f64 {
    if x == 0.0 {
        return (u + v).powf(p) - (u.powf(p) + v.powf(p));
    }
    let e = |y: f64| (p * (y / x).ln_1p()).exp_m1();
    x.powf(p) * (e(u + v) - (e(u) + e(v)))
}

/// Second difference of `|b - a|^p` over `[a0, a1] x [b0, b1]`, in the sign
/// convention `g(b0-a1) + g(b1-a0) - g(b0-a0) - g(b1-a1)`.
fn abs_pow_second_diff(a0: f64, a1: f64, b0: f64, b1: f64, p: f64) -> f64 {
    let (u, v) = (a1 - a0, b1 - b0);
    let y = b0 - a1;
    let z = a0 - b1;
    if y > 0.0 {
        second_diff_pow(y, u, v, p)
    } else if z > 0.0 {
        second_diff_pow(z, u, v, p)
    } else {
        let g = |d: f64| d.abs().powf(p);
        (g(y) + g(z)) - (g(b0 - a0) + g(b1 - a1))
    }
}

/// `d^2 C_{H,K} / ds dt` for tri-fBm at `s, t > 0`.
pub fn mixed_partial_cov_tri(h: f64, k: f64, s: f64, t: f64) -> Result<f64> {
    ProcessSpec::tri_fbm(h, k)?;
    if !(s > 0.0 && t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mixed partial is singular unless s, t > 0 (got s={s}, t={t})"
        )));
    }
    let h2 = 2.0 * h;
    Ok(4.0 * k * (1.0 - k) * h * h * (t.powf(h2) + s.powf(h2)).powf(k - 2.0) * (s * t).powf(h2 - 1.0))
}

/// Upper envelope `2^K K (1-K) H^2 (st)^(HK-1)` of the tri-fBm mixed partial.
pub fn mixed_partial_envelope(h: f64, k: f64, s: f64, t: f64) -> f64 {
    2f64.powf(k) * k * (1.0 - k) * h * h * (s * t).powf(h * k - 1.0)
}

/// Leading term `coefficient * t^exponent` of `psi(t-1, t)` as `t` grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCoeff {
    pub coefficient: f64,
    pub exponent: f64,
}

/// Asymptotic coefficient of the adjacent-point structure function of an
/// n-fBm with `order >= 2`: `C_{H-1}^{order-1} binom(2H-3, order-2)`.
pub fn psi_asymptotic_coeff(h: f64, order: u32) -> Result<AsymptoticCoeff> {
    if order < 2 {
        return Err(Error::InvalidParameter(format!(
            "asymptotic coefficient requires order >= 2 (got {order})"
        )));
    }
    ProcessSpec::nth_fbm(h, order)?;
    let c = normalizing_constant(h - 1.0, order - 1)?;
    Ok(AsymptoticCoeff {
        coefficient: c * gen_binomial(2.0 * h - 3.0, order - 2),
        exponent: 2.0 * h - 2.0,
    })
}

/// `psi(t-1, t)` through the regrouped evaluation path, for `t >= 1`.
pub fn psi_adjacent(spec: &ProcessSpec, t: f64) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(Error::InvalidParameter(format!("need t >= 1 (got {t})")));
    }
    spec.structure_function(t - 1.0, t)
}
