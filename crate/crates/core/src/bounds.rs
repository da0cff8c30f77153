//! Upper bounds on tri-fBm increment covariances `phi^{(m,n)}_{j,k}` on the
//! unit horizon, and exhaustive verification against exact values.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::guards::Guards;
use crate::increments::phi_matrix;
use crate::process::ProcessSpec;

/// Relative slack tolerated before a bound counts as violated.
pub const BOUND_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundId {
    /// `L1 2^{-(n+m)HK} (k-1)^{HK-1} (j-1)^{HK-1}`, for `j, k > 1`.
    Cross,
    /// `L2`-bound, with the `H >= 1/2` or `H < 1/2` variant, for `j, k > 1`.
    CrossRefined,
    /// `L3 (k-1)^{2HK-1-2H} 2^{-2Hm + (2H-2HK)n}`, for `j = 1, k > 1`.
    FirstRowFine,
    /// `2HK (k-1)^{2HK-1} 2^{-2HKn}`, for `j = 1, k > 1`.
    FirstRow,
}

impl BoundId {
    pub const ALL: [BoundId; 4] = [
        BoundId::Cross,
        BoundId::CrossRefined,
        BoundId::FirstRowFine,
        BoundId::FirstRow,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundId::Cross => "cross",
            BoundId::CrossRefined => "cross_refined",
            BoundId::FirstRowFine => "first_row_fine",
            BoundId::FirstRow => "first_row",
        }
    }
}

/// Cell `(m, n, j, k)`: increment `j` at level `m` against increment `k` at level `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub m: u32,
    pub n: u32,
    pub j: u64,
    pub k: u64,
}

/// Right-hand sides of the four bounds; `None` where a bound does not apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriBounds {
    pub cross: Option<f64>,
    pub cross_refined: Option<f64>,
    pub first_row_fine: Option<f64>,
    pub first_row: Option<f64>,
}

impl TriBounds {
    pub fn get(&self, id: BoundId) -> Option<f64> {
        match id {
            BoundId::Cross => self.cross,
            BoundId::CrossRefined => self.cross_refined,
            BoundId::FirstRowFine => self.first_row_fine,
            BoundId::FirstRow => self.first_row,
        }
    }

    pub fn applicable(&self) -> impl Iterator<Item = (BoundId, f64)> + '_ {
        BoundId::ALL
            .into_iter()
            .filter_map(|id| self.get(id).map(|v| (id, v)))
    }
}

pub fn l1(h: f64, k: f64) -> f64 {
    k.exp2() * (1.0 - k) * k * h * h
}

pub fn l2(h: f64, k: f64) -> f64 {
    4.0 * k * (1.0 - k) * h * h
}

pub fn l3(h: f64, k: f64) -> f64 {
    2.0 * h * k * (1.0 - k)
}

/// Evaluates every bound applicable to `cell`.
pub fn tri_bounds(h: f64, k: f64, cell: Cell) -> Result<TriBounds> {
    ProcessSpec::tri_fbm(h, k)?;
    let Cell { m, n, j, k: kk } = cell;
    let hk = h * k;
    let (mf, nf) = (m as f64, n as f64);
    let (jf, kf) = (j as f64, kk as f64);
    let mut out = TriBounds {
        cross: None,
        cross_refined: None,
        first_row_fine: None,
        first_row: None,
    };
    if j > 1 && kk > 1 {
        out.cross = Some(
            l1(h, k)
                * (-(mf + nf) * hk).exp2()
                * (kf - 1.0).powf(hk - 1.0)
                * (jf - 1.0).powf(hk - 1.0),
        );
        let along_j = (jf - 1.0).powf(2.0 * hk - 4.0 * h)
            / (2.0 * h * nf + (2.0 * hk - 2.0 * h) * mf).exp2();
        let along_k = (kf - 1.0).powf(2.0 * hk - 4.0 * h)
            / (2.0 * h * mf + (2.0 * hk - 2.0 * h) * nf).exp2();
        let prefactor = if h >= 0.5 {
            (jf * kf).powf(2.0 * h - 1.0)
        } else {
            ((jf - 1.0) * (kf - 1.0)).powf(2.0 * h - 1.0)
        };
        out.cross_refined = Some(l2(h, k) * prefactor * along_j.min(along_k));
    }
    if j == 1 && kk > 1 {
        out.first_row_fine = Some(
            l3(h, k)
                * (kf - 1.0).powf(2.0 * hk - 1.0 - 2.0 * h)
                * (-2.0 * h * mf + (2.0 * h - 2.0 * hk) * nf).exp2(),
        );
        out.first_row = Some(2.0 * hk * (kf - 1.0).powf(2.0 * hk - 1.0) * (-2.0 * hk * nf).exp2());
    }
    Ok(out)
}

/// One bound evaluated at one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub h: f64,
    pub k: f64,
    pub cell: Cell,
    pub bound: BoundId,
    pub phi: f64,
    pub value: f64,
}

impl BoundCheck {
    pub fn slack(&self) -> f64 {
        self.value - self.phi
    }

    pub fn is_violation(&self) -> bool {
        self.slack() < -BOUND_RTOL * self.value.abs()
    }

    /// Slack relative to the bound magnitude.
    pub fn relative_slack(&self) -> f64 {
        self.slack() / self.value.abs().max(f64::MIN_POSITIVE)
    }
}

/// Visits every applicable `(cell, bound)` pair at levels `(m, n)` in
/// row-major cell order.
pub fn for_each_bound_check<F: FnMut(&BoundCheck)>(
    h: f64,
    k: f64,
    m: u32,
    n: u32,
    guards: &Guards,
    mut visit: F,
) -> Result<()> {
    let spec = ProcessSpec::tri_fbm(h, k)?;
    let mat = phi_matrix(&spec, m, n, 1.0, guards)?;
    for j in 1..=mat.rows() {
        for kk in 1..=mat.cols() {
            let cell = Cell {
                m,
                n,
                j: j as u64,
                k: kk as u64,
            };
            let bounds = tri_bounds(h, k, cell)?;
            let phi = mat.entry(j, kk);
            for (bound, value) in bounds.applicable() {
                visit(&BoundCheck {
                    h,
                    k,
                    cell,
                    bound,
                    phi,
                    value,
                });
            }
        }
    }
    Ok(())
}

/// Outcome of checking one `(H, K, m, n)` block.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BoundSummary {
    pub checked: usize,
    pub violations: Vec<BoundCheck>,
    /// Tightest cell per bound (smallest relative slack).
    pub tightest: Vec<BoundCheck>,
}

impl BoundSummary {
    pub fn merge(&mut self, other: BoundSummary) {
        self.checked += other.checked;
        self.violations.extend(other.violations);
        self.tightest.extend(other.tightest);
    }
}

pub fn verify_tri_bounds(h: f64, k: f64, m: u32, n: u32, guards: &Guards) -> Result<BoundSummary> {
    let mut summary = BoundSummary::default();
    let mut tightest: [Option<BoundCheck>; 4] = [None; 4];
    for_each_bound_check(h, k, m, n, guards, |c| {
        summary.checked += 1;
        if c.is_violation() {
            summary.violations.push(*c);
        }
        let slot = &mut tightest[c.bound as usize];
        if slot.is_none_or(|t| c.relative_slack() < t.relative_slack()) {
            *slot = Some(*c);
        }
    })?;
    summary.tightest = tightest.into_iter().flatten().collect();
    Ok(summary)
}
