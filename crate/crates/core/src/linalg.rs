//! Dense Cholesky factorization with a fixed jitter schedule.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Jitter multipliers of the trace, tried in order.
pub const JITTER_SCHEDULE: [f64; 4] = [0.0, 1e-14, 1e-12, 1e-10];

/// Lower-triangular factor `L` with `L L^T = A + jitter * I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    /// Row-major, zeros above the diagonal.
    lower: Vec<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Absolute diagonal shift that was added (a multiple of the trace).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.lower[i * self.dim..i * self.dim + i + 1]
    }

    /// `out = L z`.
    pub fn mul_vec(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = dot(self.row(i), &z[..=i]);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn try_factor(a: &[f64], dim: usize, shift: f64) -> std::result::Result<Vec<f64>, usize> {
    let mut l = vec![0.0; dim * dim];
    for j in 0..dim {
        let (done, rest) = l.split_at_mut((j + 1) * dim);
        let row_j = &mut done[j * dim..(j + 1) * dim];
        let d = a[j * dim + j] + shift - dot(&row_j[..j], &row_j[..j]);
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        let pivot = d.sqrt();
        row_j[j] = pivot;
        let row_j = &done[j * dim..j * dim + j];
        rest.par_chunks_mut(dim).enumerate().for_each(|(off, row_i)| {
            let i = j + 1 + off;
            row_i[j] = (a[i * dim + j] - dot(&row_i[..j], row_j)) / pivot;
        });
    }
    Ok(l)
}

/// Factors a symmetric matrix given in row-major order, adding the smallest
/// scheduled jitter `eps * trace` for which the factorization succeeds.
pub fn cholesky_with_jitter(matrix: &[f64], dim: usize) -> Result<CholeskyFactor> {
    if matrix.len() != dim * dim {
        return Err(Error::LengthMismatch {
            expected: dim * dim,
            actual: matrix.len(),
        });
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let trace: f64 = (0..dim).map(|i| matrix[i * dim + i]).sum();
    let mut last_pivot = 0;
    let mut last_shift = 0.0;
    for eps in JITTER_SCHEDULE {
        let shift = eps * trace.abs();
        match try_factor(matrix, dim, shift) {
            Ok(lower) => {
                return Ok(CholeskyFactor {
                    dim,
                    lower,
                    jitter: shift,
                })
            }
            Err(p) => {
                last_pivot = p;
                last_shift = shift;
            }
        }
    }
    Err(Error::NotPositiveSemidefinite {
        pivot: last_pivot,
        jitter: last_shift,
    })
}
