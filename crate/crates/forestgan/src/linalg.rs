//! Singular value decomposition and condition numbers for dense matrices.
//!
//! Uses one-sided (Hestenes) Jacobi rotations: slower than blocked
//! bidiagonalization but simple, robust, and accurate to near machine
//! precision for small singular values — which is exactly the regime a
//! conditioning diagnostic cares about.

use crate::error::{Error, Result};

/// Relative scale for deciding that a singular value is numerically zero:
/// `cutoff = 1e-12 * sigma_max * max(rows, cols)`.
pub const RANK_TOL_SCALE: f64 = 1e-12;

const MAX_SWEEPS: usize = 64;
const ORTHO_TOL: f64 = 1e-15;

/// Singular values of a matrix, descending, with the originating shape.
#[derive(Debug, Clone)]
pub struct SingularSpectrum {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl SingularSpectrum {
    /// All singular values, largest first. Length is `min(rows, cols)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }

    pub fn min_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Threshold below which a singular value counts as zero.
    pub fn cutoff(&self) -> f64 {
        RANK_TOL_SCALE * self.max_value() * self.rows.max(self.cols) as f64
    }

    /// Number of singular values above the cutoff.
    pub fn rank(&self) -> usize {
        let c = self.cutoff();
        self.values.iter().filter(|v| **v > c).count()
    }

    /// Rank-truncated condition number: ratio of the largest singular value
    /// to the smallest one above the cutoff. Truncation keeps curves finite
    /// and comparable when a matrix carries numerically-zero directions; pair
    /// it with [`rank`](Self::rank) to recover the unfiltered reading (a
    /// deficient rank means the raw ratio has blown up).
    ///
    /// Errors with [`Error::DegenerateMatrix`] when every singular value sits
    /// below the cutoff — callers that need a loggable value conventionally
    /// report that case as ∞.
    pub fn condition_number(&self) -> Result<f64> {
        let c = self.cutoff();
        match self.values.iter().rev().find(|v| **v > c) {
            Some(min) => Ok(self.max_value() / min),
            None => Err(Error::DegenerateMatrix { tolerance: RANK_TOL_SCALE }),
        }
    }

    /// Unfiltered ratio of largest to smallest singular value over the whole
    /// spectrum; the ∞ sentinel when the smallest is exactly zero (which
    /// includes the all-zero matrix).
    pub fn raw_condition(&self) -> f64 {
        let min = self.min_value();
        if min == 0.0 {
            f64::INFINITY
        } else {
            self.max_value() / min
        }
    }
}

/// Singular values of a row-major `rows x cols` matrix.
pub fn singular_values(data: &[f64], rows: usize, cols: usize) -> Result<SingularSpectrum> {
    if rows == 0 || cols == 0 || data.len() != rows * cols {
        return Err(Error::Contract(format!(
            "singular_values: {rows}x{cols} with {} elements",
            data.len()
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            op: "singular_values".into(),
        });
    }

    // Work with the shape that has fewer columns; the spectrum is
    // transpose-invariant and Jacobi cost scales with cols^2.
    let mut columns: Vec<Vec<f64>> = if cols <= rows {
        (0..cols)
            .map(|j| (0..rows).map(|i| data[i * cols + j]).collect())
            .collect()
    } else {
        (0..rows).map(|i| data[i * cols..(i + 1) * cols].to_vec()).collect()
    };
    let n = columns.len();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = col_moments(&columns[p], &columns[q]);
                let scale = (alpha * beta).sqrt();
                if scale == 0.0 || gamma.abs() <= ORTHO_TOL * scale {
                    continue;
                }
                rotated = true;
                // Classic Rutishauser rotation zeroing the p,q inner product.
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = columns.split_at_mut(q);
                let cp = &mut left[p];
                let cq = &mut right[0];
                for (vp, vq) in cp.iter_mut().zip(cq.iter_mut()) {
                    let a = *vp;
                    let b = *vq;
                    *vp = c * a - s * b;
                    *vq = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut values: Vec<f64> = columns
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(SingularSpectrum { values, rows, cols })
}

fn col_moments(cp: &[f64], cq: &[f64]) -> (f64, f64, f64) {
    let mut alpha = 0.0;
    let mut beta = 0.0;
    let mut gamma = 0.0;
    for (a, b) in cp.iter().zip(cq) {
        alpha += a * a;
        beta += b * b;
        gamma += a * b;
    }
    (alpha, beta, gamma)
}

/// Rank-truncated condition number of a row-major matrix; degenerate when
/// every singular value falls below the cutoff.
pub fn condition_number(data: &[f64], rows: usize, cols: usize) -> Result<f64> {
    singular_values(data, rows, cols)?.condition_number()
}
