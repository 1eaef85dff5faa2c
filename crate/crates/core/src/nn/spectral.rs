use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            tol: 1e-13,
            max_iters: 20_000,
        }
    }
}

/// Largest singular value by power iteration on `AᵀA`.
///
/// The start vector is fixed (a deterministic quasi-random pattern), so the
/// result depends only on the matrix. Convergence is declared once the
/// eigen-residual `‖AᵀAv − σ²v‖` falls below `tol · σ²`.
pub fn spectral_norm(a: &Array2<f64>, tol: f64, max_iters: usize) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Empty("spectral norm of an empty matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral norm input".into()));
    }
    let n = a.ncols();
    // Weyl sequence start: avoids being orthogonal to the top singular vector
    // for structured matrices the way an all-ones start can be.
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract());
    v /= v.dot(&v).sqrt();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let av = a.dot(&v);
        let w = a.t().dot(&av);
        let lambda = v.dot(&w);
        if lambda <= 0.0 {
            // v ⟂ row space: restart from the largest column, or the matrix is zero.
            let norm = w.dot(&w).sqrt();
            if a.iter().all(|&x| x == 0.0) {
                return Ok(0.0);
            }
            if norm == 0.0 {
                let j = (0..n)
                    .max_by(|&x, &y| {
                        let cx: f64 = a.column(x).iter().map(|t| t * t).sum();
                        let cy: f64 = a.column(y).iter().map(|t| t * t).sum();
                        cx.total_cmp(&cy)
                    })
                    .unwrap();
                v.fill(0.0);
                v[j] = 1.0;
                continue;
            }
        }
        let r = &w - &(&v * lambda);
        residual = r.dot(&r).sqrt();
        if residual <= tol * lambda.abs().max(f64::MIN_POSITIVE) {
            return Ok(lambda.max(0.0).sqrt());
        }
        let norm = w.dot(&w).sqrt();
        v = w / norm;
    }
    Err(Error::NoConvergence {
        iters: max_iters,
        residual,
    })
}
