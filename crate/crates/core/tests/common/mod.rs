//! Shared test support: an independent least-squares oracle.
//!
//! The oracle computes the Moore-Penrose pseudoinverse explicitly through a
//! one-sided Jacobi SVD with accumulated right rotations. It shares no code
//! with the library's solver path (Gram matrix + Cholesky, CGLS fallback),
//! so agreement between the two is a real cross-check.

use ndarray::{Array1, Array2, ArrayView1};

/// Explicit pseudoinverse solution of `min_x |B x - y|`.
pub fn pinv_solve(b: &Array2<f64>, y: ArrayView1<f64>) -> Array1<f64> {
    let (m, n) = (b.nrows(), b.ncols());
    assert!(m >= n, "oracle expects an overdetermined system");
    let mut w = b.clone(); // columns become sigma_j * u_j
    let mut v = Array2::<f64>::eye(n); // accumulated right rotations

    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let app: f64 = (0..m).map(|i| w[(i, p)] * w[(i, p)]).sum();
                let aqq: f64 = (0..m).map(|i| w[(i, q)] * w[(i, q)]).sum();
                let apq: f64 = (0..m).map(|i| w[(i, p)] * w[(i, q)]).sum();
                let denom = (app * aqq).sqrt().max(f64::MIN_POSITIVE);
                off = off.max(apq.abs() / denom);
                if apq.abs() <= 1e-15 * denom {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }

    // x = V diag(1/sigma) U^T y with small singular values dropped.
    let sigmas: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let sigma_max = sigmas.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = sigma_max * 1e-13;
    let mut x = Array1::<f64>::zeros(n);
    for j in 0..n {
        if sigmas[j] <= cutoff {
            continue;
        }
        let uty: f64 = (0..m).map(|i| w[(i, j)] / sigmas[j] * y[i]).sum();
        for i in 0..n {
            x[i] += v[(i, j)] * uty / sigmas[j];
        }
    }
    x
}
