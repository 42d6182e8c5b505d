//! Small dense linear-algebra kernels used by the solvers and metrics.
//!
//! Everything here is deterministic: fixed iteration counts, fixed
//! summation order, no randomized pivoting. That keeps trajectories
//! bit-reproducible across runs and worker counts.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Lower-triangular Cholesky factor of a symmetric matrix, or `None` when a
/// pivot is not strictly positive (matrix numerically not SPD).
pub(crate) fn cholesky(g: &Array2<f64>) -> Option<Array2<f64>> {
    let n = g.nrows();
    debug_assert_eq!(n, g.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = g[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Some(l)
}

/// Solves `L L^T x = b` given the lower Cholesky factor.
pub(crate) fn cholesky_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Condition-number estimate of an SPD matrix from its Cholesky factor:
/// power iteration for the largest eigenvalue, inverse iteration (via
/// triangular solves) for the smallest. A few iterations suffice for an
/// order-of-magnitude estimate, which is all the solver policy needs.
pub(crate) fn spd_condition_estimate(g: &Array2<f64>, l: &Array2<f64>) -> f64 {
    let n = g.nrows();
    if n == 0 {
        return 1.0;
    }
    let start = Array1::from_elem(n, 1.0 / (n as f64).sqrt());

    let mut x = start.clone();
    let mut lam_max = 0.0;
    for _ in 0..16 {
        let y = g.dot(&x);
        lam_max = x.dot(&y);
        let norm = y.dot(&y).sqrt();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        x = y / norm;
    }

    let mut x = start;
    let mut inv_lam_min = 0.0;
    for _ in 0..16 {
        let y = cholesky_solve(l, x.view());
        inv_lam_min = x.dot(&y);
        let norm = y.dot(&y).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return f64::INFINITY;
        }
        x = y / norm;
    }
    if inv_lam_min <= 0.0 {
        return f64::INFINITY;
    }
    lam_max * inv_lam_min
}

/// CGLS on `min_x || B x - y ||`, run on the rectangular matrix directly so
/// the conditioning is that of `B`, not of the normal equations.
pub(crate) fn cgls(
    b: &Array2<f64>,
    y: ArrayView1<f64>,
    rel_tol: f64,
    max_iters: usize,
) -> Array1<f64> {
    let n = b.ncols();
    let mut x = Array1::<f64>::zeros(n);
    let mut r = y.to_owned(); // residual y - B x
    let mut s = b.t().dot(&r); // gradient B^T r
    let s0_norm = s.dot(&s).sqrt();
    if s0_norm == 0.0 {
        return x;
    }
    let mut p = s.clone();
    let mut s_dot = s.dot(&s);
    for _ in 0..max_iters {
        let q = b.dot(&p);
        let q_dot = q.dot(&q);
        if q_dot == 0.0 {
            break;
        }
        let alpha = s_dot / q_dot;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &q);
        s = b.t().dot(&r);
        let s_dot_new = s.dot(&s);
        if s_dot_new.sqrt() <= rel_tol * s0_norm {
            break;
        }
        let beta = s_dot_new / s_dot;
        s_dot = s_dot_new;
        p = &s + &(beta * &p);
    }
    x
}

/// In-place column orthonormalization by modified Gram-Schmidt with one
/// re-orthogonalization pass. Assumes full column rank.
pub(crate) fn orthonormalize_columns(a: &mut Array2<f64>) {
    let r = a.ncols();
    for _pass in 0..2 {
        for j in 0..r {
            for k in 0..j {
                let proj = a.column(k).dot(&a.column(j));
                let col_k = a.column(k).to_owned();
                a.column_mut(j).scaled_add(-proj, &col_k);
            }
            let norm = a.column(j).dot(&a.column(j)).sqrt();
            if norm > 0.0 {
                a.column_mut(j).mapv_inplace(|x| x / norm);
            }
        }
    }
}

/// Largest singular value by power iteration on `A^T A` with a fixed
/// deterministic start.
pub(crate) fn spectral_norm(a: ArrayView2<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut x = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut value = 0.0f64;
    for _ in 0..100 {
        let y = a.t().dot(&a.dot(&x));
        let norm = y.dot(&y).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        value = x.dot(&y).max(0.0).sqrt();
        x = y / norm;
    }
    value
}

/// Singular values of a small dense matrix by one-sided Jacobi rotations,
/// returned in descending order.
pub(crate) fn singular_values(a: ArrayView2<f64>) -> Vec<f64> {
    // Work on the tall orientation so columns are the rotated objects.
    let mut w = if a.nrows() >= a.ncols() { a.to_owned() } else { a.t().to_owned() };
    let n = w.ncols();
    let eps = 1e-14;
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let app = w.column(p).dot(&w.column(p));
                let aqq = w.column(q).dot(&w.column(q));
                let apq = w.column(p).dot(&w.column(q));
                off = off.max(apq.abs() / (app * aqq).sqrt().max(f64::MIN_POSITIVE));
                if apq.abs() <= eps * (app * aqq).sqrt() {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..w.nrows() {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
            }
        }
        if off < eps {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| w.column(j).dot(&w.column(j)).sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}
