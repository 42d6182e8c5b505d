//! Alternating least squares over the two factors.
//!
//! One iteration, starting from the current right factor `v`:
//!
//! ```text
//! u_half = argmin_u |y - A(u v^T)|      (exact least squares)
//! u      = u_half / |u_half|
//! v_half = argmin_v |y - A(u v^T)|
//! v      = v_half / |v_half|
//! ```
//!
//! The normalization exists for analysis and conditioning only; the final
//! reconstruction uses the last unnormalized half-step, `X = u v_half^T`,
//! which carries the scale of the target. The rank-r variant replaces the
//! vector normalization with column orthonormalization, which leaves the
//! product of subsequent half-steps unchanged in exact arithmetic.
//!
//! Each half-step assembles the design matrix `B` (row `i` built from
//! `A_i v` or `A_i^T u`), forms the Gram matrix and solves it by Cholesky.
//! When the Gram condition estimate exceeds `1e6` the solve falls back to
//! CGLS on `B` itself; above `1e12` the subproblem is reported as
//! ill-conditioned and the trial fails.

use crate::error::{Error, Result};
use crate::linalg;
use crate::sensing::SensingOperator;
use ndarray::{Array1, Array2, ArrayView1};

/// Gram condition estimate above which the direct solve defers to CGLS.
const CG_FALLBACK_CONDITION: f64 = 1e6;
/// Gram condition estimate above which the subproblem is reported failed.
const FAIL_CONDITION: f64 = 1e12;
/// Norm below which a half-step counts as collapsed.
const DEGENERATE_NORM: f64 = 1e-300;

/// Stopping criteria; a criterion with value zero is inactive.
#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    pub max_iters: usize,
    pub residual_tol: f64,
    pub angle_tol: f64,
}

impl StopRule {
    pub fn new(max_iters: usize, residual_tol: f64, angle_tol: f64) -> Result<Self> {
        if max_iters == 0 {
            return Err(Error::InvalidParameters("max_iters must be positive".into()));
        }
        if residual_tol < 0.0 || angle_tol < 0.0 {
            return Err(Error::InvalidParameters("tolerances must be nonnegative".into()));
        }
        Ok(StopRule { max_iters, residual_tol, angle_tol })
    }

    /// Iteration budget `ceil(10 (ln n2 + ln 1e8) / ln ln n2)`: ten times
    /// the two-phase rate, which absorbs the unknown constants.
    pub fn default_for(n2: usize) -> Self {
        let l = (n2.max(3) as f64).ln();
        let ll = l.ln().max(0.25);
        let eps: f64 = 1e-8;
        let max_iters = (10.0 * (l + (1.0 / eps).ln()) / ll).ceil() as usize;
        StopRule { max_iters: max_iters.max(1), residual_tol: 1e-10, angle_tol: 0.0 }
    }
}

/// Convergence phase of an iterate, judged by the alignment `cos theta_v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Phase1,
    Phase2,
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Phase1 => "phase1",
            Phase::Phase2 => "phase2",
        }
    }
}

/// One trajectory row. Angle columns are `NaN` when no ground truth was
/// supplied (and for `u` at `t = 0`, before the first half-step).
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub sin_u: f64,
    pub cos_u: f64,
    pub sin_v: f64,
    pub cos_v: f64,
    pub rel_residual: f64,
    pub phase: Phase,
}

/// Per-iteration metric log.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    /// Recomputes phase labels: phase 2 begins at the first record with
    /// `cos theta_v >= phase_c / ln n2` and is sticky from there on.
    pub fn relabel_phases(&mut self, phase_c: f64, n2: usize) {
        let threshold = phase_c / (n2.max(3) as f64).ln();
        let mut in_phase2 = false;
        for rec in &mut self.records {
            if !in_phase2 && rec.cos_v >= threshold {
                in_phase2 = true;
            }
            rec.phase = if in_phase2 { Phase::Phase2 } else { Phase::Phase1 };
        }
    }

    /// CSV serialization: `#`-prefixed header lines, the column line, one
    /// row per record with 17 significant digits.
    pub fn to_csv(&self, header_lines: &[String]) -> String {
        let mut out = String::new();
        for line in header_lines {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("t,sin_u,cos_u,sin_v,cos_v,rel_residual,phase\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                r.t,
                r.sin_u,
                r.cos_u,
                r.sin_v,
                r.cos_v,
                r.rel_residual,
                r.phase.label()
            ));
        }
        out
    }
}

/// Current iterate pair plus the most recent unnormalized half-steps.
/// Factors are `n x r` blocks; the rank-one path uses `r = 1`.
#[derive(Debug, Clone)]
pub struct FactorState {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub u_half: Array2<f64>,
    pub v_half: Array2<f64>,
    /// The right factor that produced `u_half` (one iteration behind `v`).
    pub v_prev: Array2<f64>,
    pub t: usize,
}

impl FactorState {
    fn fresh(n1: usize, n2: usize, v0: Array2<f64>) -> Self {
        let r = v0.ncols();
        FactorState {
            u: Array2::zeros((n1, r)),
            v: v0.clone(),
            u_half: Array2::zeros((n1, r)),
            v_half: Array2::zeros((n2, r)),
            v_prev: v0,
            t: 0,
        }
    }
}

/// Known target factors (any scale); used for angle metrics and
/// reconstruction error.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

impl GroundTruth {
    pub fn rank1(u: Array1<f64>, v: Array1<f64>) -> Self {
        GroundTruth {
            u: u.insert_axis(ndarray::Axis(1)),
            v: v.insert_axis(ndarray::Axis(1)),
        }
    }

    pub fn x_star(&self) -> Array2<f64> {
        self.u.dot(&self.v.t())
    }

    /// Orthonormal basis of the left factor's column space.
    pub fn unit_u(&self) -> Array2<f64> {
        let mut q = self.u.clone();
        linalg::orthonormalize_columns(&mut q);
        q
    }

    pub fn unit_v(&self) -> Array2<f64> {
        let mut q = self.v.clone();
        linalg::orthonormalize_columns(&mut q);
        q
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    AngleConverged,
    ResidualConverged,
    MaxIters,
    Failed(FailureKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    IllConditioned,
    DegenerateIterate,
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::AngleConverged => "converged_angle",
            Termination::ResidualConverged => "converged_residual",
            Termination::MaxIters => "max_iters",
            Termination::Failed(FailureKind::IllConditioned) => "failed_ill_conditioned",
            Termination::Failed(FailureKind::DegenerateIterate) => "failed_degenerate",
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Termination::Failed(_))
    }
}

/// Result of a run. On solver failure the trajectory holds all completed
/// iterations and `state` the last completed iterates.
#[derive(Debug, Clone)]
pub struct AlsOutcome {
    pub state: FactorState,
    pub trajectory: Trajectory,
    pub termination: Termination,
}

fn solve_subproblem(b: &Array2<f64>, y: &Array1<f64>) -> Result<Array1<f64>> {
    let gram = b.t().dot(b);
    let rhs = b.t().dot(y);
    match linalg::cholesky(&gram) {
        Some(l) => {
            let cond = linalg::spd_condition_estimate(&gram, &l);
            if cond > FAIL_CONDITION {
                Err(Error::IllConditionedSubproblem { cond })
            } else if cond > CG_FALLBACK_CONDITION {
                Ok(linalg::cgls(b, y.view(), 1e-12, 10 * b.ncols()))
            } else {
                Ok(linalg::cholesky_solve(&l, rhs.view()))
            }
        }
        None => Err(Error::IllConditionedSubproblem { cond: f64::INFINITY }),
    }
}

/// Exact minimizer of `|y - A(U v^T)|` over the left factor block.
pub fn ls_update_u_block(
    op: &SensingOperator,
    y: &Array1<f64>,
    v: &Array2<f64>,
) -> Result<Array2<f64>> {
    let b = op.design_for_u(v);
    let sol = solve_subproblem(&b, y)?;
    Ok(Array2::from_shape_vec((op.dims().n1, v.ncols()), sol.to_vec()).expect("solution shape"))
}

/// Exact minimizer of `|y - A(u V^T)|` over the right factor block.
pub fn ls_update_v_block(
    op: &SensingOperator,
    y: &Array1<f64>,
    u: &Array2<f64>,
) -> Result<Array2<f64>> {
    let b = op.design_for_v(u);
    let sol = solve_subproblem(&b, y)?;
    Ok(Array2::from_shape_vec((op.dims().n2, u.ncols()), sol.to_vec()).expect("solution shape"))
}

/// Rank-one `u`-update: minimizes `|y - A(u v^T)|` for a unit vector `v`.
pub fn ls_update_u(op: &SensingOperator, y: &Array1<f64>, v: ArrayView1<f64>) -> Result<Array1<f64>> {
    let block = v.to_owned().insert_axis(ndarray::Axis(1));
    Ok(ls_update_u_block(op, y, &block)?.remove_axis(ndarray::Axis(1)))
}

/// Rank-one `v`-update, the mirror of [`ls_update_u`].
pub fn ls_update_v(op: &SensingOperator, y: &Array1<f64>, u: ArrayView1<f64>) -> Result<Array1<f64>> {
    let block = u.to_owned().insert_axis(ndarray::Axis(1));
    Ok(ls_update_v_block(op, y, &block)?.remove_axis(ndarray::Axis(1)))
}

/// `w / |w|`; a norm at or below `1e-300` means the least-squares solution
/// collapsed and the trial must fail.
pub fn normalize(w: ArrayView1<f64>) -> Result<Array1<f64>> {
    let norm = w.dot(&w).sqrt();
    if norm <= DEGENERATE_NORM {
        return Err(Error::DegenerateIterate { norm });
    }
    Ok(w.to_owned() / norm)
}

/// Column orthonormalization of a half-step block; reduces to
/// [`normalize`] for one column.
pub fn normalize_block(w: &Array2<f64>) -> Result<Array2<f64>> {
    if w.ncols() == 1 {
        let col = normalize(w.column(0))?;
        return Ok(col.insert_axis(ndarray::Axis(1)));
    }
    let mut q = w.clone();
    linalg::orthonormalize_columns(&mut q);
    // Orthonormalization silently absorbs rank collapse; detect it.
    for j in 0..w.ncols() {
        let norm = w.column(j).dot(&w.column(j)).sqrt();
        if norm <= DEGENERATE_NORM {
            return Err(Error::DegenerateIterate { norm });
        }
    }
    Ok(q)
}

/// `(sin, cos)` of the angle between two unit vectors. The sine comes from
/// the orthogonal remainder rather than `sqrt(1 - cos^2)`, which loses all
/// precision below about `1e-8`.
pub fn angle_metrics(w: ArrayView1<f64>, w_star: ArrayView1<f64>) -> (f64, f64) {
    let coeff = w.dot(&w_star);
    let perp = &w.to_owned() - &(&w_star.to_owned() * coeff);
    (perp.dot(&perp).sqrt().min(1.0), coeff.abs().min(1.0))
}

/// `(sin, cos)` of the largest principal angle between the column spaces
/// of two orthonormal blocks: `cos` is the smallest singular value of
/// `W_star^T W`, `sin` the largest singular value of the projection of `W`
/// onto the complement of `W_star`.
pub fn angle_metrics_block(w: &Array2<f64>, w_star: &Array2<f64>) -> (f64, f64) {
    let overlap = w_star.t().dot(w);
    let sv = linalg::singular_values(overlap.view());
    let cos = sv.last().copied().unwrap_or(0.0).min(1.0);
    let perp = w - &w_star.dot(&overlap);
    let sin = linalg::singular_values(perp.view())
        .first()
        .copied()
        .unwrap_or(0.0)
        .min(1.0);
    (sin, cos)
}

/// Reconstruction from the last unnormalized half-step: `X = U V_half^T`.
pub fn reconstruct(state: &FactorState) -> Array2<f64> {
    state.u.dot(&state.v_half.t())
}

/// `|X - X_star|_F / |X_star|_F`.
pub fn relative_error(state: &FactorState, truth: &GroundTruth) -> f64 {
    let x_star = truth.x_star();
    let diff = reconstruct(state) - &x_star;
    let denom = x_star.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff.iter().map(|x| x * x).sum::<f64>().sqrt() / denom
}

struct TruthCache {
    unit_u: Array2<f64>,
    unit_v: Array2<f64>,
}

fn record_metrics(
    state: &FactorState,
    op: &SensingOperator,
    y: &Array1<f64>,
    y_norm: f64,
    truth: Option<&TruthCache>,
) -> (f64, f64, f64, f64, f64) {
    let (sin_u, cos_u, sin_v, cos_v) = match truth {
        Some(tc) => {
            let (su, cu) = angle_metrics_block(&state.u, &tc.unit_u);
            let (sv, cv) = angle_metrics_block(&state.v, &tc.unit_v);
            (su, cu, sv, cv)
        }
        None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
    };
    let fitted = op
        .forward_factored(&state.u, &state.v_half)
        .expect("dims were validated on entry");
    let res = (&fitted - y).dot(&(&fitted - y)).sqrt() / y_norm;
    (sin_u, cos_u, sin_v, cos_v, res)
}

/// Runs the alternation from `v0` until a stop criterion fires, recording
/// one trajectory row per iteration. `observer` sees the state after each
/// completed iteration (used by the diagnostics layer).
pub fn als_run_observed(
    op: &SensingOperator,
    y: &Array1<f64>,
    v0: &Array2<f64>,
    stop: &StopRule,
    truth: Option<&GroundTruth>,
    mut observer: impl FnMut(&FactorState),
) -> Result<AlsOutcome> {
    let dims = op.dims();
    if y.len() != dims.m {
        return Err(Error::DimensionMismatch(format!(
            "observation length {} vs m={}",
            y.len(),
            dims.m
        )));
    }
    if v0.nrows() != dims.n2 {
        return Err(Error::DimensionMismatch(format!(
            "v0 has {} rows, expected n2={}",
            v0.nrows(),
            dims.n2
        )));
    }
    let r = v0.ncols();
    let gram0 = v0.t().dot(v0);
    for i in 0..r {
        for j in 0..r {
            let want = if i == j { 1.0 } else { 0.0 };
            if (gram0[(i, j)] - want).abs() > 1e-6 {
                return Err(Error::InvalidParameters(
                    "v0 must have orthonormal columns".into(),
                ));
            }
        }
    }
    if let Some(t) = truth {
        if t.u.nrows() != dims.n1 || t.v.nrows() != dims.n2 || t.u.ncols() != t.v.ncols() {
            return Err(Error::DimensionMismatch("ground-truth factor shapes".into()));
        }
    }

    let truth_cache = truth.map(|t| TruthCache { unit_u: t.unit_u(), unit_v: t.unit_v() });
    let y_norm = y.dot(y).sqrt().max(f64::MIN_POSITIVE);
    let mut state = FactorState::fresh(dims.n1, dims.n2, v0.clone());
    let mut trajectory = Trajectory::default();

    // t = 0 row: only the initialization direction is known.
    {
        let (sin_v, cos_v) = match &truth_cache {
            Some(tc) => angle_metrics_block(&state.v, &tc.unit_v),
            None => (f64::NAN, f64::NAN),
        };
        trajectory.records.push(TrajectoryRecord {
            t: 0,
            sin_u: f64::NAN,
            cos_u: f64::NAN,
            sin_v,
            cos_v,
            rel_residual: 1.0,
            phase: Phase::Phase1,
        });
    }

    let mut termination = Termination::MaxIters;
    for t in 1..=stop.max_iters {
        let step = (|| -> Result<()> {
            state.v_prev = state.v.clone();
            state.u_half = ls_update_u_block(op, y, &state.v)?;
            state.u = normalize_block(&state.u_half)?;
            state.v_half = ls_update_v_block(op, y, &state.u)?;
            state.v = normalize_block(&state.v_half)?;
            Ok(())
        })();
        match step {
            Ok(()) => {}
            Err(Error::IllConditionedSubproblem { .. }) => {
                termination = Termination::Failed(FailureKind::IllConditioned);
                break;
            }
            Err(Error::DegenerateIterate { .. }) => {
                termination = Termination::Failed(FailureKind::DegenerateIterate);
                break;
            }
            Err(other) => return Err(other),
        }
        state.t = t;

        let (sin_u, cos_u, sin_v, cos_v, res) =
            record_metrics(&state, op, y, y_norm, truth_cache.as_ref());
        trajectory.records.push(TrajectoryRecord {
            t,
            sin_u,
            cos_u,
            sin_v,
            cos_v,
            rel_residual: res,
            phase: Phase::Phase1,
        });
        observer(&state);

        if stop.angle_tol > 0.0 && truth_cache.is_some() && sin_u.max(sin_v) <= stop.angle_tol {
            termination = Termination::AngleConverged;
            break;
        }
        if stop.residual_tol > 0.0 && res <= stop.residual_tol {
            termination = Termination::ResidualConverged;
            break;
        }
    }

    trajectory.relabel_phases(1.0, dims.n2);
    Ok(AlsOutcome { state, trajectory, termination })
}

/// Rank-one run from a unit vector `v0`.
pub fn als_run(
    op: &SensingOperator,
    y: &Array1<f64>,
    v0: ArrayView1<f64>,
    stop: &StopRule,
    truth: Option<&GroundTruth>,
) -> Result<AlsOutcome> {
    let v0_block = v0.to_owned().insert_axis(ndarray::Axis(1));
    als_run_observed(op, y, &v0_block, stop, truth, |_| {})
}

/// Rank-r run from an orthonormal block `v0`; trajectories record the
/// largest principal angles.
pub fn als_run_rank_r(
    op: &SensingOperator,
    y: &Array1<f64>,
    v0: &Array2<f64>,
    stop: &StopRule,
    truth: Option<&GroundTruth>,
) -> Result<AlsOutcome> {
    als_run_observed(op, y, v0, stop, truth, |_| {})
}
