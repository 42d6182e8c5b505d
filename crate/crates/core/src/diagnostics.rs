//! Convergence diagnostics.
//!
//! These utilities measure, on concrete runs, the quantities that drive the
//! two-phase convergence analysis of the alternation:
//!
//! - decomposition of an iterate into its component along the ground-truth
//!   direction and the orthogonal remainder ([`par_perp`]),
//! - the closeness schedule `c_t = (1 + 1/ln n2)^t - 1` and coupled runs
//!   against the resampled auxiliary operator, certifying per iteration
//!   that the two trajectories stay within `c_t * |v_t^par|`,
//! - a sampled restricted-isometry estimate `delta_hat` over random
//!   rank-at-most-4 matrices, plus margin reports for the induced
//!   cross/block-diagonal operator inequalities,
//! - concentration checks for the first-row/first-column sums that make
//!   the auxiliary sequence argument work,
//! - an exactly isotropic stand-in operator (`adjoint(forward(X)) = X`)
//!   under which one iteration recovers the target.
//!
//! Sampled constants are estimates, never certificates: `delta_hat` is a
//! lower bound on the true restricted-isometry constant, and the checks
//! with unknown absolute constants report ratios rather than hard
//! failures.

use crate::als::{
    ls_update_u_block, ls_update_v_block, normalize_block, FactorState, FailureKind, GroundTruth,
    StopRule, Termination,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::sensing::{AuxiliaryOperator, ProblemDims, SensingOperator, SplitMask};
use crate::stream::{gaussian_at, StreamKey};
use ndarray::{Array1, Array2, ArrayView1};

/// Orthogonal decomposition of `w` against a unit direction `w_star`:
/// `w = parallel_coeff * w_star + w_perp`.
#[derive(Debug, Clone, Copy)]
pub struct ParPerpView {
    /// `| <w_star, w> |`, the cosine scale of the aligned part.
    pub parallel_norm: f64,
    /// Norm of the orthogonal remainder.
    pub perp_norm: f64,
    /// Signed coefficient `<w_star, w>`.
    pub parallel_coeff: f64,
}

/// Splits `w` along a unit direction. The Pythagoras identity
/// `parallel_norm^2 + perp_norm^2 = |w|^2` holds to rounding.
pub fn par_perp(w: ArrayView1<f64>, w_star: ArrayView1<f64>) -> ParPerpView {
    debug_assert!((w_star.dot(&w_star) - 1.0).abs() < 1e-10, "w_star must be unit");
    let coeff = w_star.dot(&w);
    let perp = &w.to_owned() - &(&w_star.to_owned() * coeff);
    ParPerpView {
        parallel_norm: coeff.abs(),
        perp_norm: perp.dot(&perp).sqrt(),
        parallel_coeff: coeff,
    }
}

/// Closeness schedule `c_t = (1 + 1/ln n2)^t - 1` (natural logarithm).
pub fn c_t(t: usize, n2: usize) -> Result<f64> {
    if n2 < 3 {
        return Err(Error::InvalidDimension(format!(
            "closeness schedule needs n2 >= 3, got {n2}"
        )));
    }
    let base = 1.0 + 1.0 / (n2 as f64).ln();
    Ok(base.powi(t as i32) - 1.0)
}

/// Operator whose composition `adjoint(forward(X))` is exactly the identity:
/// `m = n1 * n2` measurements, the i-th matrix being `sqrt(m)` times the
/// i-th standard basis matrix. Under it a single alternation step recovers
/// the target, which makes it the reference stand-in for the
/// infinite-sample regime in tests.
pub fn isotropic_oracle(dims: ProblemDims) -> SensingOperator {
    let (n1, n2) = (dims.n1, dims.n2);
    let m = n1 * n2;
    let oracle_dims = ProblemDims::new(n1, n2, m, dims.rank).expect("oracle dims");
    let scale = (m as f64).sqrt();
    let mut data = vec![0.0; m * n1 * n2];
    for j in 0..n1 {
        for k in 0..n2 {
            let i = j * n2 + k;
            data[(i * n1 + j) * n2 + k] = scale;
        }
    }
    SensingOperator::from_dense_parts(oracle_dims, data, StreamKey::new(0, crate::stream::Lane::Measurement))
}

/// One evaluated inequality: `lhs <= rhs` with its margin.
#[derive(Debug, Clone)]
pub struct CheckRecord {
    /// Iteration index, or 0 for per-run checks.
    pub t: usize,
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

impl CheckRecord {
    fn new(t: usize, name: &str, lhs: f64, rhs: f64) -> Self {
        CheckRecord { t, name: name.to_string(), lhs, rhs, satisfied: lhs <= rhs }
    }

    pub fn ratio(&self) -> f64 {
        if self.rhs == 0.0 {
            if self.lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.lhs / self.rhs
        }
    }
}

/// CSV serialization of check rows: `t,check_name,lhs,rhs,ratio,satisfied`.
pub fn checks_to_csv(records: &[CheckRecord], header_lines: &[String]) -> String {
    let mut out = String::new();
    for line in header_lines {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("t,check_name,lhs,rhs,ratio,satisfied\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{}\n",
            r.t,
            r.name,
            r.lhs,
            r.rhs,
            r.ratio(),
            r.satisfied
        ));
    }
    out
}

/// Sampled restricted-isometry estimate.
#[derive(Debug, Clone, Copy)]
pub struct RipEstimate {
    /// Max sampled distortion `| |forward(Z)|^2 - 1 |` over unit-Frobenius
    /// matrices of rank at most 4. A lower bound on the true constant.
    pub delta_hat: f64,
    pub sample_count: usize,
    pub max_rank_tested: usize,
}

/// Estimate plus margin rows for the induced split-operator inequalities
/// (only evaluated in the canonical frame; empty otherwise).
#[derive(Debug, Clone)]
pub struct RipReport {
    pub estimate: RipEstimate,
    pub split_checks: Vec<CheckRecord>,
}

fn rip_sample(op: &SensingOperator, seed: &StreamKey, sample: u64) -> f64 {
    // Z = sum of four random outer products, applied term by term through
    // the rank-one fast path; |Z|_F^2 comes from the factor Gram matrices.
    let dims = op.dims();
    let key = seed.trial(sample);
    let mut us = Vec::with_capacity(4);
    let mut vs = Vec::with_capacity(4);
    for l in 0..4u32 {
        us.push(Array1::from_shape_fn(dims.n1, |j| {
            gaussian_at(&key.matrix(l).entry(j as u32, 0))
        }));
        vs.push(Array1::from_shape_fn(dims.n2, |k| {
            gaussian_at(&key.matrix(4 + l).entry(k as u32, 1))
        }));
    }
    let mut y = Array1::<f64>::zeros(dims.m);
    for l in 0..4 {
        y += &op.forward_rank1(us[l].view(), vs[l].view()).expect("dims match");
    }
    let mut fro2 = 0.0;
    for l in 0..4 {
        for l2 in 0..4 {
            fro2 += us[l].dot(&us[l2]) * vs[l].dot(&vs[l2]);
        }
    }
    (y.dot(&y) / fro2 - 1.0).abs()
}

/// Masked adjoint `z -> sum_i z_i masked(A_i) / sqrt(m)` of one split block.
fn split_adjoint(op: &SensingOperator, mask: SplitMask, z: &Array1<f64>) -> Array2<f64> {
    let dims = op.dims();
    let scale = op.scale();
    let mut x = Array2::<f64>::zeros((dims.n1, dims.n2));
    for i in 0..dims.m {
        let c = z[i] * scale;
        match mask {
            SplitMask::BlockDiag => {
                x[(0, 0)] += c * op.entry(i, 0, 0);
                for j in 1..dims.n1 {
                    for k in 1..dims.n2 {
                        x[(j, k)] += c * op.entry(i, j, k);
                    }
                }
            }
            SplitMask::Cross => {
                for k in 1..dims.n2 {
                    x[(0, k)] += c * op.entry(i, 0, k);
                }
                for j in 1..dims.n1 {
                    x[(j, 0)] += c * op.entry(i, j, 0);
                }
            }
        }
    }
    x
}

/// Entrywise projection onto the cross support (first row and column
/// without the corner).
fn project_cross(x: &Array2<f64>) -> Array2<f64> {
    let mut p = Array2::<f64>::zeros(x.raw_dim());
    for k in 1..x.ncols() {
        p[(0, k)] = x[(0, k)];
    }
    for j in 1..x.nrows() {
        p[(j, 0)] = x[(j, 0)];
    }
    p
}

/// Samples `delta_hat = max_Z | |forward(Z)|^2 - 1 |` over random
/// unit-Frobenius rank-at-most-4 matrices addressed by `seed`, prefix-stable
/// in the sample count. In the canonical frame it additionally evaluates
/// the four split-operator consequences of the restricted isometry with
/// `delta_hat` in place of the true constant.
pub fn estimate_rip(op: &SensingOperator, samples: usize, seed: &StreamKey) -> Result<RipReport> {
    if samples == 0 {
        return Err(Error::InvalidParameters("rip sampling needs samples >= 1".into()));
    }
    let mut delta_hat = 0.0f64;
    for s in 0..samples {
        delta_hat = delta_hat.max(rip_sample(op, seed, s as u64));
    }
    let estimate =
        RipEstimate { delta_hat, sample_count: samples, max_rank_tested: 4 };

    let mut split_checks = Vec::new();
    if op.frame() == crate::sensing::Frame::Canonical && op.is_dense() {
        let dims = op.dims();
        let probe = seed.trial(samples as u64); // fresh indices beyond the samples
        let u = Array1::from_shape_fn(dims.n1, |j| gaussian_at(&probe.matrix(100).entry(j as u32, 0)));
        let v = Array1::from_shape_fn(dims.n2, |k| gaussian_at(&probe.matrix(101).entry(k as u32, 1)));
        let u_norm = u.dot(&u).sqrt();
        let v_norm = v.dot(&v).sqrt();

        let blockdiag = op.split(SplitMask::BlockDiag)?;
        let cross = op.split(SplitMask::Cross)?;

        // |cross^* blockdiag(u v^T)| (spectral norm) <= delta |u| |v|
        let bd_uv = blockdiag.apply_rank1(u.view(), v.view())?;
        let cross_adj = split_adjoint(op, SplitMask::Cross, &bd_uv);
        split_checks.push(CheckRecord::new(
            0,
            "split_cross_adj_blockdiag",
            linalg::spectral_norm(cross_adj.view()),
            delta_hat * u_norm * v_norm,
        ));

        // |blockdiag^* cross(u v^T)| <= delta |u| |v|
        let cr_uv = cross.apply_rank1(u.view(), v.view())?;
        let bd_adj = split_adjoint(op, SplitMask::BlockDiag, &cr_uv);
        split_checks.push(CheckRecord::new(
            0,
            "split_blockdiag_adj_cross",
            linalg::spectral_norm(bd_adj.view()),
            delta_hat * u_norm * v_norm,
        ));

        // |(cross^* cross - P_cross)(u v^T)| <= delta |u v^T|_F
        let cross_cross = split_adjoint(op, SplitMask::Cross, &cr_uv);
        let outer = u.view().insert_axis(ndarray::Axis(1)).dot(&v.view().insert_axis(ndarray::Axis(0)));
        let resid = &cross_cross - &project_cross(&outer);
        split_checks.push(CheckRecord::new(
            0,
            "split_cross_gram_vs_projection",
            linalg::spectral_norm(resid.view()),
            delta_hat * u_norm * v_norm,
        ));

        // |<forward(u1 v1^T), forward(u2 v2^T)>| <= delta for orthogonal
        // unit-Frobenius rank-one pairs.
        let u1 = &u / u_norm;
        let v1 = &v / v_norm;
        let mut u2 = Array1::from_shape_fn(dims.n1, |j| {
            gaussian_at(&probe.matrix(102).entry(j as u32, 0))
        });
        let overlap = u1.dot(&u2);
        u2.scaled_add(-overlap, &u1);
        let u2 = &u2 / u2.dot(&u2).sqrt();
        let y1 = op.forward_rank1(u1.view(), v1.view())?;
        let y2 = op.forward_rank1(u2.view(), v1.view())?;
        split_checks.push(CheckRecord::new(
            0,
            "orthogonal_pair_product",
            y1.dot(&y2).abs(),
            delta_hat,
        ));
    }

    Ok(RipReport { estimate, split_checks })
}

/// Which factor a closeness record refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorSide {
    U,
    V,
}

/// Per-iteration distance between the primary and auxiliary iterates,
/// compared against the scheduled bound `c_idx * |w^par|`.
#[derive(Debug, Clone, Copy)]
pub struct ClosenessRecord {
    pub t: usize,
    pub side: FactorSide,
    /// `| w^par - w_aux^par |` (difference of aligned components).
    pub d_par: f64,
    /// `| w^perp - w_aux^perp |`.
    pub d_perp: f64,
    /// `c_idx * |w^par|` with `idx = 2t` for the v side, `2t - 1` for u.
    pub bound: f64,
    pub satisfied: bool,
    /// Alignment of the primary right iterate at this iteration.
    pub cos_v: f64,
    /// Whether the primary iterate was still in phase 1.
    pub phase1: bool,
}

/// Snapshot of both sequences after one full iteration.
#[derive(Debug, Clone)]
pub struct CoupledStates {
    pub t: usize,
    pub primary: FactorState,
    pub auxiliary: FactorState,
}

/// Outcome of a coupled primary/auxiliary run.
#[derive(Debug, Clone)]
pub struct AuxiliaryCoupling {
    pub records: Vec<ClosenessRecord>,
    /// States for every completed lockstep iteration (both sequences alive).
    pub states: Vec<CoupledStates>,
    pub primary_termination: Termination,
    /// `None` while the auxiliary sequence completed every lockstep
    /// iteration; `Some(failure)` marks the point past which closeness
    /// records are unavailable.
    pub auxiliary_failure: Option<FailureKind>,
    pub iterations: usize,
}

/// Diagnostics parameters: check horizon `T`, union-bound weight `eta`,
/// RIP sample count, and the stand-in multiplier for inequalities whose
/// absolute constant is unspecified.
#[derive(Debug, Clone, Copy)]
pub struct DiagConfig {
    pub horizon: usize,
    pub eta: f64,
    pub rip_samples: usize,
    pub lemma_constant: f64,
}

impl DiagConfig {
    pub fn new(horizon: usize, eta: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameters("horizon must be >= 1".into()));
        }
        if eta <= 1.0 {
            return Err(Error::InvalidParameters("eta must exceed 1".into()));
        }
        Ok(DiagConfig { horizon, eta, rip_samples: 200, lemma_constant: 10.0 })
    }
}

fn e1_split(w: ArrayView1<f64>) -> (f64, Array1<f64>) {
    let mut perp = w.to_owned();
    let par = perp[0];
    perp[0] = 0.0;
    (par, perp)
}

fn advance(
    op: &SensingOperator,
    y: &Array1<f64>,
    state: &mut FactorState,
) -> std::result::Result<(), FailureKind> {
    let step = (|| -> Result<()> {
        state.v_prev = state.v.clone();
        state.u_half = ls_update_u_block(op, y, &state.v)?;
        state.u = normalize_block(&state.u_half)?;
        state.v_half = ls_update_v_block(op, y, &state.u)?;
        state.v = normalize_block(&state.v_half)?;
        Ok(())
    })();
    match step {
        Ok(()) => {
            state.t += 1;
            Ok(())
        }
        Err(Error::IllConditionedSubproblem { .. }) => Err(FailureKind::IllConditioned),
        Err(Error::DegenerateIterate { .. }) => Err(FailureKind::DegenerateIterate),
        Err(_) => Err(FailureKind::IllConditioned),
    }
}

/// Runs the primary and auxiliary alternations in lockstep from the shared
/// initialization `v0`, recording the closeness certificates per iteration.
/// The primary sequence is never influenced by the auxiliary one; a failed
/// auxiliary run only truncates the records.
pub fn coupled_run(
    op: &SensingOperator,
    aux: &AuxiliaryOperator,
    v0: ArrayView1<f64>,
    stop: &StopRule,
) -> Result<AuxiliaryCoupling> {
    if op.frame() != crate::sensing::Frame::Canonical {
        return Err(Error::CanonicalFrameRequired);
    }
    let dims = op.dims();
    if aux.operator().dims() != dims {
        return Err(Error::DimensionMismatch("auxiliary dims differ from base".into()));
    }
    if v0.len() != dims.n2 {
        return Err(Error::DimensionMismatch(format!(
            "v0 length {} vs n2={}",
            v0.len(),
            dims.n2
        )));
    }
    let mut e1u = Array1::zeros(dims.n1);
    e1u[0] = 1.0;
    let mut e1v = Array1::zeros(dims.n2);
    e1v[0] = 1.0;
    let y = op.forward_rank1(e1u.view(), e1v.view())?;
    // Shared observations: the auxiliary operator agrees on e1 e1^T.
    debug_assert_eq!(y, aux.operator().forward_rank1(e1u.view(), e1v.view())?);

    let v0_block = v0.to_owned().insert_axis(ndarray::Axis(1));
    let mut primary = FactorState {
        u: Array2::zeros((dims.n1, 1)),
        v: v0_block.clone(),
        u_half: Array2::zeros((dims.n1, 1)),
        v_half: Array2::zeros((dims.n2, 1)),
        v_prev: v0_block.clone(),
        t: 0,
    };
    let mut auxiliary = primary.clone();

    let phase_boundary = 1.0 / (dims.n2.max(3) as f64).ln();
    let mut in_phase2 = {
        let cos0 = v0[0].abs();
        cos0 >= phase_boundary
    };

    let mut records = Vec::new();
    // t = 0: both sequences share the initialization exactly.
    records.push(ClosenessRecord {
        t: 0,
        side: FactorSide::V,
        d_par: 0.0,
        d_perp: 0.0,
        bound: c_t(0, dims.n2)? * v0[0].abs(),
        satisfied: true,
        cos_v: v0[0].abs(),
        phase1: !in_phase2,
    });

    let mut states = Vec::new();
    let mut primary_termination = Termination::MaxIters;
    let mut auxiliary_failure: Option<FailureKind> = None;
    let y_norm = y.dot(&y).sqrt().max(f64::MIN_POSITIVE);

    for t in 1..=stop.max_iters {
        if let Err(kind) = advance(op, &y, &mut primary) {
            primary_termination = Termination::Failed(kind);
            break;
        }
        if auxiliary_failure.is_none() {
            if let Err(kind) = advance(aux.operator(), &y, &mut auxiliary) {
                auxiliary_failure = Some(kind);
            }
        }

        let cos_v = primary.v[(0, 0)].abs();
        if !in_phase2 && cos_v >= phase_boundary {
            in_phase2 = true;
        }

        if auxiliary_failure.is_none() {
            let (u_par, u_perp) = e1_split(primary.u.column(0));
            let (au_par, au_perp) = e1_split(auxiliary.u.column(0));
            let du_perp = (&u_perp - &au_perp).dot(&(&u_perp - &au_perp)).sqrt();
            let bound_u = c_t(2 * t - 1, dims.n2)? * u_par.abs();
            records.push(ClosenessRecord {
                t,
                side: FactorSide::U,
                d_par: (u_par - au_par).abs(),
                d_perp: du_perp,
                bound: bound_u,
                satisfied: (u_par - au_par).abs().max(du_perp) <= bound_u,
                cos_v,
                phase1: !in_phase2,
            });

            let (v_par, v_perp) = e1_split(primary.v.column(0));
            let (av_par, av_perp) = e1_split(auxiliary.v.column(0));
            let dv_perp = (&v_perp - &av_perp).dot(&(&v_perp - &av_perp)).sqrt();
            let bound_v = c_t(2 * t, dims.n2)? * v_par.abs();
            records.push(ClosenessRecord {
                t,
                side: FactorSide::V,
                d_par: (v_par - av_par).abs(),
                d_perp: dv_perp,
                bound: bound_v,
                satisfied: (v_par - av_par).abs().max(dv_perp) <= bound_v,
                cos_v,
                phase1: !in_phase2,
            });

            states.push(CoupledStates { t, primary: primary.clone(), auxiliary: auxiliary.clone() });
        }

        let fitted = op.forward_factored(&primary.u, &primary.v_half)?;
        let res = (&fitted - &y).dot(&(&fitted - &y)).sqrt() / y_norm;
        let sin_v = (1.0 - cos_v * cos_v).max(0.0).sqrt();
        if stop.angle_tol > 0.0 && sin_v <= stop.angle_tol {
            primary_termination = Termination::AngleConverged;
            break;
        }
        if stop.residual_tol > 0.0 && res <= stop.residual_tol {
            primary_termination = Termination::ResidualConverged;
            break;
        }
    }

    Ok(AuxiliaryCoupling {
        records,
        states,
        primary_termination,
        auxiliary_failure,
        iterations: primary.t,
    })
}

/// Residual of the fixed-point identity satisfied by an exact half-step:
/// `u_half = <v_prev, v_star> u_star + [(Id - adjoint . forward)(u_half
/// v_prev^T - u_star v_star^T)] v_prev`, returned as a relative
/// discrepancy. Rank-one states only.
pub fn check_normal_equation(
    op: &SensingOperator,
    state: &FactorState,
    truth: &GroundTruth,
) -> Result<f64> {
    if state.u_half.ncols() != 1 {
        return Err(Error::InvalidParameters("normal-equation check is rank-one".into()));
    }
    let u_half = state.u_half.column(0).to_owned();
    let v_prev = state.v_prev.column(0).to_owned();
    let u_star = truth.u.column(0);
    let v_star = truth.v.column(0);

    let w = {
        let mut w = u_half
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&v_prev.view().insert_axis(ndarray::Axis(0)));
        w -= &truth.x_star();
        w
    };
    let deviation = &w - &op.adjoint(op.forward(w.view())?.view())?;
    let rhs = &(u_star.to_owned() * v_star.dot(&v_prev)) + &deviation.dot(&v_prev);
    let lhs_norm = u_half.dot(&u_half).sqrt().max(f64::MIN_POSITIVE);
    let diff = &u_half - &rhs;
    Ok(diff.dot(&diff).sqrt() / lhs_norm)
}

/// Evaluates the half-step error bounds implied by a restricted-isometry
/// constant, with the sampled `delta_hat` standing in. Violations are
/// informative (the estimate undershoots the true constant), not fatal.
///
/// Rows: `|u_half - <v_star,v> u_star| <= d/(1-d) |v^perp|`, the same for
/// the perpendicular part alone, and `|u_half| <= 2`. Expects unit-norm
/// ground truth.
pub fn check_perp_decrease(
    v: ArrayView1<f64>,
    u_half: ArrayView1<f64>,
    truth: &GroundTruth,
    delta_hat: f64,
) -> Result<Vec<CheckRecord>> {
    if !(0.0..1.0).contains(&delta_hat) {
        return Err(Error::InvalidParameters(format!(
            "delta_hat {delta_hat} outside [0, 1)"
        )));
    }
    let u_star = truth.u.column(0);
    let v_star = truth.v.column(0);
    let v_view = par_perp(v, v_star);
    let factor = delta_hat / (1.0 - delta_hat);

    let aligned = u_star.to_owned() * v_star.dot(&v);
    let dev = &u_half.to_owned() - &aligned;
    let dev_norm = dev.dot(&dev).sqrt();
    let u_half_view = par_perp(u_half, u_star);

    Ok(vec![
        CheckRecord::new(0, "half_step_deviation", dev_norm, factor * v_view.perp_norm),
        CheckRecord::new(0, "half_step_perp", u_half_view.perp_norm, factor * v_view.perp_norm),
        CheckRecord::new(0, "half_step_norm", u_half.dot(&u_half).sqrt(), 2.0),
    ])
}

/// Flags for the normalization-propagation recursion: given
/// `|u_half^par|^2 >= alpha |v^par|^2` and `|u_half^perp|^2 <= beta
/// |v^perp|^2` with `0 < beta < alpha < 1`, the normalized iterate must
/// satisfy a lower bound on its aligned part and an upper bound on its
/// perpendicular part.
#[derive(Debug, Clone, Copy)]
pub struct RecursionCheck {
    /// `alpha vp^2 / (beta + (alpha - beta) vp^2)`.
    pub lower_bound: f64,
    /// The weaker closed form `vp^2 / (beta/alpha + vp^2)`.
    pub lower_bound_weak: f64,
    /// `(beta / (alpha vp^2)) vperp^2`.
    pub upper_bound: f64,
    pub lower_satisfied: bool,
    pub upper_satisfied: bool,
}

/// Pure arithmetic evaluation of the recursion bounds on measured norms.
/// `vp`/`vperp` are the aligned/perpendicular norms of the unit iterate
/// before the step, `u1p`/`u1perp` of the normalized iterate after it.
pub fn check_convergence_recursion(
    alpha: f64,
    beta: f64,
    vp: f64,
    vperp: f64,
    u1p: f64,
    u1perp: f64,
) -> Result<RecursionCheck> {
    if !(0.0 < beta && beta < alpha && alpha < 1.0) {
        return Err(Error::InvalidParameters(format!(
            "need 0 < beta < alpha < 1, got alpha={alpha}, beta={beta}"
        )));
    }
    if (vp * vp + vperp * vperp - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameters(
            "vp^2 + vperp^2 must equal 1 for a unit iterate".into(),
        ));
    }
    let vp2 = vp * vp;
    let lower_bound = alpha * vp2 / (beta + (alpha - beta) * vp2);
    let lower_bound_weak = vp2 / (beta / alpha + vp2);
    let upper_bound = if vp2 == 0.0 {
        f64::INFINITY
    } else {
        beta / (alpha * vp2) * vperp * vperp
    };
    Ok(RecursionCheck {
        lower_bound,
        lower_bound_weak,
        upper_bound,
        lower_satisfied: u1p * u1p >= lower_bound - 1e-12,
        upper_satisfied: u1perp * u1perp <= upper_bound + 1e-12,
    })
}

fn ln_weight(cfg: &DiagConfig, m: usize) -> f64 {
    (((cfg.horizon as f64).ln() + cfg.eta.ln()) / m as f64).sqrt()
}

/// First-row/first-column concentration sums. Every left-hand side is
/// evaluated exactly from the stored matrices and iterates; right-hand
/// sides use the explicit constant 4 where one is known and
/// `cfg.lemma_constant` otherwise. Requires dense storage and a coupling
/// with retained states.
pub fn check_concentration_bounds(
    op: &SensingOperator,
    aux: &AuxiliaryOperator,
    coupling: &AuxiliaryCoupling,
    cfg: &DiagConfig,
) -> Result<Vec<CheckRecord>> {
    if !op.is_dense() {
        return Err(Error::NotSupportedInStreamedMode);
    }
    if op.frame() != crate::sensing::Frame::Canonical {
        return Err(Error::CanonicalFrameRequired);
    }
    let dims = op.dims();
    let (n1, n2, m) = (dims.n1, dims.n2, dims.m);
    let mut out = Vec::new();

    // sum_i (A_i)_{00} cross(A_i) e1: first coordinate vanishes by
    // construction; the rest concentrate below 4 sqrt(n1/m) * m.
    let e1_bound = 4.0 * (n1 as f64 / m as f64).sqrt();
    for (name, source) in [("cross_e1_sum", op), ("cross_e1_sum_aux", aux.operator())] {
        let mut s = Array1::<f64>::zeros(n1);
        for i in 0..m {
            let a00 = op.entry(i, 0, 0);
            for j in 1..n1 {
                s[j] += a00 * source.entry(i, j, 0);
            }
        }
        assert_eq!(s[0], 0.0, "aligned coordinate of the cross sum must vanish");
        out.push(CheckRecord::new(0, name, s.dot(&s).sqrt() / m as f64, e1_bound));
    }

    let weight = cfg.lemma_constant * ln_weight(cfg, m);
    for cs in coupling.states.iter().take(cfg.horizon) {
        let t = cs.t;
        let v_t = cs.primary.v.column(0);
        let av_t = cs.auxiliary.v.column(0);
        let (_, v_perp) = e1_split(v_t);
        let (_, av_perp) = e1_split(av_t);
        let av_perp_norm = av_perp.dot(&av_perp).sqrt();

        // (1/m) |[sum_i (A_i)_{00} cross(A_i)] w| for w supported away from
        // e1 collapses to one coordinate: sum_i a00_i <row0(A_i), w>.
        let mut base_dot = 0.0;
        let mut aux_dot = 0.0;
        for i in 0..m {
            let a00 = op.entry(i, 0, 0);
            let mut rb = 0.0;
            let mut ra = 0.0;
            for k in 1..n2 {
                rb += op.entry(i, 0, k) * av_perp[k];
                ra += aux.operator().entry(i, 0, k) * v_perp[k];
            }
            base_dot += a00 * rb;
            aux_dot += a00 * ra;
        }
        out.push(CheckRecord::new(
            t,
            "cross_weighted_aux_perp",
            base_dot.abs() / m as f64,
            weight * av_perp_norm,
        ));
        out.push(CheckRecord::new(
            t,
            "cross_aux_weighted_primary_perp",
            aux_dot.abs() / m as f64,
            weight * av_perp_norm,
        ));

        // Coupled product sums: (1/m) |sum_i <row0 part, v~> <blockdiag(A_i),
        // u_half^perp (v^perp)^T>|, bounded by the measured energy of the
        // corresponding rank-one image. The half-step pairs with the iterate
        // that produced it, i.e. `v_prev`.
        let (_, au_half_perp) = e1_split(cs.auxiliary.u_half.column(0));
        let (_, u_half_perp) = e1_split(cs.primary.u_half.column(0));
        let (_, prev_v_perp) = e1_split(cs.primary.v_prev.column(0));
        let (_, prev_av_perp) = e1_split(cs.auxiliary.v_prev.column(0));

        let mut sum_a = 0.0; // base cross row against auxiliary pair
        let mut sum_b = 0.0; // aux cross row against primary pair
        for i in 0..m {
            // Row sums skip coordinate 0, so the perp vector stands in for
            // the full one.
            let mut row_base = 0.0;
            let mut row_aux = 0.0;
            for k in 1..n2 {
                row_base += op.entry(i, 0, k) * prev_av_perp[k];
                row_aux += aux.operator().entry(i, 0, k) * prev_av_perp[k];
            }
            let mut d_aux_pair = 0.0;
            let mut d_main_pair = 0.0;
            for j in 1..n1 {
                let mut rb = 0.0;
                let mut rm = 0.0;
                for k in 1..n2 {
                    rb += op.entry(i, j, k) * prev_av_perp[k];
                    rm += op.entry(i, j, k) * prev_v_perp[k];
                }
                d_aux_pair += au_half_perp[j] * rb;
                d_main_pair += u_half_perp[j] * rm;
            }
            sum_a += row_base * d_aux_pair;
            sum_b += row_aux * d_main_pair;
        }
        let img_aux = op.forward_rank1(au_half_perp.view(), prev_av_perp.view())?;
        let img_main = op.forward_rank1(u_half_perp.view(), prev_v_perp.view())?;
        out.push(CheckRecord::new(
            t,
            "coupled_cross_blockdiag_aux",
            sum_a.abs() / m as f64,
            weight * img_aux.dot(&img_aux).sqrt(),
        ));
        out.push(CheckRecord::new(
            t,
            "coupled_cross_blockdiag_primary",
            sum_b.abs() / m as f64,
            weight * img_main.dot(&img_main).sqrt(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::als::{als_run, ls_update_u, relative_error};
    use crate::stream::{sphere_sample, Lane};
    use ndarray::array;

    fn canonical_instance(
        n: usize,
        m: usize,
        seed: u64,
    ) -> (SensingOperator, AuxiliaryOperator, Array1<f64>, GroundTruth) {
        let dims = ProblemDims::new(n, n, m, 1).unwrap();
        let op = SensingOperator::build_dense(dims, StreamKey::new(seed, Lane::Measurement))
            .into_canonical();
        let aux = AuxiliaryOperator::build(&op, StreamKey::new(seed, Lane::AuxResample)).unwrap();
        let mut e1u = Array1::zeros(n);
        e1u[0] = 1.0;
        let mut e1v = Array1::zeros(n);
        e1v[0] = 1.0;
        let y = op.forward_rank1(e1u.view(), e1v.view()).unwrap();
        (op, aux, y, GroundTruth::rank1(e1u, e1v))
    }

    #[test]
    fn par_perp_examples() {
        let e1 = array![1.0, 0.0, 0.0];
        let same = par_perp(e1.view(), e1.view());
        assert_eq!((same.parallel_norm, same.perp_norm, same.parallel_coeff), (1.0, 0.0, 1.0));

        let perp = par_perp(array![0.0, 1.0, 0.0].view(), e1.view());
        assert_eq!((perp.parallel_norm, perp.perp_norm, perp.parallel_coeff), (0.0, 1.0, 0.0));

        let mixed = par_perp(array![0.6, 0.8, 0.0].view(), e1.view());
        assert!((mixed.parallel_norm - 0.6).abs() < 1e-15);
        assert!((mixed.perp_norm - 0.8).abs() < 1e-15);
        assert!((mixed.parallel_coeff - 0.6).abs() < 1e-15);
    }

    #[test]
    fn par_perp_pythagoras() {
        for t in 0..50u64 {
            let w = sphere_sample(&StreamKey::new(3, Lane::Trial).trial(t), 16).unwrap() * 2.5;
            let w_star = sphere_sample(&StreamKey::new(4, Lane::Trial).trial(t), 16).unwrap();
            let view = par_perp(w.view(), w_star.view());
            let lhs = view.parallel_norm.powi(2) + view.perp_norm.powi(2);
            assert!((lhs - w.dot(&w)).abs() < 1e-12);
        }
    }

    #[test]
    fn c_t_values_and_errors() {
        assert_eq!(c_t(0, 256).unwrap(), 0.0);
        assert!((c_t(1, 256).unwrap() - 0.180336_88).abs() < 1e-6);
        assert!((c_t(2, 256).unwrap() - 0.393195_1).abs() < 1e-6);
        assert!(matches!(c_t(1, 2), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn c_t_monotone_and_bounded() {
        for &n2 in &[8usize, 64, 256, 1024] {
            let horizon = ((n2 as f64).ln() / (4.0 * (n2 as f64).ln().ln())).ceil() as usize;
            let horizon = horizon.max(1);
            let mut prev = -1.0;
            for t in 0..=2 * horizon {
                let c = c_t(t, n2).unwrap();
                assert!(c > prev, "schedule not increasing at t={t}, n2={n2}");
                prev = c;
            }
            let cap = (2.0 * horizon as f64 / (n2 as f64).ln()).exp() - 1.0;
            assert!(c_t(2 * horizon, n2).unwrap() <= cap + 1e-12);
        }
    }

    #[test]
    fn oracle_composition_is_identity() {
        let dims = ProblemDims::new(6, 5, 1, 1).unwrap();
        let oracle = isotropic_oracle(dims);
        let key = StreamKey::new(5, Lane::Trial);
        let x = Array2::from_shape_fn((6, 5), |(j, k)| {
            gaussian_at(&key.entry(j as u32, k as u32))
        });
        let back = oracle.adjoint(oracle.forward(x.view()).unwrap().view()).unwrap();
        let rel = (&back - &x).mapv(f64::abs).sum() / x.mapv(f64::abs).sum();
        assert!(rel < 1e-12, "rel {rel}");
    }

    #[test]
    fn oracle_half_step_projects_onto_truth() {
        let n = 12;
        let dims = ProblemDims::new(n, n, 1, 1).unwrap();
        let oracle = isotropic_oracle(dims);
        let u_star = sphere_sample(&StreamKey::new(8, Lane::Trial).matrix(0), n).unwrap();
        let v_star = sphere_sample(&StreamKey::new(8, Lane::Trial).matrix(1), n).unwrap();
        let y = oracle.forward_rank1(u_star.view(), v_star.view()).unwrap();
        let v = sphere_sample(&StreamKey::new(8, Lane::Init), n).unwrap();
        let u_half = ls_update_u(&oracle, &y, v.view()).unwrap();
        let expected = &u_star * v_star.dot(&v);
        let diff = (&u_half - &expected).mapv(f64::abs).sum();
        assert!(diff < 1e-12, "diff {diff}");
    }

    #[test]
    fn oracle_run_converges_in_one_iteration() {
        let n = 16;
        let dims = ProblemDims::new(n, n, 1, 1).unwrap();
        let oracle = isotropic_oracle(dims);
        let u_star = sphere_sample(&StreamKey::new(9, Lane::Trial).matrix(0), n).unwrap();
        let v_star = sphere_sample(&StreamKey::new(9, Lane::Trial).matrix(1), n).unwrap();
        let y = oracle.forward_rank1(u_star.view(), v_star.view()).unwrap();
        let truth = GroundTruth::rank1(u_star, v_star);
        let v0 = sphere_sample(&StreamKey::new(9, Lane::Init), n).unwrap();
        let stop = StopRule::new(5, 0.0, 1e-10).unwrap();
        let out = als_run(&oracle, &y, v0.view(), &stop, Some(&truth)).unwrap();
        assert_eq!(out.state.t, 1, "expected one-step convergence");
        assert!(out.trajectory.records[1].sin_v <= 1e-10);
        assert!(relative_error(&out.state, &truth) <= 1e-10);
    }

    #[test]
    fn oracle_orthogonal_start_degenerates() {
        let n = 8;
        let oracle = isotropic_oracle(ProblemDims::new(n, n, 1, 1).unwrap());
        let mut e1 = Array1::zeros(n);
        e1[0] = 1.0;
        let mut e2 = Array1::zeros(n);
        e2[1] = 1.0;
        let y = oracle.forward_rank1(e1.view(), e1.view()).unwrap();
        let stop = StopRule::new(3, 0.0, 0.0).unwrap();
        let out = als_run(&oracle, &y, e2.view(), &stop, None).unwrap();
        assert_eq!(out.termination, Termination::Failed(FailureKind::DegenerateIterate));
    }

    #[test]
    fn rip_estimate_deterministic_and_prefix_monotone() {
        let dims = ProblemDims::new(8, 8, 128, 1).unwrap();
        let op = SensingOperator::build_dense(dims, StreamKey::new(12, Lane::Measurement));
        let seed = StreamKey::new(13, Lane::Trial);
        let a = estimate_rip(&op, 100, &seed).unwrap();
        let b = estimate_rip(&op, 100, &seed).unwrap();
        assert_eq!(a.estimate.delta_hat, b.estimate.delta_hat);
        let c = estimate_rip(&op, 200, &seed).unwrap();
        assert!(c.estimate.delta_hat >= a.estimate.delta_hat);
        assert_eq!(c.estimate.max_rank_tested, 4);
    }

    #[test]
    fn rip_estimate_small_at_heavy_oversampling() {
        let n = 8;
        let dims = ProblemDims::new(n, n, 100 * n, 1).unwrap();
        let op = SensingOperator::build_dense(dims, StreamKey::new(15, Lane::Measurement));
        let report = estimate_rip(&op, 200, &StreamKey::new(16, Lane::Trial)).unwrap();
        assert!(report.estimate.delta_hat <= 0.3, "delta_hat {}", report.estimate.delta_hat);
    }

    #[test]
    fn rip_estimate_zero_under_oracle() {
        let oracle = isotropic_oracle(ProblemDims::new(6, 6, 1, 1).unwrap());
        let report = estimate_rip(&oracle, 50, &StreamKey::new(17, Lane::Trial)).unwrap();
        assert!(report.estimate.delta_hat <= 1e-12);
    }

    #[test]
    fn rip_split_margins_reported_in_canonical_frame() {
        let (op, _, _, _) = canonical_instance(10, 400, 31);
        let report = estimate_rip(&op, 50, &StreamKey::new(32, Lane::Trial)).unwrap();
        assert_eq!(report.split_checks.len(), 4);
        for check in &report.split_checks {
            assert!(check.lhs.is_finite() && check.rhs.is_finite());
            assert!(check.ratio().is_finite());
        }
    }

    #[test]
    fn coupled_run_identical_operators_have_zero_closeness() {
        let (op, _, _, _) = canonical_instance(10, 120, 41);
        let aux = AuxiliaryOperator::identical(&op).unwrap();
        let v0 = sphere_sample(&StreamKey::new(41, Lane::Init), 10).unwrap();
        let stop = StopRule::new(6, 0.0, 0.0).unwrap();
        let coupling = coupled_run(&op, &aux, v0.view(), &stop).unwrap();
        assert!(coupling.auxiliary_failure.is_none());
        for rec in &coupling.records {
            assert_eq!(rec.d_par, 0.0);
            assert_eq!(rec.d_perp, 0.0);
            assert!(rec.satisfied);
        }
    }

    #[test]
    fn coupled_run_oracle_sequences_coincide() {
        let n = 8;
        let oracle = isotropic_oracle(ProblemDims::new(n, n, 1, 1).unwrap()).into_canonical();
        let aux = AuxiliaryOperator::identical(&oracle).unwrap();
        let v0 = sphere_sample(&StreamKey::new(43, Lane::Init), n).unwrap();
        let stop = StopRule::new(4, 1e-12, 0.0).unwrap();
        let coupling = coupled_run(&oracle, &aux, v0.view(), &stop).unwrap();
        for rec in &coupling.records {
            assert_eq!(rec.d_par, 0.0);
            assert_eq!(rec.d_perp, 0.0);
        }
    }

    #[test]
    fn coupled_run_initial_record_is_trivially_satisfied() {
        let (op, aux, _, _) = canonical_instance(12, 200, 47);
        let v0 = sphere_sample(&StreamKey::new(47, Lane::Init), 12).unwrap();
        let stop = StopRule::new(3, 0.0, 0.0).unwrap();
        let coupling = coupled_run(&op, &aux, v0.view(), &stop).unwrap();
        let first = &coupling.records[0];
        assert_eq!(first.t, 0);
        assert_eq!(first.d_par, 0.0);
        assert_eq!(first.d_perp, 0.0);
        assert_eq!(first.bound, 0.0);
        assert!(first.satisfied);
    }

    #[test]
    fn normal_equation_identity_holds_mid_run() {
        let n = 16;
        let dims = ProblemDims::new(n, n, 6 * n, 1).unwrap();
        let op = SensingOperator::build_dense(dims, StreamKey::new(51, Lane::Measurement));
        let u_star = sphere_sample(&StreamKey::new(51, Lane::Trial).matrix(0), n).unwrap();
        let v_star = sphere_sample(&StreamKey::new(51, Lane::Trial).matrix(1), n).unwrap();
        let y = op.forward_rank1(u_star.view(), v_star.view()).unwrap();
        let truth = GroundTruth::rank1(u_star, v_star);
        let v0 = sphere_sample(&StreamKey::new(51, Lane::Init), n).unwrap();
        let stop = StopRule::new(8, 0.0, 0.0).unwrap();
        let mut discs = Vec::new();
        crate::als::als_run_observed(
            &op,
            &y,
            &v0.clone().insert_axis(ndarray::Axis(1)),
            &stop,
            Some(&truth),
            |state| {
                discs.push(check_normal_equation(&op, state, &truth).unwrap());
            },
        )
        .unwrap();
        assert!(!discs.is_empty());
        for d in discs {
            assert!(d <= 1e-8, "discrepancy {d}");
        }
    }

    #[test]
    fn normal_equation_detects_perturbation() {
        let n = 16;
        let dims = ProblemDims::new(n, n, 6 * n, 1).unwrap();
        let op = SensingOperator::build_dense(dims, StreamKey::new(52, Lane::Measurement));
        let u_star = sphere_sample(&StreamKey::new(52, Lane::Trial).matrix(0), n).unwrap();
        let v_star = sphere_sample(&StreamKey::new(52, Lane::Trial).matrix(1), n).unwrap();
        let y = op.forward_rank1(u_star.view(), v_star.view()).unwrap();
        let truth = GroundTruth::rank1(u_star, v_star);
        let v0 = sphere_sample(&StreamKey::new(52, Lane::Init), n).unwrap();
        let stop = StopRule::new(2, 0.0, 0.0).unwrap();
        let out = als_run(&op, &y, v0.view(), &stop, Some(&truth)).unwrap();
        let mut state = out.state;
        let noise = sphere_sample(&StreamKey::new(53, Lane::Trial), n).unwrap() * 1e-3;
        state.u_half = (&state.u_half.column(0).to_owned() + &noise).insert_axis(ndarray::Axis(1));
        let disc = check_normal_equation(&op, &state, &truth).unwrap();
        assert!(disc > 1e-4, "perturbed discrepancy {disc}");
    }

    #[test]
    fn perp_decrease_exact_when_aligned() {
        let (op, _, y, truth) = canonical_instance(16, 16 * 12, 61);
        let v_star = truth.v.column(0).to_owned();
        let u_half = ls_update_u(&op, &y, v_star.view()).unwrap();
        let checks = check_perp_decrease(v_star.view(), u_half.view(), &truth, 0.3).unwrap();
        // With v = v_star the perpendicular budget is zero and the exact
        // minimizer matches it to solver precision.
        assert!(checks[0].lhs <= 1e-8, "deviation {}", checks[0].lhs);
        assert!(checks[1].lhs <= 1e-8, "perp {}", checks[1].lhs);
        assert!(checks[2].satisfied);
    }

    #[test]
    fn perp_decrease_zero_under_oracle() {
        let n = 10;
        let oracle = isotropic_oracle(ProblemDims::new(n, n, 1, 1).unwrap());
        let u_star = sphere_sample(&StreamKey::new(62, Lane::Trial).matrix(0), n).unwrap();
        let v_star = sphere_sample(&StreamKey::new(62, Lane::Trial).matrix(1), n).unwrap();
        let y = oracle.forward_rank1(u_star.view(), v_star.view()).unwrap();
        let truth = GroundTruth::rank1(u_star, v_star);
        let v = sphere_sample(&StreamKey::new(62, Lane::Init), n).unwrap();
        let u_half = ls_update_u(&oracle, &y, v.view()).unwrap();
        let checks = check_perp_decrease(v.view(), u_half.view(), &truth, 0.1).unwrap();
        assert!(checks[1].lhs <= 1e-12, "oracle perp {}", checks[1].lhs);
    }

    #[test]
    fn recursion_check_boundary_and_formula() {
        let boundary = check_convergence_recursion(0.25, 0.01, 1.0, 0.0, 1.0, 0.0).unwrap();
        assert!(boundary.lower_satisfied && boundary.upper_satisfied);
        assert!((boundary.lower_bound - 1.0).abs() < 1e-12);
        assert_eq!(boundary.upper_bound, 0.0);

        // alpha = 1/4, beta = 4 delta^2 with delta = 0.05, vp = 0.1: the
        // weak form evaluates to 0.01 / (0.04 + 0.01) = 0.2.
        let vp: f64 = 0.1;
        let vperp = (1.0 - vp * vp).sqrt();
        let check = check_convergence_recursion(0.25, 0.01, vp, vperp, 0.5, 0.8).unwrap();
        assert!((check.lower_bound_weak - 0.2).abs() < 1e-12);
        assert!(check.lower_bound >= check.lower_bound_weak - 1e-12);

        assert!(matches!(
            check_convergence_recursion(0.1, 0.5, 0.6, 0.8, 0.5, 0.5),
            Err(Error::InvalidParameters(_))
        ));
    }

    #[test]
    fn recursion_check_is_pure() {
        let a = check_convergence_recursion(0.25, 0.04, 0.3, (1.0f64 - 0.09).sqrt(), 0.7, 0.4).unwrap();
        let b = check_convergence_recursion(0.25, 0.04, 0.3, (1.0f64 - 0.09).sqrt(), 0.7, 0.4).unwrap();
        assert_eq!(a.lower_bound.to_bits(), b.lower_bound.to_bits());
        assert_eq!(a.lower_satisfied, b.lower_satisfied);
    }

    #[test]
    fn concentration_checks_produce_finite_rows() {
        let (op, aux, _, _) = canonical_instance(16, 512, 71);
        let v0 = sphere_sample(&StreamKey::new(71, Lane::Init), 16).unwrap();
        let stop = StopRule::new(5, 0.0, 0.0).unwrap();
        let coupling = coupled_run(&op, &aux, v0.view(), &stop).unwrap();
        let cfg = DiagConfig::new(5, 16.0).unwrap();
        let rows = check_concentration_bounds(&op, &aux, &coupling, &cfg).unwrap();
        assert!(rows.len() >= 2 + 4 * coupling.states.len().min(5));
        for row in &rows {
            assert!(row.lhs.is_finite(), "{} lhs", row.name);
            assert!(row.ratio().is_finite() || row.lhs == 0.0, "{} ratio", row.name);
        }
    }

    #[test]
    fn concentration_checks_reject_streamed() {
        let dims = ProblemDims::new(8, 8, 64, 1).unwrap();
        let op = SensingOperator::build_streamed(dims, StreamKey::new(73, Lane::Measurement))
            .into_canonical();
        let dense_twin = SensingOperator::build_dense(dims, StreamKey::new(73, Lane::Measurement))
            .into_canonical();
        let aux = AuxiliaryOperator::build(&dense_twin, StreamKey::new(73, Lane::AuxResample)).unwrap();
        let v0 = sphere_sample(&StreamKey::new(73, Lane::Init), 8).unwrap();
        let stop = StopRule::new(2, 0.0, 0.0).unwrap();
        let coupling = coupled_run(&op, &aux, v0.view(), &stop).unwrap();
        let cfg = DiagConfig::new(2, 8.0).unwrap();
        assert!(matches!(
            check_concentration_bounds(&op, &aux, &coupling, &cfg),
            Err(Error::NotSupportedInStreamedMode)
        ));
    }

    #[test]
    fn diag_config_validation() {
        assert!(DiagConfig::new(0, 8.0).is_err());
        assert!(DiagConfig::new(4, 1.0).is_err());
        assert!(DiagConfig::new(4, 8.0).is_ok());
    }

    #[test]
    fn checks_csv_schema() {
        let rows = vec![CheckRecord::new(1, "demo", 0.5, 1.0)];
        let csv = checks_to_csv(&rows, &["seed=1".into()]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "# seed=1");
        assert_eq!(lines.next().unwrap(), "t,check_name,lhs,rhs,ratio,satisfied");
        let row = lines.next().unwrap();
        assert!(row.starts_with("1,demo,"));
        assert!(row.ends_with(",true"));
    }
}
