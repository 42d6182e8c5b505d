//! Starting iterates: uniform random on the unit sphere, or the leading
//! singular pair of the back-projected observations (spectral start).

use crate::error::{Error, Result};
use crate::linalg::orthonormalize_columns;
use crate::sensing::{ProblemDims, SensingOperator};
use crate::stream::{gaussian_at, sphere_sample, StreamKey};
use ndarray::{Array1, Array2};

/// Which starting iterate to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    RandomSphere,
    Spectral,
}

impl InitKind {
    pub fn label(&self) -> &'static str {
        match self {
            InitKind::RandomSphere => "random",
            InitKind::Spectral => "spectral",
        }
    }
}

/// Initialization parameters. `power_iters`/`power_tol` only matter for the
/// spectral start.
#[derive(Debug, Clone, Copy)]
pub struct InitSpec {
    pub kind: InitKind,
    pub power_iters: usize,
    pub power_tol: f64,
}

impl InitSpec {
    pub fn new(kind: InitKind) -> Self {
        InitSpec { kind, power_iters: 100, power_tol: 1e-10 }
    }
}

/// Uniform random unit vector in `R^{n2}`, deterministic in `seed`.
pub fn random_init(dims: &ProblemDims, seed: &StreamKey) -> Result<Array1<f64>> {
    sphere_sample(seed, dims.n2)
}

/// Random matrix with orthonormal columns (Gaussian fill + Gram-Schmidt),
/// for the rank-r path.
pub fn random_orthonormal(dim: usize, r: usize, seed: &StreamKey) -> Result<Array2<f64>> {
    if dim == 0 || r == 0 || r > dim {
        return Err(Error::InvalidDimension(format!("orthonormal block {dim}x{r}")));
    }
    let mut a = Array2::from_shape_fn((dim, r), |(j, c)| {
        gaussian_at(&seed.entry(j as u32, c as u32))
    });
    orthonormalize_columns(&mut a);
    Ok(a)
}

/// Spectral starting pair.
#[derive(Debug, Clone)]
pub struct SpectralInit {
    pub u0: Array1<f64>,
    pub v0: Array1<f64>,
    /// Power iteration did not reach `power_tol` within `power_iters`,
    /// which signals a poorly separated top singular pair.
    pub ill_separated: bool,
}

/// Leading singular pair of `M = adjoint(y)` by power iteration on `M^T M`.
///
/// Returns unit vectors with the sign convention `<u0, M v0> >= 0` (which
/// the construction `u0 = M v0 / |M v0|` yields automatically). The result
/// is invariant under positive rescaling of `y`.
pub fn spectral_init(
    op: &SensingOperator,
    y: &Array1<f64>,
    spec: &InitSpec,
    seed: &StreamKey,
) -> Result<SpectralInit> {
    let dims = op.dims();
    if y.len() != dims.m {
        return Err(Error::DimensionMismatch(format!(
            "observation length {} vs m={}",
            y.len(),
            dims.m
        )));
    }
    if y.dot(y) == 0.0 {
        return Err(Error::DegenerateObservation);
    }
    let m_mat = op.adjoint(y.view())?;

    let mut v = sphere_sample(seed, dims.n2)?;
    let mut converged = false;
    for _ in 0..spec.power_iters.max(1) {
        let s = m_mat.dot(&v);
        let mut next = m_mat.t().dot(&s);
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            // v landed in the null space; restart direction cannot improve.
            break;
        }
        next /= norm;
        let align = next.dot(&v).abs();
        v = next;
        if 1.0 - align <= spec.power_tol {
            converged = true;
            break;
        }
    }

    let mv = m_mat.dot(&v);
    let mv_norm = mv.dot(&mv).sqrt();
    if mv_norm == 0.0 {
        return Err(Error::DegenerateObservation);
    }
    let u = mv / mv_norm;
    debug_assert!(u.dot(&m_mat.dot(&v)) >= 0.0);
    Ok(SpectralInit { u0: u, v0: v, ill_separated: !converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Lane;

    fn dims(n1: usize, n2: usize, m: usize) -> ProblemDims {
        ProblemDims::new(n1, n2, m, 1).unwrap()
    }

    #[test]
    fn random_init_unit_norm_and_deterministic() {
        let d = dims(16, 32, 96);
        let seed = StreamKey::new(5, Lane::Init);
        let a = random_init(&d, &seed).unwrap();
        let b = random_init(&d, &seed).unwrap();
        assert_eq!(a, b);
        assert!((a.dot(&a).sqrt() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_init_dimension_one() {
        let d = dims(4, 1, 8);
        let v = random_init(&d, &StreamKey::new(3, Lane::Init)).unwrap();
        assert!((v[0].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_init_overlap_exceeds_inverse_root_threshold() {
        // |<v0, e1>| >= 1/(2 sqrt(n2 ln n2)) happens with probability
        // ~0.83 for n2 = 256 (the threshold is ~0.212 standard deviations
        // of the first coordinate); check the Monte-Carlo fraction lands in
        // a generous band around that value.
        let n2 = 256usize;
        let thresh = 1.0 / (2.0 * ((n2 as f64) * (n2 as f64).ln()).sqrt());
        let hits = (0..1000u64)
            .filter(|&t| {
                let v = sphere_sample(&StreamKey::new(77, Lane::Init).trial(t), n2).unwrap();
                v[0].abs() >= thresh
            })
            .count();
        let frac = hits as f64 / 1000.0;
        assert!((0.79..=0.88).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn random_init_rotation_invariant_overlap_distribution() {
        // Two-sample Kolmogorov-Smirnov statistic between <v0, w1> and
        // <v0, w2> for two fixed unit directions.
        let n2 = 16usize;
        let w1 = sphere_sample(&StreamKey::new(500, Lane::Trial), n2).unwrap();
        let w2 = sphere_sample(&StreamKey::new(501, Lane::Trial), n2).unwrap();
        let mut a: Vec<f64> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        for t in 0..2000u64 {
            let v = sphere_sample(&StreamKey::new(502, Lane::Init).trial(t), n2).unwrap();
            a.push(v.dot(&w1));
            b.push(v.dot(&w2));
        }
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut ks = 0.0f64;
        let (mut ia, mut ib) = (0usize, 0usize);
        while ia < a.len() && ib < b.len() {
            if a[ia] <= b[ib] {
                ia += 1;
            } else {
                ib += 1;
            }
            let d = (ia as f64 / a.len() as f64 - ib as f64 / b.len() as f64).abs();
            ks = ks.max(d);
        }
        assert!(ks < 0.05, "KS statistic {ks}");
    }

    #[test]
    fn random_orthonormal_columns() {
        let q = random_orthonormal(10, 3, &StreamKey::new(8, Lane::Init)).unwrap();
        let gram = q.t().dot(&q);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spectral_rejects_zero_observation() {
        let d = dims(4, 4, 8);
        let op = SensingOperator::build_dense(d, StreamKey::new(1, Lane::Measurement));
        let y = Array1::zeros(8);
        assert!(matches!(
            spectral_init(&op, &y, &InitSpec::new(InitKind::Spectral), &StreamKey::new(1, Lane::Init)),
            Err(Error::DegenerateObservation)
        ));
    }

    #[test]
    fn spectral_scale_equivariant() {
        let d = dims(8, 8, 64);
        let op = SensingOperator::build_dense(d, StreamKey::new(6, Lane::Measurement));
        let u_star = sphere_sample(&StreamKey::new(7, Lane::Trial).matrix(0), 8).unwrap();
        let v_star = sphere_sample(&StreamKey::new(7, Lane::Trial).matrix(1), 8).unwrap();
        let y = op.forward_rank1(u_star.view(), v_star.view()).unwrap();
        let spec = InitSpec::new(InitKind::Spectral);
        let seed = StreamKey::new(8, Lane::Init);
        let a = spectral_init(&op, &y, &spec, &seed).unwrap();
        let b = spectral_init(&op, &(&y * 3.5), &spec, &seed).unwrap();
        let flip = a.v0.dot(&b.v0).signum();
        let dv = (&a.v0 - &(&b.v0 * flip)).mapv(f64::abs).sum();
        let du = (&a.u0 - &(&b.u0 * flip)).mapv(f64::abs).sum();
        assert!(dv < 1e-10 && du < 1e-10, "dv {dv} du {du}");
    }

    #[test]
    fn spectral_recovers_direction_at_high_oversampling() {
        let n = 32usize;
        let m = 20 * (n + n);
        let d = dims(n, n, m);
        let spec = InitSpec::new(InitKind::Spectral);
        let mut ok = 0;
        let trials = 100u64;
        for t in 0..trials {
            let op = SensingOperator::build_dense(d, StreamKey::new(900, Lane::Measurement).trial(t));
            let u_star = sphere_sample(&StreamKey::new(901, Lane::Trial).trial(t).matrix(0), n).unwrap();
            let v_star = sphere_sample(&StreamKey::new(901, Lane::Trial).trial(t).matrix(1), n).unwrap();
            let y = op.forward_rank1(u_star.view(), v_star.view()).unwrap();
            let init = spectral_init(&op, &y, &spec, &StreamKey::new(902, Lane::Init).trial(t)).unwrap();
            if init.v0.dot(&v_star).abs() >= 0.9 {
                ok += 1;
            }
        }
        assert!(ok >= 90, "only {ok}/{trials} recoveries");
    }
}
