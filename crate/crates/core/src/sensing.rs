//! Gaussian measurement operators.
//!
//! An operator maps an `n1 x n2` matrix `X` to `m` scalars
//! `y_i = <A_i, X> / sqrt(m)` where the `A_i` have i.i.d. standard-normal
//! entries. Storage is either `Dense` (all `A_i` materialized,
//! measurements-major so each `A_i` is a contiguous row-major block) or
//! `Streamed` (entries regenerated on demand from their stream keys).
//! Both storages evaluate the same keys, so they agree bit-for-bit.
//!
//! The module also provides:
//! - the auxiliary operator that independently resamples the first row and
//!   first column (except entry `(0,0)`) of every `A_i`, and
//! - the block split of each `A_i` into its part that is block-diagonal
//!   with respect to `{span(e1), span(e1)^perp}` and the complementary
//!   cross part, so that `A_i = blockdiag_i + cross_i` entrywise.
//!
//! The auxiliary operator and the split are only meaningful in the
//! canonical frame where the ground truth is `e1 e1^T`.

use crate::error::{Error, Result};
use crate::stream::{gaussian_at, StreamKey};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use std::io::{Read, Write};

pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;

/// Problem sizes. `rank` is 1 on the main path; the solver also accepts
/// larger ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemDims {
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    pub rank: usize,
}

impl ProblemDims {
    pub fn new(n1: usize, n2: usize, m: usize, rank: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 || m == 0 {
            return Err(Error::InvalidDimension(format!(
                "all dimensions must be positive (n1={n1}, n2={n2}, m={m})"
            )));
        }
        if rank == 0 || rank > n1.min(n2) {
            return Err(Error::InvalidDimension(format!(
                "rank {rank} outside 1..=min(n1={n1}, n2={n2})"
            )));
        }
        Ok(ProblemDims { n1, n2, m, rank })
    }

    /// Bytes required to hold all measurement matrices densely.
    pub fn dense_bytes(&self) -> u128 {
        self.m as u128 * self.n1 as u128 * self.n2 as u128 * 8
    }
}

/// Whether the ground truth attached to this operator is the canonical
/// `e1 e1^T`. The resampling construction and the block split read
/// specific rows/columns and are only valid in that frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Generic,
    Canonical,
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(Vec<f64>),
    Streamed,
}

impl Storage {
    fn tag(&self) -> u8 {
        match self {
            Storage::Dense(_) => 0,
            Storage::Streamed => 1,
        }
    }
}

fn entry_value(root: &StreamKey, i: usize, j: usize, k: usize) -> f64 {
    gaussian_at(&root.matrix(i as u32).entry(j as u32, k as u32))
}

/// The measurement operator `X -> (<A_i, X> / sqrt(m))_i`.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    dims: ProblemDims,
    storage: Storage,
    /// Normalization constant `1/sqrt(m)`.
    scale: f64,
    root: StreamKey,
    frame: Frame,
}

impl SensingOperator {
    /// Builds the operator, choosing dense storage when the materialized
    /// matrices fit in `memory_budget` bytes and streamed storage otherwise.
    ///
    /// The `seed` key addresses every entry: element `(j,k)` of `A_i` lives
    /// at `seed.matrix(i).entry(j,k)`. Its matrix/row/col fields must be
    /// unset.
    pub fn build(dims: ProblemDims, seed: StreamKey, memory_budget: u64) -> Self {
        if dims.dense_bytes() <= memory_budget as u128 {
            Self::build_dense(dims, seed)
        } else {
            Self::build_streamed(dims, seed)
        }
    }

    /// Forces dense storage regardless of size.
    pub fn build_dense(dims: ProblemDims, seed: StreamKey) -> Self {
        let mut data = Vec::with_capacity(dims.m * dims.n1 * dims.n2);
        for i in 0..dims.m {
            for j in 0..dims.n1 {
                for k in 0..dims.n2 {
                    data.push(entry_value(&seed, i, j, k));
                }
            }
        }
        SensingOperator {
            dims,
            storage: Storage::Dense(data),
            scale: 1.0 / (dims.m as f64).sqrt(),
            root: seed,
            frame: Frame::Generic,
        }
    }

    /// Forces streamed storage regardless of size.
    pub fn build_streamed(dims: ProblemDims, seed: StreamKey) -> Self {
        SensingOperator {
            dims,
            storage: Storage::Streamed,
            scale: 1.0 / (dims.m as f64).sqrt(),
            root: seed,
            frame: Frame::Generic,
        }
    }

    pub(crate) fn from_dense_parts(dims: ProblemDims, data: Vec<f64>, root: StreamKey) -> Self {
        debug_assert_eq!(data.len(), dims.m * dims.n1 * dims.n2);
        SensingOperator {
            dims,
            storage: Storage::Dense(data),
            scale: 1.0 / (dims.m as f64).sqrt(),
            root,
            frame: Frame::Generic,
        }
    }

    /// Declares that the ground truth paired with this operator is
    /// `e1 e1^T`, unlocking the auxiliary/split constructions.
    pub fn into_canonical(mut self) -> Self {
        self.frame = Frame::Canonical;
        self
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn dims(&self) -> ProblemDims {
        self.dims
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn root(&self) -> StreamKey {
        self.root
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub(crate) fn dense_data(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Dense(d) => Some(d),
            Storage::Streamed => None,
        }
    }

    /// Entry `(j,k)` of `A_i` (unscaled).
    pub fn entry(&self, i: usize, j: usize, k: usize) -> f64 {
        let (n1, n2) = (self.dims.n1, self.dims.n2);
        assert!(i < self.dims.m && j < n1 && k < n2, "entry index out of range");
        match &self.storage {
            Storage::Dense(data) => data[(i * n1 + j) * n2 + k],
            Storage::Streamed => entry_value(&self.root, i, j, k),
        }
    }

    /// Runs `f` on a view of `A_i`. Dense storage passes a view of the
    /// stored block; streamed storage regenerates into `scratch` first, so
    /// both paths hand `f` identical values.
    pub(crate) fn with_matrix<R>(
        &self,
        i: usize,
        scratch: &mut Array2<f64>,
        f: impl FnOnce(ArrayView2<f64>) -> R,
    ) -> R {
        let (n1, n2) = (self.dims.n1, self.dims.n2);
        match &self.storage {
            Storage::Dense(data) => {
                let block = &data[i * n1 * n2..(i + 1) * n1 * n2];
                f(ArrayView2::from_shape((n1, n2), block).expect("dense block shape"))
            }
            Storage::Streamed => {
                for j in 0..n1 {
                    for k in 0..n2 {
                        scratch[(j, k)] = entry_value(&self.root, i, j, k);
                    }
                }
                f(scratch.view())
            }
        }
    }

    fn scratch(&self) -> Array2<f64> {
        match self.storage {
            Storage::Dense(_) => Array2::zeros((0, 0)),
            Storage::Streamed => Array2::zeros((self.dims.n1, self.dims.n2)),
        }
    }

    fn check_uv(&self, u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<()> {
        if u.len() != self.dims.n1 || v.len() != self.dims.n2 {
            return Err(Error::DimensionMismatch(format!(
                "factor lengths ({}, {}) vs dims ({}, {})",
                u.len(),
                v.len(),
                self.dims.n1,
                self.dims.n2
            )));
        }
        Ok(())
    }

    /// `(u^T A_i v / sqrt(m))_i` without materializing `u v^T`.
    pub fn forward_rank1(&self, u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_uv(u, v)?;
        let mut scratch = self.scratch();
        let mut av = Array1::zeros(self.dims.n1);
        let mut y = Array1::zeros(self.dims.m);
        for i in 0..self.dims.m {
            self.with_matrix(i, &mut scratch, |a| {
                ndarray::linalg::general_mat_vec_mul(1.0, &a, &v, 0.0, &mut av);
            });
            y[i] = u.dot(&av) * self.scale;
        }
        Ok(y)
    }

    /// `(<A_i, U V^T> / sqrt(m))_i` for factor blocks with matching row
    /// counts.
    pub fn forward_factored(&self, u: &Array2<f64>, v: &Array2<f64>) -> Result<Array1<f64>> {
        if u.nrows() != self.dims.n1 || v.nrows() != self.dims.n2 || u.ncols() != v.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "factor blocks {}x{} and {}x{} vs dims {}x{}",
                u.nrows(),
                u.ncols(),
                v.nrows(),
                v.ncols(),
                self.dims.n1,
                self.dims.n2
            )));
        }
        let mut scratch = self.scratch();
        let mut y = Array1::zeros(self.dims.m);
        for i in 0..self.dims.m {
            let av = self.with_matrix(i, &mut scratch, |a| a.dot(v));
            // <A_i, U V^T> = <A_i V, U>
            let mut acc = 0.0;
            for (x, w) in av.iter().zip(u.iter()) {
                acc += x * w;
            }
            y[i] = acc * self.scale;
        }
        Ok(y)
    }

    /// `(<A_i, X> / sqrt(m))_i` for a full matrix argument.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.nrows() != self.dims.n1 || x.ncols() != self.dims.n2 {
            return Err(Error::DimensionMismatch(format!(
                "matrix {}x{} vs dims {}x{}",
                x.nrows(),
                x.ncols(),
                self.dims.n1,
                self.dims.n2
            )));
        }
        let mut scratch = self.scratch();
        let mut y = Array1::zeros(self.dims.m);
        for i in 0..self.dims.m {
            let dot = self.with_matrix(i, &mut scratch, |a| {
                let mut acc = 0.0;
                for (aij, xij) in a.iter().zip(x.iter()) {
                    acc += aij * xij;
                }
                acc
            });
            y[i] = dot * self.scale;
        }
        Ok(y)
    }

    /// Adjoint map `z -> sum_i z_i A_i / sqrt(m)`, so that
    /// `<forward(X), z> = <X, adjoint(z)>`.
    pub fn adjoint(&self, z: ArrayView1<f64>) -> Result<Array2<f64>> {
        if z.len() != self.dims.m {
            return Err(Error::DimensionMismatch(format!(
                "measurement length {} vs m={}",
                z.len(),
                self.dims.m
            )));
        }
        let mut scratch = self.scratch();
        let mut x = Array2::zeros((self.dims.n1, self.dims.n2));
        for i in 0..self.dims.m {
            let c = z[i] * self.scale;
            self.with_matrix(i, &mut scratch, |a| {
                x.scaled_add(c, &a);
            });
        }
        Ok(x)
    }

    /// Design matrix of the `u`-subproblem: row `i` is `(A_i v)^T / sqrt(m)`
    /// stacked over the columns of `v` (row-major over `(j, col)`), so that
    /// `B vec(U) = forward_factored(U, V)`.
    pub(crate) fn design_for_u(&self, v: &Array2<f64>) -> Array2<f64> {
        let r = v.ncols();
        let mut scratch = self.scratch();
        let mut b = Array2::zeros((self.dims.m, self.dims.n1 * r));
        for i in 0..self.dims.m {
            let av = self.with_matrix(i, &mut scratch, |a| a.dot(v)); // n1 x r
            let mut row = b.row_mut(i);
            for (dst, src) in row.iter_mut().zip(av.iter()) {
                *dst = src * self.scale;
            }
        }
        b
    }

    /// Design matrix of the `v`-subproblem: row `i` is built from
    /// `A_i^T u`, so that `B vec(V) = forward_factored(U, V)`.
    pub(crate) fn design_for_v(&self, u: &Array2<f64>) -> Array2<f64> {
        let r = u.ncols();
        let mut scratch = self.scratch();
        let mut b = Array2::zeros((self.dims.m, self.dims.n2 * r));
        for i in 0..self.dims.m {
            let atu = self.with_matrix(i, &mut scratch, |a| a.t().dot(u)); // n2 x r
            let mut row = b.row_mut(i);
            for (dst, src) in row.iter_mut().zip(atu.iter()) {
                *dst = src * self.scale;
            }
        }
        b
    }

    /// Restriction of the operator to one block of the canonical split.
    pub fn split(&self, mask: SplitMask) -> Result<OperatorSplit<'_>> {
        if self.frame != Frame::Canonical {
            return Err(Error::CanonicalFrameRequired);
        }
        Ok(OperatorSplit { mask, op: self })
    }

    /// Serializes a dense operator (header + row-major little-endian f64
    /// payload) for cross-implementation comparison.
    pub fn dump(&self, w: &mut impl Write) -> Result<()> {
        let data = match &self.storage {
            Storage::Dense(d) => d,
            Storage::Streamed => return Err(Error::NotSupportedInStreamedMode),
        };
        w.write_all(b"ALSSENSE")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&[self.storage.tag(), self.root.lane as u8, matches!(self.frame, Frame::Canonical) as u8, 0])?;
        for d in [self.dims.n1, self.dims.n2, self.dims.m, self.dims.rank] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&self.root.master_seed.to_le_bytes())?;
        w.write_all(&self.root.trial.to_le_bytes())?;
        for value in data {
            w.write_all(&value.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads back an operator written by [`SensingOperator::dump`].
    pub fn load(r: &mut impl Read) -> Result<Self> {
        use crate::stream::Lane;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"ALSSENSE" {
            return Err(Error::MalformedDump("bad magic".into()));
        }
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4)?;
        if u32::from_le_bytes(buf4) != 1 {
            return Err(Error::MalformedDump("unsupported version".into()));
        }
        r.read_exact(&mut buf4)?;
        let [tag, lane_byte, canonical, _pad] = buf4;
        if tag != 0 {
            return Err(Error::MalformedDump("only dense dumps supported".into()));
        }
        let lane = match lane_byte {
            0 => Lane::Measurement,
            1 => Lane::AuxResample,
            2 => Lane::Init,
            3 => Lane::Trial,
            other => return Err(Error::MalformedDump(format!("bad lane byte {other}"))),
        };
        let mut buf8 = [0u8; 8];
        let mut dims_raw = [0u64; 4];
        for slot in dims_raw.iter_mut() {
            r.read_exact(&mut buf8)?;
            *slot = u64::from_le_bytes(buf8);
        }
        r.read_exact(&mut buf8)?;
        let master_seed = u64::from_le_bytes(buf8);
        r.read_exact(&mut buf8)?;
        let trial = u64::from_le_bytes(buf8);
        let dims = ProblemDims::new(
            dims_raw[0] as usize,
            dims_raw[1] as usize,
            dims_raw[2] as usize,
            dims_raw[3] as usize,
        )?;
        let count = dims.m * dims.n1 * dims.n2;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut buf8)?;
            data.push(f64::from_le_bytes(buf8));
        }
        let mut op = Self::from_dense_parts(dims, data, StreamKey::new(master_seed, lane).trial(trial));
        if canonical != 0 {
            op = op.into_canonical();
        }
        Ok(op)
    }
}

/// Which coordinates of each resampled `A_i` differ from the base matrix:
/// the first row (except `(0,0)`) and the first column (except `(0,0)`).
fn is_resampled(j: usize, k: usize) -> bool {
    (j == 0) != (k == 0)
}

/// Operator with independently resampled first-row/first-column entries.
///
/// Shares entry `(0,0)` and the interior block of every `A_i` with the base
/// operator, so both map the canonical ground truth `e1 e1^T` to the same
/// observations. Always materialized densely.
#[derive(Debug, Clone)]
pub struct AuxiliaryOperator {
    op: SensingOperator,
    resample_root: StreamKey,
}

impl AuxiliaryOperator {
    /// Builds the resampled companion of `base`. Requires the canonical
    /// frame; the fresh entries come from `resample_root`.
    pub fn build(base: &SensingOperator, resample_root: StreamKey) -> Result<Self> {
        if base.frame() != Frame::Canonical {
            return Err(Error::CanonicalFrameRequired);
        }
        let dims = base.dims();
        let mut data = match base.dense_data() {
            Some(d) => d.to_vec(),
            None => {
                let mut d = Vec::with_capacity(dims.m * dims.n1 * dims.n2);
                for i in 0..dims.m {
                    for j in 0..dims.n1 {
                        for k in 0..dims.n2 {
                            d.push(entry_value(&base.root(), i, j, k));
                        }
                    }
                }
                d
            }
        };
        for i in 0..dims.m {
            let block = i * dims.n1 * dims.n2;
            for k in 1..dims.n2 {
                data[block + k] = entry_value(&resample_root, i, 0, k);
            }
            for j in 1..dims.n1 {
                data[block + j * dims.n2] = entry_value(&resample_root, i, j, 0);
            }
        }
        let op = SensingOperator::from_dense_parts(dims, data, base.root()).into_canonical();
        Ok(AuxiliaryOperator { op, resample_root })
    }

    /// Degenerate companion sharing every entry with `base` (no
    /// resampling). Useful as a baseline: coupled runs against it coincide
    /// with the primary sequence exactly.
    pub fn identical(base: &SensingOperator) -> Result<Self> {
        if base.frame() != Frame::Canonical {
            return Err(Error::CanonicalFrameRequired);
        }
        Ok(AuxiliaryOperator { op: base.clone(), resample_root: base.root() })
    }

    pub fn operator(&self) -> &SensingOperator {
        &self.op
    }

    pub fn resample_root(&self) -> StreamKey {
        self.resample_root
    }

    pub fn split(&self, mask: SplitMask) -> Result<OperatorSplit<'_>> {
        self.op.split(mask)
    }
}

/// The two blocks of the canonical entrywise split of each `A_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMask {
    /// Entry `(0,0)` plus the interior block: the part block-diagonal with
    /// respect to `{span(e1), span(e1)^perp}` on both sides.
    BlockDiag,
    /// The rest of the first row and first column.
    Cross,
}

/// One block of the split, applied like the parent operator but reading
/// only the masked entries.
pub struct OperatorSplit<'a> {
    mask: SplitMask,
    op: &'a SensingOperator,
}

impl OperatorSplit<'_> {
    pub fn mask(&self) -> SplitMask {
        self.mask
    }

    /// `(<masked A_i, u v^T> / sqrt(m))_i`.
    pub fn apply_rank1(&self, u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.op.check_uv(u, v)?;
        let dims = self.op.dims();
        let mut scratch = self.op.scratch();
        let mut y = Array1::zeros(dims.m);
        for i in 0..dims.m {
            let acc = self.op.with_matrix(i, &mut scratch, |a| match self.mask {
                SplitMask::BlockDiag => {
                    let mut acc = u[0] * a[(0, 0)] * v[0];
                    for j in 1..dims.n1 {
                        let mut rv = 0.0;
                        for k in 1..dims.n2 {
                            rv += a[(j, k)] * v[k];
                        }
                        acc += u[j] * rv;
                    }
                    acc
                }
                SplitMask::Cross => {
                    let mut row0 = 0.0;
                    for k in 1..dims.n2 {
                        row0 += a[(0, k)] * v[k];
                    }
                    let mut col0 = 0.0;
                    for j in 1..dims.n1 {
                        col0 += u[j] * a[(j, 0)];
                    }
                    u[0] * row0 + col0 * v[0]
                }
            });
            y[i] = acc * self.scale();
        }
        Ok(y)
    }

    fn scale(&self) -> f64 {
        self.op.scale()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Lane;
    use ndarray::Array;

    fn dims(n1: usize, n2: usize, m: usize) -> ProblemDims {
        ProblemDims::new(n1, n2, m, 1).unwrap()
    }

    fn gvec(seed: u64, lane: Lane, trial: u64, len: usize) -> Array1<f64> {
        let key = StreamKey::new(seed, lane).trial(trial);
        Array::from_iter((0..len).map(|c| gaussian_at(&key.entry(c as u32, 0))))
    }

    #[test]
    fn dims_validation() {
        assert!(ProblemDims::new(0, 4, 8, 1).is_err());
        assert!(ProblemDims::new(4, 4, 8, 5).is_err());
        assert!(ProblemDims::new(4, 4, 8, 0).is_err());
    }

    #[test]
    fn storage_selection_by_budget() {
        let small = dims(64, 64, 384);
        assert!(SensingOperator::build(small, StreamKey::new(1, Lane::Measurement), DEFAULT_MEMORY_BUDGET).is_dense());
        let large = dims(1024, 1024, 6144);
        assert!(!SensingOperator::build(large, StreamKey::new(1, Lane::Measurement), DEFAULT_MEMORY_BUDGET).is_dense());
    }

    #[test]
    fn dense_and_streamed_agree_bitwise() {
        let d = dims(6, 5, 40);
        let seed = StreamKey::new(7, Lane::Measurement);
        let dense = SensingOperator::build_dense(d, seed);
        let streamed = SensingOperator::build_streamed(d, seed);
        let u = gvec(3, Lane::Trial, 0, 6);
        let v = gvec(3, Lane::Trial, 1, 5);
        let yd = dense.forward_rank1(u.view(), v.view()).unwrap();
        let ys = streamed.forward_rank1(u.view(), v.view()).unwrap();
        assert_eq!(yd, ys);
        let z = gvec(3, Lane::Trial, 2, 40);
        assert_eq!(dense.adjoint(z.view()).unwrap(), streamed.adjoint(z.view()).unwrap());
    }

    #[test]
    fn forward_rank1_matches_dense_materialization() {
        let d = dims(6, 5, 40);
        let op = SensingOperator::build_dense(d, StreamKey::new(11, Lane::Measurement));
        let u = gvec(4, Lane::Trial, 0, 6);
        let v = gvec(4, Lane::Trial, 1, 5);
        let outer = u
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&v.view().insert_axis(ndarray::Axis(0)));
        let fast = op.forward_rank1(u.view(), v.view()).unwrap();
        let slow = op.forward(outer.view()).unwrap();
        let rel = (&fast - &slow).mapv(f64::abs).sum() / slow.mapv(f64::abs).sum();
        assert!(rel < 1e-12, "rel {rel}");
    }

    #[test]
    fn forward_zero_factor_is_zero() {
        let op = SensingOperator::build_dense(dims(4, 3, 10), StreamKey::new(1, Lane::Measurement));
        let u = Array1::zeros(4);
        let v = gvec(2, Lane::Trial, 0, 3);
        let y = op.forward_rank1(u.view(), v.view()).unwrap();
        assert!(y.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn forward_is_linear() {
        let d = dims(8, 8, 24);
        let op = SensingOperator::build_dense(d, StreamKey::new(5, Lane::Measurement));
        let key = StreamKey::new(9, Lane::Trial);
        let x = Array2::from_shape_fn((8, 8), |(j, k)| {
            gaussian_at(&key.matrix(0).entry(j as u32, k as u32))
        });
        let y = Array2::from_shape_fn((8, 8), |(j, k)| {
            gaussian_at(&key.matrix(1).entry(j as u32, k as u32))
        });
        let (a, b) = (0.7, -1.9);
        let combo = op.forward((a * &x + b * &y).view()).unwrap();
        let parts = a * &op.forward(x.view()).unwrap() + b * &op.forward(y.view()).unwrap();
        let rel = (&combo - &parts).mapv(f64::abs).sum() / parts.mapv(f64::abs).sum();
        assert!(rel < 1e-12, "rel {rel}");
    }

    #[test]
    fn adjoint_consistency_on_random_pairs() {
        let d = dims(8, 8, 24);
        let op = SensingOperator::build_dense(d, StreamKey::new(13, Lane::Measurement));
        let key = StreamKey::new(21, Lane::Trial);
        for t in 0..20u64 {
            let x = Array2::from_shape_fn((8, 8), |(j, k)| {
                gaussian_at(&key.trial(t).matrix(0).entry(j as u32, k as u32))
            });
            let z = gvec(21, Lane::Trial, 1000 + t, 24);
            let lhs = op.forward(x.view()).unwrap().dot(&z);
            let rhs = {
                let adj = op.adjoint(z.view()).unwrap();
                adj.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>()
            };
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn adjoint_of_zero_and_single_measurement() {
        let op = SensingOperator::build_dense(dims(4, 3, 10), StreamKey::new(2, Lane::Measurement));
        let zero = op.adjoint(Array1::zeros(10).view()).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));

        let single = SensingOperator::build_dense(dims(4, 3, 1), StreamKey::new(2, Lane::Measurement));
        let adj = single.adjoint(ndarray::array![1.0].view()).unwrap();
        for j in 0..4 {
            for k in 0..3 {
                assert_eq!(adj[(j, k)], single.entry(0, j, k));
            }
        }
    }

    #[test]
    fn measurement_energy_is_isotropic_on_average() {
        // E || forward(u v^T) ||^2 = |u|^2 |v|^2; check the sample mean over
        // 200 independent operators.
        let d = dims(8, 8, 64);
        let mut mean = 0.0;
        for t in 0..200u64 {
            let op = SensingOperator::build_dense(d, StreamKey::new(100, Lane::Measurement).trial(t));
            let u = crate::stream::sphere_sample(&StreamKey::new(101, Lane::Trial).trial(t).matrix(0), 8).unwrap();
            let v = crate::stream::sphere_sample(&StreamKey::new(101, Lane::Trial).trial(t).matrix(1), 8).unwrap();
            let y = op.forward_rank1(u.view(), v.view()).unwrap();
            mean += y.dot(&y);
        }
        mean /= 200.0;
        assert!((mean - 1.0).abs() < 0.1, "mean energy {mean}");
    }

    #[test]
    fn auxiliary_shares_block_diagonal_entries() {
        let d = dims(5, 6, 7);
        let base = SensingOperator::build_dense(d, StreamKey::new(3, Lane::Measurement)).into_canonical();
        let aux = AuxiliaryOperator::build(&base, StreamKey::new(3, Lane::AuxResample)).unwrap();
        let a = aux.operator();
        assert_eq!(a.entry(1, 0, 0), base.entry(1, 0, 0));
        assert_eq!(a.entry(1, 2, 3), base.entry(1, 2, 3));
        assert_ne!(a.entry(0, 0, 1), base.entry(0, 0, 1));
        assert_ne!(a.entry(0, 1, 0), base.entry(0, 1, 0));
    }

    #[test]
    fn auxiliary_matches_on_canonical_ground_truth() {
        let d = dims(5, 6, 7);
        let base = SensingOperator::build_dense(d, StreamKey::new(4, Lane::Measurement)).into_canonical();
        let aux = AuxiliaryOperator::build(&base, StreamKey::new(4, Lane::AuxResample)).unwrap();
        let mut e1u = Array1::zeros(5);
        e1u[0] = 1.0;
        let mut e1v = Array1::zeros(6);
        e1v[0] = 1.0;
        let y_base = base.forward_rank1(e1u.view(), e1v.view()).unwrap();
        let y_aux = aux.operator().forward_rank1(e1u.view(), e1v.view()).unwrap();
        assert_eq!(y_base, y_aux);
    }

    #[test]
    fn auxiliary_requires_canonical_frame() {
        let base = SensingOperator::build_dense(dims(4, 4, 6), StreamKey::new(5, Lane::Measurement));
        assert!(matches!(
            AuxiliaryOperator::build(&base, StreamKey::new(5, Lane::AuxResample)),
            Err(Error::CanonicalFrameRequired)
        ));
    }

    #[test]
    fn split_blocks_sum_to_operator() {
        let d = dims(7, 6, 12);
        let op = SensingOperator::build_dense(d, StreamKey::new(8, Lane::Measurement)).into_canonical();
        let u = gvec(30, Lane::Trial, 0, 7);
        let v = gvec(30, Lane::Trial, 1, 6);
        let total = op.forward_rank1(u.view(), v.view()).unwrap();
        let diag = op.split(SplitMask::BlockDiag).unwrap().apply_rank1(u.view(), v.view()).unwrap();
        let cross = op.split(SplitMask::Cross).unwrap().apply_rank1(u.view(), v.view()).unwrap();
        let sum = &diag + &cross;
        let rel = (&sum - &total).mapv(f64::abs).sum() / total.mapv(f64::abs).sum();
        assert!(rel < 1e-12, "rel {rel}");
    }

    #[test]
    fn cross_block_vanishes_on_aligned_and_interior_inputs() {
        let d = dims(7, 6, 12);
        let op = SensingOperator::build_dense(d, StreamKey::new(9, Lane::Measurement)).into_canonical();
        let cross = op.split(SplitMask::Cross).unwrap();

        let mut e1u = Array1::zeros(7);
        e1u[0] = 1.0;
        let mut e1v = Array1::zeros(6);
        e1v[0] = 1.0;
        let aligned = cross.apply_rank1(e1u.view(), e1v.view()).unwrap();
        assert!(aligned.iter().all(|&x| x == 0.0));

        let mut u = gvec(31, Lane::Trial, 0, 7);
        let mut v = gvec(31, Lane::Trial, 1, 6);
        u[0] = 0.0;
        v[0] = 0.0;
        let interior = cross.apply_rank1(u.view(), v.view()).unwrap();
        assert!(interior.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dump_and_load_roundtrip() {
        let d = dims(4, 5, 6);
        let op = SensingOperator::build_dense(d, StreamKey::new(17, Lane::Measurement).trial(2));
        let mut buf = Vec::new();
        op.dump(&mut buf).unwrap();
        let loaded = SensingOperator::load(&mut buf.as_slice()).unwrap();
        assert_eq!(loaded.dims(), op.dims());
        assert_eq!(loaded.root(), op.root());
        for i in 0..6 {
            for j in 0..4 {
                for k in 0..5 {
                    assert_eq!(loaded.entry(i, j, k), op.entry(i, j, k));
                }
            }
        }
        let streamed = SensingOperator::build_streamed(d, StreamKey::new(17, Lane::Measurement).trial(2));
        assert!(matches!(streamed.dump(&mut Vec::new()), Err(Error::NotSupportedInStreamedMode)));
    }
}
