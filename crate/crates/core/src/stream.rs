//! Deterministic, splittable Gaussian streams.
//!
//! Every random value in the library is a pure function of a [`StreamKey`]:
//! a master seed, a purpose lane, and an index tuple (trial, matrix, row,
//! col). The key is packed into a 128-bit block and encrypted with
//! Threefry-2x64 (20 rounds); the two output words feed the cosine branch
//! of the Box–Muller transform,
//!
//! ```text
//! z = sqrt(-2 ln u1) * cos(2 pi u2),   u1 in (0,1], u2 in [0,1).
//! ```
//!
//! Because the cipher is a bijection on 128-bit blocks, distinct keys map
//! to distinct blocks and therefore to independent-looking outputs; no
//! sequential state exists, so any entry of any stream can be evaluated
//! out of order and from any number of threads.
//!
//! Supported index ranges: `trial < 2^56`, `matrix < 2^32`,
//! `row < 2^16`, `col < 2^16`.

use crate::error::{Error, Result};
use ndarray::Array1;

/// Purpose tag separating statistically independent stream families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    /// Entries of the measurement matrices.
    Measurement = 0,
    /// Resampled first-row/first-column entries of the auxiliary operator.
    AuxResample = 1,
    /// Initialization vectors (random start, power-iteration start).
    Init = 2,
    /// Per-trial draws: ground-truth factors, sampled test matrices.
    Trial = 3,
}

/// Address of a single Gaussian value.
///
/// Unused index fields stay zero. Two distinct keys never alias: the
/// packed 128-bit blocks differ, and the cipher is a permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub master_seed: u64,
    pub lane: Lane,
    pub trial: u64,
    pub matrix: u32,
    pub row: u32,
    pub col: u32,
}

impl StreamKey {
    pub fn new(master_seed: u64, lane: Lane) -> Self {
        StreamKey { master_seed, lane, trial: 0, matrix: 0, row: 0, col: 0 }
    }

    pub fn trial(mut self, trial: u64) -> Self {
        self.trial = trial;
        self
    }

    pub fn matrix(mut self, matrix: u32) -> Self {
        self.matrix = matrix;
        self
    }

    pub fn entry(mut self, row: u32, col: u32) -> Self {
        self.row = row;
        self.col = col;
        self
    }

    fn block(&self) -> (u64, u64) {
        assert!(self.trial < 1 << 56, "trial id out of range");
        assert!(self.row < 1 << 16 && self.col < 1 << 16, "row/col out of range");
        let w0 = ((self.lane as u64) << 56) | self.trial;
        let w1 = ((self.matrix as u64) << 32) | ((self.row as u64) << 16) | self.col as u64;
        (w0, w1)
    }
}

const ROTATIONS: [u32; 8] = [16, 42, 12, 31, 16, 32, 24, 21];
const KS_PARITY: u64 = 0x1BD1_1BDA_A9FC_1A22;
const KEY_SALT: u64 = 0x243F_6A88_85A3_08D3;

/// Threefry-2x64, 20 rounds. Bijective on the 128-bit block for a fixed key.
fn threefry(key: u64, block: (u64, u64)) -> (u64, u64) {
    let ks = [key, KEY_SALT, KS_PARITY ^ key ^ KEY_SALT];
    let (mut x0, mut x1) = block;
    x0 = x0.wrapping_add(ks[0]);
    x1 = x1.wrapping_add(ks[1]);
    for r in 0..20 {
        x0 = x0.wrapping_add(x1);
        x1 = x1.rotate_left(ROTATIONS[r % 8]);
        x1 ^= x0;
        if (r + 1) % 4 == 0 {
            let s = (r + 1) / 4;
            x0 = x0.wrapping_add(ks[s % 3]);
            x1 = x1.wrapping_add(ks[(s + 1) % 3]).wrapping_add(s as u64);
        }
    }
    (x0, x1)
}

const TWO_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Standard-normal deviate addressed by `key`.
///
/// Deterministic: the same key always yields the same value, independent of
/// evaluation order and of any other keys evaluated.
pub fn gaussian_at(key: &StreamKey) -> f64 {
    let (x0, x1) = threefry(key.master_seed, key.block());
    let u1 = ((x0 >> 11) + 1) as f64 * TWO_NEG_53; // (0, 1]
    let u2 = (x1 >> 11) as f64 * TWO_NEG_53; // [0, 1)
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Raw 64-bit word for deriving nested sub-seeds (e.g. one master seed per
/// sweep trial).
pub fn derive_seed(key: &StreamKey) -> u64 {
    threefry(key.master_seed, key.block()).0
}

/// Uniform sample from the unit sphere in `R^dim`, built by normalizing a
/// Gaussian vector whose coordinate `c` lives at `key.entry(c, _)`.
///
/// The `row` field of `key` must be free (zero); it is used to address the
/// coordinates.
pub fn sphere_sample(key: &StreamKey, dim: usize) -> Result<Array1<f64>> {
    if dim == 0 {
        return Err(Error::InvalidDimension("sphere sample in dimension 0".into()));
    }
    debug_assert_eq!(key.row, 0, "row field reserved for coordinate index");
    let mut v = Array1::zeros(dim);
    for c in 0..dim {
        v[c] = gaussian_at(&key.entry(c as u32, key.col));
    }
    let norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        // Probability zero; keep the function total.
        v[0] = 1.0;
        return Ok(v);
    }
    Ok(v / norm)
}
