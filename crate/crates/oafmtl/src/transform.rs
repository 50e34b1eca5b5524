//! Orthonormal DCT and the partial-DCT compression operator.
//!
//! The compression matrix used on the uplink is `A = S·F`, where `F` is the
//! orthonormal type-II discrete cosine transform,
//!
//! ```text
//! F[m, n] = sqrt(1/d)                                  (m = 1)
//! F[m, n] = sqrt(2/d) · cos((m-1)(2n-1)π / (2d))       (m > 1)
//! ```
//!
//! (1-indexed), and `S` keeps `rows` randomly selected rows of the identity
//! in a random order. Because `F` is unitary and `S·Sᵀ = I`, the operator
//! satisfies `A·Aᵀ = I` exactly, which the turbo receiver relies on.
//!
//! Both `F x` and `Fᵀ x` are evaluated in O(d log d) by folding the cosine
//! transform into a single complex FFT of length `d` (the even/odd
//! permutation method). The FFT backend handles arbitrary lengths via
//! mixed-radix and Bluestein plans, so no power-of-two padding is needed.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormal DCT-II of `x`: `y = F x`.
///
/// Allocates its own FFT plan; use [`PartialOrthonormalOperator`] for
/// repeated transforms of the same length.
pub fn dct(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("dct"));
    }
    let fft = FftPlanner::new().plan_fft_forward(x.len());
    Ok(dct_with_plan(x, fft.as_ref()))
}

/// Orthonormal DCT-III of `x`: `y = Fᵀ x` (the inverse of [`dct`]).
pub fn idct(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("idct"));
    }
    let fft = FftPlanner::new().plan_fft_inverse(x.len());
    Ok(idct_with_plan(x, fft.as_ref()))
}

/// `F x` using a caller-provided forward FFT plan of matching length.
fn dct_with_plan(x: &[f64], fft: &dyn Fft<f64>) -> Vec<f64> {
    let d = x.len();
    if d == 1 {
        return vec![x[0]];
    }
    // Even/odd fold: first half takes x[0], x[2], ...; second half takes
    // x[1], x[3], ... reversed. The DCT of x is then readable from the FFT
    // of the folded sequence.
    let mut buf = vec![Complex64::new(0.0, 0.0); d];
    let half = d.div_ceil(2);
    for j in 0..half {
        buf[j] = Complex64::new(x[2 * j], 0.0);
    }
    for j in 0..d / 2 {
        buf[d - 1 - j] = Complex64::new(x[2 * j + 1], 0.0);
    }
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(&mut buf, &mut scratch);

    let mut y = vec![0.0; d];
    let s0 = (1.0 / d as f64).sqrt();
    let s = (2.0 / d as f64).sqrt();
    y[0] = buf[0].re * s0;
    for k in 1..d {
        // y_raw[k] = Re(e^{-iπk/(2d)} · V[k])
        let theta = std::f64::consts::PI * k as f64 / (2.0 * d as f64);
        y[k] = (buf[k].re * theta.cos() + buf[k].im * theta.sin()) * s;
    }
    y
}

/// `Fᵀ x` using a caller-provided inverse FFT plan of matching length.
fn idct_with_plan(z: &[f64], fft: &dyn Fft<f64>) -> Vec<f64> {
    let d = z.len();
    if d == 1 {
        return vec![z[0]];
    }
    // Undo the orthonormal row scaling, then invert the even/odd fold:
    // rebuild the FFT spectrum from the cosine coefficients, inverse-FFT,
    // and un-interleave.
    let half_scale = (d as f64 / 2.0).sqrt();
    let mut buf = vec![Complex64::new(0.0, 0.0); d];
    buf[0] = Complex64::new(d as f64 * (1.0 / d as f64).sqrt() * z[0], 0.0);
    for k in 1..d {
        let theta = std::f64::consts::PI * k as f64 / (2.0 * d as f64);
        let phase = Complex64::new(theta.cos(), theta.sin());
        let val = Complex64::new(half_scale * z[k], -half_scale * z[d - k]);
        buf[k] = phase * val;
    }
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(&mut buf, &mut scratch);

    let mut x = vec![0.0; d];
    let inv_d = 1.0 / d as f64;
    let half = d.div_ceil(2);
    for j in 0..half {
        x[2 * j] = buf[j].re * inv_d;
    }
    for j in 0..d / 2 {
        x[2 * j + 1] = buf[d - 1 - j].re * inv_d;
    }
    x
}

/// Serializable description of a [`PartialOrthonormalOperator`].
///
/// `(dim, rows, seed)` fully determines the operator, so run manifests store
/// this record and reconstruct the exact matrix later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub dim: usize,
    pub rows: usize,
    pub seed: u64,
}

/// The compression operator `A = S·F`: an orthonormal DCT followed by random
/// row selection.
///
/// Immutable after construction; [`forward`](Self::forward) and
/// [`adjoint`](Self::adjoint) are pure and safe to call from many threads at
/// once.
#[derive(Clone)]
pub struct PartialOrthonormalOperator {
    dim: usize,
    rows: usize,
    seed: u64,
    /// Selected DCT rows in transmission order.
    row_selection: Vec<usize>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PartialOrthonormalOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PartialOrthonormalOperator")
            .field("dim", &self.dim)
            .field("rows", &self.rows)
            .field("seed", &self.seed)
            .finish()
    }
}

/// Build the operator for signal dimension `dim`, keeping `rows` DCT rows
/// chosen and ordered by a ChaCha stream seeded with `seed`.
///
/// The selection is a partial Fisher-Yates shuffle: rows are drawn without
/// replacement and their order is itself random, so the same seed always
/// yields the same ordered selection.
pub fn make_partial_dct(dim: usize, rows: usize, seed: u64) -> Result<PartialOrthonormalOperator> {
    if dim == 0 {
        return Err(Error::invalid("operator dimension must be positive"));
    }
    if rows == 0 || rows > dim {
        return Err(Error::invalid(format!(
            "operator rows must satisfy 1 <= rows <= dim, got rows={rows}, dim={dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..dim).collect();
    for i in 0..rows {
        let j = rng.gen_range(i..dim);
        perm.swap(i, j);
    }
    perm.truncate(rows);

    let mut planner = FftPlanner::new();
    Ok(PartialOrthonormalOperator {
        dim,
        rows,
        seed,
        row_selection: perm,
        fft_fwd: planner.plan_fft_forward(dim),
        fft_inv: planner.plan_fft_inverse(dim),
    })
}

impl PartialOrthonormalOperator {
    /// Rebuild an operator from its serialized description.
    pub fn from_spec(spec: &OperatorSpec) -> Result<Self> {
        make_partial_dct(spec.dim, spec.rows, spec.seed)
    }

    /// The serializable description of this operator.
    pub fn spec(&self) -> OperatorSpec {
        OperatorSpec {
            dim: self.dim,
            rows: self.rows,
            seed: self.seed,
        }
    }

    /// Signal dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of measurements (selected rows).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Seed that generated the row selection.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Selected DCT rows in transmission order.
    pub fn row_selection(&self) -> &[usize] {
        &self.row_selection
    }

    /// `A x`: transform and gather. Output has length [`rows`](Self::rows).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "operator forward",
                expected: self.dim,
                got: x.len(),
            });
        }
        let y = dct_with_plan(x, self.fft_fwd.as_ref());
        Ok(self.row_selection.iter().map(|&r| y[r]).collect())
    }

    /// `Aᵀ y`: scatter and inverse-transform. Output has length
    /// [`dim`](Self::dim).
    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "operator adjoint",
                expected: self.rows,
                got: y.len(),
            });
        }
        let mut z = vec![0.0; self.dim];
        for (i, &r) in self.row_selection.iter().enumerate() {
            z[r] = y[i];
        }
        Ok(idct_with_plan(&z, self.fft_inv.as_ref()))
    }
}
