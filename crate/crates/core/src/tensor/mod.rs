//! Dense third-order tensors and the t-product algebra built on a DFT
//! along the third (frame) dimension.
//!
//! Storage is row-major over `(i, j, k)`: the frame index `k` varies
//! fastest, so every tube fiber `X(i, j, :)` is contiguous.

mod dump;
mod fft;
mod tsvd;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dump::{read_tensor, write_tensor};
pub use fft::{dft3, idft3};
pub use tsvd::{tnn, tprod, tsvd, tsvt, TSvdFactors};

/// Default sparsity weight `1/√(max(w, h)·n)` for a `w × h × n` tensor under
/// the averaged tensor nuclear norm.
pub fn default_lambda((w, h, n): (usize, usize, usize)) -> f64 {
    1.0 / ((w.max(h) * n.max(1)) as f64).sqrt()
}

/// Real `w × h × n` tensor. `w`, `h` index the pixels of a frame, `n` the
/// frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

/// Complex tensor with the same layout as [`Tensor3`]; holds DFT-domain
/// quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor3 {
    dims: (usize, usize, usize),
    data: Vec<Complex64>,
}

/// Matricization mode. Mode 3 puts one vectorized frame per column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    pub fn from_index(m: usize) -> Result<Mode> {
        match m {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => Err(Error::arg(format!("mode must be 1, 2 or 3, got {m}"))),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Mode::One => 1,
            Mode::Two => 2,
            Mode::Three => 3,
        }
    }

    /// Shape `(rows, cols)` of the unfolding of a tensor with `dims`.
    pub fn unfolded_shape(self, (w, h, n): (usize, usize, usize)) -> (usize, usize) {
        match self {
            Mode::One => (h * n, w),
            Mode::Two => (w * n, h),
            Mode::Three => (w * h, n),
        }
    }

    /// Maps `(i, j, k)` to its `(row, col)` position in the unfolding.
    #[inline]
    pub fn position(self, (w, h, _n): (usize, usize, usize), i: usize, j: usize, k: usize) -> (usize, usize) {
        match self {
            Mode::One => (k * h + j, i),
            Mode::Two => (k * w + i, j),
            Mode::Three => (j * w + i, k),
        }
    }
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(m: usize) -> Result<Mode> {
        Mode::from_index(m)
    }
}

impl From<Mode> for usize {
    fn from(m: Mode) -> usize {
        m.index()
    }
}

fn check_dims((w, h, n): (usize, usize, usize)) -> Result<()> {
    if w == 0 || h == 0 || n == 0 {
        return Err(Error::arg(format!("tensor dims must be >= 1, got {w}x{h}x{n}")));
    }
    Ok(())
}

impl Tensor3 {
    pub fn zeros(dims: (usize, usize, usize)) -> Result<Self> {
        check_dims(dims)?;
        Ok(Tensor3 {
            dims,
            data: vec![0.0; dims.0 * dims.1 * dims.2],
        })
    }

    pub fn from_vec(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        if data.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::arg(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn from_fn(dims: (usize, usize, usize), mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let (w, h, n) = dims;
        let mut data = Vec::with_capacity(w * h * n);
        for i in 0..w {
            for j in 0..h {
                for k in 0..n {
                    data.push(f(i, j, k));
                }
            }
        }
        Ok(Tensor3 { dims, data })
    }

    /// Stacks `w × h` frames along the third dimension.
    pub fn from_frames(frames: &[DMatrix<f64>]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::arg("at least one frame is required"))?;
        let (w, h) = first.shape();
        if frames.iter().any(|f| f.shape() != (w, h)) {
            return Err(Error::arg("all frames must share the same dimensions"));
        }
        Tensor3::from_fn((w, h, frames.len()), |i, j, k| frames[k][(i, j)])
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims.1 + j) * self.dims.2 + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    /// Frontal slice `X(:, :, k)` as a `w × h` matrix.
    pub fn frontal_slice(&self, k: usize) -> DMatrix<f64> {
        let (w, h, _) = self.dims;
        DMatrix::from_fn(w, h, |i, j| self.get(i, j, k))
    }

    pub fn set_frontal_slice(&mut self, k: usize, m: &DMatrix<f64>) {
        let (w, h, _) = self.dims;
        assert_eq!(m.shape(), (w, h), "frontal slice shape mismatch");
        for i in 0..w {
            for j in 0..h {
                self.set(i, j, k, m[(i, j)]);
            }
        }
    }

    /// Frame `k` vectorized column-major (pixel index `j * w + i`), i.e.
    /// column `k` of the mode-3 unfolding.
    pub fn frame_vector(&self, k: usize) -> Vec<f64> {
        let (w, h, _) = self.dims;
        let mut out = vec![0.0; w * h];
        for i in 0..w {
            for j in 0..h {
                out[j * w + i] = self.get(i, j, k);
            }
        }
        out
    }

    pub fn unfold(&self, mode: Mode) -> DMatrix<f64> {
        let (rows, cols) = mode.unfolded_shape(self.dims);
        let (w, h, n) = self.dims;
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..w {
            for j in 0..h {
                for k in 0..n {
                    let (r, c) = mode.position(self.dims, i, j, k);
                    m[(r, c)] = self.get(i, j, k);
                }
            }
        }
        m
    }

    pub fn fold(m: &DMatrix<f64>, mode: Mode, dims: (usize, usize, usize)) -> Result<Self> {
        check_dims(dims)?;
        let expected = mode.unfolded_shape(dims);
        if m.shape() != expected {
            return Err(Error::arg(format!(
                "mode-{} fold of {:?} into {:?} needs a {:?} matrix",
                mode.index(),
                m.shape(),
                dims,
                expected
            )));
        }
        Tensor3::from_fn(dims, |i, j, k| {
            let (r, c) = mode.position(dims, i, j, k);
            m[(r, c)]
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination of two equally shaped tensors.
    pub fn zip_map(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Tensor3 {
        assert_eq!(self.dims, other.dims, "tensor dims mismatch");
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Tensor3) -> Tensor3 {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor3) -> Tensor3 {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Tensor3 {
        self.map(|v| v * s)
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Tensor3) {
        assert_eq!(self.dims, other.dims, "tensor dims mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_fro_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm_fro(&self) -> f64 {
        self.norm_fro_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Squared Frobenius distance `‖self − other‖²`.
    pub fn dist_sq(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims, "tensor dims mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl ComplexTensor3 {
    pub fn zeros(dims: (usize, usize, usize)) -> Result<Self> {
        check_dims(dims)?;
        Ok(ComplexTensor3 {
            dims,
            data: vec![Complex64::new(0.0, 0.0); dims.0 * dims.1 * dims.2],
        })
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.data[(i * self.dims.1 + j) * self.dims.2 + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: Complex64) {
        let o = (i * self.dims.1 + j) * self.dims.2 + k;
        self.data[o] = v;
    }

    pub fn frontal_slice(&self, k: usize) -> DMatrix<Complex64> {
        let (w, h, _) = self.dims;
        DMatrix::from_fn(w, h, |i, j| self.get(i, j, k))
    }

    pub fn set_frontal_slice(&mut self, k: usize, m: &DMatrix<Complex64>) {
        let (w, h, _) = self.dims;
        assert_eq!(m.shape(), (w, h), "frontal slice shape mismatch");
        for i in 0..w {
            for j in 0..h {
                self.set(i, j, k, m[(i, j)]);
            }
        }
    }
}

/// Element-wise soft-thresholding `sign(z)·max(|z| − τ, 0)`.
#[inline]
pub fn soft(z: f64, tau: f64) -> f64 {
    if z > tau {
        z - tau
    } else if z < -tau {
        z + tau
    } else {
        0.0
    }
}

pub fn soft_tensor(z: &Tensor3, tau: f64) -> Tensor3 {
    debug_assert!(tau >= 0.0);
    z.map(|v| soft(v, tau))
}

pub fn soft_vec(z: &[f64], tau: f64) -> Vec<f64> {
    debug_assert!(tau >= 0.0);
    z.iter().map(|&v| soft(v, tau)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq_2x2x2() -> Tensor3 {
        // k-major fill: frame 0 holds 1..4, frame 1 holds 5..8, column-major within a frame
        Tensor3::from_fn((2, 2, 2), |i, j, k| (k * 4 + j * 2 + i + 1) as f64).unwrap()
    }

    #[test]
    fn mode3_unfold_definition() {
        let m = seq_2x2x2().unfold(Mode::Three);
        assert_eq!(m.shape(), (4, 2));
        assert_eq!(m.column(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.column(1).iter().copied().collect::<Vec<_>>(), vec![5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn unfold_shapes() {
        let t = Tensor3::zeros((2, 3, 4)).unwrap();
        assert_eq!(t.unfold(Mode::One).shape(), (12, 2));
        assert_eq!(t.unfold(Mode::Two).shape(), (8, 3));
        assert_eq!(t.unfold(Mode::Three).shape(), (6, 4));
    }

    #[test]
    fn ones_unfold_is_ones() {
        let t = Tensor3::from_fn((2, 3, 4), |_, _, _| 1.0).unwrap();
        let m = t.unfold(Mode::Three);
        assert_eq!(m.shape(), (6, 4));
        assert!(m.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn fold_zero_matrix() {
        let t = Tensor3::fold(&DMatrix::zeros(4, 2), Mode::Three, (2, 2, 2)).unwrap();
        assert_eq!(t, Tensor3::zeros((2, 2, 2)).unwrap());
    }

    #[test]
    fn fold_one_hot_brute_force() {
        // Enumerate every (i, j, k) of a 2x2x2 tensor: build the one-hot
        // tensor, unfold it, and check the single 1 lands where folding the
        // matching one-hot matrix puts it back.
        let dims = (2, 2, 2);
        for mode in Mode::ALL {
            let (rows, cols) = mode.unfolded_shape(dims);
            for r in 0..rows {
                for c in 0..cols {
                    let mut m = DMatrix::zeros(rows, cols);
                    m[(r, c)] = 1.0;
                    let t = Tensor3::fold(&m, mode, dims).unwrap();
                    let hits: Vec<_> = (0..2)
                        .flat_map(|i| (0..2).flat_map(move |j| (0..2).map(move |k| (i, j, k))))
                        .filter(|&(i, j, k)| t.get(i, j, k) == 1.0)
                        .collect();
                    assert_eq!(hits.len(), 1);
                    let (i, j, k) = hits[0];
                    let expect = match mode {
                        Mode::One => (k * 2 + j, i),
                        Mode::Two => (k * 2 + i, j),
                        Mode::Three => (j * 2 + i, k),
                    };
                    assert_eq!(expect, (r, c), "mode {:?}", mode);
                }
            }
        }
    }

    #[test]
    fn fold_rejects_bad_shape() {
        assert!(Tensor3::fold(&DMatrix::zeros(3, 2), Mode::Three, (2, 2, 2)).is_err());
        assert!(Mode::from_index(4).is_err());
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(Tensor3::zeros((0, 2, 2)).is_err());
        assert!(Tensor3::from_vec((1, 2, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn soft_values() {
        assert_eq!(soft(3.0, 1.0), 2.0);
        assert_eq!(soft(-0.5, 1.0), 0.0);
        assert_eq!(soft(-3.0, 1.0), -2.0);
        assert_eq!(soft_vec(&[1.5, -2.0, 0.0], 0.0), vec![1.5, -2.0, 0.0]);
    }

    #[test]
    fn soft_matches_grid_scan() {
        // minimise tau|f| + (f - z)^2 / 2 on a dense grid
        for &(z, tau) in &[(0.7, 0.3), (-1.2, 0.5), (0.2, 0.4), (2.0, 0.0), (-0.05, 0.01)] {
            let obj = |f: f64| tau * f.abs() + 0.5 * (f - z) * (f - z);
            let mut best = (f64::INFINITY, 0.0);
            let steps = 400_000;
            for s in 0..=steps {
                let f = -3.0 + 6.0 * s as f64 / steps as f64;
                let v = obj(f);
                if v < best.0 {
                    best = (v, f);
                }
            }
            assert!((soft(z, tau) - best.1).abs() < 1e-4, "z={z} tau={tau}");
        }
    }

    proptest! {
        #[test]
        fn fold_unfold_inverse(w in 1usize..=6, h in 1usize..=6, n in 1usize..=6, m in 1usize..=3, seed in any::<u64>()) {
            let mut s = seed;
            let t = Tensor3::from_fn((w, h, n), |_, _, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            }).unwrap();
            let mode = Mode::from_index(m).unwrap();
            prop_assert_eq!(Tensor3::fold(&t.unfold(mode), mode, (w, h, n)).unwrap(), t);
        }

        #[test]
        fn soft_odd_and_lipschitz(a in -10.0f64..10.0, b in -10.0f64..10.0, tau in 0.0f64..5.0) {
            prop_assert_eq!(soft(-a, tau), -soft(a, tau));
            prop_assert!((soft(a, tau) - soft(b, tau)).abs() <= (a - b).abs() + 1e-15);
        }
    }
}
