use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{dft3, idft3, ComplexTensor3, Tensor3};
use crate::error::{Error, Result};

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITERS: usize = 10_000;

/// Economy t-SVD factors held in the Fourier domain.
///
/// Slice `k` of `u` is `w × r`, slice `k` of `v` is `h × r` (with
/// `r = min(w, h)`), and `s[k]` holds the nonincreasing singular values of
/// the `k`-th DFT-domain frontal slice.
#[derive(Clone, Debug)]
pub struct TSvdFactors {
    pub u: ComplexTensor3,
    pub s: Vec<Vec<f64>>,
    pub v: ComplexTensor3,
}

impl TSvdFactors {
    pub fn rank(&self) -> usize {
        self.u.dims().1
    }

    /// Real spatial-domain factors `(U, S, V*)` such that
    /// `U * S * V* = X` under the t-product.
    pub fn spatial_factors(&self) -> Result<(Tensor3, Tensor3, Tensor3)> {
        let (w, r, n) = self.u.dims();
        let h = self.v.dims().0;
        let mut s_bar = ComplexTensor3::zeros((r, r, n))?;
        let mut vh_bar = ComplexTensor3::zeros((r, h, n))?;
        for k in 0..n {
            for (a, &sv) in self.s[k].iter().enumerate() {
                s_bar.set(a, a, k, Complex64::new(sv, 0.0));
            }
            vh_bar.set_frontal_slice(k, &self.v.frontal_slice(k).adjoint());
        }
        debug_assert_eq!(self.u.dims().0, w);
        Ok((idft3(&self.u), idft3(&s_bar), idft3(&vh_bar)))
    }
}

/// Frequencies that must be decomposed explicitly; the rest are conjugates.
fn half_spectrum(n: usize) -> usize {
    n / 2 + 1
}

/// True for frequency slices that equal their own conjugate (DC, Nyquist).
fn self_conjugate(k: usize, n: usize) -> bool {
    k == 0 || 2 * k == n
}

struct SliceSvd {
    u: DMatrix<Complex64>,
    s: Vec<f64>,
    v_t: DMatrix<Complex64>,
}

fn sort_desc(u: DMatrix<Complex64>, s: Vec<f64>, v_t: DMatrix<Complex64>) -> SliceSvd {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return SliceSvd { u, s, v_t };
    }
    let u = DMatrix::from_fn(u.nrows(), s.len(), |i, c| u[(i, order[c])]);
    let v_t = DMatrix::from_fn(s.len(), v_t.ncols(), |r, j| v_t[(order[r], j)]);
    let s = order.iter().map(|&o| s[o]).collect();
    SliceSvd { u, s, v_t }
}

fn slice_svd(m: DMatrix<Complex64>, real: bool, slice: usize) -> Result<SliceSvd> {
    if real {
        // Keep singular vectors real on self-conjugate slices so the inverse
        // DFT of the factors stays real.
        let re = m.map(|z| z.re);
        let svd = re
            .try_svd(true, true, SVD_EPS, SVD_MAX_ITERS)
            .ok_or(Error::Svd { slice })?;
        let u = svd.u.ok_or(Error::Svd { slice })?.map(|x| Complex64::new(x, 0.0));
        let v_t = svd.v_t.ok_or(Error::Svd { slice })?.map(|x| Complex64::new(x, 0.0));
        Ok(sort_desc(u, svd.singular_values.iter().copied().collect(), v_t))
    } else {
        let svd = m
            .try_svd(true, true, SVD_EPS, SVD_MAX_ITERS)
            .ok_or(Error::Svd { slice })?;
        let u = svd.u.ok_or(Error::Svd { slice })?;
        let v_t = svd.v_t.ok_or(Error::Svd { slice })?;
        Ok(sort_desc(u, svd.singular_values.iter().copied().collect(), v_t))
    }
}

fn slice_singular_values(m: DMatrix<Complex64>, real: bool, slice: usize) -> Result<Vec<f64>> {
    let s: Vec<f64> = if real {
        m.map(|z| z.re)
            .try_svd(false, false, SVD_EPS, SVD_MAX_ITERS)
            .ok_or(Error::Svd { slice })?
            .singular_values
            .iter()
            .copied()
            .collect()
    } else {
        m.try_svd(false, false, SVD_EPS, SVD_MAX_ITERS)
            .ok_or(Error::Svd { slice })?
            .singular_values
            .iter()
            .copied()
            .collect()
    };
    Ok(s)
}

/// Economy t-SVD. Only the first `⌊n/2⌋ + 1` frequency slices are
/// decomposed; the remaining ones are complex conjugates.
pub fn tsvd(t: &Tensor3) -> Result<TSvdFactors> {
    let (w, h, n) = t.dims();
    let r = w.min(h);
    let xbar = dft3(t);
    let half: Vec<SliceSvd> = (0..half_spectrum(n))
        .into_par_iter()
        .map(|k| slice_svd(xbar.frontal_slice(k), self_conjugate(k, n), k))
        .collect::<Result<_>>()?;

    let mut u = ComplexTensor3::zeros((w, r, n))?;
    let mut v = ComplexTensor3::zeros((h, r, n))?;
    let mut s = vec![Vec::new(); n];
    for (k, f) in half.into_iter().enumerate() {
        let vk = f.v_t.adjoint();
        u.set_frontal_slice(k, &f.u);
        v.set_frontal_slice(k, &vk);
        let mirror = (n - k) % n;
        if mirror != k {
            u.set_frontal_slice(mirror, &f.u.map(|z| z.conj()));
            v.set_frontal_slice(mirror, &vk.map(|z| z.conj()));
            s[mirror] = f.s.clone();
        }
        s[k] = f.s;
    }
    Ok(TSvdFactors { u, s, v })
}

/// Tensor nuclear norm: mean of the nuclear norms of the DFT-domain
/// frontal slices.
pub fn tnn(t: &Tensor3) -> Result<f64> {
    let n = t.dims().2;
    let xbar = dft3(t);
    let sums: Vec<f64> = (0..half_spectrum(n))
        .into_par_iter()
        .map(|k| slice_singular_values(xbar.frontal_slice(k), self_conjugate(k, n), k).map(|s| s.iter().sum()))
        .collect::<Result<_>>()?;
    let total: f64 = sums
        .iter()
        .enumerate()
        .map(|(k, &v)| if (n - k) % n != k { 2.0 * v } else { v })
        .sum();
    Ok(total / n as f64)
}

/// Tensor singular value thresholding: every DFT-domain singular value is
/// shrunk by `tau`. This is the proximal map of `tau * tnn`.
pub fn tsvt(z: &Tensor3, tau: f64) -> Result<Tensor3> {
    if !(tau > 0.0) {
        return Err(Error::arg(format!("t-SVT threshold must be positive, got {tau}")));
    }
    let dims = z.dims();
    let n = dims.2;
    let zbar = dft3(z);
    let half: Vec<DMatrix<Complex64>> = (0..half_spectrum(n))
        .into_par_iter()
        .map(|k| {
            let f = slice_svd(zbar.frontal_slice(k), self_conjugate(k, n), k)?;
            let keep = f.s.iter().take_while(|&&s| s > tau).count();
            if keep == 0 {
                return Ok(DMatrix::zeros(dims.0, dims.1));
            }
            let scaled = DMatrix::from_fn(dims.0, keep, |i, c| f.u[(i, c)] * (f.s[c] - tau));
            Ok(scaled * f.v_t.rows(0, keep))
        })
        .collect::<Result<_>>()?;

    let mut out = ComplexTensor3::zeros(dims)?;
    for (k, m) in half.into_iter().enumerate() {
        let mirror = (n - k) % n;
        if mirror != k {
            out.set_frontal_slice(mirror, &m.map(|c| c.conj()));
        }
        out.set_frontal_slice(k, &m);
    }
    Ok(idft3(&out))
}

/// t-product of `a` (`n1 × n2 × n3`) and `b` (`n2 × c × n3`), computed as
/// slice-wise products in the Fourier domain.
pub fn tprod(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    let (n1, n2, n3) = a.dims();
    let (m2, c, m3) = b.dims();
    if n2 != m2 || n3 != m3 {
        return Err(Error::arg(format!(
            "t-product dims mismatch: {:?} * {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let abar = dft3(a);
    let bbar = dft3(b);
    let half: Vec<DMatrix<Complex64>> = (0..half_spectrum(n3))
        .into_par_iter()
        .map(|k| abar.frontal_slice(k) * bbar.frontal_slice(k))
        .collect();
    let mut out = ComplexTensor3::zeros((n1, c, n3))?;
    for (k, m) in half.into_iter().enumerate() {
        let mirror = (n3 - k) % n3;
        if mirror != k {
            out.set_frontal_slice(mirror, &m.map(|z| z.conj()));
        }
        out.set_frontal_slice(k, &m);
    }
    Ok(idft3(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: (usize, usize, usize), seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn diag31() -> Tensor3 {
        Tensor3::from_fn((2, 2, 1), |i, j, _| match (i, j) {
            (0, 0) => 3.0,
            (1, 1) => 1.0,
            _ => 0.0,
        })
        .unwrap()
    }

    /// fold(bcirc(a) * unfold(b)) written out block by block.
    fn bcirc_product(a: &Tensor3, b: &Tensor3) -> Tensor3 {
        let (n1, n2, n3) = a.dims();
        let c = b.dims().1;
        Tensor3::from_fn((n1, c, n3), |i, j, k| {
            let mut acc = 0.0;
            for l in 0..n3 {
                let blk = (k + n3 - l) % n3;
                for p in 0..n2 {
                    acc += a.get(i, p, blk) * b.get(p, j, l);
                }
            }
            acc
        })
        .unwrap()
    }

    fn max_abs_diff(a: &Tensor3, b: &Tensor3) -> f64 {
        a.as_slice().iter().zip(b.as_slice()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn tprod_matches_bcirc() {
        let a = random((2, 3, 4), 1);
        let b = random((3, 2, 4), 2);
        assert!(max_abs_diff(&tprod(&a, &b).unwrap(), &bcirc_product(&a, &b)) < 1e-9);
    }

    #[test]
    fn tprod_n1_is_matrix_product() {
        let a = random((3, 2, 1), 3);
        let b = random((2, 4, 1), 4);
        let p = tprod(&a, &b).unwrap();
        let m = a.frontal_slice(0) * b.frontal_slice(0);
        assert!((p.frontal_slice(0) - m).abs().max() < 1e-12);
    }

    #[test]
    fn tprod_identity() {
        let a = random((3, 2, 5), 5);
        let id = Tensor3::from_fn((2, 2, 5), |i, j, k| if i == j && k == 0 { 1.0 } else { 0.0 }).unwrap();
        assert!(max_abs_diff(&tprod(&a, &id).unwrap(), &a) < 1e-12);
        assert!(tprod(&a, &random((3, 2, 5), 1)).is_err());
    }

    #[test]
    fn tsvd_matrix_case() {
        let f = tsvd(&diag31()).unwrap();
        assert!((f.s[0][0] - 3.0).abs() < 1e-12);
        assert!((f.s[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tsvd_zero_tensor() {
        let f = tsvd(&Tensor3::zeros((3, 2, 4)).unwrap()).unwrap();
        assert!(f.s.iter().flatten().all(|&s| s == 0.0));
    }

    #[test]
    fn tsvd_reconstructs() {
        for (dims, seed) in [((4, 3, 5), 9), ((3, 4, 6), 10), ((2, 2, 1), 11)] {
            let t = random(dims, seed);
            let f = tsvd(&t).unwrap();
            let (u, s, vh) = f.spatial_factors().unwrap();
            let rec = tprod(&u, &tprod(&s, &vh).unwrap()).unwrap();
            assert!(rec.dist_sq(&t).sqrt() / t.norm_fro() < 1e-8);
        }
    }

    #[test]
    fn tsvd_factor_invariants() {
        let t = random((4, 3, 5), 12);
        let f = tsvd(&t).unwrap();
        for k in 0..5 {
            for vals in [&f.u, &f.v] {
                let m = vals.frontal_slice(k);
                let g = m.adjoint() * &m;
                let eye = DMatrix::<Complex64>::identity(g.nrows(), g.ncols());
                assert!((g - eye).norm() < 1e-8);
            }
            assert!(f.s[k].windows(2).all(|p| p[0] >= p[1]));
            assert!(f.s[k].iter().all(|&s| s >= 0.0));
        }
    }

    #[test]
    fn tnn_cases() {
        assert!((tnn(&diag31()).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(tnn(&Tensor3::zeros((2, 3, 4)).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn tnn_rank1_constant_tube() {
        // X(:,:,k) = a b^T for every k: only the DC slice is nonzero with
        // value n * a b^T, so tnn = (1/n) * n * |a| |b| = |a| |b|.
        let a = [1.0, 2.0, -1.0];
        let b = [0.5, 3.0];
        let n = 6;
        let t = Tensor3::from_fn((3, 2, n), |i, j, _| a[i] * b[j]).unwrap();
        let oracle = {
            // slice-wise SVD oracle on the explicit DFT-domain slices
            let xbar = dft3(&t);
            (0..n)
                .map(|k| xbar.frontal_slice(k).singular_values().iter().sum::<f64>())
                .sum::<f64>()
                / n as f64
        };
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let got = tnn(&t).unwrap();
        assert!((got - oracle).abs() < 1e-10);
        assert!((got - na * nb).abs() < 1e-10);
    }

    #[test]
    fn tsvt_matrix_case() {
        let b = tsvt(&diag31(), 2.0).unwrap();
        let m = b.frontal_slice(0);
        assert!((m[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(m[(1, 1)].abs() < 1e-12);
        assert!(m[(0, 1)].abs() < 1e-12 && m[(1, 0)].abs() < 1e-12);
        assert!(tsvt(&diag31(), 0.0).is_err());
    }

    #[test]
    fn tsvt_large_tau_zeroes() {
        let t = random((3, 4, 5), 13);
        let smax = tsvd(&t).unwrap().s.iter().flatten().fold(0.0_f64, |m, &s| m.max(s));
        let b = tsvt(&t, smax).unwrap();
        assert!(b.max_abs() < 1e-12);
    }

    #[test]
    fn tsvt_is_prox_of_tnn() {
        let z = random((4, 4, 3), 14);
        let tau = 0.5;
        let obj = |b: &Tensor3| tau * tnn(b).unwrap() + 0.5 * b.dist_sq(&z);
        let b = tsvt(&z, tau).unwrap();
        let base = obj(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..20 {
            let dir = Tensor3::from_fn(z.dims(), |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
            let dir = dir.scale(1.0 / dir.norm_fro());
            for eps in [1e-3, -1e-3, 1e-2, -1e-2] {
                let mut p = b.clone();
                p.axpy(eps, &dir);
                assert!(obj(&p) >= base - 1e-12, "perturbation improved objective");
            }
        }
    }

    #[test]
    fn tsvt_n1_matches_matrix_svt() {
        let z = random((5, 3, 1), 16);
        let m = z.frontal_slice(0);
        let svd = m.clone().svd(true, true);
        let s = svd.singular_values.map(|s| (s - 0.3).max(0.0));
        let oracle = svd.u.unwrap() * DMatrix::from_diagonal(&s) * svd.v_t.unwrap();
        let got = tsvt(&z, 0.3).unwrap().frontal_slice(0);
        assert!((got - oracle).abs().max() < 1e-9);
    }

    #[test]
    fn tsvt_shrinks_tnn() {
        for seed in 0..5 {
            let z = random((4, 3, 4), 100 + seed);
            for tau in [0.05, 0.3, 1.0] {
                assert!(tnn(&tsvt(&z, tau).unwrap()).unwrap() <= tnn(&z).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn tprod_associative() {
        let a = random((2, 3, 4), 20);
        let b = random((3, 3, 4), 21);
        let c = random((3, 2, 4), 22);
        let l = tprod(&tprod(&a, &b).unwrap(), &c).unwrap();
        let r = tprod(&a, &tprod(&b, &c).unwrap()).unwrap();
        assert!(max_abs_diff(&l, &r) < 1e-9);
    }
}
