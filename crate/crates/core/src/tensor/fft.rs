use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::{ComplexTensor3, Tensor3};

/// Unnormalized forward DFT of every tube fiber `X(i, j, :)`.
pub fn dft3(t: &Tensor3) -> ComplexTensor3 {
    let dims = t.dims();
    let n = dims.2;
    let mut data: Vec<Complex64> = t.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if n > 1 {
        let fft = FftPlanner::new().plan_fft_forward(n);
        data.par_chunks_mut(n).for_each(|fiber| fft.process(fiber));
    }
    ComplexTensor3 { dims, data }
}

/// Inverse of [`dft3`] with the `1/n` normalization. The imaginary residue,
/// which is round-off for conjugate-symmetric input, is dropped.
pub fn idft3(c: &ComplexTensor3) -> Tensor3 {
    let dims = c.dims();
    let n = dims.2;
    let mut data = c.as_slice().to_vec();
    if n > 1 {
        let fft = FftPlanner::new().plan_fft_inverse(n);
        data.par_chunks_mut(n).for_each(|fiber| fft.process(fiber));
    }
    let scale = 1.0 / n as f64;
    #[cfg(debug_assertions)]
    {
        let re: f64 = data.iter().map(|z| z.re * z.re).sum::<f64>().sqrt() * scale;
        let im = data.iter().fold(0.0_f64, |m, z| m.max(z.im.abs())) * scale;
        debug_assert!(im <= 1e-8 * re.max(1.0), "idft3 imaginary residue {im} vs norm {re}");
    }
    Tensor3 {
        dims,
        data: data.into_iter().map(|z| z.re * scale).collect(),
    }
}
