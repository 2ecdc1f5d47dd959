//! Thin n-dimensional (n ≤ 2) complex FFT helpers over `rustfft`.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Forward/inverse transforms for a square array of side `size` in `dim`
/// dimensions, row-major.
pub(crate) struct FftNd {
    dim: usize,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftNd {
    pub(crate) fn new(dim: usize, size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dim,
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.size.pow(self.dim as u32)
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.forward);
    }

    /// Inverse transform including the `1/N` normalization.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn apply(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.len(), self.len());
        match self.dim {
            1 => plan.process(data),
            2 => {
                let n = self.size;
                for row in data.chunks_mut(n) {
                    plan.process(row);
                }
                let mut col = vec![Complex64::new(0.0, 0.0); n];
                for j in 0..n {
                    for i in 0..n {
                        col[i] = data[i * n + j];
                    }
                    plan.process(&mut col);
                    for i in 0..n {
                        data[i * n + j] = col[i];
                    }
                }
            }
            _ => unimplemented!("FFT helpers cover n ≤ 2"),
        }
    }
}

/// Signed integer frequency index of DFT bin `k` for transform length `n`.
#[inline]
pub(crate) fn signed_index(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}
