//! Multidimensional FFT helpers and circular convolution plans.
//!
//! Wraps `rustfft` one-dimensional transforms into row-major n-dimensional
//! ones (last axis fastest). Convolutions are circular; callers guarantee
//! exactness on their region of interest by padding.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Smallest 2,3,5-smooth integer ≥ `n`.
pub fn good_size(n: usize) -> usize {
    let n = n.max(1);
    let mut best = usize::MAX;
    let mut p2 = 1usize;
    while p2 < best {
        let mut p23 = p2;
        while p23 < best {
            let mut p235 = p23;
            while p235 < n {
                p235 = match p235.checked_mul(5) {
                    Some(v) => v,
                    None => break,
                };
            }
            if p235 >= n && p235 < best {
                best = p235;
            }
            p23 = match p23.checked_mul(3) {
                Some(v) => v,
                None => break,
            };
        }
        p2 = match p2.checked_mul(2) {
            Some(v) => v,
            None => break,
        };
    }
    best
}

/// Row-major n-dimensional FFT of fixed shape.
pub struct NdFft {
    dims: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl NdFft {
    pub fn new(dims: &[usize]) -> Self {
        assert!(!dims.is_empty() && dims.iter().all(|&n| n > 0));
        let mut planner = FftPlanner::new();
        let fwd = dims.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inv = dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        NdFft { dims: dims.to_vec(), fwd, inv }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex<f64>]) {
        for axis in 0..self.dims.len() {
            self.transform_axis(data, axis, true);
        }
    }

    /// Unnormalized inverse; divide by [`NdFft::len`] to invert [`NdFft::forward`].
    pub fn inverse(&self, data: &mut [Complex<f64>]) {
        for axis in 0..self.dims.len() {
            self.transform_axis(data, axis, false);
        }
    }

    fn transform_axis(&self, data: &mut [Complex<f64>], axis: usize, forward: bool) {
        assert_eq!(data.len(), self.len());
        let n = self.dims[axis];
        let inner: usize = self.dims[axis + 1..].iter().product();
        let outer: usize = self.dims[..axis].iter().product();
        let fft = if forward { &self.fwd[axis] } else { &self.inv[axis] };
        if inner == 1 {
            for chunk in data.chunks_exact_mut(n) {
                fft.process(chunk);
            }
            return;
        }
        let mut line = vec![Complex::new(0.0, 0.0); n];
        for o in 0..outer {
            let base = o * n * inner;
            for i in 0..inner {
                for k in 0..n {
                    line[k] = data[base + k * inner + i];
                }
                fft.process(&mut line);
                for k in 0..n {
                    data[base + k * inner + i] = line[k];
                }
            }
        }
    }
}

/// Circular convolution against a fixed real kernel, spectrum precomputed.
pub struct ConvPlan {
    fft: NdFft,
    kernel_hat: Vec<Complex<f64>>,
}

impl ConvPlan {
    /// `kernel` is given on the full plan shape (wrapped layout: negative
    /// offsets appear at the top end of each axis).
    pub fn new(dims: &[usize], kernel: &[f64]) -> Self {
        let fft = NdFft::new(dims);
        assert_eq!(kernel.len(), fft.len());
        let mut hat: Vec<Complex<f64>> = kernel.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft.forward(&mut hat);
        ConvPlan { fft, kernel_hat: hat }
    }

    pub fn dims(&self) -> &[usize] {
        self.fft.dims.as_slice()
    }

    /// Circular convolution `kernel ⊛ src`, real output.
    pub fn apply(&self, src: &[f64]) -> Vec<f64> {
        assert_eq!(src.len(), self.fft.len());
        let mut buf: Vec<Complex<f64>> = src.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= *k;
        }
        self.fft.inverse(&mut buf);
        let scale = 1.0 / self.fft.len() as f64;
        buf.into_iter().map(|c| c.re * scale).collect()
    }
}
