//! Two-dimensional periodic FFTs on an `n × n` site array stored row-major
//! (`index = j * n + i`, row `j` is the y coordinate).

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        plan.process(data);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            for j in 0..n {
                col[j] = data[j * n + i];
            }
            plan.process(&mut col);
            for j in 0..n {
                data[j * n + i] = col[j];
            }
        }
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd);
    }

    /// Inverse transform including the `1/n²` normalization, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv);
        let s = 1.0 / (self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut c);
        c
    }

    /// Multiply the spectrum of a real field by `mult` and return the real part
    /// of the inverse transform.
    pub fn filter_real(&self, data: &[f64], mult: &[Complex64]) -> Vec<f64> {
        let mut c = self.forward_real(data);
        for (v, m) in c.iter_mut().zip(mult) {
            *v *= m;
        }
        self.inverse(&mut c);
        c.iter().map(|v| v.re).collect()
    }

    pub fn filter_complex(&self, data: &[Complex64], mult: &[f64]) -> Vec<Complex64> {
        let mut c = data.to_vec();
        self.forward(&mut c);
        for (v, m) in c.iter_mut().zip(mult) {
            *v *= m;
        }
        self.inverse(&mut c);
        c
    }
}

/// Integer frequencies in FFT order (`0, 1, …, n/2−1, −n/2, …, −1`).
pub fn freqs(n: usize) -> Vec<f64> {
    (0..n)
        .map(|m| if m < n / 2 { m as f64 } else { m as f64 - n as f64 })
        .collect()
}
