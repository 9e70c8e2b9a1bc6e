//! Small 2-D FFT layer over rustfft for square power-of-two grids.
//!
//! Convention used across the crate: unnormalized forward transform, `1/n²`
//! inverse, DC at bin (0, 0). Frequency radii are computed on signed (shifted)
//! coordinates so masks are centered on DC.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Cached forward/inverse plans for an n×n grid.
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::domain(format!("grid side {n} must be a power of two")));
        }
        let mut planner = FftPlanner::new();
        Ok(Fft2 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        for row in data.chunks_exact_mut(n) {
            plan.process(row);
        }
        let mut column = vec![Complex64::default(); n];
        for j in 0..n {
            for i in 0..n {
                column[i] = data[i * n + j];
            }
            plan.process(&mut column);
            for i in 0..n {
                data[i * n + j] = column[i];
            }
        }
    }

    /// Unnormalized forward transform of a real row-major grid.
    pub fn forward(&self, grid: &[f64]) -> Result<Vec<Complex64>> {
        if grid.len() != self.n * self.n {
            return Err(Error::ShapeMismatch {
                expected: self.n * self.n,
                got: grid.len(),
            });
        }
        let mut data: Vec<Complex64> = grid.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        Ok(data)
    }

    /// Inverse transform with 1/n² normalization; returns the real part.
    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Result<Vec<f64>> {
        if spectrum.len() != self.n * self.n {
            return Err(Error::ShapeMismatch {
                expected: self.n * self.n,
                got: spectrum.len(),
            });
        }
        let mut data = spectrum.to_vec();
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / (self.n * self.n) as f64;
        Ok(data.iter().map(|c| c.re * scale).collect())
    }
}

/// Signed frequency coordinate of bin index `i` on a length-`n` axis.
pub fn signed_freq(n: usize, i: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Centered Euclidean frequency radius of bin (i, j).
pub fn bin_radius(n: usize, i: usize, j: usize) -> f64 {
    let ki = signed_freq(n, i) as f64;
    let kj = signed_freq(n, j) as f64;
    ki.hypot(kj)
}

/// Centered max-norm frequency radius of bin (i, j). Under this norm a
/// normalized radius of 1 covers the whole spectrum, corners included, and
/// the masked region is the square box the decoration technique uses.
pub fn bin_radius_max(n: usize, i: usize, j: usize) -> f64 {
    let ki = signed_freq(n, i).unsigned_abs();
    let kj = signed_freq(n, j).unsigned_abs();
    ki.max(kj) as f64
}

/// Grid side of a flattened square grid.
pub fn grid_side(len: usize) -> Result<usize> {
    let n = (len as f64).sqrt().round() as usize;
    if n * n != len {
        return Err(Error::domain(format!("length {len} is not a square grid")));
    }
    Ok(n)
}
