//! Stationary Gaussian-field oracle on an n×n grid.
//!
//! The prior is a zero-mean stationary Gaussian field whose DFT bins are
//! independent with normalized power `P(f)` (spatial white noise has P ≡ 1).
//! Under VP noise the exact posterior mean applies the per-bin Wiener gain
//! `G(f) = α·P(f) / (α²·P(f) + σ_vp²)`, and the gained spectrum splits into a
//! low-frequency backbone band and a high-frequency skip band — the stand-in
//! for a U-Net's backbone/skip decomposition that feature decoration needs.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft2::{bin_radius, Fft2};
use crate::models::{DenoiserModel, WienerSplit};
use crate::vp::NoiseLevel;

#[derive(Debug)]
pub struct GridFieldModel {
    n: usize,
    power: Vec<f64>,
    split_radius: f64,
    fft: Fft2,
}

impl GridFieldModel {
    pub fn new(n: usize, power_spectrum: Vec<f64>, split_radius: f64) -> Result<Self> {
        let fft = Fft2::new(n)?;
        if power_spectrum.len() != n * n {
            return Err(Error::ShapeMismatch {
                expected: n * n,
                got: power_spectrum.len(),
            });
        }
        if power_spectrum.iter().any(|p| *p < 0.0 || p.is_nan() || p.is_infinite()) {
            return Err(Error::domain("power spectrum must be nonnegative".to_string()));
        }
        if split_radius <= 0.0 || split_radius.is_nan() {
            return Err(Error::domain(format!("split_radius={split_radius} must be positive")));
        }
        Ok(GridFieldModel {
            n,
            power: power_spectrum,
            split_radius,
            fft,
        })
    }

    /// Smooth natural-image-like falloff `P(f) = amplitude / (1 + ‖f‖²)^exponent`.
    pub fn power_law(n: usize, amplitude: f64, exponent: f64, split_radius: f64) -> Result<Self> {
        if amplitude <= 0.0 || amplitude.is_nan() {
            return Err(Error::domain(format!("amplitude={amplitude} must be positive")));
        }
        let mut power = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let r = bin_radius(n, i, j);
                power.push(amplitude / (1.0 + r * r).powf(exponent));
            }
        }
        Self::new(n, power, split_radius)
    }

    /// The shipped default: 32×32, `P ∝ 1/(1+‖f‖²)²`, split radius n/8.
    pub fn default_32() -> Self {
        Self::power_law(32, 1.0, 2.0, 4.0).expect("default grid model is valid")
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn split_radius(&self) -> f64 {
        self.split_radius
    }

    fn is_backbone_bin(&self, i: usize, j: usize) -> bool {
        bin_radius(self.n, i, j) <= self.split_radius
    }

    /// Exact Wiener denoiser, returned with its backbone/skip band split.
    ///
    /// The two bands partition the gained spectrum exactly, so
    /// `output = backbone + skip` elementwise.
    pub fn wiener_denoise(&self, x: &[f64], level: &NoiseLevel) -> Result<WienerSplit> {
        let mut spectrum = self.fft.forward(x)?;
        let a = level.alpha;
        let sv2 = level.sigma_vp * level.sigma_vp;
        let mut backbone_spec = vec![Complex64::default(); spectrum.len()];
        for i in 0..self.n {
            for j in 0..self.n {
                let idx = i * self.n + j;
                let p = self.power[idx];
                let gain = a * p / (a * a * p + sv2);
                let gained = spectrum[idx] * gain;
                if self.is_backbone_bin(i, j) {
                    backbone_spec[idx] = gained;
                    spectrum[idx] = Complex64::default();
                } else {
                    spectrum[idx] = gained;
                }
            }
        }
        let backbone = self.fft.inverse_real(&backbone_spec)?;
        let skip = self.fft.inverse_real(&spectrum)?;
        let output = backbone.iter().zip(&skip).map(|(b, s)| b + s).collect();
        Ok(WienerSplit {
            output,
            backbone,
            skip,
        })
    }
}

impl DenoiserModel for GridFieldModel {
    fn dimension(&self) -> usize {
        self.n * self.n
    }

    fn model_id(&self) -> String {
        format!("grid_field{}", self.n)
    }

    fn denoise(&self, x: &[f64], level: &NoiseLevel, condition: Option<usize>) -> Result<Vec<f64>> {
        if condition.is_some() {
            return Err(Error::Unsupported(
                "grid field model received a condition label".to_string(),
            ));
        }
        Ok(self.wiener_denoise(x, level)?.output)
    }

    fn score(&self, x: &[f64], level: &NoiseLevel, condition: Option<usize>) -> Result<Vec<f64>> {
        if condition.is_some() {
            return Err(Error::Unsupported(
                "grid field model received a condition label".to_string(),
            ));
        }
        // Marginal covariance is diagonal in the DFT basis with eigenvalues
        // α²P(f) + σ_vp², so the score is −C⁻¹x bin by bin.
        let mut spectrum = self.fft.forward(x)?;
        let a2 = level.alpha * level.alpha;
        let sv2 = level.sigma_vp * level.sigma_vp;
        for (c, p) in spectrum.iter_mut().zip(&self.power) {
            *c = -*c / (a2 * p + sv2);
        }
        self.fft.inverse_real(&spectrum)
    }

    fn has_analytic_score(&self) -> bool {
        true
    }

    fn split_denoise(&self, x: &[f64], level: &NoiseLevel) -> Result<WienerSplit> {
        self.wiener_denoise(x, level)
    }

    fn has_feature_split(&self) -> bool {
        true
    }

    fn sample_data(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let white: Vec<f64> = (0..self.n * self.n).map(|_| rng.sample(StandardNormal)).collect();
        let mut spectrum = self.fft.forward(&white)?;
        for (c, p) in spectrum.iter_mut().zip(&self.power) {
            *c *= p.sqrt();
        }
        self.fft.inverse_real(&spectrum)
    }

    fn can_sample_data(&self) -> bool {
        true
    }
}
