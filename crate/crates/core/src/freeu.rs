//! Training-free backbone/skip feature decoration.
//!
//! Two moves, applied to the first two skip levels only: the backbone feature
//! is amplified by a scalar (`b1`/`b2`), and the skip feature passes through an
//! FFT → masked scale → iFFT round trip that multiplies every bin inside a
//! normalized frequency radius by `s1`/`s2`. The decorator wraps a
//! feature-decomposable denoiser non-destructively; pure vector oracles are
//! rejected rather than silently passed through.
//!
//! FFT convention matches [`crate::fft2`]: unnormalized forward, 1/n² inverse,
//! DC at bin (0, 0). Mask radii are measured in the max-norm on shifted
//! coordinates and normalized by the Nyquist frequency n/2, so the masked
//! region is a centered square box and a threshold of 1 covers the whole
//! spectrum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft2::{bin_radius_max, grid_side, Fft2};
use crate::models::{DenoiserModel, WienerSplit};
use crate::vp::NoiseLevel;

/// Decorator constants. `t_aug` is the grid index at which decoration
/// activates; it stays active for every remaining step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeUParams {
    pub b1: f64,
    pub b2: f64,
    pub s1: f64,
    pub s2: f64,
    /// Normalized frequency radius in (0, 1] below which skip bins are scaled.
    #[serde(default = "default_radius_threshold")]
    pub radius_threshold: f64,
    pub t_aug: usize,
}

fn default_radius_threshold() -> f64 {
    0.25
}

impl FreeUParams {
    /// The published decorator constants (1.1, 1.1, 0.9, 0.2).
    pub fn standard(t_aug: usize) -> Self {
        FreeUParams {
            b1: 1.1,
            b2: 1.1,
            s1: 0.9,
            s2: 0.2,
            radius_threshold: default_radius_threshold(),
            t_aug,
        }
    }

    /// Identity decoration; useful as a control arm.
    pub fn ones(t_aug: usize) -> Self {
        FreeUParams {
            b1: 1.0,
            b2: 1.0,
            s1: 1.0,
            s2: 1.0,
            radius_threshold: default_radius_threshold(),
            t_aug,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b1 > 0.0 && self.b2 > 0.0) {
            return Err(Error::domain(format!(
                "backbone scales must be positive, got ({}, {})",
                self.b1, self.b2
            )));
        }
        if self.s1 < 0.0 || self.s2 < 0.0 {
            return Err(Error::domain(format!(
                "skip scales must be nonnegative, got ({}, {})",
                self.s1, self.s2
            )));
        }
        if !(self.radius_threshold > 0.0 && self.radius_threshold <= 1.0) {
            return Err(Error::domain(format!(
                "radius_threshold={} outside (0, 1]",
                self.radius_threshold
            )));
        }
        Ok(())
    }

    fn level_scales(&self, level: usize) -> Result<Option<(f64, f64)>> {
        match level {
            1 => Ok(Some((self.b1, self.s1))),
            2 => Ok(Some((self.b2, self.s2))),
            l if l > 2 => Ok(None),
            _ => Err(Error::domain("skip level 0 does not exist".to_string())),
        }
    }
}

/// Multiplies every spectral bin with centered radius ≤ `radius_threshold`
/// (normalized by Nyquist) by `s`; exact identity at s = 1.
pub fn spectral_lowpass_scale(feature: &[f64], s: f64, radius_threshold: f64) -> Result<Vec<f64>> {
    if !(radius_threshold > 0.0 && radius_threshold <= 1.0) {
        return Err(Error::domain(format!(
            "radius_threshold={radius_threshold} outside (0, 1]"
        )));
    }
    if s == 1.0 {
        return Ok(feature.to_vec());
    }
    let n = grid_side(feature.len())?;
    let fft = Fft2::new(n)?;
    let mut spectrum = fft.forward(feature)?;
    let nyquist = n as f64 / 2.0;
    for i in 0..n {
        for j in 0..n {
            if bin_radius_max(n, i, j) / nyquist <= radius_threshold {
                spectrum[i * n + j] *= s;
            }
        }
    }
    fft.inverse_real(&spectrum)
}

/// One decoration step at a given skip level: `backbone' = b·backbone`,
/// `skip' = lowpass-scaled skip`. Levels beyond 2 pass through unchanged.
pub fn freeu_apply(
    backbone: &[f64],
    skip: &[f64],
    level: usize,
    params: &FreeUParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    if backbone.len() != skip.len() {
        return Err(Error::ShapeMismatch {
            expected: backbone.len(),
            got: skip.len(),
        });
    }
    match params.level_scales(level)? {
        Some((b, s)) => {
            let backbone_out = backbone.iter().map(|v| b * v).collect();
            let skip_out = spectral_lowpass_scale(skip, s, params.radius_threshold)?;
            Ok((backbone_out, skip_out))
        }
        None => Ok((backbone.to_vec(), skip.to_vec())),
    }
}

/// Wraps a feature-decomposable model so its denoised output is rebuilt from
/// decorated backbone/skip features. The original model is untouched.
///
/// The toy grid oracle exposes a single backbone/skip split, which is treated
/// as skip level 1.
pub fn decorate<'a>(model: &'a dyn DenoiserModel, params: FreeUParams) -> Result<FreeUDecorated<'a>> {
    params.validate()?;
    if !model.has_feature_split() {
        return Err(Error::Unsupported(format!(
            "model '{}' exposes no backbone/skip decomposition to decorate",
            model.model_id()
        )));
    }
    Ok(FreeUDecorated {
        inner: model,
        params,
    })
}

/// A decorated denoiser; see [`decorate`].
pub struct FreeUDecorated<'a> {
    inner: &'a dyn DenoiserModel,
    params: FreeUParams,
}

impl FreeUDecorated<'_> {
    pub fn params(&self) -> &FreeUParams {
        &self.params
    }
}

impl DenoiserModel for FreeUDecorated<'_> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn model_id(&self) -> String {
        format!("freeu({})", self.inner.model_id())
    }

    fn denoise(&self, x: &[f64], level: &NoiseLevel, condition: Option<usize>) -> Result<Vec<f64>> {
        if condition.is_some() {
            return Err(Error::Unsupported(
                "decorated grid models are unconditional".to_string(),
            ));
        }
        let split = self.inner.split_denoise(x, level)?;
        let (backbone, skip) = freeu_apply(&split.backbone, &split.skip, 1, &self.params)?;
        Ok(backbone.iter().zip(&skip).map(|(b, s)| b + s).collect())
    }

    fn split_denoise(&self, x: &[f64], level: &NoiseLevel) -> Result<WienerSplit> {
        let split = self.inner.split_denoise(x, level)?;
        let (backbone, skip) = freeu_apply(&split.backbone, &split.skip, 1, &self.params)?;
        let output = backbone.iter().zip(&skip).map(|(b, s)| b + s).collect();
        Ok(WienerSplit {
            output,
            backbone,
            skip,
        })
    }

    fn has_feature_split(&self) -> bool {
        true
    }
}
