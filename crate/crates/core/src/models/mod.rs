//! Denoiser models with analytic ground truth, the probability-flow ODE
//! field, and the Runge–Kutta reference solver.
//!
//! Everything here is the measurement side of the artifact: oracles whose
//! scores are exact, so solver output can be judged against the true
//! transport instead of against another approximate sampler.

mod gmm;
mod grid_field;

pub use gmm::{ConditionalGmm, GaussianMixture};
pub use grid_field::GridFieldModel;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vp::{beta_of_t, lambda_of_t, t_of_lambda, NoiseLevel, NoiseScheduleParams};

/// Output of a backbone/skip-decomposed denoiser. The bands partition the
/// denoised spectrum, so `output = backbone + skip`.
#[derive(Debug, Clone)]
pub struct WienerSplit {
    pub output: Vec<f64>,
    pub backbone: Vec<f64>,
    pub skip: Vec<f64>,
}

/// The abstract denoiser `D(x; σ, condition)` — the artifact's stand-in for a
/// trained U-Net.
///
/// `denoise` must return the (estimated) posterior mean of the clean data.
/// Analytic oracles additionally expose the exact score; black-box models get
/// their score recovered through the Tweedie identity
/// `score = (α·D − x)/σ_vp²` (see [`model_score`]).
pub trait DenoiserModel: Send + Sync {
    fn dimension(&self) -> usize;

    fn model_id(&self) -> String;

    fn denoise(&self, x: &[f64], level: &NoiseLevel, condition: Option<usize>) -> Result<Vec<f64>>;

    /// Exact score, when the model has one.
    fn score(&self, _x: &[f64], _level: &NoiseLevel, _condition: Option<usize>) -> Result<Vec<f64>> {
        Err(Error::Unsupported("analytic score".to_string()))
    }

    fn has_analytic_score(&self) -> bool {
        false
    }

    /// Backbone/skip feature decomposition, when the model has one. Pure
    /// vector oracles reject; silently skipping decoration would invalidate
    /// experiments.
    fn split_denoise(&self, _x: &[f64], _level: &NoiseLevel) -> Result<WienerSplit> {
        Err(Error::Unsupported("backbone/skip feature split".to_string()))
    }

    fn has_feature_split(&self) -> bool {
        false
    }

    /// Draws one clean data point from the model's prior, when defined.
    fn sample_data(&self, _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Err(Error::Unsupported("data sampling".to_string()))
    }

    fn can_sample_data(&self) -> bool {
        false
    }
}

/// Score of a model at `(x, level)`: analytic when available, otherwise
/// recovered from the denoiser via Tweedie.
pub fn model_score(
    model: &dyn DenoiserModel,
    x: &[f64],
    level: &NoiseLevel,
    condition: Option<usize>,
) -> Result<Vec<f64>> {
    if model.has_analytic_score() {
        return model.score(x, level, condition);
    }
    let d = model.denoise(x, level, condition)?;
    let sv2 = level.sigma_vp * level.sigma_vp;
    Ok(x.iter()
        .zip(&d)
        .map(|(xi, di)| (level.alpha * di - xi) / sv2)
        .collect())
}

/// Classifier-free-guidance combination `D̂ = D_uncond + w·(D_cond − D_uncond)`.
pub fn cfg_combine(cond: &[f64], uncond: &[f64], w: f64) -> Result<Vec<f64>> {
    if cond.len() != uncond.len() {
        return Err(Error::ShapeMismatch {
            expected: cond.len(),
            got: uncond.len(),
        });
    }
    Ok(cond
        .iter()
        .zip(uncond)
        .map(|(c, u)| u + w * (c - u))
        .collect())
}

/// Guided denoiser built from an explicit conditional/unconditional model pair.
pub fn cfg_denoiser(
    x: &[f64],
    level: &NoiseLevel,
    cond_model: &dyn DenoiserModel,
    uncond_model: &dyn DenoiserModel,
    w: f64,
    condition: Option<usize>,
) -> Result<Vec<f64>> {
    if cond_model.dimension() != uncond_model.dimension() {
        return Err(Error::ShapeMismatch {
            expected: cond_model.dimension(),
            got: uncond_model.dimension(),
        });
    }
    let cond = cond_model.denoise(x, level, condition)?;
    let uncond = uncond_model.denoise(x, level, None)?;
    cfg_combine(&cond, &uncond, w)
}

/// Guidance wrapper over a single conditional model: the conditional branch
/// forwards the label, the unconditional branch drops it. At `w = 1` the
/// wrapper is bit-transparent.
pub struct GuidedModel<'a> {
    pub inner: &'a dyn DenoiserModel,
    pub w: f64,
}

impl DenoiserModel for GuidedModel<'_> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn model_id(&self) -> String {
        format!("{}(w={})", self.inner.model_id(), self.w)
    }

    fn denoise(&self, x: &[f64], level: &NoiseLevel, condition: Option<usize>) -> Result<Vec<f64>> {
        if self.w == 1.0 {
            return self.inner.denoise(x, level, condition);
        }
        let cond = self.inner.denoise(x, level, condition)?;
        let uncond = self.inner.denoise(x, level, None)?;
        cfg_combine(&cond, &uncond, self.w)
    }
}

/// Probability-flow ODE field in VP variables:
/// `dx/dt = −½β(t)·(x + ∇log q_t(x))`.
pub fn pf_ode_field(
    x: &[f64],
    t: f64,
    model: &dyn DenoiserModel,
    sched: &NoiseScheduleParams,
    condition: Option<usize>,
) -> Result<Vec<f64>> {
    let level = NoiseLevel::at(t, sched)?;
    let beta = beta_of_t(t, sched)?;
    let score = model_score(model, x, &level, condition)?;
    Ok(x.iter()
        .zip(&score)
        .map(|(xi, si)| -0.5 * beta * (xi + si))
        .collect())
}

fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} left the finite range")));
    }
    Ok(())
}

fn rk4_step(
    x: &[f64],
    t0: f64,
    t1: f64,
    model: &dyn DenoiserModel,
    sched: &NoiseScheduleParams,
    condition: Option<usize>,
) -> Result<Vec<f64>> {
    let h = t1 - t0;
    let tm = t0 + 0.5 * h;
    let k1 = pf_ode_field(x, t0, model, sched, condition)?;
    let x2: Vec<f64> = x.iter().zip(&k1).map(|(xi, k)| xi + 0.5 * h * k).collect();
    let k2 = pf_ode_field(&x2, tm, model, sched, condition)?;
    let x3: Vec<f64> = x.iter().zip(&k2).map(|(xi, k)| xi + 0.5 * h * k).collect();
    let k3 = pf_ode_field(&x3, tm, model, sched, condition)?;
    let x4: Vec<f64> = x.iter().zip(&k3).map(|(xi, k)| xi + h * k).collect();
    let k4 = pf_ode_field(&x4, t1, model, sched, condition)?;
    let out: Vec<f64> = (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    check_finite(&out, "RK4 state")?;
    Ok(out)
}

/// Classical RK4 integration of the probability-flow ODE between two times,
/// with sub-steps spaced uniformly in λ (the stiffness-removing variable for
/// this ODE family).
pub fn rk4_between(
    x0: &[f64],
    t_from: f64,
    t_to: f64,
    model: &dyn DenoiserModel,
    sched: &NoiseScheduleParams,
    n_steps: usize,
    condition: Option<usize>,
) -> Result<Vec<f64>> {
    if n_steps == 0 {
        return Err(Error::domain("n_steps must be at least 1".to_string()));
    }
    let lam_from = lambda_of_t(t_from, sched)?;
    let lam_to = lambda_of_t(t_to, sched)?;
    let mut x = x0.to_vec();
    let mut t_prev = t_from;
    for k in 1..=n_steps {
        let t_next = if k == n_steps {
            t_to
        } else {
            let lam = lam_from + (lam_to - lam_from) * k as f64 / n_steps as f64;
            t_of_lambda(lam, sched)?
        };
        x = rk4_step(&x, t_prev, t_next, model, sched, condition)?;
        t_prev = t_next;
    }
    Ok(x)
}

/// Reference ground truth: RK4 over the full [t_max → t_min] range on a
/// uniform-λ grid. `n_steps = 2000` is the default downstream; self-convergence
/// is fourth order.
pub fn reference_solve(
    x_terminal: &[f64],
    model: &dyn DenoiserModel,
    sched: &NoiseScheduleParams,
    n_steps: usize,
    condition: Option<usize>,
) -> Result<Vec<f64>> {
    rk4_between(
        x_terminal,
        sched.t_max,
        sched.t_min,
        model,
        sched,
        n_steps,
        condition,
    )
}

/// Serializable model description; see the README for the JSON shapes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Gmm {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
    },
    ConditionalGmm {
        classes: Vec<GmmSpec>,
    },
    GridField {
        grid_size: usize,
        spectrum: SpectrumSpec,
        split_radius: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    PowerLaw { amplitude: f64, exponent: f64 },
    Flat { amplitude: f64 },
}

impl ModelSpec {
    pub fn build(&self) -> Result<Box<dyn DenoiserModel>> {
        match self {
            ModelSpec::Gmm {
                weights,
                means,
                covariances,
            } => Ok(Box::new(GaussianMixture::new(
                weights.clone(),
                means.clone(),
                covariances.clone(),
            )?)),
            ModelSpec::ConditionalGmm { classes } => {
                let built = classes
                    .iter()
                    .map(|c| {
                        GaussianMixture::new(c.weights.clone(), c.means.clone(), c.covariances.clone())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Box::new(ConditionalGmm::new(built)?))
            }
            ModelSpec::GridField {
                grid_size,
                spectrum,
                split_radius,
            } => {
                let model = match spectrum {
                    SpectrumSpec::PowerLaw { amplitude, exponent } => {
                        GridFieldModel::power_law(*grid_size, *amplitude, *exponent, *split_radius)?
                    }
                    SpectrumSpec::Flat { amplitude } => GridFieldModel::new(
                        *grid_size,
                        vec![*amplitude; grid_size * grid_size],
                        *split_radius,
                    )?,
                };
                Ok(Box::new(model))
            }
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
