//! DPM++ solver steps, an Euler baseline, and the sampling driver.
//!
//! Steps are exponential integrators in the log-SNR variable λ: the linear
//! drift is handled exactly and only the denoiser term is approximated. With
//! `h = λ_to − λ_from > 0` the shared update shape is
//!
//! `x_to = (σvp_to/σvp_from)·x_from − α_to·(e^{−h} − 1)·D`,
//!
//! where `D` is the current denoised value (first order) or the multistep
//! extrapolation from the previous node (second order). Either way the update
//! is exact whenever `D` is constant along the trajectory.
//!
//! The driver draws terminal noise from seeded per-sample ChaCha8 streams, so
//! parallel and serial runs are bit-identical. Non-finite states abort the
//! offending sample and are recorded, never clamped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freeu::{decorate, FreeUParams};
use crate::grid::TimeGrid;
use crate::metrics::{SampleMeta, SampleSet};
use crate::models::{pf_ode_field, DenoiserModel, GuidedModel};
use crate::vp::{NoiseLevel, NoiseScheduleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "euler")]
    Euler,
    #[serde(rename = "dpmpp_1s", alias = "dpmpp1s")]
    Dpmpp1s,
    #[serde(rename = "dpmpp_2m", alias = "dpmpp2m")]
    Dpmpp2m,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SolverKind::Euler => "euler",
            SolverKind::Dpmpp1s => "dpmpp_1s",
            SolverKind::Dpmpp2m => "dpmpp_2m",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(SolverKind::Euler),
            "dpmpp_1s" | "dpmpp1s" => Ok(SolverKind::Dpmpp1s),
            "dpmpp_2m" | "dpmpp2m" => Ok(SolverKind::Dpmpp2m),
            other => Err(Error::Config(format!("unknown solver '{other}'"))),
        }
    }
}

/// Solver trajectory state. `prev_denoised`/`prev_level` carry the multistep
/// memory; they are filled by every step so a 2m chain can follow any
/// bootstrap step.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub node_index: usize,
    pub prev_denoised: Option<Vec<f64>>,
    pub prev_level: Option<NoiseLevel>,
}

impl SolverState {
    pub fn initial(x: Vec<f64>) -> Self {
        SolverState {
            x,
            node_index: 0,
            prev_denoised: None,
            prev_level: None,
        }
    }
}

fn step_width(from: &NoiseLevel, to: &NoiseLevel) -> Result<f64> {
    let h = to.lambda - from.lambda;
    if h < 0.0 || !h.is_finite() {
        return Err(Error::domain(format!(
            "step must move toward lower sigma: lambda {} -> {}",
            from.lambda, to.lambda
        )));
    }
    Ok(h)
}

fn finite_or_ood(x: Vec<f64>) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("solver state left the finite range".to_string()));
    }
    Ok(x)
}

fn exponential_update(
    x: &[f64],
    denoised: &[f64],
    from: &NoiseLevel,
    to: &NoiseLevel,
    h: f64,
) -> Vec<f64> {
    let ratio = to.sigma_vp / from.sigma_vp;
    let coeff = -to.alpha * ((-h).exp_m1());
    x.iter()
        .zip(denoised)
        .map(|(xi, di)| ratio * xi + coeff * di)
        .collect()
}

/// First-order data-prediction step. Exact for a constant denoiser; a zero
/// width step (`to == from`) is a no-op.
pub fn dpmpp_1s_step(
    state: &SolverState,
    from: &NoiseLevel,
    to: &NoiseLevel,
    model: &dyn DenoiserModel,
    condition: Option<usize>,
) -> Result<SolverState> {
    let h = step_width(from, to)?;
    let denoised = model.denoise(&state.x, from, condition)?;
    let x = finite_or_ood(exponential_update(&state.x, &denoised, from, to, h))?;
    Ok(SolverState {
        x,
        node_index: state.node_index + 1,
        prev_denoised: Some(denoised),
        prev_level: Some(*from),
    })
}

/// The first-order update in its uncorrected printed form
/// (`− σvp_to·e^{h}·D`). Dimensionally inconsistent with the second-order
/// update and not exact for constant denoisers; kept only so the two forms
/// can be compared.
pub fn dpmpp_1s_step_literal(
    state: &SolverState,
    from: &NoiseLevel,
    to: &NoiseLevel,
    model: &dyn DenoiserModel,
    condition: Option<usize>,
) -> Result<SolverState> {
    let h = step_width(from, to)?;
    let denoised = model.denoise(&state.x, from, condition)?;
    let ratio = to.sigma_vp / from.sigma_vp;
    let coeff = -to.sigma_vp * h.exp();
    let x = finite_or_ood(
        state
            .x
            .iter()
            .zip(&denoised)
            .map(|(xi, di)| ratio * xi + coeff * di)
            .collect(),
    )?;
    Ok(SolverState {
        x,
        node_index: state.node_index + 1,
        prev_denoised: Some(denoised),
        prev_level: Some(*from),
    })
}

/// Second-order multistep: extrapolates the denoised value with the cached
/// previous evaluation, `D_i = (1 + 1/(2r))·D(x_from) − (1/(2r))·D_prev` with
/// `r = h_prev/h` in λ units. Without a cache (the first step) it falls back
/// to the first-order update.
pub fn dpmpp_2m_step(
    state: &SolverState,
    from: &NoiseLevel,
    to: &NoiseLevel,
    model: &dyn DenoiserModel,
    condition: Option<usize>,
) -> Result<SolverState> {
    let (prev_denoised, prev_level) = match (&state.prev_denoised, &state.prev_level) {
        (Some(d), Some(l)) => (d, l),
        _ => return dpmpp_1s_step(state, from, to, model, condition),
    };
    let h = step_width(from, to)?;
    if h == 0.0 {
        return Ok(SolverState {
            x: state.x.clone(),
            node_index: state.node_index + 1,
            prev_denoised: state.prev_denoised.clone(),
            prev_level: state.prev_level,
        });
    }
    let h_prev = from.lambda - prev_level.lambda;
    if h_prev <= 0.0 || !h_prev.is_finite() {
        return Err(Error::domain(format!(
            "multistep cache level (lambda {}) is not older than the current node (lambda {})",
            prev_level.lambda, from.lambda
        )));
    }
    let r = h_prev / h;
    let denoised = model.denoise(&state.x, from, condition)?;
    let c = 1.0 / (2.0 * r);
    let extrapolated: Vec<f64> = denoised
        .iter()
        .zip(prev_denoised)
        .map(|(d, dp)| (1.0 + c) * d - c * dp)
        .collect();
    let x = finite_or_ood(exponential_update(&state.x, &extrapolated, from, to, h))?;
    Ok(SolverState {
        x,
        node_index: state.node_index + 1,
        prev_denoised: Some(denoised),
        prev_level: Some(*from),
    })
}

/// First-order baseline directly on the probability-flow field:
/// `x_to = x_from + (t_to − t_from)·dx/dt`.
pub fn euler_step(
    state: &SolverState,
    from: &NoiseLevel,
    to: &NoiseLevel,
    model: &dyn DenoiserModel,
    sched: &NoiseScheduleParams,
    condition: Option<usize>,
) -> Result<SolverState> {
    step_width(from, to)?;
    let field = pf_ode_field(&state.x, from.t, model, sched, condition)?;
    let dt = to.t - from.t;
    let x = finite_or_ood(
        state
            .x
            .iter()
            .zip(&field)
            .map(|(xi, fi)| xi + dt * fi)
            .collect(),
    )?;
    let denoised = model.denoise(&state.x, from, condition)?;
    Ok(SolverState {
        x,
        node_index: state.node_index + 1,
        prev_denoised: Some(denoised),
        prev_level: Some(*from),
    })
}

fn apply_step(
    solver: SolverKind,
    state: &SolverState,
    from: &NoiseLevel,
    to: &NoiseLevel,
    model: &dyn DenoiserModel,
    sched: &NoiseScheduleParams,
    condition: Option<usize>,
) -> Result<SolverState> {
    match solver {
        SolverKind::Euler => euler_step(state, from, to, model, sched, condition),
        SolverKind::Dpmpp1s => dpmpp_1s_step(state, from, to, model, condition),
        SolverKind::Dpmpp2m => dpmpp_2m_step(state, from, to, model, condition),
    }
}

/// Runs one solver chain over every grid interval, starting from `x_init` at
/// node 0. No guidance or decoration; building block for convergence and
/// truncation studies.
pub fn integrate_grid(
    grid: &TimeGrid,
    solver: SolverKind,
    model: &dyn DenoiserModel,
    sched: &NoiseScheduleParams,
    x_init: Vec<f64>,
    condition: Option<usize>,
) -> Result<Vec<f64>> {
    let mut state = SolverState::initial(x_init);
    let nodes = grid.nodes();
    for j in 0..nodes.len() - 1 {
        state = apply_step(solver, &state, &nodes[j], &nodes[j + 1], model, sched, condition)?;
    }
    Ok(state.x)
}

/// Full sampling configuration. `w` is the guidance scale (1 disables CFG
/// wrapping), `freeu` optionally activates feature decoration from grid index
/// `t_aug` onward.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub grid: TimeGrid,
    pub solver: SolverKind,
    pub w: f64,
    pub freeu: Option<FreeUParams>,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.len() < 2 {
            return Err(Error::Config("grid must have at least 2 nodes".to_string()));
        }
        if self.w < 0.0 || !self.w.is_finite() {
            return Err(Error::Config(format!("guidance scale w={} must be >= 0", self.w)));
        }
        if let Some(fu) = &self.freeu {
            fu.validate()?;
            if fu.t_aug >= self.grid.len() {
                return Err(Error::Config(format!(
                    "t_aug={} is not a valid index into a {}-node grid",
                    fu.t_aug,
                    self.grid.len()
                )));
            }
        }
        Ok(())
    }
}

/// Per-sample node states, recorded when trajectories are requested.
/// `states[i]` is the state at grid node i.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub sample_id: usize,
    pub states: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub struct SampleRun {
    pub set: SampleSet,
    pub trajectories: Option<Vec<Trajectory>>,
}

/// Draws `n_samples` terminal states `x_T ~ N(0, σvp(t_max)²·I)` and solves
/// each down the grid.
///
/// Per-sample randomness comes from stream `i` of `ChaCha8(seed)`, so results
/// are independent of parallel scheduling. If decoration is configured, the
/// model switches to its decorated version at node `t_aug` and stays decorated
/// for the remaining steps. Samples whose state turns non-finite are dropped
/// and counted in `meta.ood_count`.
pub fn sample(
    config: &SamplerConfig,
    model: &dyn DenoiserModel,
    condition: Option<usize>,
    n_samples: usize,
    sched: &NoiseScheduleParams,
    record_trajectories: bool,
) -> Result<SampleRun> {
    config.validate()?;
    let decorated = match &config.freeu {
        Some(params) => Some(decorate(model, *params)?),
        None => None,
    };
    let nodes = config.grid.nodes();
    let dim = model.dimension();
    let terminal_scale = nodes[0].sigma_vp;

    type PerSample = Option<(Vec<f64>, Option<Vec<Vec<f64>>>)>;
    let run_one = |idx: usize| -> Result<PerSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(idx as u64);
        let x_init: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * terminal_scale)
            .collect();
        let mut trajectory = record_trajectories.then(|| vec![x_init.clone()]);
        let mut state = SolverState::initial(x_init);
        for j in 0..nodes.len() - 1 {
            let active: &dyn DenoiserModel = match (&decorated, &config.freeu) {
                (Some(d), Some(fu)) if j >= fu.t_aug => d,
                _ => model,
            };
            let guided = GuidedModel {
                inner: active,
                w: config.w,
            };
            match apply_step(
                config.solver,
                &state,
                &nodes[j],
                &nodes[j + 1],
                &guided,
                sched,
                condition,
            ) {
                Ok(next) => {
                    if let Some(traj) = trajectory.as_mut() {
                        traj.push(next.x.clone());
                    }
                    state = next;
                }
                Err(Error::NonFinite(_)) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some((state.x, trajectory)))
    };

    let results: Vec<Result<PerSample>> = (0..n_samples).into_par_iter().map(run_one).collect();

    let mut vectors = Vec::with_capacity(n_samples);
    let mut trajectories = record_trajectories.then(Vec::new);
    let mut ood_count = 0usize;
    for (idx, res) in results.into_iter().enumerate() {
        match res? {
            Some((x, traj)) => {
                vectors.push(x);
                if let (Some(all), Some(t)) = (trajectories.as_mut(), traj) {
                    all.push(Trajectory {
                        sample_id: idx,
                        states: t,
                    });
                }
            }
            None => ood_count += 1,
        }
    }

    let meta = SampleMeta {
        seed: config.seed,
        schedule_kind: config.grid.kind().to_string(),
        solver_kind: config.solver.to_string(),
        model_id: model.model_id(),
        w: config.w,
        freeu: config.freeu.is_some(),
        ood_count,
        dimension: dim,
    };
    Ok(SampleRun {
        set: SampleSet::new(meta, vectors)?,
        trajectories,
    })
}
