//! Time discretization schedules.
//!
//! Four constructors build validated [`TimeGrid`] values, all ordered noisiest
//! first (index 0 = σ_max end):
//!
//! - [`uniform_sigma_grid`] — evenly spaced σ from σ_max down toward 0, last
//!   node clamped to σ_min (σ = 0 sits outside the solvers' λ-domain),
//! - [`karras_grid`] — power-law interpolation of σ^(1/p),
//! - [`improved_grid`] — the same interpolation applied in t-space,
//! - [`custom_stop_grid`] — a t-space grid that terminates strictly above a
//!   stop level σ_stop > σ_min, delegating the residual noise to the decoder.
//!
//! Every node caches the full [`NoiseLevel`] so downstream solvers never
//! recompute schedule algebra. Grids are immutable once built.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vp::{t_of_sigma, NoiseLevel, NoiseScheduleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    UniformSigma,
    Karras,
    Improved,
    CustomStop,
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ScheduleKind::UniformSigma => "uniform_sigma",
            ScheduleKind::Karras => "karras",
            ScheduleKind::Improved => "improved",
            ScheduleKind::CustomStop => "custom_stop",
        };
        f.write_str(name)
    }
}

/// Record of the inputs a grid was built from, kept for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_stop: Option<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

/// An ordered sequence of discretization nodes, noisiest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<NoiseLevel>,
    kind: ScheduleKind,
    params_used: GridParams,
}

impl TimeGrid {
    fn build(nodes: Vec<NoiseLevel>, kind: ScheduleKind, params_used: GridParams) -> Result<Self> {
        if nodes.len() != params_used.n {
            return Err(Error::Schedule(format!(
                "built {} nodes for a request of {}",
                nodes.len(),
                params_used.n
            )));
        }
        for w in nodes.windows(2) {
            if w[1].sigma >= w[0].sigma || w[1].sigma.is_nan() {
                return Err(Error::Schedule(format!(
                    "sigma not strictly decreasing: {} -> {}",
                    w[0].sigma, w[1].sigma
                )));
            }
        }
        Ok(TimeGrid {
            nodes,
            kind,
            params_used,
        })
    }

    pub fn nodes(&self) -> &[NoiseLevel] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NoiseLevel {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn params_used(&self) -> &GridParams {
        &self.params_used
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Schedule(format!("need at least 2 nodes, got {n}")));
    }
    Ok(())
}

fn check_exponent(name: &str, p: f64) -> Result<()> {
    if p <= 0.0 || !p.is_finite() {
        return Err(Error::Schedule(format!("{name}={p} must be positive")));
    }
    Ok(())
}

fn check_sigma_range(sigma_min: f64, sigma_max: f64) -> Result<()> {
    let valid = sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite();
    if !valid {
        return Err(Error::Schedule(format!(
            "need 0 < sigma_min < sigma_max, got ({sigma_min}, {sigma_max})"
        )));
    }
    Ok(())
}

/// Evenly spaced σ from `sigma_max` down toward 0; the final node is clamped
/// to `sched.sigma_min`.
pub fn uniform_sigma_grid(
    n: usize,
    sigma_max: f64,
    sched: &NoiseScheduleParams,
) -> Result<TimeGrid> {
    check_n(n)?;
    if sigma_max <= sched.sigma_min || sigma_max.is_nan() {
        return Err(Error::Schedule(format!(
            "sigma_max={sigma_max} must exceed sigma_min={}",
            sched.sigma_min
        )));
    }
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let frac = (n - 1 - i) as f64 / (n - 1) as f64;
        let sigma = (frac * sigma_max).max(sched.sigma_min);
        nodes.push(NoiseLevel::from_sigma(sigma, sched)?);
    }
    TimeGrid::build(
        nodes,
        ScheduleKind::UniformSigma,
        GridParams {
            n,
            p: None,
            p1: None,
            p2: None,
            stop: None,
            sigma_stop: None,
            sigma_min: sched.sigma_min,
            sigma_max,
            t_min: sched.t_min,
            t_max: sched.t_max,
        },
    )
}

/// Power-law σ interpolation:
/// `σ_i = (σ_max^(1/p) + i/(N−1)·(σ_min^(1/p) − σ_max^(1/p)))^p`.
///
/// Endpoints are pinned to the exact `sigma_max`/`sigma_min` inputs. Larger p
/// widens the gaps at the noisy end and crowds nodes into the near-clean
/// region; p = 1 reduces to uniform σ spacing on [σ_min, σ_max].
pub fn karras_grid(
    n: usize,
    p: f64,
    sigma_min: f64,
    sigma_max: f64,
    sched: &NoiseScheduleParams,
) -> Result<TimeGrid> {
    check_n(n)?;
    check_exponent("p", p)?;
    check_sigma_range(sigma_min, sigma_max)?;
    let a = sigma_max.powf(1.0 / p);
    let b = sigma_min.powf(1.0 / p);
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let sigma = if i == 0 {
            sigma_max
        } else if i == n - 1 {
            sigma_min
        } else {
            let frac = i as f64 / (n - 1) as f64;
            (a + frac * (b - a)).powf(p)
        };
        nodes.push(NoiseLevel::from_sigma(sigma, sched)?);
    }
    TimeGrid::build(
        nodes,
        ScheduleKind::Karras,
        GridParams {
            n,
            p: Some(p),
            p1: None,
            p2: None,
            stop: None,
            sigma_stop: None,
            sigma_min,
            sigma_max,
            t_min: sched.t_min,
            t_max: sched.t_max,
        },
    )
}

/// The σ-interpolation formula in its printed form, anchored at σ_min:
/// `σ_i = (σ_min^(1/p) + i/(N−1)·(σ_min^(1/p) − σ_max^(1/p)))^p`.
///
/// Kept only for comparison against [`karras_grid`]: the sequence starts at
/// σ_min, walks downward, and goes NaN once the base turns negative, so it
/// cannot form a valid [`TimeGrid`].
pub fn karras_sigmas_literal(n: usize, p: f64, sigma_min: f64, sigma_max: f64) -> Result<Vec<f64>> {
    check_n(n)?;
    check_exponent("p", p)?;
    check_sigma_range(sigma_min, sigma_max)?;
    let a = sigma_min.powf(1.0 / p);
    let b = sigma_max.powf(1.0 / p);
    Ok((0..n)
        .map(|i| {
            let frac = i as f64 / (n - 1) as f64;
            (a + frac * (a - b)).powf(p)
        })
        .collect())
}

/// Power-law interpolation in t-space:
/// `t_i = (t_max^(1/p) + i/(N−1)·(t_min^(1/p) − t_max^(1/p)))^p`.
pub fn improved_grid(
    n: usize,
    p: f64,
    t_min: f64,
    t_max: f64,
    sched: &NoiseScheduleParams,
) -> Result<TimeGrid> {
    check_n(n)?;
    check_exponent("p", p)?;
    if !(t_min > 0.0 && t_min < t_max && t_max <= 1.0) {
        return Err(Error::Schedule(format!(
            "need 0 < t_min < t_max <= 1, got ({t_min}, {t_max})"
        )));
    }
    let a = t_max.powf(1.0 / p);
    let b = t_min.powf(1.0 / p);
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let t = if i == 0 {
            t_max
        } else if i == n - 1 {
            t_min
        } else {
            let frac = i as f64 / (n - 1) as f64;
            (a + frac * (b - a)).powf(p)
        };
        nodes.push(NoiseLevel::at(t, sched)?);
    }
    TimeGrid::build(
        nodes,
        ScheduleKind::Improved,
        GridParams {
            n,
            p: Some(p),
            p1: None,
            p2: None,
            stop: None,
            sigma_stop: None,
            sigma_min: sched.sigma_min,
            sigma_max: sched.sigma_max,
            t_min,
            t_max,
        },
    )
}

/// The stop level:
/// `σ_stop = (σ_max^(1/p2) + stop/(N+stop+1)·(σ_min^(1/p2) − σ_max^(1/p2)))^p2`.
pub fn sigma_stop(n: usize, p2: f64, stop: u64, sched: &NoiseScheduleParams) -> Result<f64> {
    check_n(n)?;
    check_exponent("p2", p2)?;
    let frac = stop as f64 / (n as f64 + stop as f64 + 1.0);
    let a = sched.sigma_max.powf(1.0 / p2);
    let b = sched.sigma_min.powf(1.0 / p2);
    Ok((a + frac * (b - a)).powf(p2))
}

/// A t-space grid from `t_max` toward `t(σ_stop)`:
/// `t_i = (t_max^(1/p1) + i/N·(t(σ_stop)^(1/p1) − t_max^(1/p1)))^p1` for
/// `i = 0..N−1`.
///
/// The divisor is N while i stops at N−1, so the final node sits strictly
/// above `t(σ_stop)`; the leftover noise is the decoder's job, not the
/// solver's. `stop = 0` puts σ_stop at σ_max and collapses the grid, which is
/// rejected as degenerate.
pub fn custom_stop_grid(
    n: usize,
    p1: f64,
    p2: f64,
    stop: u64,
    sched: &NoiseScheduleParams,
) -> Result<TimeGrid> {
    check_n(n)?;
    check_exponent("p1", p1)?;
    check_exponent("p2", p2)?;
    if stop == 0 {
        return Err(Error::DegenerateStop(
            "stop=0 puts sigma_stop at sigma_max and collapses the grid".to_string(),
        ));
    }
    let s_stop = sigma_stop(n, p2, stop, sched)?;
    if s_stop <= sched.sigma_min {
        return Err(Error::DegenerateStop(format!(
            "sigma_stop={s_stop} does not exceed sigma_min={}",
            sched.sigma_min
        )));
    }
    let t_stop = t_of_sigma(s_stop, sched)?;
    let a = sched.t_max.powf(1.0 / p1);
    let b = t_stop.powf(1.0 / p1);
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let t = if i == 0 {
            sched.t_max
        } else {
            let frac = i as f64 / n as f64;
            (a + frac * (b - a)).powf(p1)
        };
        nodes.push(NoiseLevel::at(t, sched)?);
    }
    let grid = TimeGrid::build(
        nodes,
        ScheduleKind::CustomStop,
        GridParams {
            n,
            p: None,
            p1: Some(p1),
            p2: Some(p2),
            stop: Some(stop),
            sigma_stop: Some(s_stop),
            sigma_min: sched.sigma_min,
            sigma_max: sched.sigma_max,
            t_min: sched.t_min,
            t_max: sched.t_max,
        },
    )?;
    debug_assert!(grid.nodes.last().unwrap().sigma > s_stop);
    Ok(grid)
}
