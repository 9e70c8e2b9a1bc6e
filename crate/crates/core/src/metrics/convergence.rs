//! Empirical convergence-order estimation.
//!
//! Global order: run a solver over grids of increasing resolution, measure the
//! endpoint error against the RK4 reference transport from the same terminal
//! noise, and fit the log-log slope against 1/N. Local order: shrink a single
//! step around a fixed interval and fit error against h.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::karras_grid;
use crate::models::{reference_solve, rk4_between, DenoiserModel};
use crate::solvers::{dpmpp_1s_step, integrate_grid, SolverKind, SolverState};
use crate::vp::{t_of_lambda, NoiseLevel, NoiseScheduleParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Errors below this are considered floating-point floor, where slope fits
/// stop meaning anything.
const ERROR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceOptions {
    /// Exponent of the σ-interpolated grid used for the sweep.
    pub grid_p: f64,
    /// Terminal draws averaged per resolution.
    pub n_starts: usize,
    /// RK4 sub-steps of the reference transport.
    pub ref_steps: usize,
    pub seed: u64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions {
            grid_p: 7.0,
            n_starts: 16,
            ref_steps: 2048,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Step counts (global) or inverse step widths (local sweep index).
    pub resolutions: Vec<f64>,
    pub errors: Vec<f64>,
    /// Fitted order: slope of log(error) against log(resolution), negated so
    /// larger is better.
    pub slope: f64,
    /// Errors strictly decreasing with resolution.
    pub monotone: bool,
    /// All errors at floating-point floor; slope is meaningless.
    pub floor_reached: bool,
}

fn fit_slope(resolutions: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = resolutions.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(ERROR_FLOOR).ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - xm) * (y - ym);
        den += (x - xm) * (x - xm);
    }
    // Error ~ C·resolution^{-slope}.
    -num / den
}

fn build_report(resolutions: Vec<f64>, errors: Vec<f64>) -> ConvergenceReport {
    let floor_reached = errors.iter().all(|e| *e < ERROR_FLOOR);
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let slope = if floor_reached {
        0.0
    } else {
        fit_slope(&resolutions, &errors)
    };
    ConvergenceReport {
        resolutions,
        errors,
        slope,
        monotone,
        floor_reached,
    }
}

/// Global endpoint-error order of a solver across grid resolutions.
pub fn convergence_order(
    solver: SolverKind,
    model: &dyn DenoiserModel,
    sched: &NoiseScheduleParams,
    step_counts: &[usize],
    opts: &ConvergenceOptions,
) -> Result<ConvergenceReport> {
    if step_counts.len() < 3 {
        return Err(Error::domain(format!(
            "need at least 3 step counts, got {}",
            step_counts.len()
        )));
    }
    if step_counts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("step counts must be strictly increasing".to_string()));
    }
    let dim = model.dimension();

    // Shared terminal draws and their reference endpoints.
    let terminal_scale = NoiseLevel::at(sched.t_max, sched)?.sigma_vp;
    let starts: Vec<Vec<f64>> = (0..opts.n_starts)
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(idx as u64);
            (0..dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * terminal_scale)
                .collect()
        })
        .collect();
    let references: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|x| reference_solve(x, model, sched, opts.ref_steps, None))
        .collect::<Result<Vec<_>>>()?;

    let mut errors = Vec::with_capacity(step_counts.len());
    for &n in step_counts {
        let grid = karras_grid(n, opts.grid_p, sched.sigma_min, sched.sigma_max, sched)?;
        let total: f64 = starts
            .par_iter()
            .zip(&references)
            .map(|(x, reference)| {
                let end = integrate_grid(&grid, solver, model, sched, x.clone(), None)?;
                Ok(end
                    .iter()
                    .zip(reference)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt())
            })
            .collect::<Result<Vec<f64>>>()?
            .iter()
            .sum();
        errors.push(total / opts.n_starts as f64);
    }

    Ok(build_report(
        step_counts.iter().map(|n| *n as f64).collect(),
        errors,
    ))
}

/// Local one-step order of the first-order solver: error of a single step over
/// [λ0, λ0 + h] against the interval reference, for h halved `halvings` times.
pub fn local_step_order(
    model: &dyn DenoiserModel,
    sched: &NoiseScheduleParams,
    lambda_start: f64,
    h_max: f64,
    halvings: usize,
    m_states: usize,
    opts: &ConvergenceOptions,
) -> Result<ConvergenceReport> {
    if halvings < 2 {
        return Err(Error::domain("need at least 3 widths (2 halvings)".to_string()));
    }
    let dim = model.dimension();
    let from = NoiseLevel::at(t_of_lambda(lambda_start, sched)?, sched)?;

    // States perturbed from model data at the interval start, reused for
    // every width.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let states: Vec<Vec<f64>> = (0..m_states)
        .map(|_| {
            let x0 = model.sample_data(&mut rng)?;
            Ok((0..dim)
                .map(|i| {
                    let eps: f64 = rng.sample(StandardNormal);
                    from.alpha * x0[i] + from.sigma_vp * eps
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut resolutions = Vec::new();
    let mut errors = Vec::new();
    for k in 0..=halvings {
        let h = h_max / 2f64.powi(k as i32);
        let to = NoiseLevel::at(t_of_lambda(lambda_start + h, sched)?, sched)?;
        let total: f64 = states
            .par_iter()
            .map(|x| {
                let one = dpmpp_1s_step(&SolverState::initial(x.clone()), &from, &to, model, None)?;
                let reference = rk4_between(x, from.t, to.t, model, sched, 200, None)?;
                Ok(one
                    .x
                    .iter()
                    .zip(&reference)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt())
            })
            .collect::<Result<Vec<f64>>>()?
            .iter()
            .sum();
        resolutions.push(1.0 / h);
        errors.push(total / m_states as f64);
    }

    Ok(build_report(resolutions, errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussianMixture;

    fn gmm2() -> GaussianMixture {
        GaussianMixture::isotropic(vec![0.5, 0.5], vec![vec![1.2, 0.8], vec![-1.2, -0.8]], 0.16)
            .unwrap()
    }

    #[test]
    fn validates_step_counts() {
        let p = NoiseScheduleParams::default_vp();
        let m = gmm2();
        let opts = ConvergenceOptions::default();
        assert!(convergence_order(SolverKind::Euler, &m, &p, &[8, 16], &opts).is_err());
        assert!(convergence_order(SolverKind::Euler, &m, &p, &[8, 8, 16], &opts).is_err());
    }

    #[test]
    fn second_order_solver_shows_second_order_slope() {
        let p = NoiseScheduleParams::default_vp();
        let m = gmm2();
        let opts = ConvergenceOptions {
            n_starts: 8,
            ref_steps: 1024,
            seed: 2,
            ..Default::default()
        };
        let report =
            convergence_order(SolverKind::Dpmpp2m, &m, &p, &[8, 16, 32, 64], &opts).unwrap();
        assert!(
            (1.6..=2.4).contains(&report.slope),
            "2m slope {} errors {:?}",
            report.slope,
            report.errors
        );
        assert!(report.monotone);
    }

    #[test]
    fn euler_shows_first_order_slope() {
        let p = NoiseScheduleParams::default_vp();
        let m = gmm2();
        let opts = ConvergenceOptions {
            n_starts: 8,
            ref_steps: 1024,
            seed: 2,
            ..Default::default()
        };
        let report = convergence_order(SolverKind::Euler, &m, &p, &[8, 16, 32, 64], &opts).unwrap();
        assert!(
            (0.8..=1.3).contains(&report.slope),
            "euler slope {} errors {:?}",
            report.slope,
            report.errors
        );
    }

    #[test]
    fn local_first_order_step_is_second_order() {
        let p = NoiseScheduleParams::default_vp();
        let m = gmm2();
        let opts = ConvergenceOptions {
            seed: 4,
            ..Default::default()
        };
        let lambda_start = crate::vp::lambda_of_t(0.6, &p).unwrap();
        let report = local_step_order(&m, &p, lambda_start, 0.8, 4, 64, &opts).unwrap();
        assert!(
            (1.8..=2.3).contains(&report.slope),
            "1s local slope {} errors {:?}",
            report.slope,
            report.errors
        );
    }

    #[test]
    fn exact_case_is_flagged_at_floor() {
        // A near-point-mass Gaussian has a posterior mean that is constant in
        // x, the case the exponential integrator solves exactly. Errors sit
        // at the floating-point floor and the report flags it.
        let p = NoiseScheduleParams::default_vp();
        let m = GaussianMixture::isotropic(vec![1.0], vec![vec![0.4, -0.7]], 1e-18).unwrap();
        let opts = ConvergenceOptions {
            n_starts: 4,
            ref_steps: 4096,
            seed: 6,
            ..Default::default()
        };
        let report =
            convergence_order(SolverKind::Dpmpp1s, &m, &p, &[8, 16, 32], &opts).unwrap();
        assert!(report.floor_reached, "errors {:?}", report.errors);
        assert_eq!(report.slope, 0.0);
    }
}
