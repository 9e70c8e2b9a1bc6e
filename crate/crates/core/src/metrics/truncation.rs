//! Per-interval truncation error of a single solver step.
//!
//! On a uniform-σ grid, each interval gets M seeded states perturbed from
//! model-drawn clean data; the RMSE between one first-order step and a
//! many-step RK4 reference over the same interval is the local truncation
//! error at that noise level. The classic finding this reproduces: the error
//! grows as the starting σ shrinks.

use rayon::prelude::*;

use crate::error::Result;
use crate::grid::uniform_sigma_grid;
use crate::models::{rk4_between, DenoiserModel};
use crate::solvers::{dpmpp_1s_step, SolverState};
use crate::vp::NoiseScheduleParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy)]
pub struct TruncationOptions {
    /// States per interval.
    pub m_states: usize,
    /// RK4 sub-steps for the per-interval reference.
    pub ref_steps: usize,
    pub seed: u64,
}

impl Default for TruncationOptions {
    fn default() -> Self {
        TruncationOptions {
            m_states: 256,
            ref_steps: 200,
            seed: 0,
        }
    }
}

/// Returns `(σ_i, rmse_i)` per grid interval, ordered noisiest first (σ_i is
/// the interval's starting noise level).
pub fn local_truncation_rmse(
    model: &dyn DenoiserModel,
    sched: &NoiseScheduleParams,
    n: usize,
    opts: &TruncationOptions,
) -> Result<Vec<(f64, f64)>> {
    let grid = uniform_sigma_grid(n, sched.sigma_max, sched)?;
    let nodes = grid.nodes().to_vec();
    let dim = model.dimension();

    (0..n - 1)
        .into_par_iter()
        .map(|interval| {
            let from = &nodes[interval];
            let to = &nodes[interval + 1];
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(interval as u64);
            let mut total_sq = 0.0;
            for _ in 0..opts.m_states {
                let x0 = model.sample_data(&mut rng)?;
                let x_t: Vec<f64> = (0..dim)
                    .map(|i| {
                        let eps: f64 = rng.sample(StandardNormal);
                        from.alpha * x0[i] + from.sigma_vp * eps
                    })
                    .collect();
                let one = dpmpp_1s_step(&SolverState::initial(x_t.clone()), from, to, model, None)?;
                let reference = rk4_between(&x_t, from.t, to.t, model, sched, opts.ref_steps, None)?;
                total_sq += one
                    .x
                    .iter()
                    .zip(&reference)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
            let rmse = (total_sq / opts.m_states as f64).sqrt();
            Ok((from.sigma, rmse))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::GaussianMixture;
    use crate::solvers::dpmpp_1s_step;
    use crate::vp::NoiseLevel;

    fn gmm2() -> GaussianMixture {
        GaussianMixture::isotropic(vec![0.5, 0.5], vec![vec![1.2, 0.8], vec![-1.2, -0.8]], 0.16)
            .unwrap()
    }

    #[test]
    fn zero_width_interval_has_zero_error() {
        let p = NoiseScheduleParams::default_vp();
        let m = gmm2();
        let lvl = NoiseLevel::at(0.5, &p).unwrap();
        let x = vec![0.4, -0.1];
        let one = dpmpp_1s_step(&SolverState::initial(x.clone()), &lvl, &lvl, &m, None).unwrap();
        let reference = rk4_between(&x, lvl.t, lvl.t, &m, &p, 50, None).unwrap();
        let err: f64 = one
            .x
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-13);
    }

    #[test]
    fn error_grows_toward_clean_end() {
        let p = NoiseScheduleParams::default_vp();
        let m = gmm2();
        let opts = TruncationOptions {
            m_states: 32,
            ref_steps: 100,
            seed: 3,
        };
        let rows = local_truncation_rmse(&m, &p, 16, &opts).unwrap();
        assert_eq!(rows.len(), 15);
        // Noisiest interval first; error at the cleanest measured interval
        // dominates the noisiest one.
        assert!(rows[0].1 < rows[rows.len() - 1].1);
        for w in rows.windows(2) {
            assert!(w[1].0 < w[0].0, "sigma column must decrease");
        }
        for (_, rmse) in &rows {
            assert!(*rmse >= 0.0);
        }
    }

    #[test]
    fn error_grows_toward_clean_end_conditional_oracle() {
        // Same monotone-increase shape on the conditional oracle's pooled
        // mixture.
        let p = NoiseScheduleParams::default_vp();
        let a = GaussianMixture::isotropic(vec![1.0], vec![vec![1.5, 0.5]], 0.2).unwrap();
        let b = GaussianMixture::isotropic(vec![1.0], vec![vec![-1.5, -0.5]], 0.2).unwrap();
        let cond = crate::models::ConditionalGmm::new(vec![a, b]).unwrap();
        let opts = TruncationOptions {
            m_states: 16,
            ref_steps: 100,
            seed: 5,
        };
        let rows = local_truncation_rmse(&cond, &p, 12, &opts).unwrap();
        assert!(rows[0].1 < rows[rows.len() - 1].1);
    }

    #[test]
    fn reference_resolution_is_converged() {
        let p = NoiseScheduleParams::default_vp();
        let m = gmm2();
        let coarse = local_truncation_rmse(
            &m,
            &p,
            12,
            &TruncationOptions {
                m_states: 24,
                ref_steps: 200,
                seed: 9,
            },
        )
        .unwrap();
        let fine = local_truncation_rmse(
            &m,
            &p,
            12,
            &TruncationOptions {
                m_states: 24,
                ref_steps: 400,
                seed: 9,
            },
        )
        .unwrap();
        for ((_, a), (_, b)) in coarse.iter().zip(&fine) {
            if *b > 1e-12 {
                assert!(
                    (a - b).abs() / b < 0.01,
                    "doubling reference steps moved rmse {a} -> {b}"
                );
            }
        }
    }
}
