//! Variance-preserving diffusion coefficients and noise-level algebra.
//!
//! The forward process follows the linear-β VP SDE. Writing
//! `e(t) = ½·β_d·t² + β_min·t` with `β_d = β_max − β_min`, the parametrization
//! used throughout the crate is
//!
//! - `σ(t) = sqrt(exp(e(t)) − 1)` — Karras-convention noise level,
//! - `s(t) = exp(−e(t)/2)` — the scale factor, equal to the VP signal
//!   coefficient `α(t)`,
//! - `σ_vp(t) = s(t)·σ(t) = sqrt(1 − exp(−e(t)))` — the VP noise stdev,
//! - `λ(t) = ln(α/σ_vp) = −ln σ(t)` — the log-SNR.
//!
//! These satisfy `s²(1+σ²) = 1` and `α² + σ_vp² = 1` exactly; both identities
//! are relied on downstream and enforced here to machine precision. All maps
//! are pure functions of `(t, params)` and safe to call concurrently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// VP diffusion constants plus cached σ-range.
///
/// `sigma_min`/`sigma_max` are caches of `sigma_karras(t_min)` and
/// `sigma_karras(t_max)`, not independent knobs; constructors keep them in
/// sync.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScheduleParams {
    pub beta_min: f64,
    pub beta_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl NoiseScheduleParams {
    /// Builds params from β constants and a time range, deriving the σ caches.
    pub fn new(beta_min: f64, beta_max: f64, t_min: f64, t_max: f64) -> Result<Self> {
        if !(beta_min > 0.0 && beta_min < beta_max) {
            return Err(Error::domain(format!(
                "need 0 < beta_min < beta_max, got ({beta_min}, {beta_max})"
            )));
        }
        if !(t_min > 0.0 && t_min < t_max && t_max <= 1.0) {
            return Err(Error::domain(format!(
                "need 0 < t_min < t_max <= 1, got ({t_min}, {t_max})"
            )));
        }
        let mut p = NoiseScheduleParams {
            beta_min,
            beta_max,
            t_min,
            t_max,
            sigma_min: 0.0,
            sigma_max: 0.0,
        };
        p.sigma_min = sigma_karras(t_min, &p)?;
        p.sigma_max = sigma_karras(t_max, &p)?;
        Ok(p)
    }

    /// Builds params from β constants and a σ-range, deriving the time range.
    pub fn from_sigma_range(
        beta_min: f64,
        beta_max: f64,
        sigma_min: f64,
        sigma_max: f64,
    ) -> Result<Self> {
        let valid_range = sigma_min > 0.0 && sigma_min < sigma_max;
        if !valid_range {
            return Err(Error::domain(format!(
                "need 0 < sigma_min < sigma_max, got ({sigma_min}, {sigma_max})"
            )));
        }
        let probe = NoiseScheduleParams {
            beta_min,
            beta_max,
            t_min: 0.5,
            t_max: 1.0,
            sigma_min,
            sigma_max,
        };
        if !(beta_min > 0.0 && beta_min < beta_max) {
            return Err(Error::domain(format!(
                "need 0 < beta_min < beta_max, got ({beta_min}, {beta_max})"
            )));
        }
        let t_min = t_of_sigma(sigma_min, &probe)?;
        let t_max = t_of_sigma(sigma_max, &probe)?;
        let mut p = Self::new(beta_min, beta_max, t_min, t_max)?;
        // Keep the caller's endpoints bit-exact; the round trip through t
        // agrees to ~1e-15 relative, well inside the cache invariant.
        p.sigma_min = sigma_min;
        p.sigma_max = sigma_max;
        Ok(p)
    }

    /// The standard continuous-VP constants: β ∈ [0.1, 20], t ∈ [1e-3, 1].
    pub fn default_vp() -> Self {
        Self::new(0.1, 20.0, 1e-3, 1.0).expect("default constants are valid")
    }

    pub fn beta_d(&self) -> f64 {
        self.beta_max - self.beta_min
    }

    /// `e(t) = ½·β_d·t² + β_min·t`, the log-variance exponent shared by σ and s.
    fn exponent(&self, t: f64) -> f64 {
        0.5 * self.beta_d() * t * t + self.beta_min * t
    }

    /// Checks the σ-cache invariant to 1e-10 relative.
    pub fn validate(&self) -> Result<()> {
        let smin = sigma_karras(self.t_min, self)?;
        let smax = sigma_karras(self.t_max, self)?;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        if rel(self.sigma_min, smin) > 1e-10 || rel(self.sigma_max, smax) > 1e-10 {
            return Err(Error::domain(
                "sigma_min/sigma_max caches disagree with sigma_karras(t_min/t_max)".to_string(),
            ));
        }
        Ok(())
    }
}

/// A fully-resolved noise level: every per-node quantity the solvers need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub t: f64,
    /// Karras-parametrization stdev σ(t).
    pub sigma: f64,
    /// Scale factor s(t); equals the VP signal coefficient.
    pub s: f64,
    /// VP signal coefficient α(t) = s(t).
    pub alpha: f64,
    /// VP noise stdev σ_vp(t) = s(t)·σ(t).
    pub sigma_vp: f64,
    /// log-SNR λ(t) = −ln σ(t).
    pub lambda: f64,
}

impl NoiseLevel {
    /// Resolves all noise-level quantities at time `t`.
    pub fn at(t: f64, p: &NoiseScheduleParams) -> Result<Self> {
        if !(t > 0.0 && t <= 1.0) || !t.is_finite() {
            return Err(Error::domain(format!("t={t} outside (0, 1]")));
        }
        let e = p.exponent(t);
        let sigma = e.exp_m1().sqrt();
        let s = (-0.5 * e).exp();
        // sqrt(1 − exp(−e)) keeps α² + σ_vp² = 1 to the last ulp.
        let sigma_vp = (-(-e).exp_m1()).sqrt();
        Ok(NoiseLevel {
            t,
            sigma,
            s,
            alpha: s,
            sigma_vp,
            lambda: -sigma.ln(),
        })
    }

    /// Resolves a noise level from σ, keeping the given σ bit-exact.
    pub fn from_sigma(sigma: f64, p: &NoiseScheduleParams) -> Result<Self> {
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(Error::domain(format!("sigma={sigma} must be positive")));
        }
        let t = t_of_sigma(sigma, p)?;
        let e = p.exponent(t);
        let s = (-0.5 * e).exp();
        Ok(NoiseLevel {
            t,
            sigma,
            s,
            alpha: s,
            sigma_vp: s * sigma,
            lambda: -sigma.ln(),
        })
    }
}

/// Network-input preconditioning coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreconditionCoeffs {
    pub c_skip: f64,
    pub c_in: f64,
    pub c_out: f64,
    pub c_noise: f64,
}

/// Linear β schedule: `β(t) = β_min + t·(β_max − β_min)`.
pub fn beta_of_t(t: f64, p: &NoiseScheduleParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) || !t.is_finite() {
        return Err(Error::domain(format!("t={t} outside [0, 1]")));
    }
    Ok(p.beta_min + t * p.beta_d())
}

/// Karras-convention noise level `σ(t) = sqrt(exp(e(t)) − 1)`; strictly
/// increasing on [0, 1].
pub fn sigma_karras(t: f64, p: &NoiseScheduleParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) || !t.is_finite() {
        return Err(Error::domain(format!("t={t} outside [0, 1]")));
    }
    Ok(p.exponent(t).exp_m1().sqrt())
}

/// Scale factor `s(t) = exp(−e(t)/2)`; equals the VP α(t) and lies in (0, 1].
pub fn scale_s(t: f64, p: &NoiseScheduleParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) || !t.is_finite() {
        return Err(Error::domain(format!("t={t} outside [0, 1]")));
    }
    Ok((-0.5 * p.exponent(t)).exp())
}

/// Inverts `sigma_karras` by solving `½β_d t² + β_min t = ln(1+σ²)` for the
/// nonnegative root.
pub fn t_of_sigma(sigma: f64, p: &NoiseScheduleParams) -> Result<f64> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::domain(format!("sigma={sigma} must be >= 0")));
    }
    let target = (sigma * sigma).ln_1p();
    let b = p.beta_d();
    let disc = p.beta_min * p.beta_min + 2.0 * b * target;
    Ok((-p.beta_min + disc.sqrt()) / b)
}

/// log-SNR `λ(t) = −ln σ(t)`.
pub fn lambda_of_t(t: f64, p: &NoiseScheduleParams) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain(format!("t={t} outside (0, 1]")));
    }
    Ok(-sigma_karras(t, p)?.ln())
}

/// Inverse of [`lambda_of_t`]: `t(λ) = t_of_sigma(exp(−λ))`.
pub fn t_of_lambda(lambda: f64, p: &NoiseScheduleParams) -> Result<f64> {
    if !lambda.is_finite() {
        return Err(Error::domain(format!("lambda={lambda} must be finite")));
    }
    t_of_sigma((-lambda).exp(), p)
}

/// One-shot forward perturbation: `x_t = α(t)·x0 + σ_vp(t)·noise`.
///
/// The caller supplies the standard-normal draw so results stay deterministic.
pub fn perturb(x0: &[f64], t: f64, noise: &[f64], p: &NoiseScheduleParams) -> Result<Vec<f64>> {
    if x0.len() != noise.len() {
        return Err(Error::ShapeMismatch {
            expected: x0.len(),
            got: noise.len(),
        });
    }
    let level = NoiseLevel::at(t, p)?;
    Ok(x0
        .iter()
        .zip(noise)
        .map(|(x, n)| level.alpha * x + level.sigma_vp * n)
        .collect())
}

/// VP/DDPM preconditioning: `c_skip = 1`, `c_in = 1/sqrt(1+σ²)`,
/// `c_out = −σ`, `c_noise = t(σ)`.
///
/// `c_in` normalizes the variance of the scale-free state `x0 + σ·ε`; analytic
/// oracles bypass these coefficients and return the denoised value directly.
pub fn precondition(sigma: f64, p: &NoiseScheduleParams) -> Result<PreconditionCoeffs> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::domain(format!("sigma={sigma} must be >= 0")));
    }
    Ok(PreconditionCoeffs {
        c_skip: 1.0,
        c_in: 1.0 / (1.0 + sigma * sigma).sqrt(),
        c_out: -sigma,
        c_noise: t_of_sigma(sigma, p)?,
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)] // frozen high-precision oracle values
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn params() -> NoiseScheduleParams {
        NoiseScheduleParams::default_vp()
    }

    #[test]
    fn beta_endpoints_and_midpoint() {
        let p = params();
        assert_eq!(beta_of_t(0.0, &p).unwrap(), 0.1);
        assert_eq!(beta_of_t(1.0, &p).unwrap(), 20.0);
        assert_relative_eq!(beta_of_t(0.5, &p).unwrap(), 10.05, max_relative = 1e-15);
        assert!(beta_of_t(-0.1, &p).is_err());
        assert!(beta_of_t(1.1, &p).is_err());
    }

    #[test]
    fn sigma_at_known_points() {
        let p = params();
        assert_eq!(sigma_karras(0.0, &p).unwrap(), 0.0);
        // High-precision evaluations of sqrt(exp(½·19.9·t² + 0.1·t) − 1).
        assert_relative_eq!(
            sigma_karras(1.0, &p).unwrap(),
            152.1669702839464719207,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            sigma_karras(0.5, &p).unwrap(),
            3.412918309069120692343,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            sigma_karras(1e-3, &p).unwrap(),
            0.01048599278670298629721,
            max_relative = 1e-13
        );
        assert!(sigma_karras(0.7, &p).unwrap() > sigma_karras(0.3, &p).unwrap());
    }

    #[test]
    fn scale_at_known_points() {
        let p = params();
        assert_eq!(scale_s(0.0, &p).unwrap(), 1.0);
        assert_relative_eq!(
            scale_s(1.0, &p).unwrap(),
            6.57158649492961501405e-3,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            scale_s(0.5, &p).unwrap(),
            0.2811828807967523758454,
            max_relative = 1e-13
        );
    }

    #[test]
    fn sigma_scale_identity_on_random_grid() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let t: f64 = p.t_min + rng.random::<f64>() * (p.t_max - p.t_min);
            let sig = sigma_karras(t, &p).unwrap();
            let s = scale_s(t, &p).unwrap();
            assert_relative_eq!(s * s * (1.0 + sig * sig), 1.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn vp_property_on_random_grid() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let t: f64 = p.t_min + rng.random::<f64>() * (p.t_max - p.t_min);
            let lvl = NoiseLevel::at(t, &p).unwrap();
            assert_relative_eq!(
                lvl.alpha * lvl.alpha + lvl.sigma_vp * lvl.sigma_vp,
                1.0,
                max_relative = 1e-10
            );
            assert_relative_eq!(lvl.lambda, -lvl.sigma.ln(), max_relative = 1e-10);
            assert_relative_eq!(lvl.sigma_vp, lvl.s * lvl.sigma, max_relative = 1e-10);
        }
    }

    #[test]
    fn t_of_sigma_round_trips() {
        let p = params();
        assert_eq!(t_of_sigma(0.0, &p).unwrap(), 0.0);
        assert!(t_of_sigma(-1.0, &p).is_err());

        let t = t_of_sigma(14.6, &p).unwrap();
        assert_relative_eq!(t, 0.7294096486970137923074, max_relative = 1e-12);
        assert_relative_eq!(sigma_karras(t, &p).unwrap(), 14.6, max_relative = 1e-8);

        let sig = sigma_karras(0.5, &p).unwrap();
        assert_relative_eq!(t_of_sigma(sig, &p).unwrap(), 0.5, max_relative = 1e-10);
    }

    #[test]
    fn lambda_round_trips_and_monotonicity() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut prev_lambda = f64::INFINITY;
        for i in 0..=1000 {
            let t = p.t_min + (p.t_max - p.t_min) * i as f64 / 1000.0;
            let lam = lambda_of_t(t, &p).unwrap();
            assert!(lam < prev_lambda, "lambda must be strictly decreasing in t");
            prev_lambda = lam;
        }
        for _ in 0..100 {
            let t: f64 = p.t_min + rng.random::<f64>() * (p.t_max - p.t_min);
            let lam = lambda_of_t(t, &p).unwrap();
            assert_relative_eq!(
                lam + sigma_karras(t, &p).unwrap().ln(),
                0.0,
                epsilon = 1e-12
            );
            assert_relative_eq!(t_of_lambda(lam, &p).unwrap(), t, max_relative = 1e-10);
        }
        assert_relative_eq!(
            t_of_lambda(lambda_of_t(0.3, &p).unwrap(), &p).unwrap(),
            0.3,
            max_relative = 1e-10
        );
    }

    #[test]
    fn forward_maps_strictly_monotone() {
        let p = params();
        let mut prev = (0.0f64, 1.0f64 + 1e-9, f64::INFINITY);
        for i in 0..=1000 {
            let t = p.t_min + (p.t_max - p.t_min) * i as f64 / 1000.0;
            let lvl = NoiseLevel::at(t, &p).unwrap();
            assert!(lvl.sigma > prev.0);
            assert!(lvl.s < prev.1);
            assert!(lvl.lambda < prev.2);
            prev = (lvl.sigma, lvl.s, lvl.lambda);
        }
    }

    #[test]
    fn perturb_endpoints() {
        let p = params();
        let x0 = vec![1.0, -2.0, 0.5];
        let noise = vec![0.3, 0.1, -0.7];
        // t below the valid NoiseLevel domain is rejected.
        assert!(perturb(&x0, 0.0, &noise, &p).is_err());

        let nearly_clean = perturb(&x0, 1e-12, &noise, &p).unwrap();
        for (a, b) in nearly_clean.iter().zip(&x0) {
            assert_relative_eq!(a, b, epsilon = 1e-5);
        }

        let zeros = vec![0.0, 0.0, 0.0];
        let e1 = vec![1.0, 0.0, 0.0];
        let lvl = NoiseLevel::at(0.4, &p).unwrap();
        let out = perturb(&zeros, 0.4, &e1, &p).unwrap();
        assert_relative_eq!(out[0], lvl.sigma_vp, max_relative = 1e-14);
        assert_eq!(out[1], 0.0);

        assert!(perturb(&x0, 0.5, &[1.0], &p).is_err());
    }

    #[test]
    fn perturb_is_affine() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let t: f64 = p.t_min + rng.random::<f64>() * (p.t_max - p.t_min);
            let x: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let dx: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let eps: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let lvl = NoiseLevel::at(t, &p).unwrap();

            let shifted: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let lhs = perturb(&shifted, t, &eps, &p).unwrap();
            let rhs = perturb(&x, t, &eps, &p).unwrap();
            for i in 0..4 {
                assert_relative_eq!(lhs[i] - rhs[i], lvl.alpha * dx[i], epsilon = 1e-12);
            }

            let eps_shifted: Vec<f64> = eps.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let lhs = perturb(&x, t, &eps_shifted, &p).unwrap();
            for i in 0..4 {
                assert_relative_eq!(lhs[i] - rhs[i], lvl.sigma_vp * dx[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn perturb_moments_match_kernel() {
        // Monte-Carlo check of the perturbation kernel at t = 0.5.
        let p = params();
        let n = 100_000usize;
        let x0 = [0.7];
        let lvl = NoiseLevel::at(0.5, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let eps: f64 = rng.sample(StandardNormal);
            let xt = perturb(&x0, 0.5, &[eps], &p).unwrap()[0];
            sum += xt;
            sum_sq += xt * xt;
        }
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        let se = 3.0 / (n as f64).sqrt();
        assert!((mean - lvl.alpha * x0[0]).abs() < se * lvl.sigma_vp);
        assert!((std - lvl.sigma_vp).abs() < se * lvl.sigma_vp);
    }

    #[test]
    fn precondition_known_values() {
        let p = params();
        let c0 = precondition(0.0, &p).unwrap();
        assert_eq!(c0.c_skip, 1.0);
        assert_eq!(c0.c_in, 1.0);
        assert_eq!(c0.c_out, 0.0);
        assert_eq!(c0.c_noise, 0.0);

        let c1 = precondition(1.0, &p).unwrap();
        assert_relative_eq!(c1.c_in, std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-15);
        assert_eq!(c1.c_out, -1.0);

        assert!(precondition(-0.5, &p).is_err());
    }

    #[test]
    fn precondition_c_in_normalizes_scale_free_state() {
        // c_in targets the scale-free state x0 + σ·ε, whose variance is 1+σ²
        // for unit-variance data. Monte-Carlo over 10^5 draws, 2% tolerance.
        let p = params();
        let lvl = NoiseLevel::at(0.5, &p).unwrap();
        let c = precondition(lvl.sigma, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let n = 100_000usize;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let x0: f64 = rng.sample(StandardNormal);
            let eps: f64 = rng.sample(StandardNormal);
            let xt = perturb(&[x0], 0.5, &[eps], &p).unwrap()[0];
            let scale_free = xt / lvl.s;
            sum_sq += (c.c_in * scale_free) * (c.c_in * scale_free);
        }
        let var = sum_sq / n as f64;
        assert!((var - 1.0).abs() < 0.02, "var = {var}");
    }

    #[test]
    fn c_in_non_increasing_in_sigma() {
        let p = params();
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let sigma = 0.05 * i as f64;
            let c = precondition(sigma, &p).unwrap();
            assert!(c.c_in > 0.0 && c.c_in <= prev);
            prev = c.c_in;
        }
    }

    #[test]
    fn sigma_range_constructor_round_trips() {
        let p = NoiseScheduleParams::from_sigma_range(0.1, 20.0, 0.002, 80.0).unwrap();
        assert_relative_eq!(p.sigma_min, 0.002, max_relative = 1e-10);
        assert_relative_eq!(p.sigma_max, 80.0, max_relative = 1e-10);
        assert_relative_eq!(p.t_min, 3.984197539140593775877e-5, max_relative = 1e-10);
        assert_relative_eq!(p.t_max, 0.933511143240703972506, max_relative = 1e-10);
        p.validate().unwrap();
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(NoiseScheduleParams::new(0.0, 20.0, 1e-3, 1.0).is_err());
        assert!(NoiseScheduleParams::new(20.0, 0.1, 1e-3, 1.0).is_err());
        assert!(NoiseScheduleParams::new(0.1, 20.0, 0.0, 1.0).is_err());
        assert!(NoiseScheduleParams::new(0.1, 20.0, 0.5, 0.4).is_err());
        assert!(NoiseScheduleParams::new(0.1, 20.0, 0.5, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn prop_inverse_maps_round_trip(t in 1e-3f64..=1.0f64) {
            let p = params();
            let sig = sigma_karras(t, &p).unwrap();
            let back = t_of_sigma(sig, &p).unwrap();
            prop_assert!((back - t).abs() / t < 1e-8);

            let lam = lambda_of_t(t, &p).unwrap();
            let back = t_of_lambda(lam, &p).unwrap();
            prop_assert!((back - t).abs() / t < 1e-8);
        }

        #[test]
        fn prop_identities_hold(t in 1e-3f64..=1.0f64) {
            let p = params();
            let lvl = NoiseLevel::at(t, &p).unwrap();
            prop_assert!((lvl.s * lvl.s * (1.0 + lvl.sigma * lvl.sigma) - 1.0).abs() < 1e-10);
            prop_assert!((lvl.alpha * lvl.alpha + lvl.sigma_vp * lvl.sigma_vp - 1.0).abs() < 1e-10);
        }
    }
}
