//! Gaussian-mixture oracles with exact scores.
//!
//! For a mixture `q0 = Σ_k w_k N(μ_k, Σ_k)` the VP marginal at noise level
//! `(α, σ_vp)` is again a mixture, `q_t = Σ_k w_k N(α μ_k, α² Σ_k + σ_vp² I)`,
//! so the score and the posterior mean (the denoiser) are available in closed
//! form. These models are the ground truth the solvers are judged against.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::DenoiserModel;
use crate::vp::NoiseLevel;

const LOG_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    data_chol: Vec<Cholesky<f64, Dyn>>,
    dim: usize,
}

impl GaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::domain(format!(
                "component count mismatch: {} weights, {} means, {} covariances",
                k,
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::domain("weights must be nonnegative".to_string()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("weights sum to {total}, expected 1")));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::domain("all means must share a nonzero dimension".to_string()));
        }
        let mut cov_mats = Vec::with_capacity(k);
        let mut data_chol = Vec::with_capacity(k);
        for cov in &covariances {
            if cov.len() != dim || cov.iter().any(|row| row.len() != dim) {
                return Err(Error::domain("covariance shape mismatch".to_string()));
            }
            let mat = DMatrix::from_fn(dim, dim, |i, j| cov[i][j]);
            let asym = (&mat - mat.transpose()).abs().max();
            if asym > 1e-10 {
                return Err(Error::domain(format!("covariance not symmetric (gap {asym})")));
            }
            let chol = Cholesky::new(mat.clone())
                .ok_or_else(|| Error::domain("covariance not positive definite".to_string()))?;
            cov_mats.push(mat);
            data_chol.push(chol);
        }
        Ok(GaussianMixture {
            weights,
            means: means.into_iter().map(DVector::from_vec).collect(),
            covariances: cov_mats,
            data_chol,
            dim,
        })
    }

    /// Isotropic helper: components `N(μ_k, var·I)` with equal or given weights.
    pub fn isotropic(weights: Vec<f64>, means: Vec<Vec<f64>>, var: f64) -> Result<Self> {
        let dim = means.first().map(|m| m.len()).unwrap_or(0);
        let eye: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { var } else { 0.0 }).collect())
            .collect();
        let covs = vec![eye; means.len()];
        Self::new(weights, means, covs)
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-component marginal pieces at a noise level: (log w_k + log N_k(x),
    /// C_k⁻¹ (x − α μ_k)).
    fn component_terms(&self, x: &DVector<f64>, level: &NoiseLevel) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
        let a2 = level.alpha * level.alpha;
        let sv2 = level.sigma_vp * level.sigma_vp;
        let mut log_terms = Vec::with_capacity(self.weights.len());
        let mut whitened = Vec::with_capacity(self.weights.len());
        for (k, cov) in self.covariances.iter().enumerate() {
            let mut c = cov * a2;
            for i in 0..self.dim {
                c[(i, i)] += sv2;
            }
            let chol = Cholesky::new(c).ok_or_else(|| {
                Error::domain("marginal covariance lost positive definiteness".to_string())
            })?;
            let z = x - &self.means[k] * level.alpha;
            let solved = chol.solve(&z);
            let quad = z.dot(&solved);
            let logdet: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
            log_terms.push(self.weights[k].ln() - 0.5 * (self.dim as f64 * LOG_2PI + logdet + quad));
            whitened.push(solved);
        }
        Ok((log_terms, whitened))
    }

    /// `log q_t(x)` of the noisy marginal; the finite-difference oracle in the
    /// test suite differentiates this.
    pub fn log_marginal_density(&self, x: &[f64], level: &NoiseLevel) -> Result<f64> {
        let xv = DVector::from_column_slice(x);
        let (log_terms, _) = self.component_terms(&xv, level)?;
        Ok(log_sum_exp(&log_terms))
    }

    /// Exact marginal score `∇_x log q_t(x)`, log-sum-exp stabilized.
    pub fn marginal_score(&self, x: &[f64], level: &NoiseLevel) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let xv = DVector::from_column_slice(x);
        let (log_terms, whitened) = self.component_terms(&xv, level)?;
        let lse = log_sum_exp(&log_terms);
        let mut score = DVector::zeros(self.dim);
        for (lt, sol) in log_terms.iter().zip(&whitened) {
            let resp = (lt - lse).exp();
            score -= sol * resp;
        }
        Ok(score.into_iter().copied().collect())
    }

    /// Posterior mean `E[x0 | x_t = x]` via the score.
    pub fn denoiser(&self, x: &[f64], level: &NoiseLevel) -> Result<Vec<f64>> {
        let score = self.marginal_score(x, level)?;
        let sv2 = level.sigma_vp * level.sigma_vp;
        Ok(x.iter()
            .zip(&score)
            .map(|(xi, si)| (xi + sv2 * si) / level.alpha)
            .collect())
    }

    /// Draws a clean data point.
    pub fn sample_x0(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = self.weights.len() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                idx = k;
                break;
            }
        }
        let z = DVector::from_fn(self.dim, |_, _| rng.sample(StandardNormal));
        let x = &self.means[idx] + self.data_chol[idx].l() * z;
        x.into_iter().copied().collect()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

impl DenoiserModel for GaussianMixture {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn model_id(&self) -> String {
        format!("gmm{}d{}", self.weights.len(), self.dim)
    }

    fn denoise(&self, x: &[f64], level: &NoiseLevel, condition: Option<usize>) -> Result<Vec<f64>> {
        if condition.is_some() {
            return Err(Error::Unsupported(
                "unconditional mixture received a condition label".to_string(),
            ));
        }
        self.denoiser(x, level)
    }

    fn score(&self, x: &[f64], level: &NoiseLevel, condition: Option<usize>) -> Result<Vec<f64>> {
        if condition.is_some() {
            return Err(Error::Unsupported(
                "unconditional mixture received a condition label".to_string(),
            ));
        }
        self.marginal_score(x, level)
    }

    fn has_analytic_score(&self) -> bool {
        true
    }

    fn sample_data(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(self.sample_x0(rng))
    }

    fn can_sample_data(&self) -> bool {
        true
    }
}

/// A class-conditional mixture pair: the condition label selects one component
/// set, the unconditional marginal is the even pooling of every class. This
/// keeps the guidance vector field analytically transparent.
#[derive(Debug, Clone)]
pub struct ConditionalGmm {
    classes: Vec<GaussianMixture>,
    pooled: GaussianMixture,
}

impl ConditionalGmm {
    pub fn new(classes: Vec<GaussianMixture>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::domain("need at least two classes".to_string()));
        }
        let dim = classes[0].dim;
        if classes.iter().any(|c| c.dim != dim) {
            return Err(Error::ShapeMismatch {
                expected: dim,
                got: classes.iter().map(|c| c.dim).find(|d| *d != dim).unwrap_or(dim),
            });
        }
        let share = 1.0 / classes.len() as f64;
        let mut weights = Vec::new();
        let mut means = Vec::new();
        let mut covs = Vec::new();
        for class in &classes {
            for (k, w) in class.weights.iter().enumerate() {
                weights.push(w * share);
                means.push(class.means[k].iter().copied().collect());
                covs.push(
                    (0..dim)
                        .map(|i| (0..dim).map(|j| class.covariances[k][(i, j)]).collect())
                        .collect(),
                );
            }
        }
        // Guard against accumulated rounding in the pooled weights.
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let pooled = GaussianMixture::new(weights, means, covs)?;
        Ok(ConditionalGmm { classes, pooled })
    }

    pub fn class(&self, c: usize) -> Result<&GaussianMixture> {
        self.classes.get(c).ok_or_else(|| {
            Error::Unsupported(format!("condition {c} outside {} classes", self.classes.len()))
        })
    }

    pub fn pooled(&self) -> &GaussianMixture {
        &self.pooled
    }

    fn select(&self, condition: Option<usize>) -> Result<&GaussianMixture> {
        match condition {
            Some(c) => self.class(c),
            None => Ok(&self.pooled),
        }
    }
}

impl DenoiserModel for ConditionalGmm {
    fn dimension(&self) -> usize {
        self.pooled.dim
    }

    fn model_id(&self) -> String {
        format!("cond_gmm{}d{}", self.classes.len(), self.pooled.dim)
    }

    fn denoise(&self, x: &[f64], level: &NoiseLevel, condition: Option<usize>) -> Result<Vec<f64>> {
        self.select(condition)?.denoiser(x, level)
    }

    fn score(&self, x: &[f64], level: &NoiseLevel, condition: Option<usize>) -> Result<Vec<f64>> {
        self.select(condition)?.marginal_score(x, level)
    }

    fn has_analytic_score(&self) -> bool {
        true
    }

    fn sample_data(&self, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(self.pooled.sample_x0(rng))
    }

    fn can_sample_data(&self) -> bool {
        true
    }
}
