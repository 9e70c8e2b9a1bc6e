//! Fréchet distance between moment-fitted Gaussians.
//!
//! The embedding-free variant of the usual image metric: fit (μ, Σ) to each
//! sample set and compute
//! `‖μ_A − μ_B‖² + Tr(Σ_A + Σ_B − 2·(Σ_A Σ_B)^{1/2})`. The matrix square root
//! goes through the symmetric product `Σ_A^{1/2} Σ_B Σ_A^{1/2}`, whose
//! eigenvalues are the ones being square-rooted, so the whole computation
//! stays in symmetric eigendecompositions. Reported as "FD (no embedding)" by
//! the CLI to avoid confusion with embedding-based scores.

use nalgebra::{DMatrix, DVector};

use super::{check_same_dimension, SampleSet};
use crate::error::{Error, Result};

/// Eigenvalues below this are treated as rank deficiency and clamped.
const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrechetDetail {
    pub distance: f64,
    /// Number of eigenvalues clamped while stabilizing the matrix square root.
    pub clamped_eigenvalues: usize,
}

fn moments(set: &SampleSet) -> (DVector<f64>, DMatrix<f64>) {
    let n = set.len();
    let d = set.dimension();
    let mut mean = DVector::zeros(d);
    for v in &set.vectors {
        for i in 0..d {
            mean[i] += v[i];
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for v in &set.vectors {
        for i in 0..d {
            let di = v[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (v[j] - mean[j]);
            }
        }
    }
    cov /= (n - 1) as f64;
    for i in 0..cov.nrows() {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    (mean, cov)
}

/// Symmetric PSD square root with eigenvalue clamping; returns the clamp count.
fn sym_sqrt(mat: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let eig = mat.clone().symmetric_eigen();
    let mut clamped = 0usize;
    let d = mat.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for (k, val) in eig.eigenvalues.iter().enumerate() {
        let v = if *val < EIGEN_FLOOR {
            clamped += 1;
            EIGEN_FLOOR
        } else {
            *val
        };
        let root = v.sqrt();
        for i in 0..d {
            scaled[(i, k)] *= root;
        }
    }
    (&scaled * eig.eigenvectors.transpose(), clamped)
}

pub fn frechet_gaussian_detailed(a: &SampleSet, b: &SampleSet) -> Result<FrechetDetail> {
    let d = check_same_dimension(a, b)?;
    if a.len() <= d || b.len() <= d {
        return Err(Error::domain(format!(
            "need more samples than dimensions: |A|={}, |B|={}, d={d}",
            a.len(),
            b.len()
        )));
    }
    let (mu_a, cov_a) = moments(a);
    let (mu_b, cov_b) = moments(b);

    let (a_half, mut clamped) = sym_sqrt(&cov_a);
    let mut inner = &a_half * &cov_b * &a_half;
    // Symmetrize against rounding before the second eigendecomposition.
    inner = (&inner + inner.transpose()) * 0.5;
    let eig = inner.symmetric_eigen();
    let mut sqrt_trace = 0.0;
    for val in eig.eigenvalues.iter() {
        if *val < 0.0 {
            if *val < -EIGEN_FLOOR {
                clamped += 1;
            }
            continue;
        }
        sqrt_trace += val.sqrt();
    }

    let mean_term = (&mu_a - &mu_b).norm_squared();
    let distance = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * sqrt_trace;
    Ok(FrechetDetail {
        distance: distance.max(0.0),
        clamped_eigenvalues: clamped,
    })
}

/// See [`frechet_gaussian_detailed`]; this is the plain-distance view.
pub fn frechet_gaussian(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    Ok(frechet_gaussian_detailed(a, b)?.distance)
}
