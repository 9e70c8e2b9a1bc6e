//! Quantitative evaluation of sample sets against oracle ground truth.

mod convergence;
mod frechet;
mod prd;
mod sliced;
mod truncation;

pub use convergence::{convergence_order, local_step_order, ConvergenceOptions, ConvergenceReport};
pub use frechet::{frechet_gaussian, frechet_gaussian_detailed, FrechetDetail};
pub use prd::{prd_curve, PRDCurve};
pub use sliced::sliced_w2;
pub use truncation::{local_truncation_rmse, TruncationOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance attached to every batch of generated or reference vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub schedule_kind: String,
    pub solver_kind: String,
    pub model_id: String,
    pub w: f64,
    pub freeu: bool,
    pub ood_count: usize,
    pub dimension: usize,
}

impl SampleMeta {
    /// Placeholder meta for sets built directly from vectors (references,
    /// fixtures).
    pub fn unlabeled(dimension: usize) -> Self {
        SampleMeta {
            seed: 0,
            schedule_kind: "none".to_string(),
            solver_kind: "none".to_string(),
            model_id: "unlabeled".to_string(),
            w: 1.0,
            freeu: false,
            ood_count: 0,
            dimension,
        }
    }
}

/// A batch of equal-dimension, finite vectors plus metadata. `config`
/// optionally echoes the effective experiment configuration that produced the
/// set (the CLI always fills it in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub meta: SampleMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub vectors: Vec<Vec<f64>>,
}

impl SampleSet {
    pub fn new(meta: SampleMeta, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let set = SampleSet {
            meta,
            config: None,
            vectors,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn unlabeled(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vectors.first().map(|v| v.len()).unwrap_or(0);
        Self::new(SampleMeta::unlabeled(dim), vectors)
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.vectors {
            if v.len() != self.meta.dimension {
                return Err(Error::ShapeMismatch {
                    expected: self.meta.dimension,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("sample set contains non-finite entries".to_string()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.meta.dimension
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let set: SampleSet = serde_json::from_str(json)?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_same_dimension(a: &SampleSet, b: &SampleSet) -> Result<usize> {
    if a.dimension() != b.dimension() {
        return Err(Error::ShapeMismatch {
            expected: a.dimension(),
            got: b.dimension(),
        });
    }
    Ok(a.dimension())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_set_validation() {
        assert!(SampleSet::unlabeled(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).is_ok());
        assert!(SampleSet::unlabeled(vec![vec![1.0], vec![3.0, 4.0]]).is_err());
        assert!(SampleSet::unlabeled(vec![vec![f64::NAN]]).is_err());
        let empty = SampleSet::unlabeled(vec![]).unwrap();
        assert!(empty.is_empty());
    }
}
