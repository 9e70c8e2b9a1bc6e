//! Precision–recall curves for distributions via cluster histograms.
//!
//! Both sets are pooled and clustered with seeded k-means; each set then
//! becomes a histogram over clusters (p for the reference set P, q for the
//! generated set Q). Sweeping angles λ_j = tan(j·π/2/(m+1)) gives
//! `precision α(λ) = Σ min(λ·p_i, q_i)` and `recall β(λ) = Σ min(p_i, q_i/λ)`;
//! the non-dominated envelope of those points is the curve. Recall loss
//! diagnoses mode dropping in Q.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_same_dimension, SampleSet};
use crate::error::{Error, Result};

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 300;
const KMEANS_RESEEDS: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PRDCurve {
    /// (recall β, precision α) pairs, sorted by recall ascending with
    /// precision non-increasing.
    pub points: Vec<(f64, f64)>,
    pub k: usize,
    pub num_angles: usize,
}

impl PRDCurve {
    pub fn max_recall(&self) -> f64 {
        self.points.iter().map(|(b, _)| *b).fold(0.0, f64::max)
    }

    pub fn max_precision(&self) -> f64 {
        self.points.iter().map(|(_, a)| *a).fold(0.0, f64::max)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct KMeansRun {
    assignments: Vec<usize>,
    objective: f64,
}

fn kmeans_once(data: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Option<KMeansRun> {
    let n = data.len();
    let d = data[0].len();

    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(data[rng.random_range(0..n)].to_vec());
    let mut dists: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dists.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut u: f64 = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in dists.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centers.push(data[next].to_vec());
        for (i, x) in data.iter().enumerate() {
            let nd = sq_dist(x, centers.last().unwrap());
            if nd < dists[i] {
                dists[i] = nd;
            }
        }
    }

    let mut assignments = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, x) in data.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let dist = sq_dist(x, center);
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; d]; k];
        for (i, x) in data.iter().enumerate() {
            counts[assignments[i]] += 1;
            for j in 0..d {
                sums[assignments[i]][j] += x[j];
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for c in 0..k {
            for j in 0..d {
                centers[c][j] = sums[c][j] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }

    let objective = data
        .iter()
        .zip(&assignments)
        .map(|(x, &a)| sq_dist(x, &centers[a]))
        .sum();
    Some(KMeansRun {
        assignments,
        objective,
    })
}

/// Seeded k-means with restarts; retries with derived seeds if every restart
/// leaves a cluster empty, then errors.
fn kmeans(data: &[&[f64]], k: usize, seed: u64) -> Result<Vec<usize>> {
    for reseed in 0..KMEANS_RESEEDS as u64 {
        let mut best: Option<KMeansRun> = None;
        for restart in 0..KMEANS_RESTARTS as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (reseed.wrapping_mul(0x9e3779b9)));
            rng.set_stream(restart);
            if let Some(run) = kmeans_once(data, k, &mut rng) {
                if best.as_ref().is_none_or(|b| run.objective < b.objective) {
                    best = Some(run);
                }
            }
        }
        if let Some(run) = best {
            return Ok(run.assignments);
        }
    }
    Err(Error::KMeans(format!(
        "could not populate all {k} clusters after {KMEANS_RESEEDS} reseeds"
    )))
}

/// Precision–recall curve of generated set Q against reference set P.
pub fn prd_curve(
    p_set: &SampleSet,
    q_set: &SampleSet,
    k: usize,
    num_angles: usize,
    seed: u64,
) -> Result<PRDCurve> {
    check_same_dimension(p_set, q_set)?;
    if k < 2 {
        return Err(Error::domain(format!("need k >= 2 clusters, got {k}")));
    }
    if num_angles < 2 {
        return Err(Error::domain(format!("need at least 2 angles, got {num_angles}")));
    }
    if p_set.len() < k || q_set.len() < k {
        return Err(Error::domain(format!(
            "need at least k={k} samples per set, got |P|={}, |Q|={}",
            p_set.len(),
            q_set.len()
        )));
    }

    let union: Vec<&[f64]> = p_set
        .vectors
        .iter()
        .chain(q_set.vectors.iter())
        .map(|v| v.as_slice())
        .collect();
    let assignments = kmeans(&union, k, seed)?;

    let np = p_set.len();
    let mut p_hist = vec![0.0f64; k];
    let mut q_hist = vec![0.0f64; k];
    for (i, &a) in assignments.iter().enumerate() {
        if i < np {
            p_hist[a] += 1.0;
        } else {
            q_hist[a] += 1.0;
        }
    }
    for v in p_hist.iter_mut() {
        *v /= np as f64;
    }
    for v in q_hist.iter_mut() {
        *v /= q_set.len() as f64;
    }

    let mut raw: Vec<(f64, f64)> = Vec::with_capacity(num_angles);
    for j in 1..=num_angles {
        let lambda = (j as f64 / (num_angles + 1) as f64 * std::f64::consts::FRAC_PI_2).tan();
        let mut alpha = 0.0;
        let mut beta = 0.0;
        for i in 0..k {
            alpha += (lambda * p_hist[i]).min(q_hist[i]);
            beta += p_hist[i].min(q_hist[i] / lambda);
        }
        raw.push((beta.clamp(0.0, 1.0), alpha.clamp(0.0, 1.0)));
    }

    Ok(PRDCurve {
        points: envelope(raw),
        k,
        num_angles,
    })
}

/// Non-dominated upper envelope, sorted by recall ascending so precision is
/// non-increasing along the curve.
fn envelope(mut points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    points.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut kept: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    let mut best_precision = f64::NEG_INFINITY;
    for (recall, precision) in points {
        if precision > best_precision {
            kept.push((recall, precision));
            best_precision = precision;
        }
    }
    kept.reverse();
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn blob(n: usize, center: (f64, f64), rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                vec![
                    center.0 + 0.1 * rng.sample::<f64, _>(StandardNormal),
                    center.1 + 0.1 * rng.sample::<f64, _>(StandardNormal),
                ]
            })
            .collect()
    }

    #[test]
    fn identical_sets_reach_the_corner() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let mut data = blob(300, (0.0, 0.0), &mut rng);
        data.extend(blob(300, (3.0, 0.0), &mut rng));
        let p = SampleSet::unlabeled(data.clone()).unwrap();
        let q = SampleSet::unlabeled(data).unwrap();
        let curve = prd_curve(&p, &q, 10, 201, 71).unwrap();
        // The curve passes within 0.02 of (1, 1).
        let near_corner = curve
            .points
            .iter()
            .any(|(b, a)| (1.0 - b).abs() < 0.02 && (1.0 - a).abs() < 0.02);
        assert!(near_corner, "curve misses (1,1): {:?}", curve.points.last());
    }

    #[test]
    fn disjoint_supports_have_no_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let p = SampleSet::unlabeled(blob(300, (0.0, 0.0), &mut rng)).unwrap();
        let q = SampleSet::unlabeled(blob(300, (50.0, 0.0), &mut rng)).unwrap();
        let curve = prd_curve(&p, &q, 10, 201, 72).unwrap();
        assert!(curve.max_precision() < 0.05);
        assert!(curve.max_recall() < 0.05);
    }

    #[test]
    fn half_mode_drop_halves_recall() {
        // P has 4 equal modes, Q covers exactly 2 of them: max recall ≈ 0.5
        // while precision stays ≈ 1.
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let centers = [(0.0, 0.0), (5.0, 0.0), (0.0, 5.0), (5.0, 5.0)];
        let mut p_data = Vec::new();
        for c in centers {
            p_data.extend(blob(250, c, &mut rng));
        }
        let mut q_data = Vec::new();
        for c in &centers[..2] {
            q_data.extend(blob(500, *c, &mut rng));
        }
        let p = SampleSet::unlabeled(p_data).unwrap();
        let q = SampleSet::unlabeled(q_data).unwrap();
        let curve = prd_curve(&p, &q, 20, 1001, 73).unwrap();
        assert!(
            (curve.max_recall() - 0.5).abs() < 0.05,
            "max recall {}",
            curve.max_recall()
        );
        assert!(
            (curve.max_precision() - 1.0).abs() < 0.05,
            "max precision {}",
            curve.max_precision()
        );
    }

    #[test]
    fn envelope_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let p = SampleSet::unlabeled(blob(400, (0.0, 0.0), &mut rng)).unwrap();
        let q = SampleSet::unlabeled(blob(400, (0.4, 0.0), &mut rng)).unwrap();
        let curve = prd_curve(&p, &q, 8, 101, 74).unwrap();
        for w in curve.points.windows(2) {
            assert!(w[1].0 >= w[0].0, "recall must be sorted ascending");
            assert!(w[1].1 <= w[0].1, "precision must be non-increasing");
        }
        for (b, a) in &curve.points {
            assert!((0.0..=1.0).contains(b) && (0.0..=1.0).contains(a));
        }
    }

    #[test]
    fn determinism_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let p = SampleSet::unlabeled(blob(100, (0.0, 0.0), &mut rng)).unwrap();
        let q = SampleSet::unlabeled(blob(100, (1.0, 0.0), &mut rng)).unwrap();
        let a = prd_curve(&p, &q, 5, 51, 99).unwrap();
        let b = prd_curve(&p, &q, 5, 51, 99).unwrap();
        assert_eq!(a.points, b.points);

        assert!(prd_curve(&p, &q, 1, 51, 0).is_err());
        let tiny = SampleSet::unlabeled(vec![vec![0.0, 0.0]]).unwrap();
        assert!(prd_curve(&tiny, &q, 5, 51, 0).is_err());
    }
}
