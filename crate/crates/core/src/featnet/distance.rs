use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Embedding comparison metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2,
    Cosine,
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        contract(format!(
            "embedding lengths differ: {} vs {}",
            a.len(),
            b.len()
        ))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nonzero_norms(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return contract("cosine distance is undefined for zero-norm embeddings");
    }
    Ok((na, nb))
}

/// `||a - b||` for L2, `1 - cos(a, b)` for cosine.
pub fn feature_distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    check_lengths(a, b)?;
    match metric {
        Metric::L2 => Ok(a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()),
        Metric::Cosine => {
            let (na, nb) = nonzero_norms(a, b)?;
            Ok(1.0 - dot(a, b) / (na * nb))
        }
    }
}

/// Gradient of [`feature_distance`] with respect to `b`. The L2 kink at
/// `a == b` gets subgradient 0.
pub fn feature_distance_grad(a: &[f64], b: &[f64], metric: Metric) -> Result<Vec<f64>> {
    check_lengths(a, b)?;
    match metric {
        Metric::L2 => {
            let d = feature_distance(a, b, metric)?;
            if d == 0.0 {
                return Ok(vec![0.0; b.len()]);
            }
            Ok(a.iter().zip(b).map(|(x, y)| (y - x) / d).collect())
        }
        Metric::Cosine => {
            let (na, nb) = nonzero_norms(a, b)?;
            let cos = dot(a, b) / (na * nb);
            Ok(a.iter()
                .zip(b)
                .map(|(x, y)| -(x / (na * nb) - cos * y / (nb * nb)))
                .collect())
        }
    }
}

/// Verification score: the L2 distance (lower is a better match) or the
/// cosine similarity (higher is a better match).
pub fn match_score(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    let d = feature_distance(a, b, metric)?;
    Ok(match metric {
        Metric::L2 => d,
        Metric::Cosine => 1.0 - d,
    })
}

/// Verification decision for a [`match_score`]: L2 accepts `score <= threshold`,
/// cosine accepts `score >= threshold`.
pub fn accepts(metric: Metric, score: f64, threshold: f64) -> bool {
    match metric {
        Metric::L2 => score <= threshold,
        Metric::Cosine => score >= threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors() {
        let a = [0.3, -1.2, 2.0];
        assert_eq!(feature_distance(&a, &a, Metric::L2).unwrap(), 0.0);
        assert!(feature_distance(&a, &a, Metric::Cosine).unwrap().abs() < 1e-15);
    }

    #[test]
    fn orthogonal_vectors() {
        let (a, b) = ([1.0, 0.0], [0.0, 1.0]);
        assert!((feature_distance(&a, &b, Metric::L2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(feature_distance(&a, &b, Metric::Cosine).unwrap(), 1.0);
        assert_eq!(match_score(&a, &b, Metric::Cosine).unwrap(), 0.0);
    }

    #[test]
    fn cosine_zero_norm_rejected() {
        assert!(feature_distance(&[0.0, 0.0], &[1.0, 0.0], Metric::Cosine).is_err());
        assert!(feature_distance(&[1.0], &[1.0, 0.0], Metric::L2).is_err());
    }

    #[test]
    fn gradients_match_central_differences() {
        let a = [0.4, -0.7, 1.1, 0.2];
        let b = [-0.3, 0.5, 0.9, -1.4];
        for metric in [Metric::L2, Metric::Cosine] {
            let g = feature_distance_grad(&a, &b, metric).unwrap();
            for k in 0..b.len() {
                let h = 1e-6;
                let mut bp = b;
                bp[k] += h;
                let mut bm = b;
                bm[k] -= h;
                let fd = (feature_distance(&a, &bp, metric).unwrap()
                    - feature_distance(&a, &bm, metric).unwrap())
                    / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-8, "{metric:?} {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn cosine_range() {
        let a = [1.0, 2.0];
        let b = [-1.0, -2.0];
        assert!((feature_distance(&a, &b, Metric::Cosine).unwrap() - 2.0).abs() < 1e-15);
    }
}
