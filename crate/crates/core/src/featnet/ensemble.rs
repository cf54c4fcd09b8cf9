use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::distance::{feature_distance, feature_distance_grad, Metric};
use super::extractor::{Embedder, ModelId};
use crate::error::{contract, Result};
use crate::imagecore::ImageTensor;

/// Per-member feature-space loss between the target embedding and the
/// embedding of the image being optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLoss {
    Distance(Metric),
    /// `0.5 * ||f(x) - f(x_t)||^2`
    HalfSquaredL2,
}

impl FeatureLoss {
    /// Loss value and its gradient with respect to `embedding`.
    pub fn value_and_grad(&self, target: &[f64], embedding: &[f64]) -> Result<(f64, Vec<f64>)> {
        match *self {
            FeatureLoss::Distance(metric) => Ok((
                feature_distance(target, embedding, metric)?,
                feature_distance_grad(target, embedding, metric)?,
            )),
            FeatureLoss::HalfSquaredL2 => {
                if target.len() != embedding.len() {
                    return contract("embedding lengths differ");
                }
                let diff: Vec<f64> = embedding.iter().zip(target).map(|(e, t)| e - t).collect();
                Ok((0.5 * diff.iter().map(|d| d * d).sum::<f64>(), diff))
            }
        }
    }
}

/// Weighted set of models attacked together.
#[derive(Clone)]
pub struct EnsembleSpec {
    members: Vec<Arc<dyn Embedder>>,
    weights: Vec<f64>,
}

impl std::fmt::Debug for EnsembleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnsembleSpec")
            .field("members", &self.ids())
            .field("weights", &self.weights)
            .finish()
    }
}

impl EnsembleSpec {
    pub fn new(members: Vec<Arc<dyn Embedder>>, weights: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return contract("ensemble needs at least one member");
        }
        if weights.len() != members.len() {
            return contract("ensemble weights and members differ in length");
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return contract("ensemble weights must be finite and nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return contract(format!("ensemble weights sum to {total}, expected 1"));
        }
        let dims = members[0].input_dims();
        if members.iter().any(|m| m.input_dims() != dims) {
            return contract("ensemble members disagree on input dims");
        }
        Ok(Self { members, weights })
    }

    /// Equal weights `1/K`.
    pub fn equal(members: Vec<Arc<dyn Embedder>>) -> Result<Self> {
        let k = members.len().max(1) as f64;
        let weights = vec![1.0 / k; members.len()];
        Self::new(members, weights)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Arc<dyn Embedder>] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ids(&self) -> Vec<ModelId> {
        self.members.iter().map(|m| m.id().clone()).collect()
    }

    pub fn input_dims(&self) -> (usize, usize, usize) {
        self.members[0].input_dims()
    }

    /// Caches every member's embedding of `target`.
    pub fn bind(&self, target: &ImageTensor) -> Result<BoundEnsemble<'_>> {
        let targets = self
            .members
            .iter()
            .map(|m| m.embed(target))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundEnsemble {
            spec: self,
            targets,
        })
    }
}

/// An ensemble with its target embeddings fixed.
pub struct BoundEnsemble<'a> {
    spec: &'a EnsembleSpec,
    targets: Vec<Vec<f64>>,
}

impl BoundEnsemble<'_> {
    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    /// `sum_i w_i * loss(f_i(x_t), f_i(x))` and its gradient with respect to `x`.
    pub fn loss_and_grad(&self, x: &ImageTensor, loss: FeatureLoss) -> Result<(f64, ImageTensor)> {
        let (h, w, c) = x.dims();
        let mut total = 0.0;
        let mut grad = ImageTensor::zeros(h, w, c);
        for ((member, weight), target) in self
            .spec
            .members
            .iter()
            .zip(&self.spec.weights)
            .zip(&self.targets)
        {
            let mut value = 0.0;
            let (_, g) = member.embed_with_pullback(x, &mut |e| {
                let (v, mut ge) = loss.value_and_grad(target, e)?;
                value = v;
                ge.iter_mut().for_each(|d| *d *= weight);
                Ok(ge)
            })?;
            total += weight * value;
            grad.add_scaled(&g, 1.0);
        }
        Ok((total, grad))
    }

    pub fn loss(&self, x: &ImageTensor, loss: FeatureLoss) -> Result<f64> {
        let mut total = 0.0;
        for ((member, weight), target) in self
            .spec
            .members
            .iter()
            .zip(&self.spec.weights)
            .zip(&self.targets)
        {
            let e = member.embed(x)?;
            total += weight * loss.value_and_grad(target, &e)?.0;
        }
        Ok(total)
    }
}

/// Weighted ensemble distance between `x_train` and `x_t` plus its gradient
/// with respect to `x_train`.
pub fn ensemble_distance(
    spec: &EnsembleSpec,
    x_train: &ImageTensor,
    x_t: &ImageTensor,
    metric: Metric,
) -> Result<(f64, ImageTensor)> {
    spec.bind(x_t)?
        .loss_and_grad(x_train, FeatureLoss::Distance(metric))
}
