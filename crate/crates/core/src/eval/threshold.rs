use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::featnet::{accepts, match_score, Embedder, Metric, ModelId};
use crate::imagecore::ImageTensor;

/// How a threshold was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    BestF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationThreshold {
    pub metric: Metric,
    pub value: f64,
    pub calibration: Calibration,
    /// F1 of the genuine class on the calibration scores.
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelId>,
}

impl VerificationThreshold {
    pub fn accepts(&self, score: f64) -> bool {
        accepts(self.metric, score, self.value)
    }

    pub fn for_model(mut self, id: ModelId) -> Self {
        self.model = Some(id);
        self
    }
}

/// F1 of the genuine class when accepting by `metric` at `threshold`.
pub fn f1_at(genuine: &[f64], impostor: &[f64], metric: Metric, threshold: f64) -> f64 {
    let tp = genuine
        .iter()
        .filter(|&&s| accepts(metric, s, threshold))
        .count() as f64;
    let fp = impostor
        .iter()
        .filter(|&&s| accepts(metric, s, threshold))
        .count() as f64;
    let fneg = genuine.len() as f64 - tp;
    if tp == 0.0 {
        return 0.0;
    }
    2.0 * tp / (2.0 * tp + fp + fneg)
}

/// Best-F1 threshold over the midpoints of the sorted unique scores.
///
/// Ties resolve to the midpoint of the score interval covered by the first
/// contiguous run of maximal candidates. With a single unique score that
/// score is returned.
pub fn calibrate_threshold(
    genuine: &[f64],
    impostor: &[f64],
    metric: Metric,
) -> Result<VerificationThreshold> {
    if genuine.is_empty() || impostor.is_empty() {
        return contract("threshold calibration needs genuine and impostor scores");
    }
    if genuine.iter().chain(impostor).any(|s| !s.is_finite()) {
        return contract("calibration scores must be finite");
    }
    let mut unique: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    unique.sort_by(f64::total_cmp);
    unique.dedup();
    let done = |value: f64| VerificationThreshold {
        metric,
        value,
        calibration: Calibration::BestF1,
        f1: f1_at(genuine, impostor, metric, value),
        model: None,
    };
    if unique.len() == 1 {
        return Ok(done(unique[0]));
    }
    let f1s: Vec<f64> = unique
        .windows(2)
        .map(|w| f1_at(genuine, impostor, metric, 0.5 * (w[0] + w[1])))
        .collect();
    let best = f1s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = f1s.iter().position(|&f| f == best).expect("non-empty");
    let last = first + f1s[first..].iter().take_while(|&&f| f == best).count() - 1;
    // candidate k lies in (unique[k], unique[k + 1])
    Ok(done(0.5 * (unique[first] + unique[last + 1])))
}

/// All-pairs verification scores of a labelled gallery, split into genuine
/// (same label) and impostor pairs.
pub fn gallery_scores(
    model: &dyn Embedder,
    gallery: &[(u64, ImageTensor)],
    metric: Metric,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let embeddings = gallery
        .iter()
        .map(|(_, x)| model.embed(x))
        .collect::<Result<Vec<_>>>()?;
    let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
    for a in 0..gallery.len() {
        for b in a + 1..gallery.len() {
            let s = match_score(&embeddings[a], &embeddings[b], metric)?;
            if gallery[a].0 == gallery[b].0 {
                genuine.push(s);
            } else {
                impostor.push(s);
            }
        }
    }
    Ok((genuine, impostor))
}

/// Calibrates `model` on a labelled gallery.
pub fn calibrate_model(
    model: &dyn Embedder,
    gallery: &[(u64, ImageTensor)],
    metric: Metric,
) -> Result<VerificationThreshold> {
    let (g, i) = gallery_scores(model, gallery, metric)?;
    Ok(calibrate_threshold(&g, &i, metric)?.for_model(model.id().clone()))
}
