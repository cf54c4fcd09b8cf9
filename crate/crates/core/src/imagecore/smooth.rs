//! Smoothness penalties on noise images: plain isotropic total variation and
//! the threshold-gated variant that only penalizes pixel pairs whose deviation
//! from a reference has grown past a per-pixel activation level.
//!
//! Both share one kernel: for every gated pixel `(i, j)`,
//!
//! ```text
//! sqrt( g(i+1,j) * (v[i+1,j] - v[i,j])^2 + g(i,j+1) * (v[i,j+1] - v[i,j])^2 )
//! ```
//!
//! where `g` is the gate and out-of-image neighbors count as ungated. Plain TV
//! gates by the region mask alone; the masked loss gates by
//! `region && |p| >= tau`. Channels are summed independently.

use serde::{Deserialize, Serialize};

use super::tensor::{BinaryMask, ImageTensor, ThresholdMatrix};
use crate::error::{contract, Result};

/// Which regularizer an attack adds to its objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothnessKind {
    None,
    Tv,
    Masked,
}

/// A fully bound smoothness regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessSpec {
    pub kind: SmoothnessKind,
    pub gamma: f64,
    /// Masked only.
    pub thresholds: Option<ThresholdMatrix>,
    /// Masked only: deviations are measured from these pixel values.
    pub reference: Option<ImageTensor>,
}

impl SmoothnessSpec {
    pub fn none() -> Self {
        Self {
            kind: SmoothnessKind::None,
            gamma: 0.0,
            thresholds: None,
            reference: None,
        }
    }

    pub fn tv(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self {
            kind: SmoothnessKind::Tv,
            gamma,
            thresholds: None,
            reference: None,
        })
    }

    pub fn masked(gamma: f64, thresholds: ThresholdMatrix, reference: ImageTensor) -> Result<Self> {
        check_gamma(gamma)?;
        if thresholds.height() != reference.height() || thresholds.width() != reference.width() {
            return contract(format!(
                "threshold matrix is {}x{}, reference image is {}x{}",
                thresholds.height(),
                thresholds.width(),
                reference.height(),
                reference.width()
            ));
        }
        Ok(Self {
            kind: SmoothnessKind::Masked,
            gamma,
            thresholds: Some(thresholds),
            reference: Some(reference),
        })
    }

    /// Weighted penalty `gamma * L_smooth` and its gradient with respect to
    /// `current`. For TV the penalized image is `current - origin`.
    pub fn weighted(
        &self,
        current: &ImageTensor,
        origin: &ImageTensor,
        region: &BinaryMask,
    ) -> Result<(f64, ImageTensor)> {
        match self.kind {
            SmoothnessKind::None => Ok((
                0.0,
                ImageTensor::zeros(current.height(), current.width(), current.channels()),
            )),
            SmoothnessKind::Tv => {
                current.check_same_dims(origin, "tv origin")?;
                let r = current.sub(origin);
                let (v, mut g) = tv_value_and_grad(&r, region)?;
                g.scale(self.gamma);
                Ok((self.gamma * v, g))
            }
            SmoothnessKind::Masked => {
                let (v, mut g) = masked_value_and_grad(current, self, region)?;
                g.scale(self.gamma);
                Ok((self.gamma * v, g))
            }
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma >= 0.0 {
        Ok(())
    } else {
        contract(format!(
            "smoothness weight must be finite and >= 0, got {gamma}"
        ))
    }
}

/// Gated isotropic TV of one plane; accumulates the gradient into `grad` when given.
fn gated_tv(v: &[f64], gate: &[bool], h: usize, w: usize, mut grad: Option<&mut [f64]>) -> f64 {
    let mut total = 0.0;
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            if !gate[k] {
                continue;
            }
            let a = if i + 1 < h && gate[k + w] {
                v[k + w] - v[k]
            } else {
                0.0
            };
            let b = if j + 1 < w && gate[k + 1] {
                v[k + 1] - v[k]
            } else {
                0.0
            };
            let s = (a * a + b * b).sqrt();
            if s == 0.0 {
                continue;
            }
            total += s;
            if let Some(g) = grad.as_deref_mut() {
                g[k] -= (a + b) / s;
                if a != 0.0 {
                    g[k + w] += a / s;
                }
                if b != 0.0 {
                    g[k + 1] += b / s;
                }
            }
        }
    }
    total
}

fn check_tv_dims(r: &ImageTensor, region: &BinaryMask) -> Result<()> {
    r.check_mask(region, "tv region")?;
    if r.height() < 2 || r.width() < 2 {
        return contract(format!(
            "tv losses need at least 2x2 images, got {}x{}",
            r.height(),
            r.width()
        ));
    }
    Ok(())
}

/// Isotropic total variation of `r` over the pixels selected by `region`.
pub fn tv_loss(r: &ImageTensor, region: &BinaryMask) -> Result<f64> {
    check_tv_dims(r, region)?;
    let (h, w) = (r.height(), r.width());
    Ok((0..r.channels())
        .map(|c| gated_tv(r.plane(c), region.data(), h, w, None))
        .sum())
}

/// Gradient of [`tv_loss`] with respect to `r`; kinks get subgradient 0.
pub fn tv_loss_grad(r: &ImageTensor, region: &BinaryMask) -> Result<ImageTensor> {
    Ok(tv_value_and_grad(r, region)?.1)
}

pub(crate) fn tv_value_and_grad(
    r: &ImageTensor,
    region: &BinaryMask,
) -> Result<(f64, ImageTensor)> {
    check_tv_dims(r, region)?;
    let (h, w) = (r.height(), r.width());
    let mut grad = ImageTensor::zeros(h, w, r.channels());
    let mut total = 0.0;
    for c in 0..r.channels() {
        total += gated_tv(r.plane(c), region.data(), h, w, Some(grad.plane_mut(c)));
    }
    Ok((total, grad))
}

/// Deviation planes `p = current - reference` and the activation gate
/// `region && |p| >= tau` for each channel.
fn masked_parts(
    current: &ImageTensor,
    spec: &SmoothnessSpec,
    region: &BinaryMask,
) -> Result<(ImageTensor, Vec<Vec<bool>>)> {
    if spec.kind != SmoothnessKind::Masked {
        return contract("masked smoothness requires a Masked smoothness spec");
    }
    let (Some(z), Some(reference)) = (spec.thresholds.as_ref(), spec.reference.as_ref()) else {
        return contract("masked smoothness spec is missing thresholds or reference");
    };
    check_tv_dims(current, region)?;
    current.check_same_dims(reference, "masked smoothness reference")?;
    if z.height() != current.height() || z.width() != current.width() {
        return contract("threshold matrix dims differ from image dims");
    }
    let p = current.sub(reference);
    let gates = (0..p.channels())
        .map(|c| {
            p.plane(c)
                .iter()
                .zip(z.data())
                .zip(region.data())
                .map(|((d, t), r)| *r && d.abs() >= *t)
                .collect()
        })
        .collect();
    Ok((p, gates))
}

/// Threshold-gated smoothness of `current` relative to `spec.reference`.
pub fn masked_smoothness(
    current: &ImageTensor,
    spec: &SmoothnessSpec,
    region: &BinaryMask,
) -> Result<f64> {
    let (p, gates) = masked_parts(current, spec, region)?;
    let (h, w) = (p.height(), p.width());
    Ok((0..p.channels())
        .map(|c| gated_tv(p.plane(c), &gates[c], h, w, None))
        .sum())
}

/// Gradient of [`masked_smoothness`] with respect to `current`, holding the
/// activation mask fixed.
pub fn masked_smoothness_grad(
    current: &ImageTensor,
    spec: &SmoothnessSpec,
    region: &BinaryMask,
) -> Result<ImageTensor> {
    Ok(masked_value_and_grad(current, spec, region)?.1)
}

pub(crate) fn masked_value_and_grad(
    current: &ImageTensor,
    spec: &SmoothnessSpec,
    region: &BinaryMask,
) -> Result<(f64, ImageTensor)> {
    let (p, gates) = masked_parts(current, spec, region)?;
    let (h, w) = (p.height(), p.width());
    let mut grad = ImageTensor::zeros(h, w, p.channels());
    let mut total = 0.0;
    for c in 0..p.channels() {
        total += gated_tv(p.plane(c), &gates[c], h, w, Some(grad.plane_mut(c)));
    }
    Ok((total, grad))
}
