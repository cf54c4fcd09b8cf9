use rand::Rng;

use super::config::{Algorithm, AttackConfig, NoiseMasks};
use crate::error::{contract, Result};
use crate::featnet::{
    apply_input_diversity, BoundEnsemble, DiversityConfig, EnsembleSpec, FeatureLoss,
};
use crate::imagecore::{BinaryMask, ImageTensor, SmoothnessKind, SmoothnessSpec};

/// One evaluation of the adversarial objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    /// `smooth + feature`
    pub total: f64,
    /// Weighted ensemble feature loss.
    pub feature: f64,
    /// `gamma * L_smooth`
    pub smooth: f64,
    /// Gradient of `total`, zero outside the trainable pixels.
    pub grad: ImageTensor,
}

/// `gamma * L_smooth(x_train) + sum_i w_i * f_d(f_i(x_t), f_i(DI(x_train)))`
/// with the target embeddings cached.
pub struct Objective<'a> {
    bound: BoundEnsemble<'a>,
    feature_loss: FeatureLoss,
    smoothness: SmoothnessSpec,
    origin: ImageTensor,
    region: BinaryMask,
    trainable: BinaryMask,
    diversity: DiversityConfig,
}

pub(crate) fn feature_loss_for(cfg: &AttackConfig) -> FeatureLoss {
    match cfg.algorithm {
        Algorithm::Lots => FeatureLoss::HalfSquaredL2,
        _ => FeatureLoss::Distance(cfg.metric),
    }
}

impl<'a> Objective<'a> {
    /// `reference` anchors the masked regularizer's deviation image; attacks
    /// pass their initial iterate.
    pub fn new(
        x_s: &ImageTensor,
        x_t: &ImageTensor,
        masks: &NoiseMasks,
        cfg: &AttackConfig,
        models: &'a EnsembleSpec,
        reference: &ImageTensor,
    ) -> Result<Self> {
        cfg.validate()?;
        masks.validate()?;
        let (h, w, c) = models.input_dims();
        if x_s.dims() != (h, w, c) {
            return contract(format!(
                "source image is {:?}, models expect {:?}",
                x_s.dims(),
                (h, w, c)
            ));
        }
        x_s.check_same_dims(x_t, "target image")?;
        x_s.check_same_dims(reference, "reference image")?;
        x_s.check_mask(&masks.patch, "patch mask")?;
        let smoothness = match cfg.smoothness.kind {
            SmoothnessKind::None => SmoothnessSpec::none(),
            SmoothnessKind::Tv => SmoothnessSpec::tv(cfg.smoothness.gamma)?,
            SmoothnessKind::Masked => SmoothnessSpec::masked(
                cfg.smoothness.gamma,
                cfg.smoothness.thresholds(h, w)?,
                reference.clone(),
            )?,
        };
        Ok(Self {
            bound: models.bind(x_t)?,
            feature_loss: feature_loss_for(cfg),
            smoothness,
            origin: x_s.clone(),
            region: masks.patch.clone(),
            trainable: masks.trainable(),
            diversity: DiversityConfig {
                enabled: cfg.blackbox.uses_diversity(),
                max_crop_fraction: cfg.max_crop_fraction,
                seed: cfg.seed,
            },
        })
    }

    pub fn trainable(&self) -> &BinaryMask {
        &self.trainable
    }

    /// Evaluates the loss at `x_train`. Input diversity draws from `rng`.
    pub fn evaluate<R: Rng + ?Sized>(
        &self,
        x_train: &ImageTensor,
        rng: &mut R,
    ) -> Result<LossEval> {
        let (x_div, transform) = apply_input_diversity(x_train, &self.diversity, rng)?;
        let (feature, g_div) = self.bound.loss_and_grad(&x_div, self.feature_loss)?;
        let mut grad = transform.pullback(&g_div)?;
        let smooth = if self.smoothness.kind == SmoothnessKind::None {
            0.0
        } else {
            let (v, g) = self
                .smoothness
                .weighted(x_train, &self.origin, &self.region)?;
            grad.add_scaled(&g, 1.0);
            v
        };
        restrict(&mut grad, &self.trainable);
        Ok(LossEval {
            total: smooth + feature,
            feature,
            smooth,
            grad,
        })
    }
}

/// Zeroes every channel of pixels outside `mask`.
pub(crate) fn restrict(img: &mut ImageTensor, mask: &BinaryMask) {
    for c in 0..img.channels() {
        for (v, &keep) in img.plane_mut(c).iter_mut().zip(mask.data()) {
            if !keep {
                *v = 0.0;
            }
        }
    }
}

/// Evaluates the adversarial objective once, with the masked regularizer
/// anchored at `x_s` and input diversity seeded from `cfg.seed`.
pub fn adversarial_loss(
    x_train: &ImageTensor,
    x_t: &ImageTensor,
    x_s: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
) -> Result<LossEval> {
    let obj = Objective::new(x_s, x_t, masks, cfg, models, x_s)?;
    let mut rng = crate::rng::rng_from(cfg.seed);
    obj.evaluate(x_train, &mut rng)
}
