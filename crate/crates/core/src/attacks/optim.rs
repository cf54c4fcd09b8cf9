use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, AttackConfig, NoiseMasks};
use super::objective::Objective;
use crate::error::{contract, Result};
use crate::featnet::EnsembleSpec;
use crate::imagecore::ImageTensor;
use crate::rng::{derive_seed, rng_from};

const INIT_STREAM: u64 = 0x1417;
const DIVERSITY_STREAM: u64 = 0xD1;
/// CW starts from pixels pulled this far inside `(0, 1)` so `atanh` stays finite.
pub const CW_EDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub adversarial: ImageTensor,
    pub loss_trace: Vec<f64>,
    /// Feature term of the loss per iteration.
    pub distance_trace: Vec<f64>,
    /// Verification outcome per evaluated model id; filled by evaluation.
    #[serde(default)]
    pub success: BTreeMap<String, bool>,
    pub iterations_run: usize,
    pub best_iteration: usize,
    pub best_loss: f64,
    /// Loss became non-finite; the best finite iterate is returned.
    #[serde(default)]
    pub diverged: bool,
}

/// What an observer sees after each evaluated iterate.
#[derive(Debug)]
pub struct IterateInfo<'a> {
    pub algorithm: Algorithm,
    pub iteration: usize,
    pub image: &'a ImageTensor,
    pub loss: f64,
    /// Entries the `[0, 1]` box clamp changed while producing this iterate.
    pub box_clips: usize,
}

pub type Observer<'o> = &'o mut dyn FnMut(&IterateInfo<'_>);

/// Per-entry `[lo, hi]` bounds: the layer's epsilon ball around `x_s`
/// intersected with `[0, 1]`; frozen entries have `lo = hi = x_s`.
struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    fn new(x_s: &ImageTensor, masks: &NoiseMasks, cfg: &AttackConfig) -> Self {
        let plane = x_s.plane_len();
        let n = x_s.data().len();
        let (mut lo, mut hi) = (vec![0.0; n], vec![0.0; n]);
        for (k, &v) in x_s.data().iter().enumerate() {
            let p = k % plane;
            let eps = if masks.patch.at(p) {
                cfg.epsilon_patch
            } else if masks.small.at(p) {
                cfg.epsilon_small
            } else {
                0.0
            };
            lo[k] = (v - eps).max(0.0);
            hi[k] = (v + eps).min(1.0);
        }
        Self { lo, hi }
    }

    /// Projects `x` in place; returns how many entries the unit box clamped.
    fn project(&self, x: &mut ImageTensor) -> usize {
        let mut clips = 0;
        for (k, v) in x.data_mut().iter_mut().enumerate() {
            if !(0.0..=1.0).contains(v) {
                clips += 1;
            }
            *v = v.clamp(self.lo[k], self.hi[k]);
        }
        clips
    }
}

fn check_algorithm(cfg: &AttackConfig, want: Algorithm) -> Result<()> {
    if cfg.algorithm != want {
        return contract(format!(
            "{} runner called with a {} config",
            want.label(),
            cfg.algorithm.label()
        ));
    }
    Ok(())
}

struct Tracker {
    loss: Vec<f64>,
    distance: Vec<f64>,
    best: Option<(usize, f64, ImageTensor)>,
    diverged: bool,
}

impl Tracker {
    fn new(n: usize) -> Self {
        Self {
            loss: Vec::with_capacity(n),
            distance: Vec::with_capacity(n),
            best: None,
            diverged: false,
        }
    }

    /// Records an iterate; returns false once the loss stops being finite.
    fn record(&mut self, x: &ImageTensor, total: f64, feature: f64) -> bool {
        if !total.is_finite() {
            self.diverged = true;
            return false;
        }
        let t = self.loss.len();
        self.loss.push(total);
        self.distance.push(feature);
        if self.best.as_ref().is_none_or(|(_, b, _)| total < *b) {
            self.best = Some((t, total, x.clone()));
        }
        true
    }

    fn finish(self, fallback: &ImageTensor) -> AttackResult {
        let iterations_run = self.loss.len();
        let (best_iteration, best_loss, adversarial) =
            self.best.unwrap_or((0, f64::NAN, fallback.clone()));
        AttackResult {
            adversarial,
            loss_trace: self.loss,
            distance_trace: self.distance,
            success: BTreeMap::new(),
            iterations_run,
            best_iteration,
            best_loss,
            diverged: self.diverged,
        }
    }
}

#[derive(Clone, Copy)]
enum StepRule {
    Sign,
    MaxNormalized,
}

#[allow(clippy::too_many_arguments)]
fn run_projected(
    x_s: &ImageTensor,
    x_t: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
    gaussian_start: bool,
    rule: StepRule,
    observer: Observer<'_>,
) -> Result<AttackResult> {
    cfg.validate()?;
    masks.validate()?;
    x_s.check_mask(&masks.patch, "patch mask")?;
    let bounds = Bounds::new(x_s, masks, cfg);
    let trainable = masks.trainable();
    let mut x = x_s.clone();
    let mut clips = 0;
    if gaussian_start && cfg.init_sigma > 0.0 {
        let mut rng = rng_from(derive_seed(cfg.seed, &[INIT_STREAM]));
        let normal = Normal::new(0.0, cfg.init_sigma).expect("sigma validated");
        let plane = x.plane_len();
        for (k, v) in x.data_mut().iter_mut().enumerate() {
            if trainable.at(k % plane) {
                *v += normal.sample(&mut rng);
            }
        }
        clips = bounds.project(&mut x);
    }
    let objective = Objective::new(x_s, x_t, masks, cfg, models, &x)?;
    let mut di_rng = rng_from(derive_seed(cfg.seed, &[DIVERSITY_STREAM]));
    let mut track = Tracker::new(cfg.iterations);
    for t in 0..cfg.iterations {
        let eval = objective.evaluate(&x, &mut di_rng)?;
        if !track.record(&x, eval.total, eval.feature) {
            break;
        }
        observer(&IterateInfo {
            algorithm: cfg.algorithm,
            iteration: t,
            image: &x,
            loss: eval.total,
            box_clips: clips,
        });
        if t + 1 == cfg.iterations {
            break;
        }
        let scale = match rule {
            StepRule::Sign => None,
            StepRule::MaxNormalized => {
                let m = eval.grad.max_abs();
                if m == 0.0 {
                    Some(0.0)
                } else {
                    Some(cfg.step_size / m)
                }
            }
        };
        for (v, &g) in x.data_mut().iter_mut().zip(eval.grad.data()) {
            *v -= match scale {
                None => cfg.step_size * sign(g),
                Some(s) => s * g,
            };
        }
        clips = bounds.project(&mut x);
    }
    Ok(track.finish(x_s))
}

fn sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Projected sign-gradient descent from a seeded Gaussian start.
pub fn run_pgd(
    x_s: &ImageTensor,
    x_t: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
) -> Result<AttackResult> {
    run_pgd_observed(x_s, x_t, masks, cfg, models, &mut |_| {})
}

pub fn run_pgd_observed(
    x_s: &ImageTensor,
    x_t: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
    observer: Observer<'_>,
) -> Result<AttackResult> {
    check_algorithm(cfg, Algorithm::Pgd)?;
    run_projected(x_s, x_t, masks, cfg, models, true, StepRule::Sign, observer)
}

/// Projected sign-gradient descent from the clean image.
pub fn run_ifgsm(
    x_s: &ImageTensor,
    x_t: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
) -> Result<AttackResult> {
    run_ifgsm_observed(x_s, x_t, masks, cfg, models, &mut |_| {})
}

pub fn run_ifgsm_observed(
    x_s: &ImageTensor,
    x_t: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
    observer: Observer<'_>,
) -> Result<AttackResult> {
    check_algorithm(cfg, Algorithm::Ifgsm)?;
    run_projected(
        x_s,
        x_t,
        masks,
        cfg,
        models,
        false,
        StepRule::Sign,
        observer,
    )
}

/// Last-layer half-squared-L2 objective with `g / ||g||_inf` steps.
pub fn run_lots(
    x_s: &ImageTensor,
    x_t: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
) -> Result<AttackResult> {
    run_lots_observed(x_s, x_t, masks, cfg, models, &mut |_| {})
}

pub fn run_lots_observed(
    x_s: &ImageTensor,
    x_t: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
    observer: Observer<'_>,
) -> Result<AttackResult> {
    check_algorithm(cfg, Algorithm::Lots)?;
    run_projected(
        x_s,
        x_t,
        masks,
        cfg,
        models,
        false,
        StepRule::MaxNormalized,
        observer,
    )
}

/// `x = (tanh(w) + 1) / 2`
pub fn cw_to_pixel(w: f64) -> f64 {
    (w.tanh() + 1.0) / 2.0
}

/// `w = atanh(2x - 1)`; infinite at `x` in `{0, 1}`.
pub fn cw_from_pixel(x: f64) -> f64 {
    (2.0 * x - 1.0).atanh()
}

/// Tanh-space variables for the trainable entries, in data order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwParams {
    pub w: Vec<f64>,
}

impl CwParams {
    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
    }
}

/// Gradient descent in tanh space; the box holds by construction.
pub fn run_cw(
    x_s: &ImageTensor,
    x_t: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
) -> Result<AttackResult> {
    run_cw_observed(x_s, x_t, masks, cfg, models, &mut |_| {})
}

pub fn run_cw_observed(
    x_s: &ImageTensor,
    x_t: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
    observer: Observer<'_>,
) -> Result<AttackResult> {
    check_algorithm(cfg, Algorithm::Cw)?;
    cfg.validate()?;
    masks.validate()?;
    x_s.check_mask(&masks.patch, "patch mask")?;
    let plane = x_s.plane_len();
    let bounds = Bounds::new(x_s, masks, cfg);
    let trainable = masks.trainable();
    let idx: Vec<usize> = (0..x_s.data().len())
        .filter(|k| trainable.at(k % plane))
        .collect();
    let mut params = CwParams {
        w: idx
            .iter()
            .map(|&k| cw_from_pixel(x_s.data()[k].clamp(CW_EDGE, 1.0 - CW_EDGE)))
            .collect(),
    };
    let mut x = x_s.clone();
    let write = |x: &mut ImageTensor, p: &CwParams| {
        for (&k, &w) in idx.iter().zip(&p.w) {
            x.data_mut()[k] = cw_to_pixel(w);
        }
    };
    write(&mut x, &params);
    let objective = Objective::new(x_s, x_t, masks, cfg, models, &x)?;
    let mut di_rng = rng_from(derive_seed(cfg.seed, &[DIVERSITY_STREAM]));
    let mut track = Tracker::new(cfg.iterations);
    for t in 0..cfg.iterations {
        let eval = objective.evaluate(&x, &mut di_rng)?;
        if !track.record(&x, eval.total, eval.feature) {
            break;
        }
        observer(&IterateInfo {
            algorithm: Algorithm::Cw,
            iteration: t,
            image: &x,
            loss: eval.total,
            box_clips: 0,
        });
        if t + 1 == cfg.iterations {
            break;
        }
        for (&k, w) in idx.iter().zip(params.w.iter_mut()) {
            let th = w.tanh();
            *w -= cfg.step_size * eval.grad.data()[k] * 0.5 * (1.0 - th * th);
            let px = cw_to_pixel(*w);
            // epsilon ball: project in pixel space, map back exactly
            let proj = px.clamp(bounds.lo[k], bounds.hi[k]);
            if proj != px {
                *w = cw_from_pixel(proj);
            }
        }
        if !params.is_finite() {
            track.diverged = true;
            break;
        }
        write(&mut x, &params);
    }
    Ok(track.finish(x_s))
}

/// Dispatches on `cfg.algorithm`.
pub fn run_attack(
    x_s: &ImageTensor,
    x_t: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
) -> Result<AttackResult> {
    run_attack_observed(x_s, x_t, masks, cfg, models, &mut |_| {})
}

pub fn run_attack_observed(
    x_s: &ImageTensor,
    x_t: &ImageTensor,
    masks: &NoiseMasks,
    cfg: &AttackConfig,
    models: &EnsembleSpec,
    observer: Observer<'_>,
) -> Result<AttackResult> {
    match cfg.algorithm {
        Algorithm::Pgd => run_pgd_observed(x_s, x_t, masks, cfg, models, observer),
        Algorithm::Ifgsm => run_ifgsm_observed(x_s, x_t, masks, cfg, models, observer),
        Algorithm::Cw => run_cw_observed(x_s, x_t, masks, cfg, models, observer),
        Algorithm::Lots => run_lots_observed(x_s, x_t, masks, cfg, models, observer),
    }
}

/// Per-iteration constraint checks accumulated over one or more attacks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub iterates: usize,
    pub out_of_range: usize,
    pub epsilon_violations: usize,
    pub frozen_changed: usize,
    /// CW only: box clamps or pixels on the closed boundary.
    pub cw_clips: usize,
}

impl ConstraintReport {
    pub fn is_clean(&self) -> bool {
        self.out_of_range == 0
            && self.epsilon_violations == 0
            && self.frozen_changed == 0
            && self.cw_clips == 0
    }

    pub fn merge(&mut self, other: &ConstraintReport) {
        self.iterates += other.iterates;
        self.out_of_range += other.out_of_range;
        self.epsilon_violations += other.epsilon_violations;
        self.frozen_changed += other.frozen_changed;
        self.cw_clips += other.cw_clips;
    }

    /// Checks one iterate against `x_s`, the masks, and the layer budgets.
    pub fn check(
        &mut self,
        info: &IterateInfo<'_>,
        x_s: &ImageTensor,
        masks: &NoiseMasks,
        cfg: &AttackConfig,
    ) {
        const SLACK: f64 = 1e-12;
        self.iterates += 1;
        let plane = x_s.plane_len();
        let mut cw_boundary = false;
        for (k, (&v, &s)) in info.image.data().iter().zip(x_s.data()).enumerate() {
            let p = k % plane;
            if !(0.0..=1.0).contains(&v) {
                self.out_of_range += 1;
            }
            if masks.patch.at(p) {
                if (v - s).abs() > cfg.epsilon_patch + SLACK {
                    self.epsilon_violations += 1;
                }
            } else if masks.small.at(p) {
                if (v - s).abs() > cfg.epsilon_small + SLACK {
                    self.epsilon_violations += 1;
                }
            } else if v.to_bits() != s.to_bits() {
                self.frozen_changed += 1;
            }
            if info.algorithm == Algorithm::Cw
                && (masks.patch.at(p) || masks.small.at(p))
                && (v <= 0.0 || v >= 1.0)
            {
                cw_boundary = true;
            }
        }
        if info.algorithm == Algorithm::Cw && (info.box_clips > 0 || cw_boundary) {
            self.cw_clips += 1;
        }
    }
}
