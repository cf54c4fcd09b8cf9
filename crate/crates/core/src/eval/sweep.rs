use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::threshold::VerificationThreshold;
use crate::attacks::{run_attack, Algorithm, AttackConfig, AttackPair, Layout, NoiseMasks};
use crate::error::{contract, Result};
use crate::featnet::{match_score, Embedder, EnsembleSpec};
use crate::imagecore::ImageTensor;
use crate::physim::{physical_evaluation, CaptureGrid};
use crate::rng::derive_seed;

fn d_eps() -> Vec<f64> {
    vec![0.02, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0]
}
fn d_n() -> usize {
    3
}
fn d_attempts() -> usize {
    10
}
fn d_alg() -> Algorithm {
    Algorithm::Pgd
}
fn d_iters() -> usize {
    2000
}
fn d_step() -> f64 {
    0.01
}
fn d_sigma() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "d_eps")]
    pub epsilons: Vec<f64>,
    /// Digitally successful AXs kept per epsilon.
    #[serde(default = "d_n")]
    pub n_per_epsilon: usize,
    /// Pairs tried per epsilon, in order.
    #[serde(default = "d_attempts")]
    pub max_attempts: usize,
    #[serde(default = "d_alg")]
    pub algorithm: Algorithm,
    #[serde(default = "d_iters")]
    pub iterations: usize,
    #[serde(default = "d_step")]
    pub step_size: f64,
    #[serde(default = "d_sigma")]
    pub init_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields default")
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| crate::Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return contract("sweep needs at least one epsilon");
        }
        if self.epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return contract("sweep epsilons must lie in [0, 1]");
        }
        if self.n_per_epsilon == 0 || self.max_attempts == 0 {
            return contract("n_per_epsilon and max_attempts must be >= 1");
        }
        Ok(())
    }

    /// Noise-only attack config for one epsilon and pair.
    pub fn attack_config(&self, epsilon: f64, pair_index: usize) -> AttackConfig {
        let mut c = AttackConfig::new(self.algorithm, Layout::NoiseOnly);
        c.iterations = self.iterations;
        c.step_size = self.step_size;
        c.init_sigma = self.init_sigma;
        c.epsilon_small = epsilon;
        c.seed = derive_seed(self.seed, &[epsilon.to_bits(), pair_index as u64]);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub attempted: usize,
    pub digital_successes: usize,
    /// Physical ASR of each kept AX.
    pub physical: Vec<f64>,
    /// `None` when no AX succeeded digitally.
    pub physical_asr: Option<f64>,
    pub std_error: Option<f64>,
    /// Largest `|x_adv - x_s|` over kept AXs after 8-bit quantization.
    pub linf: Option<f64>,
    /// Largest deviation the `[0, 1]` box allows from the kept sources; an
    /// epsilon above it cannot be reached.
    pub linf_bound: Option<f64>,
}

struct Attempt {
    adversarial: ImageTensor,
    success: bool,
}

/// Physical ASR versus noise budget for noise-only attacks on `model`.
///
/// At each epsilon the first `max_attempts` pairs are attacked and the first
/// `n_per_epsilon` digital successes go through the capture grid. Epsilon 0
/// evaluates the clean sources, giving the false-accept rate.
pub fn epsilon_sweep(
    cfg: &SweepConfig,
    pairs: &[AttackPair],
    model: Arc<dyn Embedder>,
    threshold: &VerificationThreshold,
    grid: &CaptureGrid,
) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    if pairs.is_empty() {
        return contract("sweep needs at least one pair");
    }
    let models = EnsembleSpec::equal(vec![model.clone()])?;
    cfg.epsilons
        .par_iter()
        .map(|&epsilon| {
            let tried = &pairs[..cfg.max_attempts.min(pairs.len())];
            let attempts: Vec<Attempt> = tried
                .par_iter()
                .enumerate()
                .map(|(i, pair)| {
                    let adversarial = if epsilon == 0.0 {
                        pair.source.clone()
                    } else {
                        let masks = NoiseMasks::for_layout(Layout::NoiseOnly, &pair.patch);
                        run_attack(
                            &pair.source,
                            &pair.target,
                            &masks,
                            &cfg.attack_config(epsilon, i),
                            &models,
                        )?
                        .adversarial
                    };
                    let score = match_score(
                        &model.embed(&pair.target)?,
                        &model.embed(&adversarial)?,
                        threshold.metric,
                    )?;
                    Ok(Attempt {
                        adversarial,
                        success: threshold.accepts(score),
                    })
                })
                .collect::<Result<_>>()?;
            let digital_successes = attempts.iter().filter(|a| a.success).count();
            // the clean point is scored on every source, successful or not
            let kept: Vec<usize> = (0..attempts.len())
                .filter(|&i| epsilon == 0.0 || attempts[i].success)
                .take(cfg.n_per_epsilon)
                .collect();
            let physical = kept
                .iter()
                .map(|&i| {
                    physical_evaluation(
                        &attempts[i].adversarial,
                        &tried[i].target,
                        grid,
                        model.as_ref(),
                        threshold.value,
                        threshold.metric,
                    )?
                    .asr()
                })
                .collect::<Result<Vec<f64>>>()?;
            let linf = kept
                .iter()
                .map(|&i| {
                    attempts[i]
                        .adversarial
                        .quantize_u8()
                        .max_abs_diff(&tried[i].source)
                })
                .reduce(f64::max);
            let linf_bound = kept
                .iter()
                .map(|&i| {
                    tried[i]
                        .source
                        .data()
                        .iter()
                        .map(|&v| v.max(1.0 - v))
                        .fold(0.0, f64::max)
                })
                .reduce(f64::max);
            let (physical_asr, std_error) = mean_and_se(&physical);
            Ok(SweepPoint {
                epsilon,
                attempted: tried.len(),
                digital_successes,
                physical,
                physical_asr,
                std_error,
                linf,
                linf_bound,
            })
        })
        .collect()
}

fn mean_and_se(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (Some(m), None);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(m), Some((var / n).sqrt()))
}

/// Two-column `epsilon,physical_asr` curve; undefined points are empty.
pub fn sweep_curve_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("epsilon,physical_asr\n");
    for p in points {
        let v = p
            .physical_asr
            .map(|x| format!("{x:.6}"))
            .unwrap_or_default();
        let _ = writeln!(s, "{},{v}", p.epsilon);
    }
    s
}

/// Full table including the perceptibility column.
pub fn sweep_table_csv(points: &[SweepPoint]) -> String {
    let f = |o: Option<f64>| o.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut s = String::from(
        "epsilon,attempted,digital_successes,kept,physical_asr,std_error,linf,linf_bound\n",
    );
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            p.epsilon,
            p.attempted,
            p.digital_successes,
            p.physical.len(),
            f(p.physical_asr),
            f(p.std_error),
            f(p.linf),
            f(p.linf_bound)
        );
    }
    s
}
