use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::featnet::Metric;
use crate::imagecore::{load_threshold_grid, BinaryMask, SmoothnessKind, ThresholdMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pgd,
    Cw,
    Lots,
    Ifgsm,
}

impl Algorithm {
    /// Grid order.
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Pgd,
        Algorithm::Cw,
        Algorithm::Lots,
        Algorithm::Ifgsm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Pgd => "pgd",
            Algorithm::Cw => "cw",
            Algorithm::Lots => "lots",
            Algorithm::Ifgsm => "ifgsm",
        }
    }

    /// Column name in the transferability table (A1..A4).
    pub fn column(self) -> &'static str {
        match self {
            Algorithm::Pgd => "A1",
            Algorithm::Cw => "A2",
            Algorithm::Lots => "A3",
            Algorithm::Ifgsm => "A4",
        }
    }

    pub fn default_iterations(self) -> usize {
        match self {
            Algorithm::Cw => 7000,
            _ => 2000,
        }
    }
}

/// Where adversarial noise may be placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Eyeglass patch only.
    PatchOnly,
    /// Patch plus an epsilon-bounded noise layer on the rest of the face.
    PatchNoiseCombo,
    /// Epsilon-bounded noise over the whole face, no patch.
    NoiseOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlackBox {
    None,
    Di,
    Ensemble,
    DiEnsemble,
}

impl BlackBox {
    pub const ALL: [BlackBox; 4] = [
        BlackBox::None,
        BlackBox::Di,
        BlackBox::Ensemble,
        BlackBox::DiEnsemble,
    ];

    pub fn uses_diversity(self) -> bool {
        matches!(self, BlackBox::Di | BlackBox::DiEnsemble)
    }

    pub fn uses_ensemble(self) -> bool {
        matches!(self, BlackBox::Ensemble | BlackBox::DiEnsemble)
    }

    pub fn label(self) -> &'static str {
        match self {
            BlackBox::None => "none",
            BlackBox::Di => "di",
            BlackBox::Ensemble => "ens",
            BlackBox::DiEnsemble => "di_ens",
        }
    }
}

macro_rules! label_from_str {
    ($t:ty, $all:expr, $what:literal) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                $all.into_iter()
                    .find(|v| v.label().eq_ignore_ascii_case(s))
                    .ok_or_else(|| Error::Config(format!(concat!("unknown ", $what, " {:?}"), s)))
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

label_from_str!(Algorithm, Algorithm::ALL, "algorithm");
label_from_str!(BlackBox, BlackBox::ALL, "black-box technique");

/// Smoothness weight chosen by a log sweep over {0.005, 0.05, 0.5} on the
/// toy stack; only meaningful relative to the extractors' output scale.
pub const DEFAULT_GAMMA: f64 = 0.5;
/// One step of the default step size: any pixel that has moved activates.
pub const DEFAULT_TAU: f64 = 0.01;

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_tau() -> f64 {
    DEFAULT_TAU
}

/// Regularizer settings as they appear in a config file. The reference image
/// is bound at attack start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessConfig {
    pub kind: SmoothnessKind,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Uniform activation threshold, used when no threshold file is given.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_file: Option<PathBuf>,
}

impl SmoothnessConfig {
    pub fn none() -> Self {
        Self {
            kind: SmoothnessKind::None,
            gamma: default_gamma(),
            tau: default_tau(),
            threshold_file: None,
        }
    }

    pub fn tv(gamma: f64) -> Self {
        Self {
            kind: SmoothnessKind::Tv,
            gamma,
            ..Self::none()
        }
    }

    pub fn masked(gamma: f64, tau: f64) -> Self {
        Self {
            kind: SmoothnessKind::Masked,
            gamma,
            tau,
            threshold_file: None,
        }
    }

    pub fn thresholds(&self, height: usize, width: usize) -> Result<ThresholdMatrix> {
        match &self.threshold_file {
            Some(path) => {
                let z = load_threshold_grid(path)?;
                if z.height() != height || z.width() != width {
                    return contract(format!(
                        "threshold file {} is {}x{}, image is {height}x{width}",
                        path.display(),
                        z.height(),
                        z.width()
                    ));
                }
                Ok(z)
            }
            None => ThresholdMatrix::uniform(height, width, self.tau),
        }
    }
}

fn default_iterations() -> usize {
    2000
}
fn default_step() -> f64 {
    0.01
}
fn default_eps_patch() -> f64 {
    1.0
}
fn default_eps_small() -> f64 {
    0.05
}
fn default_sigma() -> f64 {
    0.05
}
fn default_crop() -> f64 {
    0.07
}
fn default_metric() -> Metric {
    Metric::L2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_eps_patch")]
    pub epsilon_patch: f64,
    #[serde(default = "default_eps_small")]
    pub epsilon_small: f64,
    pub layout: Layout,
    pub smoothness: SmoothnessConfig,
    #[serde(default = "default_blackbox")]
    pub blackbox: BlackBox,
    #[serde(default)]
    pub seed: u64,
    /// Std of the Gaussian start used by PGD.
    #[serde(default = "default_sigma")]
    pub init_sigma: f64,
    #[serde(default = "default_crop")]
    pub max_crop_fraction: f64,
    #[serde(default = "default_metric")]
    pub metric: Metric,
}

fn default_blackbox() -> BlackBox {
    BlackBox::None
}

impl AttackConfig {
    /// Defaults for the given algorithm and layout with no regularizer.
    pub fn new(algorithm: Algorithm, layout: Layout) -> Self {
        Self {
            algorithm,
            iterations: algorithm.default_iterations(),
            step_size: default_step(),
            epsilon_patch: default_eps_patch(),
            epsilon_small: default_eps_small(),
            layout,
            smoothness: SmoothnessConfig::none(),
            blackbox: BlackBox::None,
            seed: 0,
            init_sigma: default_sigma(),
            max_crop_fraction: default_crop(),
            metric: Metric::L2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return contract("iterations must be >= 1");
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return contract(format!("step size must be > 0, got {}", self.step_size));
        }
        for (name, eps) in [
            ("epsilon_patch", self.epsilon_patch),
            ("epsilon_small", self.epsilon_small),
        ] {
            if !(eps > 0.0 && eps <= 1.0) {
                return contract(format!("{name} must lie in (0, 1], got {eps}"));
            }
        }
        if !(self.init_sigma.is_finite() && self.init_sigma >= 0.0) {
            return contract("init_sigma must be >= 0");
        }
        if !(self.smoothness.gamma.is_finite() && self.smoothness.gamma >= 0.0) {
            return contract("smoothness gamma must be >= 0");
        }
        if !(self.smoothness.tau.is_finite() && self.smoothness.tau >= 0.0) {
            return contract("smoothness tau must be >= 0");
        }
        if !(0.0..0.5).contains(&self.max_crop_fraction) {
            return contract("max_crop_fraction must lie in [0, 0.5)");
        }
        if self.layout == Layout::NoiseOnly && self.smoothness.kind != SmoothnessKind::None {
            return contract("noise-only layout has no patch to regularize");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("attack config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Patch and small-noise supports for one attack.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMasks {
    pub patch: BinaryMask,
    pub small: BinaryMask,
}

impl NoiseMasks {
    /// Derives both masks from the layout; the small-noise layer covers the
    /// complement of the patch.
    pub fn for_layout(layout: Layout, patch: &BinaryMask) -> Self {
        let (h, w) = (patch.height(), patch.width());
        match layout {
            Layout::PatchOnly => Self {
                patch: patch.clone(),
                small: BinaryMask::empty(h, w),
            },
            Layout::PatchNoiseCombo => Self {
                patch: patch.clone(),
                small: patch.complement(),
            },
            Layout::NoiseOnly => Self {
                patch: BinaryMask::empty(h, w),
                small: BinaryMask::full(h, w),
            },
        }
    }

    pub fn trainable(&self) -> BinaryMask {
        self.patch.union(&self.small)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.patch.height(), self.patch.width()) != (self.small.height(), self.small.width()) {
            return contract("patch and small-noise masks differ in size");
        }
        if self.patch.overlaps(&self.small) {
            return contract("patch and small-noise masks overlap");
        }
        Ok(())
    }
}
