use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, AttackConfig, BlackBox, Layout, NoiseMasks, SmoothnessConfig};
use super::optim::{run_attack_observed, AttackResult, ConstraintReport};
use crate::error::{contract, Error, Result};
use crate::featnet::{Audited, Embedder, EnsembleSpec, Metric, ModelId, QueryLog};
use crate::imagecore::{BinaryMask, ImageTensor, SmoothnessKind};
use crate::rng::{derive_seed, derive_seed_str};

/// Noise placement plus regularizer, rows S0..S4 of the transferability table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    NoReg,
    Tv,
    Ours,
    ComboTv,
    ComboOurs,
}

impl Technique {
    pub const ALL: [Technique; 5] = [
        Technique::NoReg,
        Technique::Tv,
        Technique::Ours,
        Technique::ComboTv,
        Technique::ComboOurs,
    ];

    pub fn layout(self) -> Layout {
        match self {
            Technique::ComboTv | Technique::ComboOurs => Layout::PatchNoiseCombo,
            _ => Layout::PatchOnly,
        }
    }

    pub fn smoothness(self) -> SmoothnessKind {
        match self {
            Technique::NoReg => SmoothnessKind::None,
            Technique::Tv | Technique::ComboTv => SmoothnessKind::Tv,
            Technique::Ours | Technique::ComboOurs => SmoothnessKind::Masked,
        }
    }

    /// Cells that do not use the masked regularizer.
    pub fn is_baseline(self) -> bool {
        self.smoothness() != SmoothnessKind::Masked
    }

    pub fn row(self) -> &'static str {
        match self {
            Technique::NoReg => "S0",
            Technique::Tv => "S1",
            Technique::Ours => "S2",
            Technique::ComboTv => "S3",
            Technique::ComboOurs => "S4",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Technique::NoReg => "noreg",
            Technique::Tv => "tv",
            Technique::Ours => "ours",
            Technique::ComboTv => "combo_tv",
            Technique::ComboOurs => "combo_ours",
        }
    }
}

impl FromStr for Technique {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Technique::ALL
            .into_iter()
            .find(|t| t.label().eq_ignore_ascii_case(s) || t.row().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown technique {s:?}")))
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub algorithm: Algorithm,
    pub blackbox: BlackBox,
    pub technique: Technique,
}

impl CellKey {
    /// Directory-safe name, e.g. `pgd__di__combo_ours`.
    pub fn slug(&self) -> String {
        format!("{}__{}__{}", self.algorithm, self.blackbox, self.technique)
    }

    pub fn from_slug(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split("__").collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("bad cell name {s:?}")));
        }
        Ok(Self {
            algorithm: parts[0].parse()?,
            blackbox: parts[1].parse()?,
            technique: parts[2].parse()?,
        })
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.slug())
    }
}

/// Subset of the algorithm x black-box x technique grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub algorithms: Vec<Algorithm>,
    pub blackboxes: Vec<BlackBox>,
    pub techniques: Vec<Technique>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::full()
    }
}

impl GridSpec {
    pub fn full() -> Self {
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            blackboxes: BlackBox::ALL.to_vec(),
            techniques: Technique::ALL.to_vec(),
        }
    }

    /// Cells in algorithm-major order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &algorithm in &self.algorithms {
            for &blackbox in &self.blackboxes {
                for &technique in &self.techniques {
                    out.push(CellKey {
                        algorithm,
                        blackbox,
                        technique,
                    });
                }
            }
        }
        out
    }
}

fn d_iters() -> usize {
    2000
}
fn d_cw_iters() -> usize {
    7000
}
fn d_step() -> f64 {
    0.01
}
fn d_one() -> f64 {
    1.0
}
fn d_eps_small() -> f64 {
    0.05
}
fn d_gamma() -> f64 {
    super::config::DEFAULT_GAMMA
}
fn d_tau() -> f64 {
    super::config::DEFAULT_TAU
}
fn d_sigma() -> f64 {
    0.05
}
fn d_crop() -> f64 {
    0.07
}
fn d_metric() -> Metric {
    Metric::L2
}

/// Shared attack settings for every cell of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_iters")]
    pub iterations: usize,
    #[serde(default = "d_cw_iters")]
    pub cw_iterations: usize,
    #[serde(default = "d_step")]
    pub step_size: f64,
    #[serde(default = "d_one")]
    pub epsilon_patch: f64,
    #[serde(default = "d_eps_small")]
    pub epsilon_small: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_sigma")]
    pub init_sigma: f64,
    #[serde(default = "d_crop")]
    pub max_crop_fraction: f64,
    #[serde(default = "d_metric")]
    pub metric: Metric,
}

impl Default for GridConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields default")
    }
}

impl GridConfig {
    /// Full attack config for one cell and pair, with a seed derived from
    /// the master seed and the cell key.
    pub fn cell_config(&self, key: CellKey, pair_index: usize) -> AttackConfig {
        let smoothness = match key.technique.smoothness() {
            SmoothnessKind::None => SmoothnessConfig::none(),
            SmoothnessKind::Tv => SmoothnessConfig::tv(self.gamma),
            SmoothnessKind::Masked => SmoothnessConfig::masked(self.gamma, self.tau),
        };
        AttackConfig {
            algorithm: key.algorithm,
            iterations: if key.algorithm == Algorithm::Cw {
                self.cw_iterations
            } else {
                self.iterations
            },
            step_size: self.step_size,
            epsilon_patch: self.epsilon_patch,
            epsilon_small: self.epsilon_small,
            layout: key.technique.layout(),
            smoothness,
            blackbox: key.blackbox,
            seed: derive_seed(
                derive_seed_str(self.seed, &key.slug()),
                &[pair_index as u64],
            ),
            init_sigma: self.init_sigma,
            max_crop_fraction: self.max_crop_fraction,
            metric: self.metric,
        }
    }
}

/// Attack-generation models plus held-out models for black-box evaluation.
#[derive(Clone)]
pub struct ModelZoo {
    pub whitebox: Arc<dyn Embedder>,
    pub partner: Arc<dyn Embedder>,
    pub heldout: Vec<Arc<dyn Embedder>>,
}

impl fmt::Debug for ModelZoo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelZoo")
            .field("whitebox", self.whitebox.id())
            .field("partner", self.partner.id())
            .field("heldout", &self.heldout_ids())
            .finish()
    }
}

impl ModelZoo {
    /// Models attacked for the given black-box technique: the white-box
    /// model alone, or an equal-weight ensemble with the partner.
    pub fn generation_models(&self, blackbox: BlackBox) -> Result<EnsembleSpec> {
        let mut members = vec![self.whitebox.clone()];
        if blackbox.uses_ensemble() {
            members.push(self.partner.clone());
        }
        EnsembleSpec::equal(members)
    }

    pub fn generation_ids(&self, blackbox: BlackBox) -> Vec<ModelId> {
        let mut ids = vec![self.whitebox.id().clone()];
        if blackbox.uses_ensemble() {
            ids.push(self.partner.id().clone());
        }
        ids
    }

    pub fn heldout_ids(&self) -> Vec<ModelId> {
        self.heldout.iter().map(|m| m.id().clone()).collect()
    }

    /// Every model wrapped so calls land in `log`.
    pub fn audited(&self, log: &QueryLog) -> ModelZoo {
        let wrap = |m: &Arc<dyn Embedder>| -> Arc<dyn Embedder> {
            Arc::new(Audited::new(m.clone(), log.clone()))
        };
        ModelZoo {
            whitebox: wrap(&self.whitebox),
            partner: wrap(&self.partner),
            heldout: self.heldout.iter().map(wrap).collect(),
        }
    }
}

/// A source/target pair and the source's patch mask.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackPair {
    pub label: String,
    pub source: ImageTensor,
    pub target: ImageTensor,
    pub patch: BinaryMask,
}

/// One attack of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AxOutcome {
    pub key: CellKey,
    pub pair_index: usize,
    pub config: AttackConfig,
    pub result: std::result::Result<AttackResult, String>,
    /// Models whose embedding was requested while generating this AX.
    pub queried: Vec<ModelId>,
    pub audit: ConstraintReport,
}

/// Runs every pair of one cell. Failures are kept per pair.
pub fn run_cell(
    key: CellKey,
    pairs: &[AttackPair],
    cfg: &GridConfig,
    zoo: &ModelZoo,
) -> Vec<AxOutcome> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| run_one(key, i, pair, cfg, zoo))
        .collect()
}

fn run_one(
    key: CellKey,
    pair_index: usize,
    pair: &AttackPair,
    cfg: &GridConfig,
    zoo: &ModelZoo,
) -> AxOutcome {
    let config = cfg.cell_config(key, pair_index);
    let log = QueryLog::new();
    let audited = zoo.audited(&log);
    let masks = NoiseMasks::for_layout(config.layout, &pair.patch);
    let mut audit = ConstraintReport::default();
    let result = audited.generation_models(key.blackbox).and_then(|models| {
        run_attack_observed(
            &pair.source,
            &pair.target,
            &masks,
            &config,
            &models,
            &mut |info| audit.check(info, &pair.source, &masks, &config),
        )
    });
    AxOutcome {
        key,
        pair_index,
        config,
        result: result.map_err(|e| e.to_string()),
        queried: log.queried().into_iter().collect(),
        audit,
    }
}

/// Runs every cell of `spec` over every pair. Output order is cell-major and
/// independent of scheduling.
pub fn run_grid(
    pairs: &[AttackPair],
    spec: &GridSpec,
    cfg: &GridConfig,
    zoo: &ModelZoo,
) -> Result<Vec<AxOutcome>> {
    if pairs.is_empty() {
        return contract("grid needs at least one source/target pair");
    }
    let jobs: Vec<(CellKey, usize)> = spec
        .cells()
        .into_iter()
        .flat_map(|k| (0..pairs.len()).map(move |i| (k, i)))
        .collect();
    Ok(jobs
        .into_par_iter()
        .map(|(k, i)| run_one(k, i, &pairs[i], cfg, zoo))
        .collect())
}
