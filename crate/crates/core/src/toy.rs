//! The default experimental stack: four toy extractors over synthetic faces,
//! best-F1 thresholds calibrated on a held-aside gallery, and attack pairs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackPair, ModelZoo};
use crate::error::{Error, Result};
use crate::eval::{calibrate_model, ThresholdSet};
use crate::featnet::{Architecture, Embedder, ExtractorSpec, FeatureExtractor, Metric};
use crate::imagecore::ImageTensor;
use crate::rng::derive_seed;
use crate::synth::{identity_pairs, SyntheticFaces};

fn d_seed() -> u64 {
    7
}
fn d_side() -> usize {
    32
}
fn d_embed() -> usize {
    64
}
fn d_scale() -> f64 {
    100.0
}
fn d_ids() -> u64 {
    24
}
fn d_samples() -> u64 {
    4
}
fn d_metric() -> Metric {
    Metric::L2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyStackConfig {
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// Square image side in pixels.
    #[serde(default = "d_side")]
    pub side: usize,
    #[serde(default = "d_embed")]
    pub embed_dim: usize,
    #[serde(default = "d_scale")]
    pub output_scale: f64,
    /// Identities in the calibration gallery and the attack population.
    #[serde(default = "d_ids")]
    pub identities: u64,
    /// Photos per identity in the calibration gallery.
    #[serde(default = "d_samples")]
    pub samples_per_identity: u64,
    #[serde(default = "d_metric")]
    pub metric: Metric,
}

impl Default for ToyStackConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields default")
    }
}

impl ToyStackConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn extractor_spec(&self, arch: Architecture) -> ExtractorSpec {
        ExtractorSpec {
            arch,
            seed: derive_seed(self.seed, &[arch as u64]),
            height: self.side,
            width: self.side,
            channels: 3,
            embed_dim: self.embed_dim,
            output_scale: self.output_scale,
        }
    }
}

/// Models A and B generate attacks; C and D are held out.
pub struct ToyStack {
    pub config: ToyStackConfig,
    pub faces: SyntheticFaces,
    pub zoo: ModelZoo,
    pub thresholds: ThresholdSet,
}

impl ToyStack {
    pub fn build(config: ToyStackConfig) -> Result<Self> {
        if config.identities < 2 || config.samples_per_identity < 2 {
            return Err(Error::Config(
                "toy stack needs at least two identities with two photos each".into(),
            ));
        }
        let faces = SyntheticFaces::new(config.seed, config.side, config.side);
        let model = |arch| -> Result<Arc<dyn Embedder>> {
            Ok(Arc::new(FeatureExtractor::new(
                config.extractor_spec(arch),
            )?))
        };
        let zoo = ModelZoo {
            whitebox: model(Architecture::A)?,
            partner: model(Architecture::B)?,
            heldout: vec![model(Architecture::C)?, model(Architecture::D)?],
        };
        let gallery: Vec<(u64, ImageTensor)> = (0..config.identities)
            .flat_map(|i| (0..config.samples_per_identity).map(move |k| (i, k)))
            .map(|(i, k)| (i, faces.sample(i, k)))
            .collect();
        let mut thresholds = ThresholdSet::default();
        for m in std::iter::once(&zoo.whitebox)
            .chain(std::iter::once(&zoo.partner))
            .chain(zoo.heldout.iter())
        {
            thresholds.insert(
                m.id().clone(),
                calibrate_model(m.as_ref(), &gallery, config.metric)?,
            );
        }
        Ok(Self {
            config,
            faces,
            zoo,
            thresholds,
        })
    }

    /// `count` impersonation pairs: canonical source face, canonical target
    /// face, and the eyeglass mask.
    pub fn pairs(&self, count: usize, seed: u64) -> Vec<AttackPair> {
        let mask = self.faces.eyeglass_mask();
        identity_pairs(seed, self.config.identities, count)
            .into_iter()
            .map(|(s, t)| AttackPair {
                label: format!("synth:{s}->synth:{t}"),
                source: self.faces.face(s),
                target: self.faces.face(t),
                patch: mask.clone(),
            })
            .collect()
    }
}
