//! Toy feature extractors, embedding distances, ensembles, and input diversity.

mod audit;
mod distance;
mod diversity;
mod ensemble;
mod extractor;
mod linear;

pub use audit::{Audited, QueryLog};
pub use distance::{accepts, feature_distance, feature_distance_grad, match_score, Metric};
pub use diversity::{apply_input_diversity, CropResize, DiversityConfig};
pub use ensemble::{ensemble_distance, BoundEnsemble, EnsembleSpec, FeatureLoss};
pub use extractor::{Architecture, Embedder, ExtractorSpec, FeatureExtractor, ModelId};
pub use linear::LinearEmbedder;
