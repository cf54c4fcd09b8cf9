use super::extractor::{Embedder, ModelId};
use crate::error::{contract, Result};
use crate::imagecore::ImageTensor;

/// Embedding `J x` for a fixed matrix `J` over the flattened planar image.
/// Mostly useful where closed-form Jacobians are wanted.
#[derive(Debug, Clone)]
pub struct LinearEmbedder {
    id: ModelId,
    dims: (usize, usize, usize),
    /// `[embed_dim][h * w * c]`
    rows: Vec<Vec<f64>>,
}

impl LinearEmbedder {
    pub fn new(
        id: impl Into<String>,
        dims: (usize, usize, usize),
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = dims.0 * dims.1 * dims.2;
        if rows.is_empty() || rows.iter().any(|r| r.len() != n) {
            return contract(format!("linear embedder rows must each have {n} entries"));
        }
        Ok(Self {
            id: ModelId(id.into()),
            dims,
            rows,
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

impl Embedder for LinearEmbedder {
    fn id(&self) -> &ModelId {
        &self.id
    }

    fn input_dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    fn embed(&self, x: &ImageTensor) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self
            .rows
            .iter()
            .map(|r| r.iter().zip(x.data()).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn embed_input_grad(&self, x: &ImageTensor, upstream: &[f64]) -> Result<ImageTensor> {
        self.check_input(x)?;
        if upstream.len() != self.rows.len() {
            return contract("upstream gradient length differs from embedding length");
        }
        let mut g = vec![0.0; x.data().len()];
        for (r, u) in self.rows.iter().zip(upstream) {
            for (gk, a) in g.iter_mut().zip(r) {
                *gk += a * u;
            }
        }
        ImageTensor::from_vec(self.dims.0, self.dims.1, self.dims.2, g)
    }
}
