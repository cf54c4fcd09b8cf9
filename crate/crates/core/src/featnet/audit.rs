use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use super::extractor::{Embedder, ModelId};
use crate::error::Result;
use crate::imagecore::ImageTensor;

/// Shared record of which models were queried.
#[derive(Debug, Clone, Default)]
pub struct QueryLog {
    inner: Arc<Mutex<BTreeSet<ModelId>>>,
}

impl QueryLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&self, id: &ModelId) {
        let mut set = self.inner.lock().expect("query log poisoned");
        if !set.contains(id) {
            set.insert(id.clone());
        }
    }

    pub fn queried(&self) -> BTreeSet<ModelId> {
        self.inner.lock().expect("query log poisoned").clone()
    }
}

/// Wraps an embedder and logs every forward or gradient query.
pub struct Audited {
    inner: Arc<dyn Embedder>,
    log: QueryLog,
}

impl Audited {
    pub fn new(inner: Arc<dyn Embedder>, log: QueryLog) -> Self {
        Self { inner, log }
    }
}

impl Embedder for Audited {
    fn id(&self) -> &ModelId {
        self.inner.id()
    }

    fn input_dims(&self) -> (usize, usize, usize) {
        self.inner.input_dims()
    }

    fn embed(&self, x: &ImageTensor) -> Result<Vec<f64>> {
        self.log.record(self.inner.id());
        self.inner.embed(x)
    }

    fn embed_input_grad(&self, x: &ImageTensor, upstream: &[f64]) -> Result<ImageTensor> {
        self.log.record(self.inner.id());
        self.inner.embed_input_grad(x, upstream)
    }

    fn embed_with_pullback(
        &self,
        x: &ImageTensor,
        upstream: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<(Vec<f64>, ImageTensor)> {
        self.log.record(self.inner.id());
        self.inner.embed_with_pullback(x, upstream)
    }
}
