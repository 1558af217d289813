use std::collections::BTreeMap;
use std::fmt::Debug;

use super::ElementId;

/// Cosine similarity, defined as 0 when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    // `+ 0.0` folds -0.0 into 0.0 so ties sort consistently
    dot / (na.sqrt() * nb.sqrt()) + 0.0
}

/// Per-domain similarity index. The store owns one per indexed domain.
pub trait VectorIndex: Debug + Send + Sync {
    fn dim(&self) -> usize;

    /// Inserts or replaces the vector for `id`.
    fn upsert(&mut self, id: ElementId, vector: Vec<f64>);

    /// Top-`k` by cosine similarity, descending; equal scores ordered by id.
    fn search(&self, query: &[f64], k: usize) -> Vec<(ElementId, f64)>;

    /// Indexed ids, ascending.
    fn ids(&self) -> Vec<ElementId>;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Exact scan over every stored vector.
#[derive(Debug, Clone)]
pub struct BruteForceIndex {
    dim: usize,
    vectors: BTreeMap<ElementId, Vec<f64>>,
}

impl BruteForceIndex {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: BTreeMap::new() }
    }
}

impl VectorIndex for BruteForceIndex {
    fn dim(&self) -> usize {
        self.dim
    }

    fn upsert(&mut self, id: ElementId, vector: Vec<f64>) {
        self.vectors.insert(id, vector);
    }

    fn search(&self, query: &[f64], k: usize) -> Vec<(ElementId, f64)> {
        let mut scored: Vec<(ElementId, f64)> = self
            .vectors
            .iter()
            .map(|(&id, v)| (id, cosine_similarity(query, v)))
            .collect();
        // BTreeMap iteration is id-ascending and the sort is stable.
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(k);
        scored
    }

    fn ids(&self) -> Vec<ElementId> {
        self.vectors.keys().copied().collect()
    }

    fn len(&self) -> usize {
        self.vectors.len()
    }
}
