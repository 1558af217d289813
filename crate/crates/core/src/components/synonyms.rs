use crate::dem::{cosine_similarity, DemError, ElementId, PropValue, Props};
use crate::runtime::{AccessError, Component, ComponentError, IndexContext, StageConfig, StoreRead, StoreWrite};
use crate::text::normalize_surface;

/// Pairwise cosine similarities of the embedded elements of one domain,
/// computed once so a threshold sweep does not recompute them.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    ids: Vec<ElementId>,
    surfaces: Vec<String>,
    /// Row-major strict upper triangle.
    sims: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_store<S: StoreRead + ?Sized>(store: &S, domain: &str) -> Result<Self, AccessError> {
        if !store.domain_info(domain)?.indexed() {
            return Err(DemError::UnindexedDomain(domain.to_string()).into());
        }
        let mut ids = Vec::new();
        let mut surfaces = Vec::new();
        let mut vectors: Vec<&[f64]> = Vec::new();
        for e in store.elements_in(domain)? {
            let Some(v) = e.embedding() else { continue };
            let surface = match e.prop("normalized").and_then(PropValue::as_str) {
                Some(n) => n.to_string(),
                None => normalize_surface(e.prop("surface").and_then(PropValue::as_str).unwrap_or("")),
            };
            ids.push(e.id());
            surfaces.push(surface);
            vectors.push(v);
        }
        let n = ids.len();
        let mut sims = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                sims.push(cosine_similarity(vectors[i], vectors[j]));
            }
        }
        Ok(Self { ids, surfaces, sims })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Pairs `(a, b, similarity)` with `a < b`, similarity at least
    /// `threshold` and distinct normalized surfaces, in id-pair order.
    pub fn pairs(&self, threshold: f64) -> Vec<(ElementId, ElementId, f64)> {
        let n = self.ids.len();
        let mut out = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                let s = self.sims[k];
                k += 1;
                if s >= threshold && self.surfaces[i] != self.surfaces[j] {
                    out.push((self.ids[i], self.ids[j], s));
                }
            }
        }
        out
    }

    pub fn count_at(&self, threshold: f64) -> usize {
        self.pairs(threshold).len()
    }
}

/// Creates one synonym element per qualifying pair of `matrix`, with the two
/// entities as its children and the similarity as a property.
pub fn materialize_synonyms<S: StoreWrite + ?Sized>(
    store: &mut S,
    matrix: &SimilarityMatrix,
    synonyms: &str,
    threshold: f64,
) -> Result<usize, AccessError> {
    let pairs = matrix.pairs(threshold);
    for &(a, b, s) in &pairs {
        let props = Props::from([("similarity".to_string(), PropValue::Float(s))]);
        let edge = store.create_element(synonyms, props, 1.0)?;
        store.link(edge, a)?;
        store.link(edge, b)?;
    }
    Ok(pairs.len())
}

/// Links every pair of entities whose embeddings have cosine similarity at
/// least `threshold`. Returns the number of edges created.
pub fn build_synonym_edges<S: StoreWrite + ?Sized>(
    store: &mut S,
    entities: &str,
    synonyms: &str,
    threshold: f64,
) -> Result<usize, AccessError> {
    let matrix = SimilarityMatrix::from_store(store, entities)?;
    materialize_synonyms(store, &matrix, synonyms, threshold)
}

pub struct SynonymLinker {
    threshold: f64,
}

impl SynonymLinker {
    pub fn from_config(cfg: &StageConfig<'_>) -> Result<Self, ComponentError> {
        let threshold = cfg.f64_param("threshold", 0.8)?;
        if !(0.0..=1.0).contains(&threshold) {
            return Err(cfg.config_error("threshold", "must lie in [0, 1]"));
        }
        Ok(Self { threshold })
    }
}

impl Component for SynonymLinker {
    fn index(&mut self, ctx: &mut IndexContext<'_>) -> Result<(), ComponentError> {
        let n = build_synonym_edges(&mut ctx.store, &ctx.inputs[0], &ctx.outputs[0], self.threshold)?;
        log::info!("synonym linker created {n} edges at threshold {}", self.threshold);
        ctx.artifacts.insert("synonym_edges".into(), n.into());
        Ok(())
    }
}
