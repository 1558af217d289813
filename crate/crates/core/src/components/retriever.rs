use super::embedding::EmbeddingProvider;
use crate::runtime::{Component, ComponentError, QueryContext, ScratchValue, StageConfig, StoreRead, RETRIEVED};

/// Dense retrieval: embeds the question and takes the `top_k` nearest
/// elements of its input domain.
pub struct VectorRetriever {
    provider: EmbeddingProvider,
    top_k: usize,
}

impl VectorRetriever {
    pub fn from_config(cfg: &StageConfig<'_>) -> Result<Self, ComponentError> {
        let dim = cfg
            .dim_of(cfg.input(0))
            .ok_or_else(|| cfg.config_error("inputs", "searched domain declares no dim"))?;
        let top_k = cfg.usize_param("top_k", 5)?;
        if top_k == 0 {
            return Err(cfg.config_error("top_k", "must be at least 1"));
        }
        Ok(Self { provider: EmbeddingProvider::from_config(cfg, dim)?, top_k })
    }
}

impl Component for VectorRetriever {
    fn query(&self, ctx: &mut QueryContext<'_>) -> Result<(), ComponentError> {
        let q = self.provider.embed(std::slice::from_ref(&ctx.query.question))?.remove(0);
        let hits = ctx.store.nearest(&ctx.inputs[0], &q, self.top_k)?;
        ctx.scratch.set(RETRIEVED, ScratchValue::Hits(hits));
        Ok(())
    }
}
