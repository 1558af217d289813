use crate::provider::{embed_remote, EndpointConfig, ProviderError};
use crate::runtime::{Component, ComponentError, IndexContext, StageConfig, StoreRead, StoreWrite};
use crate::text::{fnv1a, normalized_tokens};

const INDEX_SEED: u64 = 0x5151;
const SIGN_SEED: u64 = 0xa3a3;

/// Feature-hashing embedder. Each normalized token adds ±1 at a hashed
/// coordinate; the result is L2-normalized (an empty text stays zero).
pub fn embed_stub(texts: &[String], dim: usize) -> Vec<Vec<f64>> {
    assert!(dim >= 8, "stub embeddings need at least 8 dimensions");
    texts
        .iter()
        .map(|t| {
            let mut v = vec![0.0; dim];
            for tok in normalized_tokens(t) {
                let slot = (fnv1a(tok.as_bytes(), INDEX_SEED) % dim as u64) as usize;
                let sign = if fnv1a(tok.as_bytes(), SIGN_SEED) & 1 == 0 { 1.0 } else { -1.0 };
                v[slot] += sign;
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            v
        })
        .collect()
}

/// Where a stage gets its vectors from.
#[derive(Debug, Clone)]
pub enum EmbeddingProvider {
    Stub { dim: usize },
    Remote { endpoint: EndpointConfig, dim: usize },
}

impl EmbeddingProvider {
    /// Reads `provider` (`"stub"` or `"remote"`), and for remote providers
    /// `model`, `batch_size`, `timeout_ms` and `max_in_flight`.
    pub fn from_config(cfg: &StageConfig<'_>, dim: usize) -> Result<Self, ComponentError> {
        match cfg.str_param("provider", "stub")? {
            "stub" => {
                if dim < 8 {
                    return Err(ComponentError::Config {
                        param: format!("{}.provider", cfg.stage.name),
                        message: format!("stub embeddings need dim >= 8, domain has {dim}"),
                    });
                }
                Ok(Self::Stub { dim })
            }
            "remote" => Ok(Self::Remote { endpoint: remote_endpoint(cfg, "model")?, dim }),
            other => Err(cfg.config_error("provider", &format!("unknown provider `{other}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Stub { dim } | Self::Remote { dim, .. } => *dim,
        }
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        match self {
            Self::Stub { dim } => Ok(embed_stub(texts, *dim)),
            Self::Remote { endpoint, .. } => embed_remote(texts, endpoint),
        }
    }
}

/// Endpoint settings for a remote provider; base URL and key come from the
/// environment, everything else from stage parameters.
pub(crate) fn remote_endpoint(cfg: &StageConfig<'_>, model_key: &str) -> Result<EndpointConfig, ComponentError> {
    let model = cfg
        .param(model_key)
        .and_then(|v| v.as_str())
        .ok_or_else(|| cfg.config_error(model_key, "remote providers need a model name"))?;
    let mut endpoint = EndpointConfig::from_env(model)?;
    endpoint.batch_size = cfg.usize_param("batch_size", endpoint.batch_size)?.max(1);
    endpoint.max_in_flight = cfg.usize_param("max_in_flight", endpoint.max_in_flight)?.max(1);
    let timeout_ms = cfg.usize_param("timeout_ms", endpoint.timeout.as_millis() as usize)?;
    endpoint.timeout = std::time::Duration::from_millis(timeout_ms as u64);
    Ok(endpoint)
}

/// Embeds the `text_prop` of every element of its domain.
pub struct Embedder {
    provider: EmbeddingProvider,
    text_prop: String,
}

impl Embedder {
    pub fn from_config(cfg: &StageConfig<'_>) -> Result<Self, ComponentError> {
        if cfg.input(0) != cfg.output(0) {
            return Err(cfg.config_error("inputs", "embedder reads and writes the same domain"));
        }
        let dim = cfg
            .dim_of(cfg.output(0))
            .ok_or_else(|| cfg.config_error("outputs", "target domain declares no dim"))?;
        Ok(Self {
            provider: EmbeddingProvider::from_config(cfg, dim)?,
            text_prop: cfg.str_param("text_prop", "text")?.to_string(),
        })
    }
}

impl Component for Embedder {
    fn index(&mut self, ctx: &mut IndexContext<'_>) -> Result<(), ComponentError> {
        let domain = ctx.outputs[0].clone();
        let (ids, texts): (Vec<_>, Vec<String>) = ctx
            .store
            .elements_in(&domain)?
            .into_iter()
            .map(|e| {
                let text = e.prop(&self.text_prop).and_then(|v| v.as_str()).unwrap_or("");
                (e.id(), text.to_string())
            })
            .unzip();
        let vectors = self.provider.embed(&texts)?;
        if vectors.len() != ids.len() {
            return Err(ComponentError::Failed(format!(
                "provider returned {} vectors for {} texts",
                vectors.len(),
                ids.len()
            )));
        }
        for (id, v) in ids.into_iter().zip(vectors) {
            ctx.store.set_embedding(id, v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dem::cosine_similarity;

    fn one(s: &str) -> Vec<f64> {
        embed_stub(&[s.to_string()], 64).remove(0)
    }

    #[test]
    fn deterministic_and_normalized() {
        assert_eq!(one("abc"), one("abc"));
        let v = one("the cat sat");
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((cosine_similarity(&v, &one("the cat sat")) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let cat = one("cat");
        assert!(cosine_similarity(&cat, &one("cat dog")) > cosine_similarity(&cat, &one("zebra quark")));
    }

    #[test]
    fn empty_text_is_zero_vector() {
        assert!(one("").iter().all(|x| *x == 0.0));
        assert_eq!(cosine_similarity(&one(""), &one("cat")), 0.0);
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        assert_eq!(one("Paris, France."), one("paris france"));
    }
}
