use crate::dem::{PropValue, Props};
use crate::runtime::{Component, ComponentError, IndexContext, StageConfig, StoreWrite};
use crate::text::whitespace_tokens;

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// Window step for a chunk size and overlap ratio, never below one token.
pub fn stride(chunk_size: usize, overlap_ratio: f64) -> usize {
    // the epsilon absorbs representation error such as 10 * (1 - 0.3)
    ((chunk_size as f64 * (1.0 - overlap_ratio) + 1e-9).floor() as usize).max(1)
}

/// Sliding windows over `token_count` tokens. Windows start at multiples of
/// the stride and stop with the first window that reaches the last token.
pub fn windows(token_count: usize, chunk_size: usize, overlap_ratio: f64) -> Vec<Span> {
    assert!(chunk_size >= 1, "chunk_size must be at least 1");
    assert!((0.0..1.0).contains(&overlap_ratio), "overlap_ratio must lie in [0, 1)");
    let step = stride(chunk_size, overlap_ratio);
    let mut out = Vec::new();
    let mut start = 0;
    while start < token_count {
        let end = (start + chunk_size).min(token_count);
        out.push(Span { start, end });
        if end == token_count {
            break;
        }
        start += step;
    }
    out
}

/// Chunk spans of `text` over whitespace tokens.
pub fn chunk_text(text: &str, chunk_size: usize, overlap_ratio: f64) -> Vec<Span> {
    windows(whitespace_tokens(text).len(), chunk_size, overlap_ratio)
}

pub struct Chunker {
    chunk_size: usize,
    overlap_ratio: f64,
}

impl Chunker {
    pub fn from_config(cfg: &StageConfig<'_>) -> Result<Self, ComponentError> {
        let chunk_size = cfg.usize_param("chunk_size", 128)?;
        if chunk_size == 0 {
            return Err(cfg.config_error("chunk_size", "must be at least 1"));
        }
        let overlap_ratio = cfg.f64_param("overlap_ratio", 0.0)?;
        if !(0.0..1.0).contains(&overlap_ratio) {
            return Err(cfg.config_error("overlap_ratio", "must lie in [0, 1)"));
        }
        Ok(Self { chunk_size, overlap_ratio })
    }
}

impl Component for Chunker {
    fn index(&mut self, ctx: &mut IndexContext<'_>) -> Result<(), ComponentError> {
        let domain = ctx.outputs[0].clone();
        let mut count = 0usize;
        for doc in ctx.corpus {
            let tokens = whitespace_tokens(&doc.text);
            for (i, span) in windows(tokens.len(), self.chunk_size, self.overlap_ratio)
                .into_iter()
                .enumerate()
            {
                let props = Props::from([
                    ("text".to_string(), PropValue::from(tokens[span.start..span.end].join(" "))),
                    ("doc_id".to_string(), PropValue::from(doc.doc_id.as_str())),
                    ("chunk".to_string(), PropValue::Int(i as i64)),
                    ("start_token".to_string(), PropValue::Int(span.start as i64)),
                    ("end_token".to_string(), PropValue::Int(span.end as i64)),
                ]);
                ctx.store.create_element(&domain, props, 1.0)?;
                count += 1;
            }
        }
        ctx.artifacts.insert("chunks".into(), count.into());
        Ok(())
    }
}
