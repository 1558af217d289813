use std::collections::BTreeSet;

use super::embedding::remote_endpoint;
use crate::provider::{chat_completion, ChatMessage, EndpointConfig, ProviderError};
use crate::runtime::{
    AccessError, Component, ComponentError, QueryContext, ScratchValue, StageConfig, StoreRead, ANSWER,
    RETRIEVED,
};
use crate::text::normalized_tokens;

pub const ANSWER_PROMPT: &str = "Answer the question using only the numbered context passages. \
Reply with a short answer and nothing else. If the context does not contain the answer, reply with your best guess.";

/// Stands in for the passage list when retrieval returned nothing.
pub const NO_CONTEXT: &str = "[no context]";

/// Sentences of `text`: split after `.`, `!` or `?` when followed by
/// whitespace or the end, trimmed, empties dropped.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        let boundary = matches!(c, '.' | '!' | '?')
            && chars.get(k + 1).is_none_or(|&(_, next)| next.is_whitespace());
        if boundary {
            out.push(&text[start..i + c.len_utf8()]);
            start = i + c.len_utf8();
        }
    }
    out.push(&text[start..]);
    out.into_iter().map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// Extractive answer: the context sentence sharing the most distinct
/// normalized tokens with the question, earliest on ties.
pub fn generate_stub(question: &str, contexts: &[String]) -> String {
    let q: BTreeSet<String> = normalized_tokens(question).into_iter().collect();
    let mut best: Option<(usize, &str)> = None;
    for sentence in contexts.iter().flat_map(|c| sentences(c)) {
        let overlap = normalized_tokens(sentence)
            .into_iter()
            .collect::<BTreeSet<_>>()
            .intersection(&q)
            .count();
        if best.is_none_or(|(b, _)| overlap > b) {
            best = Some((overlap, sentence));
        }
    }
    best.map(|(_, s)| s.to_string()).unwrap_or_default()
}

/// The user message sent to the chat model.
pub fn answer_prompt(question: &str, contexts: &[String]) -> String {
    let mut body = String::from("Context:\n");
    if contexts.is_empty() {
        body.push_str(NO_CONTEXT);
        body.push('\n');
    }
    for (i, c) in contexts.iter().enumerate() {
        body.push_str(&format!("[{}] {}\n", i + 1, c));
    }
    body.push_str(&format!("\nQuestion: {question}\nAnswer:"));
    body
}

pub fn generate_remote(question: &str, contexts: &[String], endpoint: &EndpointConfig) -> Result<String, ProviderError> {
    let messages = [ChatMessage::system(ANSWER_PROMPT), ChatMessage::user(answer_prompt(question, contexts))];
    Ok(chat_completion(&messages, endpoint)?.trim().to_string())
}

enum Backend {
    Stub,
    Remote(EndpointConfig),
}

/// Answers from the `text` of the top retrieved elements of its input
/// domain, in rank order.
pub struct Generator {
    backend: Backend,
    top_k: usize,
}

impl Generator {
    pub fn from_config(cfg: &StageConfig<'_>) -> Result<Self, ComponentError> {
        let backend = match cfg.str_param("generator", "stub")? {
            "stub" => Backend::Stub,
            "remote" => Backend::Remote(remote_endpoint(cfg, "model")?),
            other => return Err(cfg.config_error("generator", &format!("unknown generator `{other}`"))),
        };
        Ok(Self { backend, top_k: cfg.usize_param("top_k", 5)? })
    }
}

impl Component for Generator {
    fn query(&self, ctx: &mut QueryContext<'_>) -> Result<(), ComponentError> {
        let mut contexts = Vec::new();
        for &(id, _) in ctx.scratch.hits(RETRIEVED).unwrap_or(&[]) {
            if contexts.len() == self.top_k {
                break;
            }
            let element = match ctx.store.element(id) {
                Ok(e) => e,
                // hits from another domain (an entity retriever) carry no passage
                Err(AccessError::Denied { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            if let Some(text) = element.prop("text").and_then(|v| v.as_str()) {
                contexts.push(text.to_string());
            }
        }
        let answer = match &self.backend {
            Backend::Stub => generate_stub(&ctx.query.question, &contexts),
            Backend::Remote(endpoint) => generate_remote(&ctx.query.question, &contexts, endpoint)?,
        };
        ctx.scratch.set(ANSWER, ScratchValue::Text(answer));
        Ok(())
    }
}
