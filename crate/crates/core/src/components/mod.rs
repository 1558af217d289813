//! The built-in component library.

mod chunker;
mod embedding;
mod generator;
mod ppr;
mod retriever;
mod synonyms;
mod triples;

pub use chunker::{chunk_text, stride, windows, Chunker, Span};
pub use embedding::{embed_stub, Embedder, EmbeddingProvider};
pub use generator::{answer_prompt, generate_remote, generate_stub, sentences, Generator, ANSWER_PROMPT, NO_CONTEXT};
pub use ppr::{
    link_query_entities, ppr, query_entities, rank_chunks_by_ppr, EntityGraph, PprError, PprParams,
    PprRetriever,
};
pub use retriever::VectorRetriever;
pub use synonyms::{build_synonym_edges, materialize_synonyms, SimilarityMatrix, SynonymLinker};
pub use triples::{extract_triples_stub, Triple, TripleExtractor, EXTRACTION_PROMPT};

use crate::runtime::{Component, ComponentError, ComponentRegistry, Contract, Factory, Phase, Role, StageConfig};

fn boxed<C: Component + 'static>(make: fn(&StageConfig<'_>) -> Result<C, ComponentError>) -> Factory {
    Box::new(move |cfg| Ok(Box::new(make(cfg)?) as Box<dyn Component>))
}

/// Registry holding every built-in component kind.
pub fn builtin_registry() -> ComponentRegistry {
    use Phase::{Index, Query};
    let mut r = ComponentRegistry::new();
    let mut add = |kind: &str, contract: Contract, factory| {
        r.register(kind, contract, factory).expect("builtin kinds are distinct");
    };
    add("chunker", Contract::new(Index, vec![], vec![Role::any("chunks")]), boxed(Chunker::from_config));
    add(
        "embedder",
        Contract::new(Index, vec![Role::indexed("target")], vec![Role::indexed("target")]),
        boxed(Embedder::from_config),
    );
    add(
        "triple_extractor",
        Contract::new(Index, vec![Role::any("chunks")], vec![Role::indexed("entities"), Role::any("triples")]),
        boxed(TripleExtractor::from_config),
    );
    add(
        "synonym_linker",
        Contract::new(Index, vec![Role::indexed("entities")], vec![Role::any("synonyms")]),
        boxed(SynonymLinker::from_config),
    );
    add(
        "vector_retriever",
        Contract::new(Query, vec![Role::indexed("corpus")], vec![]),
        boxed(VectorRetriever::from_config),
    );
    add(
        "ppr_retriever",
        Contract::new(
            Query,
            vec![Role::indexed("entities"), Role::any("triples"), Role::any("synonyms"), Role::any("chunks")],
            vec![],
        ),
        boxed(PprRetriever::from_config),
    );
    add("generator", Contract::new(Query, vec![Role::any("passages")], vec![]), boxed(Generator::from_config));
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_kinds() {
        let r = builtin_registry();
        let kinds: Vec<&str> = r.kinds().collect();
        assert_eq!(
            kinds,
            vec!["chunker", "embedder", "generator", "ppr_retriever", "synonym_linker", "triple_extractor", "vector_retriever"]
        );
    }
}
