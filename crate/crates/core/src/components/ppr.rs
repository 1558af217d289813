use std::collections::{BTreeMap, HashMap};

use super::embedding::EmbeddingProvider;
use super::triples::extract_triples_stub;
use crate::dem::ElementId;
use crate::runtime::{
    AccessError, Component, ComponentError, QueryContext, ScratchValue, StageConfig, StoreRead,
    StoreReader, RETRIEVED,
};
use crate::text::strip_punctuation_lower;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PprParams {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub link_threshold: f64,
}

impl Default for PprParams {
    fn default() -> Self {
        Self { damping: 0.5, tolerance: 1e-8, max_iterations: 100, link_threshold: 0.8 }
    }
}

impl PprParams {
    pub fn check(&self) -> Result<(), PprError> {
        let ok = (0.0..=1.0).contains(&self.damping)
            && self.tolerance > 0.0
            && self.tolerance.is_finite()
            && self.max_iterations >= 1
            && (0.0..=1.0).contains(&self.link_threshold);
        if ok {
            Ok(())
        } else {
            Err(PprError::InvalidParams(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PprError {
    #[error("personalization vector is empty")]
    EmptySeeds,
    #[error("seed {0} is not a vertex of the graph")]
    UnknownSeed(ElementId),
    #[error("personalization masses must be nonnegative and sum to 1, got sum {0}")]
    InvalidSeeds(f64),
    #[error("invalid PPR parameters: {0}")]
    InvalidParams(String),
}

/// Undirected multigraph over entity ids. Every edge element contributes
/// one undirected pair; parallel edges count with multiplicity.
#[derive(Debug, Clone, Default)]
pub struct EntityGraph {
    vertices: Vec<ElementId>,
    position: HashMap<ElementId, usize>,
    adjacency: Vec<Vec<usize>>,
}

impl EntityGraph {
    pub fn new(vertices: impl IntoIterator<Item = ElementId>) -> Self {
        let mut g = Self::default();
        for v in vertices {
            g.add_vertex(v);
        }
        g
    }

    pub fn add_vertex(&mut self, v: ElementId) -> usize {
        if let Some(&i) = self.position.get(&v) {
            return i;
        }
        self.position.insert(v, self.vertices.len());
        self.vertices.push(v);
        self.adjacency.push(Vec::new());
        self.vertices.len() - 1
    }

    /// Adds the undirected edge `a – b`, creating missing vertices. Self
    /// loops are ignored.
    pub fn add_edge(&mut self, a: ElementId, b: ElementId) {
        if a == b {
            return;
        }
        let (i, j) = (self.add_vertex(a), self.add_vertex(b));
        self.adjacency[i].push(j);
        self.adjacency[j].push(i);
    }

    /// Vertices are the elements of `entities`; each element of every
    /// `edge_domains` domain with two entity children adds an edge.
    pub fn from_store<S: StoreRead + ?Sized>(
        store: &S,
        entities: &str,
        edge_domains: &[&str],
    ) -> Result<Self, AccessError> {
        let mut g = Self::new(store.elements_in(entities)?.iter().map(|e| e.id()));
        for domain in edge_domains {
            for e in store.elements_in(domain)? {
                if let [a, b] = e.children() {
                    if g.position.contains_key(a) && g.position.contains_key(b) {
                        g.add_edge(*a, *b);
                    }
                }
            }
        }
        Ok(g)
    }

    pub fn vertices(&self) -> &[ElementId] {
        &self.vertices
    }

    pub fn degree(&self, v: ElementId) -> Option<usize> {
        self.position.get(&v).map(|&i| self.adjacency[i].len())
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Personalized PageRank by power iteration:
/// `s ← d·M·s + (1−d)·p` from `s = p`, where `M` spreads each vertex's mass
/// uniformly over its edges and isolated vertices return their mass to `p`.
/// Stops when the L1 change drops below the tolerance or after
/// `max_iterations` steps.
pub fn ppr(
    graph: &EntityGraph,
    seeds: &BTreeMap<ElementId, f64>,
    params: &PprParams,
) -> Result<BTreeMap<ElementId, f64>, PprError> {
    params.check()?;
    if seeds.is_empty() {
        return Err(PprError::EmptySeeds);
    }
    let n = graph.len();
    let mut p = vec![0.0; n];
    let mut total = 0.0;
    for (id, &mass) in seeds {
        let &i = graph.position.get(id).ok_or(PprError::UnknownSeed(*id))?;
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(PprError::InvalidSeeds(mass));
        }
        p[i] += mass;
        total += mass;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(PprError::InvalidSeeds(total));
    }

    let d = params.damping;
    let mut s = p.clone();
    let mut next = vec![0.0; n];
    for _ in 0..params.max_iterations {
        let mut dangling = 0.0;
        next.iter_mut().for_each(|x| *x = 0.0);
        for (j, out) in graph.adjacency.iter().enumerate() {
            if out.is_empty() {
                dangling += s[j];
                continue;
            }
            let share = s[j] / out.len() as f64;
            for &i in out {
                next[i] += share;
            }
        }
        let mut change = 0.0;
        for i in 0..n {
            let v = d * (next[i] + dangling * p[i]) + (1.0 - d) * p[i];
            change += (v - s[i]).abs();
            next[i] = v;
        }
        std::mem::swap(&mut s, &mut next);
        if change < params.tolerance {
            break;
        }
    }
    Ok(graph.vertices.iter().copied().zip(s).collect())
}

/// Personalization from query entity vectors: each vector's nearest stored
/// entity contributes its cosine when it clears `link_threshold`. Masses are
/// summed per entity and normalized; empty when nothing clears.
pub fn link_query_entities<S: StoreRead + ?Sized>(
    store: &S,
    entities: &str,
    query_vectors: &[Vec<f64>],
    link_threshold: f64,
) -> Result<BTreeMap<ElementId, f64>, AccessError> {
    let mut seeds: BTreeMap<ElementId, f64> = BTreeMap::new();
    for q in query_vectors {
        if let Some(&(id, sim)) = store.nearest(entities, q, 1)?.first() {
            if sim >= link_threshold && sim > 0.0 {
                *seeds.entry(id).or_insert(0.0) += sim;
            }
        }
    }
    Ok(normalize_masses(seeds))
}

fn normalize_masses(mut seeds: BTreeMap<ElementId, f64>) -> BTreeMap<ElementId, f64> {
    seeds.retain(|_, m| *m > 0.0);
    let total: f64 = seeds.values().sum();
    seeds.values_mut().for_each(|m| *m /= total);
    seeds
}

/// Chunks ranked by the summed score of the entities they are parents of.
/// Zero-score chunks are dropped; ties keep creation order.
pub fn rank_chunks_by_ppr<S: StoreRead + ?Sized>(
    store: &S,
    chunks: &str,
    entity_scores: &BTreeMap<ElementId, f64>,
) -> Result<Vec<(ElementId, f64)>, AccessError> {
    let mut ranked = Vec::new();
    for chunk in store.elements_in(chunks)? {
        let score: f64 = chunk
            .children()
            .iter()
            .filter_map(|c| entity_scores.get(c))
            .sum();
        if score > 0.0 {
            ranked.push((chunk.id(), score));
        }
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(ranked)
}

const QUESTION_WORDS: &[&str] = &[
    "what", "which", "who", "whom", "whose", "where", "when", "why", "how", "is", "are", "was",
    "were", "did", "do", "does", "in", "of", "the", "a", "an", "and", "or", "name", "tell",
];

/// Candidate entity surfaces in a question: the subjects and objects of any
/// `(A; R; B)` patterns, otherwise each run of capitalized tokens with
/// question words removed.
pub fn query_entities(question: &str) -> Vec<String> {
    let triples = extract_triples_stub(question);
    if !triples.is_empty() {
        return triples.into_iter().flat_map(|t| [t.subject, t.object]).collect();
    }
    let mut out = Vec::new();
    let mut run: Vec<String> = Vec::new();
    for raw in question.split_whitespace() {
        let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
        let capital = word.chars().next().is_some_and(char::is_uppercase);
        let stop = QUESTION_WORDS.contains(&strip_punctuation_lower(word).as_str());
        if capital && !stop {
            run.push(word.to_string());
        } else if !run.is_empty() {
            out.push(run.join(" "));
            run.clear();
        }
        // a run also ends where the token carries trailing punctuation
        if !run.is_empty() && raw.ends_with(|c: char| ",;:?!.".contains(c)) {
            out.push(run.join(" "));
            run.clear();
        }
    }
    if !run.is_empty() {
        out.push(run.join(" "));
    }
    out
}

/// Graph retrieval over entities, triple edges and synonym edges, seeded
/// from the entities named in the question.
pub struct PprRetriever {
    params: PprParams,
    top_k: usize,
    entity_embeddings: EmbeddingProvider,
    chunk_embeddings: Option<EmbeddingProvider>,
    graph: EntityGraph,
}

impl PprRetriever {
    pub fn from_config(cfg: &StageConfig<'_>) -> Result<Self, ComponentError> {
        let defaults = PprParams::default();
        let params = PprParams {
            damping: cfg.f64_param("damping", defaults.damping)?,
            tolerance: cfg.f64_param("tolerance", defaults.tolerance)?,
            max_iterations: cfg.usize_param("max_iterations", defaults.max_iterations)?,
            link_threshold: cfg.f64_param("link_threshold", defaults.link_threshold)?,
        };
        params.check().map_err(|e| cfg.config_error("damping", &e.to_string()))?;
        let entity_dim = cfg
            .dim_of(cfg.input(0))
            .ok_or_else(|| cfg.config_error("inputs", "entity domain declares no dim"))?;
        let chunk_embeddings = match cfg.spec.domain(cfg.input(3)) {
            Some(d) if d.indexed => Some(EmbeddingProvider::from_config(cfg, d.dim.unwrap_or(0))?),
            _ => None,
        };
        Ok(Self {
            params,
            top_k: cfg.usize_param("top_k", 5)?,
            entity_embeddings: EmbeddingProvider::from_config(cfg, entity_dim)?,
            chunk_embeddings,
            graph: EntityGraph::default(),
        })
    }

    fn seeds(&self, ctx: &QueryContext<'_>) -> Result<BTreeMap<ElementId, f64>, ComponentError> {
        let surfaces = query_entities(&ctx.query.question);
        let vectors = self.entity_embeddings.embed(&surfaces)?;
        let seeds = link_query_entities(&ctx.store, &ctx.inputs[0], &vectors, self.params.link_threshold)?;
        if !seeds.is_empty() {
            return Ok(seeds);
        }
        // fall back to entity hits left by an earlier dense retriever
        let prior: BTreeMap<ElementId, f64> = ctx
            .scratch
            .hits(RETRIEVED)
            .unwrap_or(&[])
            .iter()
            .filter(|(id, _)| self.graph.position.contains_key(id))
            .map(|&(id, s)| (id, s.max(0.0)))
            .collect();
        Ok(normalize_masses(prior))
    }
}

impl Component for PprRetriever {
    fn prepare(&mut self, store: StoreReader<'_>, inputs: &[String]) -> Result<(), ComponentError> {
        self.graph = EntityGraph::from_store(&store, &inputs[0], &[&inputs[1], &inputs[2]])?;
        Ok(())
    }

    fn query(&self, ctx: &mut QueryContext<'_>) -> Result<(), ComponentError> {
        let seeds = self.seeds(ctx)?;
        let hits = if !seeds.is_empty() {
            let scores = ppr(&self.graph, &seeds, &self.params)
                .map_err(|e| ComponentError::Failed(e.to_string()))?;
            let mut ranked = rank_chunks_by_ppr(&ctx.store, &ctx.inputs[3], &scores)?;
            ranked.truncate(self.top_k);
            ranked
        } else if let Some(provider) = &self.chunk_embeddings {
            let q = provider.embed(std::slice::from_ref(&ctx.query.question))?.remove(0);
            ctx.store.nearest(&ctx.inputs[3], &q, self.top_k)?
        } else {
            Vec::new()
        };
        ctx.scratch.set(RETRIEVED, ScratchValue::Hits(hits));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dem::{DemStore, Props};
    use proptest::prelude::*;

    fn id(n: u64) -> ElementId {
        ElementId::new(n)
    }

    fn graph(n: u64, edges: &[(u64, u64)]) -> EntityGraph {
        let mut g = EntityGraph::new((0..n).map(id));
        for &(a, b) in edges {
            g.add_edge(id(a), id(b));
        }
        g
    }

    fn params(d: f64) -> PprParams {
        PprParams { damping: d, ..PprParams::default() }
    }

    /// Dense reference: builds the full walk matrix with dangling columns
    /// replaced by `p`, then iterates with the same stopping rule.
    fn dense_oracle(n: usize, edges: &[(u64, u64)], p: &[f64], prm: &PprParams) -> Vec<f64> {
        let mut a = vec![vec![0.0; n]; n];
        for &(x, y) in edges {
            if x != y {
                a[y as usize][x as usize] += 1.0;
                a[x as usize][y as usize] += 1.0;
            }
        }
        let mut m = vec![vec![0.0; n]; n];
        for j in 0..n {
            let deg: f64 = (0..n).map(|i| a[i][j]).sum();
            for i in 0..n {
                m[i][j] = if deg == 0.0 { p[i] } else { a[i][j] / deg };
            }
        }
        let mut s = p.to_vec();
        for _ in 0..prm.max_iterations {
            let next: Vec<f64> = (0..n)
                .map(|i| {
                    let walk: f64 = (0..n).map(|j| m[i][j] * s[j]).sum();
                    prm.damping * walk + (1.0 - prm.damping) * p[i]
                })
                .collect();
            let change: f64 = next.iter().zip(&s).map(|(a, b)| (a - b).abs()).sum();
            s = next;
            if change < prm.tolerance {
                break;
            }
        }
        s
    }

    #[test]
    fn isolated_vertex_keeps_all_mass() {
        let g = graph(1, &[]);
        for d in [0.0, 0.15, 0.5, 0.85, 1.0] {
            let s = ppr(&g, &BTreeMap::from([(id(0), 1.0)]), &params(d)).unwrap();
            assert!((s[&id(0)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let g = graph(2, &[(0, 1)]);
        let seeds = BTreeMap::from([(id(0), 0.5), (id(1), 0.5)]);
        for d in [0.0, 0.3, 0.85] {
            let s = ppr(&g, &seeds, &params(d)).unwrap();
            assert!((s[&id(0)] - 0.5).abs() < 1e-12);
            assert!((s[&id(1)] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn path_matches_dense_oracle() {
        let edges = [(0, 1), (1, 2)];
        let g = graph(3, &edges);
        let prm = params(0.5);
        let s = ppr(&g, &BTreeMap::from([(id(0), 1.0)]), &prm).unwrap();
        let want = dense_oracle(3, &edges, &[1.0, 0.0, 0.0], &prm);
        for i in 0..3 {
            assert!((s[&id(i as u64)] - want[i]).abs() < 1e-8, "{s:?} vs {want:?}");
        }
        // stationary point of the a–b–c walk with restart to a at d = 1/2
        let exact = [7.0 / 12.0, 1.0 / 3.0, 1.0 / 12.0];
        for i in 0..3 {
            assert!((s[&id(i as u64)] - exact[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_damping_returns_personalization() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let seeds = BTreeMap::from([(id(0), 0.25), (id(2), 0.75)]);
        let s = ppr(&g, &seeds, &params(0.0)).unwrap();
        assert_eq!(s[&id(0)], 0.25);
        assert_eq!(s[&id(1)], 0.0);
        assert_eq!(s[&id(2)], 0.75);
        assert_eq!(s[&id(3)], 0.0);
    }

    #[test]
    fn seed_errors() {
        let g = graph(2, &[(0, 1)]);
        assert_eq!(ppr(&g, &BTreeMap::new(), &params(0.5)), Err(PprError::EmptySeeds));
        assert_eq!(
            ppr(&g, &BTreeMap::from([(id(9), 1.0)]), &params(0.5)),
            Err(PprError::UnknownSeed(id(9)))
        );
        assert!(matches!(
            ppr(&g, &BTreeMap::from([(id(0), 0.4)]), &params(0.5)),
            Err(PprError::InvalidSeeds(_))
        ));
        assert!(matches!(
            ppr(&g, &BTreeMap::from([(id(0), 1.0)]), &params(1.5)),
            Err(PprError::InvalidParams(_))
        ));
    }

    fn entity_store(vectors: &[[f64; 8]]) -> DemStore {
        let mut store = DemStore::new();
        store.create_domain("entities", true, Some(8)).unwrap();
        for v in vectors {
            let e = store.create_element("entities", Props::new(), 1.0).unwrap();
            store.set_embedding(e, v.to_vec()).unwrap();
        }
        store
    }

    fn unit(i: usize) -> [f64; 8] {
        let mut v = [0.0; 8];
        v[i] = 1.0;
        v
    }

    #[test]
    fn exact_match_links_with_full_mass() {
        let store = entity_store(&[unit(0), unit(1)]);
        let seeds = link_query_entities(&store, "entities", &[unit(1).to_vec()], 0.9).unwrap();
        assert_eq!(seeds, BTreeMap::from([(id(1), 1.0)]));
    }

    #[test]
    fn nothing_above_threshold_links_nothing() {
        let store = entity_store(&[unit(0), unit(1)]);
        let seeds = link_query_entities(&store, "entities", &[unit(2).to_vec()], 0.5).unwrap();
        assert!(seeds.is_empty());
    }

    #[test]
    fn equal_cosines_split_mass() {
        let store = entity_store(&[unit(0), unit(1)]);
        // cos = 0.8 against each stored axis
        let q0 = vec![0.8, 0.0, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0];
        let q1 = vec![0.0, 0.8, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0];
        let seeds = link_query_entities(&store, "entities", &[q0, q1], 0.5).unwrap();
        assert!((seeds[&id(0)] - 0.5).abs() < 1e-12);
        assert!((seeds[&id(1)] - 0.5).abs() < 1e-12);
    }

    fn chunk_store() -> (DemStore, Vec<ElementId>, Vec<ElementId>) {
        let mut store = DemStore::new();
        store.create_domain("chunks", false, None).unwrap();
        store.create_domain("entities", false, None).unwrap();
        let chunks: Vec<_> = (0..3).map(|_| store.create_element("chunks", Props::new(), 1.0).unwrap()).collect();
        let ents: Vec<_> = (0..4).map(|_| store.create_element("entities", Props::new(), 1.0).unwrap()).collect();
        // c0: e0 e1, c1: e1 e2, c2: e3
        for (c, e) in [(0, 0), (0, 1), (1, 1), (1, 2), (2, 3)] {
            store.link(chunks[c], ents[e]).unwrap();
        }
        (store, chunks, ents)
    }

    #[test]
    fn chunk_scores_sum_member_entities() {
        let (store, c, e) = chunk_store();
        let scores = BTreeMap::from([(e[0], 0.1), (e[1], 0.3), (e[2], 0.4), (e[3], 0.0)]);
        let ranked = rank_chunks_by_ppr(&store, "chunks", &scores).unwrap();
        let got: Vec<ElementId> = ranked.iter().map(|h| h.0).collect();
        assert_eq!(got, vec![c[1], c[0]]);
        assert!((ranked[0].1 - 0.7).abs() < 1e-12);
        assert!((ranked[1].1 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn single_scored_entity_and_all_zero() {
        let (store, c, e) = chunk_store();
        let ranked = rank_chunks_by_ppr(&store, "chunks", &BTreeMap::from([(e[3], 1.0)])).unwrap();
        assert_eq!(ranked, vec![(c[2], 1.0)]);
        let zeros: BTreeMap<_, _> = e.iter().map(|&x| (x, 0.0)).collect();
        assert!(rank_chunks_by_ppr(&store, "chunks", &zeros).unwrap().is_empty());
    }

    #[test]
    fn ties_keep_creation_order() {
        let (store, c, e) = chunk_store();
        let ranked = rank_chunks_by_ppr(&store, "chunks", &BTreeMap::from([(e[0], 0.5), (e[3], 0.5)])).unwrap();
        assert_eq!(ranked.iter().map(|h| h.0).collect::<Vec<_>>(), vec![c[0], c[2]]);
    }

    #[test]
    fn question_entities() {
        assert_eq!(query_entities("Where was Marie Curie born?"), vec!["Marie Curie"]);
        assert_eq!(
            query_entities("Which river flows through Vienna, Austria?"),
            vec!["Vienna", "Austria"]
        );
        assert_eq!(query_entities("(Paris; capital_of; France)"), vec!["Paris", "France"]);
        assert!(query_entities("what is this").is_empty());
    }

    fn random_graph() -> impl Strategy<Value = (usize, Vec<(u64, u64)>, Vec<f64>)> {
        (1usize..50).prop_flat_map(|n| {
            let edges = prop::collection::vec((0..n as u64, 0..n as u64), 0..(3 * n));
            let weights = prop::collection::vec(0.0f64..1.0, n);
            (Just(n), edges, weights)
        })
    }

    fn personalization(w: &[f64]) -> Vec<f64> {
        let mut p = w.to_vec();
        if p.iter().sum::<f64>() <= 1e-6 {
            p[0] = 1.0;
        }
        let t: f64 = p.iter().sum();
        p.iter().map(|x| x / t).collect()
    }

    fn seed_map(p: &[f64]) -> BTreeMap<ElementId, f64> {
        p.iter().enumerate().filter(|(_, m)| **m > 0.0).map(|(i, &m)| (id(i as u64), m)).collect()
    }

    proptest! {
        #[test]
        fn mass_is_conserved(
            (n, edges, w) in (1usize..200).prop_flat_map(|n| (
                Just(n),
                prop::collection::vec((0..n as u64, 0..n as u64), 0..(3 * n)),
                prop::collection::vec(0.0f64..1.0, n),
            )),
            d in prop::sample::select(vec![0.0, 0.15, 0.5, 0.85, 1.0 - 1e-9]),
        ) {
            let p = personalization(&w);
            let s = ppr(&graph(n as u64, &edges), &seed_map(&p), &params(d)).unwrap();
            prop_assert!((s.values().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(s.values().all(|&x| x >= 0.0));
        }

        #[test]
        fn matches_dense_power_iteration(
            (n, edges, w) in random_graph(),
            d in prop::sample::select(vec![0.0, 0.15, 0.5, 0.85, 1.0 - 1e-9]),
        ) {
            let p = personalization(&w);
            let prm = params(d);
            let s = ppr(&graph(n as u64, &edges), &seed_map(&p), &prm).unwrap();
            let want = dense_oracle(n, &edges, &p, &prm);
            for i in 0..n {
                prop_assert!((s[&id(i as u64)] - want[i]).abs() < 1e-8);
            }
        }
    }
}
