//! Domain-Element Model: atomic elements grouped into domains, linked by
//! bidirectional parent/child pointers, with a vector index per domain.
//!
//! An element with no children is a plain node. An element with exactly two
//! children acts as an edge between them, and one with more than two acts as
//! a hyperedge. The store is the shared data bus of a pipeline run.

mod index;
mod snapshot;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use index::{cosine_similarity, BruteForceIndex, VectorIndex};
pub use snapshot::SnapshotError;

/// Identity of an element. Ids are allocated sequentially, so comparing ids
/// compares creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(u64);

impl ElementId {
    pub fn new(raw: u64) -> Self {
        Self(raw)
    }

    pub fn get(self) -> u64 {
        self.0
    }

    fn slot(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::str::FromStr for ElementId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(ElementId)
    }
}

/// Scalar or string property value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl PropValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            PropValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            PropValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            PropValue::Int(v) => Some(*v as f64),
            PropValue::Float(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<&str> for PropValue {
    fn from(s: &str) -> Self {
        PropValue::Str(s.to_string())
    }
}

impl From<String> for PropValue {
    fn from(s: String) -> Self {
        PropValue::Str(s)
    }
}

impl From<i64> for PropValue {
    fn from(v: i64) -> Self {
        PropValue::Int(v)
    }
}

impl From<f64> for PropValue {
    fn from(v: f64) -> Self {
        PropValue::Float(v)
    }
}

impl From<bool> for PropValue {
    fn from(v: bool) -> Self {
        PropValue::Bool(v)
    }
}

pub type Props = BTreeMap<String, PropValue>;

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    id: ElementId,
    domain: String,
    weight: f64,
    props: Props,
    children: Vec<ElementId>,
    parents: Vec<ElementId>,
    embedding: Option<Vec<f64>>,
}

impl Element {
    pub fn id(&self) -> ElementId {
        self.id
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn props(&self) -> &Props {
        &self.props
    }

    pub fn prop(&self, key: &str) -> Option<&PropValue> {
        self.props.get(key)
    }

    pub fn children(&self) -> &[ElementId] {
        &self.children
    }

    pub fn parents(&self) -> &[ElementId] {
        &self.parents
    }

    pub fn embedding(&self) -> Option<&[f64]> {
        self.embedding.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    name: String,
    element_ids: Vec<ElementId>,
    indexed: bool,
    embedding_dim: Option<usize>,
}

impl Domain {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Member ids in creation order.
    pub fn element_ids(&self) -> &[ElementId] {
        &self.element_ids
    }

    pub fn indexed(&self) -> bool {
        self.indexed
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DemError {
    #[error("domain `{0}` already exists")]
    DuplicateDomain(String),
    #[error("indexed domain `{0}` needs an embedding dimension")]
    MissingDimension(String),
    #[error("domain `{0}` has embedding dimension 0")]
    ZeroDimension(String),
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("unknown element {0}")]
    UnknownElement(ElementId),
    #[error("element {0} cannot link to itself")]
    SelfLink(ElementId),
    #[error("vector has dimension {actual}, domain expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("domain `{0}` is not vector-indexed")]
    UnindexedDomain(String),
    #[error("embedding for element {0} contains a non-finite value")]
    NonFiniteEmbedding(ElementId),
}

/// One broken store invariant, as reported by [`DemStore::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `child` is listed under `parent` on one side of the link only.
    Bidirectionality {
        parent: ElementId,
        child: ElementId,
        detail: &'static str,
    },
    DuplicateLink { element: ElementId, other: ElementId },
    SelfLink(ElementId),
    DomainMembership {
        element: ElementId,
        claimed: String,
        listed_in: Option<String>,
    },
    EmbeddingDimension {
        element: ElementId,
        expected: Option<usize>,
        actual: usize,
    },
    IndexContents { domain: String, element: ElementId, detail: &'static str },
    DanglingReference { element: ElementId, missing: ElementId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Bidirectionality { parent, child, detail } => {
                write!(f, "bidirectionality: {parent} -> {child}: {detail}")
            }
            Violation::DuplicateLink { element, other } => {
                write!(f, "duplicate link between {element} and {other}")
            }
            Violation::SelfLink(e) => write!(f, "element {e} links to itself"),
            Violation::DomainMembership { element, claimed, listed_in } => write!(
                f,
                "domain membership: element {element} claims `{claimed}` but is listed in {listed_in:?}"
            ),
            Violation::EmbeddingDimension { element, expected, actual } => write!(
                f,
                "embedding of element {element} has dimension {actual}, domain declares {expected:?}"
            ),
            Violation::IndexContents { domain, element, detail } => {
                write!(f, "index of `{domain}` and element {element}: {detail}")
            }
            Violation::DanglingReference { element, missing } => {
                write!(f, "element {element} references missing element {missing}")
            }
        }
    }
}

/// The element store. Elements are never deleted, so ids stay dense and
/// double as creation order.
#[derive(Debug, Default)]
pub struct DemStore {
    domains: BTreeMap<String, Domain>,
    elements: Vec<Element>,
    indexes: BTreeMap<String, Box<dyn VectorIndex>>,
}

impl DemStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_domain(
        &mut self,
        name: &str,
        indexed: bool,
        embedding_dim: Option<usize>,
    ) -> Result<String, DemError> {
        if self.domains.contains_key(name) {
            return Err(DemError::DuplicateDomain(name.to_string()));
        }
        if embedding_dim == Some(0) {
            return Err(DemError::ZeroDimension(name.to_string()));
        }
        if indexed {
            let Some(dim) = embedding_dim else {
                return Err(DemError::MissingDimension(name.to_string()));
            };
            self.indexes
                .insert(name.to_string(), Box::new(BruteForceIndex::new(dim)));
        }
        self.domains.insert(
            name.to_string(),
            Domain {
                name: name.to_string(),
                element_ids: Vec::new(),
                indexed,
                embedding_dim,
            },
        );
        Ok(name.to_string())
    }

    pub fn create_element(
        &mut self,
        domain: &str,
        props: Props,
        weight: f64,
    ) -> Result<ElementId, DemError> {
        let dom = self
            .domains
            .get_mut(domain)
            .ok_or_else(|| DemError::UnknownDomain(domain.to_string()))?;
        let id = ElementId(self.elements.len() as u64);
        dom.element_ids.push(id);
        self.elements.push(Element {
            id,
            domain: domain.to_string(),
            weight,
            props,
            children: Vec::new(),
            parents: Vec::new(),
            embedding: None,
        });
        Ok(id)
    }

    /// Adds `child` under `parent` and `parent` over `child`. Idempotent.
    pub fn link(&mut self, parent: ElementId, child: ElementId) -> Result<(), DemError> {
        self.element(parent)?;
        self.element(child)?;
        if parent == child {
            return Err(DemError::SelfLink(parent));
        }
        let p = &mut self.elements[parent.slot()];
        if !p.children.contains(&child) {
            p.children.push(child);
        }
        let c = &mut self.elements[child.slot()];
        if !c.parents.contains(&parent) {
            c.parents.push(parent);
        }
        Ok(())
    }

    pub fn element(&self, id: ElementId) -> Result<&Element, DemError> {
        self.elements
            .get(id.slot())
            .ok_or(DemError::UnknownElement(id))
    }

    pub fn children(&self, id: ElementId) -> Result<&[ElementId], DemError> {
        Ok(self.element(id)?.children())
    }

    pub fn parents(&self, id: ElementId) -> Result<&[ElementId], DemError> {
        Ok(self.element(id)?.parents())
    }

    /// Members of a container element, in insertion order. Two members make
    /// an edge, more make a hyperedge; a leaf returns an empty slice.
    pub fn hyperedge_members(&self, id: ElementId) -> Result<&[ElementId], DemError> {
        self.children(id)
    }

    pub fn set_embedding(&mut self, id: ElementId, vector: Vec<f64>) -> Result<(), DemError> {
        let domain = self.element(id)?.domain.clone();
        let dom = &self.domains[&domain];
        if !dom.indexed {
            return Err(DemError::UnindexedDomain(domain));
        }
        let expected = dom.embedding_dim.expect("indexed domain has a dimension");
        if vector.len() != expected {
            return Err(DemError::DimensionMismatch { expected, actual: vector.len() });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(DemError::NonFiniteEmbedding(id));
        }
        self.indexes
            .get_mut(&domain)
            .expect("indexed domain has an index")
            .upsert(id, vector.clone());
        self.elements[id.slot()].embedding = Some(vector);
        Ok(())
    }

    /// Top-`k` elements of `domain` by cosine similarity to `query`,
    /// descending, ties broken by creation order.
    pub fn nearest(
        &self,
        domain: &str,
        query: &[f64],
        k: usize,
    ) -> Result<Vec<(ElementId, f64)>, DemError> {
        let index = self.index(domain)?;
        if query.len() != index.dim() {
            return Err(DemError::DimensionMismatch { expected: index.dim(), actual: query.len() });
        }
        Ok(index.search(query, k))
    }

    pub fn index(&self, domain: &str) -> Result<&dyn VectorIndex, DemError> {
        let dom = self
            .domains
            .get(domain)
            .ok_or_else(|| DemError::UnknownDomain(domain.to_string()))?;
        if !dom.indexed {
            return Err(DemError::UnindexedDomain(domain.to_string()));
        }
        Ok(self.indexes[domain].as_ref())
    }

    pub fn domain(&self, name: &str) -> Option<&Domain> {
        self.domains.get(name)
    }

    pub fn domains(&self) -> impl Iterator<Item = &Domain> {
        self.domains.values()
    }

    /// Elements of `domain` in creation order.
    pub fn elements_in<'a>(
        &'a self,
        domain: &str,
    ) -> Result<impl Iterator<Item = &'a Element> + 'a, DemError> {
        let dom = self
            .domains
            .get(domain)
            .ok_or_else(|| DemError::UnknownDomain(domain.to_string()))?;
        Ok(dom.element_ids.iter().map(move |id| &self.elements[id.slot()]))
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Full integrity sweep. Returns an empty list iff every invariant holds.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let exists = |id: ElementId| id.slot() < self.elements.len();

        for e in &self.elements {
            for (i, &c) in e.children.iter().enumerate() {
                if c == e.id {
                    out.push(Violation::SelfLink(e.id));
                    continue;
                }
                if !exists(c) {
                    out.push(Violation::DanglingReference { element: e.id, missing: c });
                    continue;
                }
                if e.children[..i].contains(&c) {
                    out.push(Violation::DuplicateLink { element: e.id, other: c });
                }
                if !self.elements[c.slot()].parents.contains(&e.id) {
                    out.push(Violation::Bidirectionality {
                        parent: e.id,
                        child: c,
                        detail: "child does not list parent",
                    });
                }
            }
            for (i, &p) in e.parents.iter().enumerate() {
                if p == e.id {
                    out.push(Violation::SelfLink(e.id));
                    continue;
                }
                if !exists(p) {
                    out.push(Violation::DanglingReference { element: e.id, missing: p });
                    continue;
                }
                if e.parents[..i].contains(&p) {
                    out.push(Violation::DuplicateLink { element: e.id, other: p });
                }
                if !self.elements[p.slot()].children.contains(&e.id) {
                    out.push(Violation::Bidirectionality {
                        parent: p,
                        child: e.id,
                        detail: "parent does not list child",
                    });
                }
            }

            let listed_in: Vec<&str> = self
                .domains
                .values()
                .filter(|d| d.element_ids.contains(&e.id))
                .map(|d| d.name.as_str())
                .collect();
            if listed_in != [e.domain.as_str()] {
                out.push(Violation::DomainMembership {
                    element: e.id,
                    claimed: e.domain.clone(),
                    listed_in: listed_in.first().map(|s| s.to_string()),
                });
            }

            if let Some(v) = &e.embedding {
                let expected = self.domains.get(&e.domain).and_then(|d| d.embedding_dim);
                if expected != Some(v.len()) {
                    out.push(Violation::EmbeddingDimension {
                        element: e.id,
                        expected,
                        actual: v.len(),
                    });
                }
            }
        }

        for dom in self.domains.values() {
            for &id in &dom.element_ids {
                if !exists(id) {
                    out.push(Violation::DanglingReference { element: id, missing: id });
                }
            }
            let Some(index) = self.indexes.get(&dom.name) else {
                continue;
            };
            let indexed = index.ids();
            for &id in &indexed {
                match self.elements.get(id.slot()) {
                    Some(e) if e.domain == dom.name && e.embedding.is_some() => {}
                    _ => out.push(Violation::IndexContents {
                        domain: dom.name.clone(),
                        element: id,
                        detail: "indexed but not an embedded member",
                    }),
                }
            }
            for &id in &dom.element_ids {
                if exists(id)
                    && self.elements[id.slot()].embedding.is_some()
                    && indexed.binary_search(&id).is_err()
                {
                    out.push(Violation::IndexContents {
                        domain: dom.name.clone(),
                        element: id,
                        detail: "embedded member missing from index",
                    });
                }
            }
        }
        out
    }

    #[cfg(test)]
    fn forge_child(&mut self, parent: ElementId, child: ElementId) {
        self.elements[parent.slot()].children.push(child);
    }

    #[cfg(test)]
    fn forge_domain(&mut self, id: ElementId, domain: &str) {
        self.elements[id.slot()].domain = domain.to_string();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(s: &str) -> Props {
        Props::from([("text".to_string(), PropValue::from(s))])
    }

    #[test]
    fn create_domain_cases() {
        let mut store = DemStore::new();
        assert_eq!(store.create_domain("chunks", true, Some(64)).unwrap(), "chunks");
        assert_eq!(store.index("chunks").unwrap().len(), 0);
        store.create_domain("entities", false, None).unwrap();
        assert!(!store.domain("entities").unwrap().indexed());
        assert_eq!(
            store.create_domain("chunks", false, None),
            Err(DemError::DuplicateDomain("chunks".into()))
        );
        assert_eq!(
            store.create_domain("x", true, None),
            Err(DemError::MissingDimension("x".into()))
        );
    }

    #[test]
    fn create_element_cases() {
        let mut store = DemStore::new();
        store.create_domain("chunks", false, None).unwrap();
        let a = store.create_element("chunks", text("hello world"), 1.0).unwrap();
        assert_eq!(store.len(), 1);
        let b = store.create_element("chunks", text("hello world"), 1.0).unwrap();
        assert_ne!(a, b);
        assert!(store.element(a).unwrap().children().is_empty());
        assert_eq!(store.domain("chunks").unwrap().element_ids(), &[a, b]);
        assert_eq!(
            store.create_element("nope", Props::new(), 1.0),
            Err(DemError::UnknownDomain("nope".into()))
        );
    }

    #[test]
    fn link_is_bidirectional_and_idempotent() {
        let mut store = DemStore::new();
        store.create_domain("d", false, None).unwrap();
        let e1 = store.create_element("d", Props::new(), 1.0).unwrap();
        let e2 = store.create_element("d", Props::new(), 1.0).unwrap();
        store.link(e1, e2).unwrap();
        assert_eq!(store.children(e1).unwrap(), &[e2]);
        assert_eq!(store.parents(e2).unwrap(), &[e1]);
        let before = store.element(e1).unwrap().clone();
        store.link(e1, e2).unwrap();
        assert_eq!(store.element(e1).unwrap(), &before);
        assert_eq!(store.parents(e2).unwrap(), &[e1]);
        assert_eq!(store.link(e1, e1), Err(DemError::SelfLink(e1)));
        assert_eq!(
            store.link(e1, ElementId(99)),
            Err(DemError::UnknownElement(ElementId(99)))
        );
    }

    #[test]
    fn hyperedge_readback() {
        let mut store = DemStore::new();
        store.create_domain("d", false, None).unwrap();
        let ids: Vec<_> = (0..4)
            .map(|_| store.create_element("d", Props::new(), 1.0).unwrap())
            .collect();
        let triple = ids[0];
        for &m in &ids[1..] {
            store.link(triple, m).unwrap();
        }
        assert_eq!(store.hyperedge_members(triple).unwrap(), &ids[1..]);
        assert!(store.hyperedge_members(ids[1]).unwrap().is_empty());
        assert!(matches!(
            store.hyperedge_members(ElementId(42)),
            Err(DemError::UnknownElement(_))
        ));
    }

    #[test]
    fn embedding_and_nearest() {
        let mut store = DemStore::new();
        store.create_domain("chunks", true, Some(64)).unwrap();
        store.create_domain("plain", false, None).unwrap();
        let a = store.create_element("chunks", Props::new(), 1.0).unwrap();
        let p = store.create_element("plain", Props::new(), 1.0).unwrap();
        let v: Vec<f64> = (0..64).map(|i| (i as f64).sin()).collect();
        store.set_embedding(a, v.clone()).unwrap();
        let hits = store.nearest("chunks", &v, 1).unwrap();
        assert_eq!(hits[0].0, a);
        assert!((hits[0].1 - 1.0).abs() < 1e-9);

        assert_eq!(
            store.set_embedding(a, vec![0.0; 32]),
            Err(DemError::DimensionMismatch { expected: 64, actual: 32 })
        );
        assert_eq!(
            store.set_embedding(p, vec![0.0; 64]),
            Err(DemError::UnindexedDomain("plain".into()))
        );
        assert!(matches!(
            store.nearest("plain", &v, 1),
            Err(DemError::UnindexedDomain(_))
        ));

        // overwrite leaves exactly one entry for `a`
        let w: Vec<f64> = (0..64).map(|i| (i as f64).cos()).collect();
        store.set_embedding(a, w.clone()).unwrap();
        assert_eq!(store.index("chunks").unwrap().ids(), vec![a]);
        assert_eq!(store.element(a).unwrap().embedding(), Some(&w[..]));
        assert!(store.validate().is_empty());
    }

    #[test]
    fn nearest_orthogonal_and_short_lists() {
        let mut store = DemStore::new();
        store.create_domain("d", true, Some(2)).unwrap();
        let a = store.create_element("d", Props::new(), 1.0).unwrap();
        store.set_embedding(a, vec![1.0, 0.0]).unwrap();
        let hits = store.nearest("d", &[0.0, 1.0], 5).unwrap();
        assert_eq!(hits, vec![(a, 0.0)]);
        // zero-norm query is defined as similarity 0
        assert_eq!(store.nearest("d", &[0.0, 0.0], 5).unwrap(), vec![(a, 0.0)]);
    }

    #[test]
    fn nearest_ties_follow_creation_order() {
        let mut store = DemStore::new();
        store.create_domain("d", true, Some(2)).unwrap();
        let ids: Vec<_> = (0..3)
            .map(|_| {
                let id = store.create_element("d", Props::new(), 1.0).unwrap();
                store.set_embedding(id, vec![1.0, 1.0]).unwrap();
                id
            })
            .collect();
        let hits: Vec<_> = store.nearest("d", &[2.0, 2.0], 3).unwrap();
        assert_eq!(hits.iter().map(|h| h.0).collect::<Vec<_>>(), ids);
    }

    #[test]
    fn validate_detects_forged_links_and_domains() {
        let mut store = DemStore::new();
        store.create_domain("a", false, None).unwrap();
        store.create_domain("b", false, None).unwrap();
        let e1 = store.create_element("a", Props::new(), 1.0).unwrap();
        let e2 = store.create_element("a", Props::new(), 1.0).unwrap();
        store.link(e1, e2).unwrap();
        assert!(store.validate().is_empty());

        let e3 = store.create_element("a", Props::new(), 1.0).unwrap();
        store.forge_child(e3, e1);
        let v = store.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::Bidirectionality { parent, child, .. } if parent == e3 && child == e1));

        let mut store2 = DemStore::new();
        store2.create_domain("a", false, None).unwrap();
        store2.create_domain("b", false, None).unwrap();
        let x = store2.create_element("a", Props::new(), 1.0).unwrap();
        store2.forge_domain(x, "b");
        let v = store2.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(&v[0], Violation::DomainMembership { element, .. } if *element == x));
    }
}
