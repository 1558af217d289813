//! Store access as seen by components. The guarded views restrict a stage to
//! the domains it declared: inputs are readable, outputs readable and
//! writable.

use std::collections::BTreeSet;

use crate::dem::{DemError, DemStore, Domain, Element, ElementId, Props};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AccessError {
    #[error(transparent)]
    Store(#[from] DemError),
    #[error("{operation} on undeclared domain `{domain}`")]
    Denied { domain: String, operation: &'static str },
}

pub trait StoreRead {
    fn element(&self, id: ElementId) -> Result<&Element, AccessError>;

    fn domain_info(&self, name: &str) -> Result<&Domain, AccessError>;

    /// Elements of `domain` in creation order.
    fn elements_in(&self, domain: &str) -> Result<Vec<&Element>, AccessError>;

    fn nearest(
        &self,
        domain: &str,
        query: &[f64],
        k: usize,
    ) -> Result<Vec<(ElementId, f64)>, AccessError>;
}

pub trait StoreWrite: StoreRead {
    fn create_element(&mut self, domain: &str, props: Props, weight: f64)
        -> Result<ElementId, AccessError>;

    fn link(&mut self, parent: ElementId, child: ElementId) -> Result<(), AccessError>;

    fn set_embedding(&mut self, id: ElementId, vector: Vec<f64>) -> Result<(), AccessError>;
}

impl StoreRead for DemStore {
    fn element(&self, id: ElementId) -> Result<&Element, AccessError> {
        Ok(DemStore::element(self, id)?)
    }

    fn domain_info(&self, name: &str) -> Result<&Domain, AccessError> {
        self.domain(name)
            .ok_or_else(|| DemError::UnknownDomain(name.to_string()).into())
    }

    fn elements_in(&self, domain: &str) -> Result<Vec<&Element>, AccessError> {
        Ok(DemStore::elements_in(self, domain)?.collect())
    }

    fn nearest(
        &self,
        domain: &str,
        query: &[f64],
        k: usize,
    ) -> Result<Vec<(ElementId, f64)>, AccessError> {
        Ok(DemStore::nearest(self, domain, query, k)?)
    }
}

impl StoreWrite for DemStore {
    fn create_element(
        &mut self,
        domain: &str,
        props: Props,
        weight: f64,
    ) -> Result<ElementId, AccessError> {
        Ok(DemStore::create_element(self, domain, props, weight)?)
    }

    fn link(&mut self, parent: ElementId, child: ElementId) -> Result<(), AccessError> {
        Ok(DemStore::link(self, parent, child)?)
    }

    fn set_embedding(&mut self, id: ElementId, vector: Vec<f64>) -> Result<(), AccessError> {
        Ok(DemStore::set_embedding(self, id, vector)?)
    }
}

/// Domain permissions of one stage.
#[derive(Debug, Clone, Default)]
pub struct Grants {
    readable: BTreeSet<String>,
    writable: BTreeSet<String>,
}

impl Grants {
    pub fn new(inputs: &[String], outputs: &[String]) -> Self {
        let writable: BTreeSet<String> = outputs.iter().cloned().collect();
        let readable = inputs.iter().chain(outputs).cloned().collect();
        Self { readable, writable }
    }

    fn read(&self, domain: &str, operation: &'static str) -> Result<(), AccessError> {
        if self.readable.contains(domain) {
            Ok(())
        } else {
            Err(AccessError::Denied { domain: domain.to_string(), operation })
        }
    }

    fn write(&self, domain: &str, operation: &'static str) -> Result<(), AccessError> {
        if self.writable.contains(domain) {
            Ok(())
        } else {
            Err(AccessError::Denied { domain: domain.to_string(), operation })
        }
    }
}

fn read_element<'s>(
    store: &'s DemStore,
    grants: &Grants,
    id: ElementId,
) -> Result<&'s Element, AccessError> {
    let e = store.element(id)?;
    grants.read(e.domain(), "read")?;
    Ok(e)
}

fn domain_info<'s>(store: &'s DemStore, grants: &Grants, name: &str) -> Result<&'s Domain, AccessError> {
    grants.read(name, "read")?;
    StoreRead::domain_info(store, name)
}

fn elements_in<'s>(
    store: &'s DemStore,
    grants: &Grants,
    domain: &str,
) -> Result<Vec<&'s Element>, AccessError> {
    grants.read(domain, "read")?;
    StoreRead::elements_in(store, domain)
}

/// Read-only view used during the query phase.
#[derive(Clone, Copy)]
pub struct StoreReader<'a> {
    store: &'a DemStore,
    grants: &'a Grants,
}

impl<'a> StoreReader<'a> {
    pub fn new(store: &'a DemStore, grants: &'a Grants) -> Self {
        Self { store, grants }
    }
}

impl StoreRead for StoreReader<'_> {
    fn element(&self, id: ElementId) -> Result<&Element, AccessError> {
        read_element(self.store, self.grants, id)
    }

    fn domain_info(&self, name: &str) -> Result<&Domain, AccessError> {
        domain_info(self.store, self.grants, name)
    }

    fn elements_in(&self, domain: &str) -> Result<Vec<&Element>, AccessError> {
        elements_in(self.store, self.grants, domain)
    }

    fn nearest(
        &self,
        domain: &str,
        query: &[f64],
        k: usize,
    ) -> Result<Vec<(ElementId, f64)>, AccessError> {
        self.grants.read(domain, "search")?;
        StoreRead::nearest(self.store, domain, query, k)
    }
}

/// Read-write view used during the index phase.
pub struct StoreWriter<'a> {
    store: &'a mut DemStore,
    grants: &'a Grants,
}

impl<'a> StoreWriter<'a> {
    pub fn new(store: &'a mut DemStore, grants: &'a Grants) -> Self {
        Self { store, grants }
    }
}

impl StoreRead for StoreWriter<'_> {
    fn element(&self, id: ElementId) -> Result<&Element, AccessError> {
        read_element(self.store, self.grants, id)
    }

    fn domain_info(&self, name: &str) -> Result<&Domain, AccessError> {
        domain_info(self.store, self.grants, name)
    }

    fn elements_in(&self, domain: &str) -> Result<Vec<&Element>, AccessError> {
        elements_in(self.store, self.grants, domain)
    }

    fn nearest(
        &self,
        domain: &str,
        query: &[f64],
        k: usize,
    ) -> Result<Vec<(ElementId, f64)>, AccessError> {
        self.grants.read(domain, "search")?;
        StoreRead::nearest(&*self.store, domain, query, k)
    }
}

impl StoreWrite for StoreWriter<'_> {
    fn create_element(
        &mut self,
        domain: &str,
        props: Props,
        weight: f64,
    ) -> Result<ElementId, AccessError> {
        self.grants.write(domain, "create")?;
        StoreWrite::create_element(self.store, domain, props, weight)
    }

    /// Both ends must be visible to the stage and at least one end must be
    /// in a domain it writes.
    fn link(&mut self, parent: ElementId, child: ElementId) -> Result<(), AccessError> {
        let pd = read_element(self.store, self.grants, parent)?.domain().to_string();
        let cd = read_element(self.store, self.grants, child)?.domain().to_string();
        if self.grants.write(&pd, "link").is_err() {
            self.grants.write(&cd, "link")?;
        }
        StoreWrite::link(self.store, parent, child)
    }

    fn set_embedding(&mut self, id: ElementId, vector: Vec<f64>) -> Result<(), AccessError> {
        let d = self.store.element(id)?.domain().to_string();
        self.grants.write(&d, "embed")?;
        StoreWrite::set_embedding(self.store, id, vector)
    }
}
