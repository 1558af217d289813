use std::collections::BTreeMap;
use std::fmt;

use super::{Component, ComponentError, Contract, StageConfig};

pub type Factory =
    Box<dyn Fn(&StageConfig<'_>) -> Result<Box<dyn Component>, ComponentError> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("component kind `{0}` is already registered")]
    DuplicateKind(String),
}

struct Registration {
    contract: Contract,
    factory: Factory,
}

/// Component kinds by name.
#[derive(Default)]
pub struct ComponentRegistry {
    entries: BTreeMap<String, Registration>,
}

impl fmt::Debug for ComponentRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.entries.iter().map(|(k, r)| (k, &r.contract)))
            .finish()
    }
}

impl ComponentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, kind: &str, contract: Contract, factory: F) -> Result<(), RegistryError>
    where
        F: Fn(&StageConfig<'_>) -> Result<Box<dyn Component>, ComponentError> + Send + Sync + 'static,
    {
        if self.entries.contains_key(kind) {
            return Err(RegistryError::DuplicateKind(kind.to_string()));
        }
        self.entries
            .insert(kind.to_string(), Registration { contract, factory: Box::new(factory) });
        Ok(())
    }

    pub fn contract(&self, kind: &str) -> Option<&Contract> {
        self.entries.get(kind).map(|r| &r.contract)
    }

    pub fn contains(&self, kind: &str) -> bool {
        self.entries.contains_key(kind)
    }

    /// Registered kinds, sorted.
    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub(crate) fn factory(&self, kind: &str) -> Option<&Factory> {
        self.entries.get(kind).map(|r| &r.factory)
    }
}
