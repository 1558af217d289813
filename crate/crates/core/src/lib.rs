//! Declarative, auto-tunable retrieval-augmented generation pipelines.
//!
//! A pipeline is a JSON spec ([`dsl`]) of stages drawn from a component
//! registry ([`runtime`], [`components`]). Stages share a typed element
//! store ([`dem`]); runs are scored by [`eval`] and the spec's tunable
//! parameters are searched by [`tuner`].

pub mod components;
pub mod dem;
pub mod dsl;
pub mod eval;
pub mod provider;
pub mod runtime;
pub mod text;
pub mod tuner;
