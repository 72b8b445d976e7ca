//! Explorable proof documents.
//!
//! The pipeline pairs a written proof with an aligned Lean proof, extracts
//! per-tactic proof states, recovers a fact dependency graph by diffing
//! consecutive states, executes the proof on concrete inputs through
//! instrumented probe files and instantiates prose-shaped worked examples
//! from the values the probes compute.

pub mod bundle;
pub mod corpus;
pub mod depgraph;
pub mod formalizer;
pub mod lean;
pub mod linker;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod prober;
pub mod provider;
pub mod segment;
pub mod templater;
pub mod validate;

pub use model::*;
