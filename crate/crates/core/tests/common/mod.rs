#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use explorable_core::corpus::{default_corpus_dir, load_entry, CorpusProvider};
use explorable_core::lean::LeanRunner;
use explorable_core::pipeline::{analyze, formalize};
use explorable_core::prober::ProbeContext;
use explorable_core::ProofDocument;

pub fn corpus() -> PathBuf {
    default_corpus_dir()
}

pub fn scratch() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().unwrap()).path()
}

pub fn ctx() -> ProbeContext {
    ProbeContext::new(scratch())
}

/// Formalized and analyzed document built from the authored corpus.
pub fn build(id: &str) -> ProofDocument {
    let entry = load_entry(&corpus(), id).unwrap();
    let provider = CorpusProvider::new(corpus());
    let runner = LeanRunner::reference();
    let mut doc = formalize(&entry, &provider, &runner, scratch(), 1).unwrap();
    analyze(&mut doc, &provider, &runner, scratch(), 1).unwrap();
    doc
}
