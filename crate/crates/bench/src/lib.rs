//! Shared setup for the pipeline benchmarks.

use std::path::Path;

use explorable_core::corpus::{default_corpus_dir, load_entry, CorpusProvider};
use explorable_core::lean::LeanRunner;
use explorable_core::pipeline::{analyze, formalize};
use explorable_core::ProofDocument;

/// Formalized and analyzed corpus document.
pub fn document(id: &str, runner: &LeanRunner, workdir: &Path) -> ProofDocument {
    let corpus = default_corpus_dir();
    let entry = load_entry(&corpus, id).expect("corpus entry");
    let provider = CorpusProvider::new(&corpus);
    let mut doc = formalize(&entry, &provider, runner, workdir, 1).expect("formalize");
    analyze(&mut doc, &provider, runner, workdir, 1).expect("analyze");
    doc
}
