#![allow(dead_code)]

use std::path::{Path, PathBuf};

use explorable_cli::commands::{self, Paths};
use explorable_core::bundle::load_bundle;
use explorable_core::lean::LeanRunner;
use explorable_core::provider::ProviderMode;
use explorable_core::ProofDocument;

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Paths over the shipped corpus and fixtures with fresh bundle and work dirs.
pub fn paths(scratch: &Path) -> Paths {
    Paths {
        corpus: root().join("corpus"),
        bundles: scratch.join("bundles"),
        fixtures: root().join("fixtures"),
        workdir: scratch.join("work"),
    }
}

/// Formalize and analyze in fixture mode, returning the bundle path.
pub fn build(paths: &Paths, id: &str, runner: &LeanRunner) -> PathBuf {
    let path = commands::formalize(paths, id, ProviderMode::Fixture, runner).unwrap();
    commands::analyze(paths, id, ProviderMode::Fixture, runner).unwrap();
    path
}

pub fn build_doc(paths: &Paths, id: &str, runner: &LeanRunner) -> ProofDocument {
    load_bundle(&build(paths, id, runner)).unwrap().document
}
