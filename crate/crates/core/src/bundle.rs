//! Versioned JSON bundle of a fully analysed proof document.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProofDocument, ValidationReport};
use crate::validate::validate_document;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct BundleOut<'a> {
    schema_version: u32,
    document: &'a ProofDocument,
}

#[derive(Deserialize)]
struct BundleIn {
    #[allow(dead_code)]
    schema_version: u32,
    document: ProofDocument,
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed bundle at `{path}`: {message}")]
    Malformed { path: String, message: String },
    #[error("bundle schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("bundle failed validation:\n{0}")]
    Invalid(ValidationReport),
}

#[derive(Debug)]
pub struct LoadedBundle {
    pub document: ProofDocument,
    /// Unknown fields that were ignored, by path.
    pub warnings: Vec<String>,
}

/// Canonical serialized form. Deterministic for equal documents.
pub fn to_bundle_string(doc: &ProofDocument) -> String {
    let mut s = serde_json::to_string_pretty(&BundleOut {
        schema_version: SCHEMA_VERSION,
        document: doc,
    })
    .expect("documents serialize");
    s.push('\n');
    s
}

/// Validates, then writes atomically via a sibling temp file.
pub fn save_bundle(doc: &ProofDocument, path: &Path) -> Result<(), BundleError> {
    let report = validate_document(doc);
    if !report.is_ok() {
        return Err(BundleError::Invalid(report));
    }
    let io = |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(to_bundle_string(doc).as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn from_bundle_str(text: &str) -> Result<LoadedBundle, BundleError> {
    let head: serde_json::Value = serde_json::from_str(text).map_err(|e| BundleError::Malformed {
        path: ".".into(),
        message: e.to_string(),
    })?;
    match head.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(BundleError::SchemaVersionMismatch {
                found: v,
                expected: SCHEMA_VERSION,
            })
        }
        None => {
            return Err(BundleError::Malformed {
                path: "schema_version".into(),
                message: "missing or not an integer".into(),
            })
        }
    }
    let mut warnings = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let mut on_ignored = |p: serde_ignored::Path| warnings.push(format!("ignored unknown field `{p}`"));
    let ignoring = serde_ignored::Deserializer::new(&mut de, &mut on_ignored);
    let parsed: BundleIn =
        serde_path_to_error::deserialize(ignoring).map_err(|e| BundleError::Malformed {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    let report = validate_document(&parsed.document);
    if !report.is_ok() {
        return Err(BundleError::Invalid(report));
    }
    for w in &warnings {
        tracing::warn!("{w}");
    }
    Ok(LoadedBundle {
        document: parsed.document,
        warnings,
    })
}

pub fn load_bundle(path: &Path) -> Result<LoadedBundle, BundleError> {
    let text = std::fs::read_to_string(path).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_bundle_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LeanSource, ProseStep, WrittenProof};

    fn doc() -> ProofDocument {
        let lean =
            LeanSource::parse("theorem t : True := by\n  -- step 1\n  have h : True := trivial\n  trivial\n")
                .unwrap();
        let written = WrittenProof {
            theorem_text: "T".into(),
            steps: vec![ProseStep {
                index: 1,
                text: "Obvious.".into(),
                propositions: vec![],
            }],
            inputs: vec![],
            oracle: None,
        };
        let mut d = ProofDocument::new("t", written, lean);
        d.links.block_links.insert(1, vec![1]);
        d
    }

    #[test]
    fn round_trip_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b/t.json");
        save_bundle(&doc(), &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert_eq!(loaded.document, doc());
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn version_mismatch() {
        let text = to_bundle_string(&doc()).replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(matches!(
            from_bundle_str(&text),
            Err(BundleError::SchemaVersionMismatch { found: 7, .. })
        ));
    }

    #[test]
    fn unknown_field_warns() {
        let text = to_bundle_string(&doc()).replacen("\"id\"", "\"colour\": \"red\",\n    \"id\"", 1);
        let loaded = from_bundle_str(&text).unwrap();
        assert_eq!(loaded.warnings, vec!["ignored unknown field `document.colour`"]);
    }

    #[test]
    fn malformed_reports_path() {
        let text = to_bundle_string(&doc()).replace("\"index\": 1", "\"index\": \"one\"");
        match from_bundle_str(&text) {
            Err(BundleError::Malformed { path, .. }) => assert_eq!(path, "document.written.steps[0].index"),
            other => panic!("{other:?}"),
        }
    }
}
