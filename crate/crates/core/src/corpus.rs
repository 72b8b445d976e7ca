//! On-disk corpus: one directory per document holding `document.toml`
//! (prose, inputs, oracle, named propositions) and the authored artifacts
//! (`proof.lean`, `links.json`, `templates.toml`, optional `gold.json`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::depgraph::GoldGraph;
use crate::model::{InputVar, IntRange, NumberDomain, OracleSpec, PropositionSpan, StepIndex, WrittenProof};
use crate::provider::{CompletionRequest, GenerationProvider, ProviderError, ProviderMode};
use crate::segment::{segment_written_proof, SegmentError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document `{0}` not found in corpus")]
    NotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("document `{doc}`: {source}")]
    Segment {
        doc: String,
        #[source]
        source: SegmentError,
    },
    #[error("document `{doc}`: step {step} has no text `{text}` for proposition `{name}`")]
    Proposition {
        doc: String,
        step: StepIndex,
        name: String,
        text: String,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentFile {
    theorem: String,
    proof: String,
    delimiter: Option<String>,
    #[serde(default)]
    inputs: Vec<InputFile>,
    oracle: Option<OracleSpec>,
    #[serde(default)]
    propositions: Vec<PropositionFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputFile {
    name: String,
    domain: NumberDomain,
    range: String,
    default: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropositionFile {
    step: StepIndex,
    name: String,
    /// Text to locate in the step; the span covers its first occurrence.
    text: String,
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub id: String,
    pub dir: PathBuf,
    pub written: WrittenProof,
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Document ids (sub-directories holding a `document.toml`), sorted.
pub fn list_ids(corpus: &Path) -> Result<Vec<String>, CorpusError> {
    let rd = std::fs::read_dir(corpus).map_err(|source| CorpusError::Io {
        path: corpus.to_path_buf(),
        source,
    })?;
    let mut ids: Vec<String> = rd
        .filter_map(Result::ok)
        .filter(|e| e.path().join("document.toml").is_file())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .collect();
    ids.sort();
    Ok(ids)
}

pub fn load_entry(corpus: &Path, id: &str) -> Result<CorpusEntry, CorpusError> {
    if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
        return Err(CorpusError::NotFound(id.to_string()));
    }
    let dir = corpus.join(id);
    let path = dir.join("document.toml");
    if !path.is_file() {
        return Err(CorpusError::NotFound(id.to_string()));
    }
    let file: DocumentFile = toml::from_str(&read(&path)?).map_err(|e| CorpusError::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let mut written =
        segment_written_proof(&file.theorem, &file.proof, file.delimiter.as_deref()).map_err(|source| {
            CorpusError::Segment {
                doc: id.to_string(),
                source,
            }
        })?;
    for p in file.propositions {
        let step = written.steps.iter_mut().find(|s| s.index == p.step);
        let start = step.as_ref().and_then(|s| s.text.find(&p.text));
        match (step, start) {
            (Some(s), Some(start)) => s.propositions.push(PropositionSpan {
                name: p.name,
                range: start..start + p.text.len(),
            }),
            _ => {
                return Err(CorpusError::Proposition {
                    doc: id.to_string(),
                    step: p.step,
                    name: p.name,
                    text: p.text,
                })
            }
        }
    }
    for i in file.inputs {
        let default_range: IntRange = i.range.parse().map_err(|message| CorpusError::Parse {
            path: path.clone(),
            message,
        })?;
        written.inputs.push(InputVar {
            name: i.name,
            number_domain: i.domain,
            default_range,
            default_value: i.default,
        });
    }
    written.oracle = file.oracle;
    Ok(CorpusEntry {
        id: id.to_string(),
        dir,
        written,
    })
}

pub fn load_gold(entry: &CorpusEntry) -> Result<Option<GoldGraph>, CorpusError> {
    let path = entry.dir.join("gold.json");
    if !path.is_file() {
        return Ok(None);
    }
    serde_json::from_str(&read(&path)?)
        .map(Some)
        .map_err(|e| CorpusError::Parse {
            path,
            message: e.to_string(),
        })
}

/// Step templates authored in `templates.toml`.
pub fn load_templates(dir: &Path) -> Result<BTreeMap<StepIndex, String>, CorpusError> {
    let path = dir.join("templates.toml");
    let raw: BTreeMap<String, String> = toml::from_str(&read(&path)?).map_err(|e| CorpusError::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<StepIndex>()
                .map(|k| (k, v))
                .map_err(|e| CorpusError::Parse {
                    path: path.clone(),
                    message: format!("template key `{k}`: {e}"),
                })
        })
        .collect()
}

/// Answers generation requests from the authored corpus files. Used to seed
/// fixture stores, so fixture runs replay exactly the authored artifacts.
#[derive(Debug, Clone)]
pub struct CorpusProvider {
    pub corpus: PathBuf,
}

impl CorpusProvider {
    pub fn new(corpus: impl Into<PathBuf>) -> Self {
        Self {
            corpus: corpus.into(),
        }
    }
}

fn provider_io(e: CorpusError) -> ProviderError {
    match e {
        CorpusError::Io { path, source } => ProviderError::Io { path, source },
        other => ProviderError::Config(other.to_string()),
    }
}

impl GenerationProvider for CorpusProvider {
    fn mode(&self) -> ProviderMode {
        ProviderMode::Live
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let dir = self.corpus.join(&request.tags.doc);
        match request.tags.kind.as_str() {
            "formalize" => {
                let text = read(&dir.join("proof.lean")).map_err(provider_io)?;
                Ok(format!("```lean\n{text}```\n"))
            }
            "link" => read(&dir.join("links.json")).map_err(provider_io),
            "template" => {
                let step = request
                    .tags
                    .step
                    .ok_or_else(|| ProviderError::Config("template request without a step".into()))?;
                load_templates(&dir)
                    .map_err(provider_io)?
                    .remove(&step)
                    .ok_or_else(|| ProviderError::Config(format!("no authored template for step {step}")))
            }
            other => Err(ProviderError::Config(format!("unknown request kind `{other}`"))),
        }
    }
}

/// Workspace corpus shipped with the crate sources.
pub fn default_corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_corpus() {
        let ids = list_ids(&default_corpus_dir()).unwrap();
        assert_eq!(ids, vec!["a1", "b11", "b12", "pn2", "rfl_demo"]);
    }

    #[test]
    fn b11_has_eight_steps() {
        let e = load_entry(&default_corpus_dir(), "b11").unwrap();
        assert_eq!(e.written.steps.len(), 8);
        assert_eq!(e.written.reassemble(Some("¶")), {
            let t = read(&e.dir.join("document.toml")).unwrap();
            let f: DocumentFile = toml::from_str(&t).unwrap();
            f.proof
        });
        let n = e.written.steps[1].proposition("n").unwrap();
        assert_eq!(&e.written.steps[1].text[n.range.clone()], "by $n$");
        assert_eq!(e.written.inputs[0].default_range, IntRange::new(-10, 10));
        assert!(load_gold(&e).unwrap().is_some());
    }

    #[test]
    fn b12_splits_paragraphs() {
        let e = load_entry(&default_corpus_dir(), "b12").unwrap();
        assert_eq!(e.written.steps.len(), 3);
        assert_eq!(e.written.reassemble(None).len(), {
            let t = read(&e.dir.join("document.toml")).unwrap();
            toml::from_str::<DocumentFile>(&t).unwrap().proof.len()
        });
    }

    #[test]
    fn missing_document() {
        assert!(matches!(
            load_entry(&default_corpus_dir(), "nope"),
            Err(CorpusError::NotFound(_))
        ));
        assert!(matches!(
            load_entry(&default_corpus_dir(), "../corpus"),
            Err(CorpusError::NotFound(_))
        ));
    }

    #[test]
    fn every_entry_loads() {
        for id in list_ids(&default_corpus_dir()).unwrap() {
            let e = load_entry(&default_corpus_dir(), &id).unwrap();
            let templates = load_templates(&e.dir).unwrap();
            assert_eq!(templates.len(), e.written.steps.len(), "{id}");
        }
    }
}
