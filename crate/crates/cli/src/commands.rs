use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use explorable_core::bundle::{load_bundle, save_bundle, BundleError};
use explorable_core::corpus::{list_ids, load_entry, CorpusError};
use explorable_core::formalizer::FormalizeError;
use explorable_core::lean::LeanRunner;
use explorable_core::linker::LinkError;
use explorable_core::pipeline::{self, PipelineError, SeedError, DEFAULT_MAX_ATTEMPTS};
use explorable_core::prober::{oracle_check, ProbeContext, ProbeError, DEFAULT_SWEEP_CAP};
use explorable_core::provider::{
    FixtureProvider, GenerationProvider, LiveProvider, ProviderError, ProviderMode, RecordingProvider,
};
use explorable_core::templater::GenerateTemplateError;
use explorable_core::{IntRange, ProofDocument};
use thiserror::Error;

use crate::args::{resolve_ranges, RangeSpec, RangeValues};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Findings(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Toolchain(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Findings(_) | CliError::Failure(_) => 1,
            CliError::NotFound(_) => 2,
            CliError::Toolchain(_) => 3,
            CliError::Config(_) => 4,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::NotFound(_) => CliError::NotFound(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<BundleError> for CliError {
    fn from(e: BundleError) -> Self {
        match e {
            BundleError::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::NotFound(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

fn provider_error(e: &ProviderError) -> fn(String) -> CliError {
    match e {
        ProviderError::FixtureMiss { .. } | ProviderError::Config(_) => CliError::Config,
        _ => CliError::Failure,
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        let msg = e.to_string();
        match e {
            e if e.is_environment_fault() => CliError::Toolchain(msg),
            ProbeError::MissingOracle
            | ProbeError::UnknownVariable(_)
            | ProbeError::RangeTooLarge { .. }
            | ProbeError::InvalidBinding(_)
            | ProbeError::UnboundInput(_) => CliError::Config(msg),
            _ => CliError::Failure(msg),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        if e.is_environment_fault() {
            return CliError::Toolchain(msg);
        }
        match e {
            PipelineError::Probe(p) => p.into(),
            PipelineError::Formalize(FormalizeError::ExhaustedAttempts { .. }) => CliError::Findings(msg),
            PipelineError::Formalize(FormalizeError::Provider(p))
            | PipelineError::Link(LinkError::Provider(p))
            | PipelineError::Template(GenerateTemplateError::Provider(p)) => provider_error(&p)(msg),
            _ => CliError::Failure(msg),
        }
    }
}

impl From<SeedError> for CliError {
    fn from(e: SeedError) -> Self {
        match e {
            SeedError::Corpus(c) => c.into(),
            SeedError::Pipeline(p) => p.into(),
        }
    }
}

/// Directories shared by every command.
#[derive(Debug, Clone)]
pub struct Paths {
    pub corpus: PathBuf,
    pub bundles: PathBuf,
    pub fixtures: PathBuf,
    pub workdir: PathBuf,
}

impl Paths {
    pub fn bundle(&self, id: &str) -> PathBuf {
        self.bundles.join(format!("{id}.json"))
    }

    /// Live responses are recorded here for later promotion to fixtures.
    pub fn recorded(&self) -> PathBuf {
        self.workdir.join("recorded")
    }
}

pub fn make_provider(mode: ProviderMode, paths: &Paths) -> Result<Box<dyn GenerationProvider>, CliError> {
    match mode {
        ProviderMode::Fixture => Ok(Box::new(FixtureProvider::new(&paths.fixtures))),
        ProviderMode::Live => {
            let live = LiveProvider::from_env().map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Box::new(RecordingProvider::new(live, paths.recorded())))
        }
    }
}

fn load_doc(paths: &Paths, id: &str) -> Result<ProofDocument, CliError> {
    let path = paths.bundle(id);
    if !path.is_file() {
        return Err(CliError::NotFound(format!(
            "no bundle for `{id}` at {} (run formalize first)",
            path.display()
        )));
    }
    let loaded = load_bundle(&path)?;
    for w in &loaded.warnings {
        tracing::warn!(doc = id, "{w}");
    }
    Ok(loaded.document)
}

fn save_doc(paths: &Paths, doc: &ProofDocument) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&paths.bundles)
        .map_err(|e| CliError::Config(format!("{}: {e}", paths.bundles.display())))?;
    let path = paths.bundle(&doc.id);
    save_bundle(doc, &path)?;
    Ok(path)
}

/// Writes the bundle with the Lean proof and links. Later analysis is kept
/// when the proof and links are unchanged.
pub fn formalize(
    paths: &Paths,
    id: &str,
    mode: ProviderMode,
    runner: &LeanRunner,
) -> Result<PathBuf, CliError> {
    let entry = load_entry(&paths.corpus, id)?;
    let provider = make_provider(mode, paths)?;
    let mut doc = pipeline::formalize(
        &entry,
        provider.as_ref(),
        runner,
        &paths.workdir,
        DEFAULT_MAX_ATTEMPTS,
    )?;
    if let Ok(old) = load_bundle(&paths.bundle(id)) {
        let old = old.document;
        if old.written == doc.written && old.lean == doc.lean && old.links == doc.links {
            doc = old;
        }
    }
    save_doc(paths, &doc)
}

pub fn analyze(
    paths: &Paths,
    id: &str,
    mode: ProviderMode,
    runner: &LeanRunner,
) -> Result<Vec<String>, CliError> {
    let mut doc = load_doc(paths, id)?;
    let provider = make_provider(mode, paths)?;
    let warnings = pipeline::analyze(
        &mut doc,
        provider.as_ref(),
        runner,
        &paths.workdir,
        DEFAULT_MAX_ATTEMPTS,
    )?;
    save_doc(paths, &doc)?;
    Ok(warnings.iter().map(ToString::to_string).collect())
}

pub fn precompute(
    paths: &Paths,
    id: &str,
    ranges: &[RangeSpec],
    runner: &LeanRunner,
) -> Result<pipeline::PrecomputeOutcome, CliError> {
    let mut doc = load_doc(paths, id)?;
    let resolved = resolve_ranges(ranges, &doc.written.inputs).map_err(CliError::Config)?;
    let mut intervals: BTreeMap<String, IntRange> = BTreeMap::new();
    for (var, values) in resolved {
        match values {
            RangeValues::Interval(r) => {
                intervals.insert(var, r);
            }
            RangeValues::List(_) => {
                return Err(CliError::Config(format!(
                    "precompute sweeps an interval; give `{var}=LO..HI`"
                )))
            }
        }
    }
    let outcome = pipeline::precompute(
        &mut doc,
        &intervals,
        DEFAULT_SWEEP_CAP,
        runner,
        &ProbeContext::new(&paths.workdir),
    )?;
    save_doc(paths, &doc)?;
    Ok(outcome)
}

/// Ranges default to every input's default range.
pub fn oracle_check_cmd(
    paths: &Paths,
    id: &str,
    ranges: &[RangeSpec],
    runner: &LeanRunner,
) -> Result<explorable_core::prober::AgreementReport, CliError> {
    let doc = load_doc(paths, id)?;
    let values: BTreeMap<String, Vec<i64>> = if ranges.is_empty() {
        doc.written
            .inputs
            .iter()
            .map(|i| (i.name.clone(), i.default_range.values().collect()))
            .collect()
    } else {
        resolve_ranges(ranges, &doc.written.inputs)
            .map_err(CliError::Config)?
            .into_iter()
            .map(|(k, v)| (k, v.values()))
            .collect()
    };
    if values.values().any(Vec::is_empty) {
        return Err(CliError::Config("empty range".into()));
    }
    Ok(oracle_check(
        &doc,
        &values,
        runner,
        &ProbeContext::new(&paths.workdir),
    )?)
}

/// Seeds fixtures for `ids` (every corpus document when empty).
pub fn seed_fixtures(
    paths: &Paths,
    ids: &[String],
    clean: bool,
    runner: &LeanRunner,
) -> Result<Vec<String>, CliError> {
    let ids = if ids.is_empty() {
        list_ids(&paths.corpus)?
    } else {
        ids.to_vec()
    };
    if clean && paths.fixtures.is_dir() {
        remove_fixture_files(&paths.fixtures)?;
    }
    std::fs::create_dir_all(&paths.fixtures)
        .map_err(|e| CliError::Config(format!("{}: {e}", paths.fixtures.display())))?;
    pipeline::seed_fixtures(&paths.corpus, &ids, &paths.fixtures, runner, &paths.workdir)?;
    Ok(ids)
}

fn remove_fixture_files(dir: &Path) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Config(format!("{}: {e}", dir.display()));
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            std::fs::remove_file(&path).map_err(io)?;
        }
    }
    Ok(())
}
