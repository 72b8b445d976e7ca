//! End-to-end stages: formalize, analyze, precompute, plus cached
//! evaluation and worked-example rendering.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusEntry;
use crate::depgraph::{build_fact_graph, GraphError, GraphWarning};
use crate::formalizer::{generate_aligned_proof, FormalizeError};
use crate::lean::{LeanRunner, ParsedProof, RunnerError};
use crate::linker::{make_links, LinkError};
use crate::model::{IntRange, ProofDocument, StepIndex, ValidationReport};
use crate::prober::{evaluate_at, sweep, Binding, EvalResult, ProbeContext, ProbeError, DEFAULT_SWEEP_CAP};
use crate::provider::GenerationProvider;
use crate::templater::{
    available_keys, generate_template, instantiate, GenerateTemplateError, InstantiateError,
};
use crate::validate::validate_states;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Formalize(#[from] FormalizeError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Template(#[from] GenerateTemplateError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("goal states are inconsistent:\n{0}")]
    States(ValidationReport),
    #[error("Lean source does not parse: {0}")]
    Source(String),
}

impl PipelineError {
    /// True when the failure lies in the toolchain or its configuration
    /// rather than in the document.
    pub fn is_environment_fault(&self) -> bool {
        match self {
            PipelineError::Runner(e) => e.is_environment_fault(),
            PipelineError::Formalize(FormalizeError::Runner(e)) => e.is_environment_fault(),
            PipelineError::Probe(e) => e.is_environment_fault(),
            _ => false,
        }
    }
}

/// Generates the aligned Lean proof and the link map.
pub fn formalize(
    entry: &CorpusEntry,
    provider: &dyn GenerationProvider,
    runner: &LeanRunner,
    workdir: &Path,
    max_attempts: u32,
) -> Result<ProofDocument, PipelineError> {
    let lean = generate_aligned_proof(&entry.id, &entry.written, provider, runner, workdir, max_attempts)?;
    let (links, _warnings) = make_links(&entry.id, &entry.written, &lean, provider)?;
    let mut doc = ProofDocument::new(entry.id.clone(), entry.written.clone(), lean);
    doc.links = links;
    Ok(doc)
}

/// Recovers the fact graph from goal states and generates one template per
/// step. Returns the graph warnings.
pub fn analyze(
    doc: &mut ProofDocument,
    provider: &dyn GenerationProvider,
    runner: &LeanRunner,
    workdir: &Path,
    max_attempts: u32,
) -> Result<Vec<GraphWarning>, PipelineError> {
    let proof = ParsedProof::parse(&doc.lean.full_text).map_err(|e| PipelineError::Source(e.to_string()))?;
    let tactics = proof.map(|p| (p.body_start, p.tactics));
    doc.graph = match &tactics {
        None => Default::default(),
        Some((start, tactics)) => {
            let mut positions = vec![*start];
            positions.extend(tactics.iter().map(|t| t.end));
            let states = runner.goal_states(&doc.lean, &positions, workdir)?;
            let report = validate_states(&states);
            if !report.is_ok() {
                return Err(PipelineError::States(report));
            }
            build_fact_graph(&states, tactics, &doc.links, &doc.lean)?
        }
    };
    let keys = available_keys(doc);
    let mut templates = BTreeMap::new();
    for step in &doc.written.steps {
        let t = generate_template(&doc.id, step, &keys, provider, max_attempts)?;
        templates.insert(step.index, t);
    }
    doc.templates = templates;
    for w in &doc.graph.warnings {
        tracing::warn!(doc = doc.id, "{w}");
    }
    Ok(doc.graph.warnings.clone())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecomputeOutcome {
    pub computed: Vec<String>,
    pub cached: Vec<String>,
}

/// Sweeps every input over its range (an override or the default) with the
/// other inputs at their defaults. Sweeps already cached for the same range
/// and fixed values are kept without running probes.
pub fn precompute(
    doc: &mut ProofDocument,
    ranges: &BTreeMap<String, IntRange>,
    cap: usize,
    runner: &LeanRunner,
    ctx: &ProbeContext,
) -> Result<PrecomputeOutcome, PipelineError> {
    if doc.written.oracle.is_none() {
        return Err(ProbeError::MissingOracle.into());
    }
    for var in ranges.keys() {
        if doc.written.input(var).is_none() {
            return Err(ProbeError::UnknownVariable(var.clone()).into());
        }
    }
    let mut outcome = PrecomputeOutcome::default();
    let defaults = Binding::defaults(&doc.written.inputs);
    for input in doc.written.inputs.clone() {
        let range = ranges.get(&input.name).copied().unwrap_or(input.default_range);
        let mut fixed = defaults.assignments.clone();
        fixed.remove(&input.name);
        let hit = doc
            .cached_sweep(&input.name)
            .is_some_and(|s| s.range == range && s.fixed == fixed);
        if hit {
            outcome.cached.push(input.name.clone());
            continue;
        }
        let s = sweep(doc, &input.name, range, cap, runner, ctx)?;
        doc.sweep_cache
            .get_or_insert_with(BTreeMap::new)
            .insert(input.name.clone(), s);
        outcome.computed.push(input.name.clone());
    }
    Ok(outcome)
}

pub fn precompute_defaults(
    doc: &mut ProofDocument,
    runner: &LeanRunner,
    ctx: &ProbeContext,
) -> Result<PrecomputeOutcome, PipelineError> {
    precompute(doc, &BTreeMap::new(), DEFAULT_SWEEP_CAP, runner, ctx)
}

/// Evaluation served from the sweep cache when one covers the binding.
pub fn cached_eval(doc: &ProofDocument, binding: &Binding) -> Option<EvalResult> {
    doc.sweep_cache.as_ref()?.values().find_map(|s| s.lookup(binding))
}

/// Cached evaluation if available, otherwise probes are run.
pub fn evaluate(
    doc: &ProofDocument,
    binding: &Binding,
    runner: &LeanRunner,
    ctx: &ProbeContext,
) -> Result<(EvalResult, bool), ProbeError> {
    binding.validate(&doc.written.inputs)?;
    if let Some(e) = cached_eval(doc, binding) {
        return Ok((e, true));
    }
    evaluate_at(doc, binding, runner, ctx).map(|e| (e, false))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkedStep {
    pub step: StepIndex,
    /// Instantiated template, absent when a key could not be resolved.
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_keys: Vec<String>,
    pub closed: bool,
    pub breaks_here: bool,
}

/// Renders every step's template with the values its probe captured.
pub fn worked_examples(doc: &ProofDocument, eval: &EvalResult) -> Vec<WorkedStep> {
    doc.written
        .steps
        .iter()
        .map(|s| {
            let probe = eval.per_step.iter().find(|p| p.step_index == s.index);
            let values = match probe {
                Some(p) => p.values.clone(),
                None => eval
                    .binding
                    .assignments
                    .iter()
                    .map(|(k, v)| (k.clone(), crate::prober::ReducedValue::Int(*v)))
                    .collect(),
            };
            let (text, missing_keys) = match doc.templates.get(&s.index).map(|t| instantiate(t, &values)) {
                None => (None, Vec::new()),
                Some(Ok(t)) => (Some(t), Vec::new()),
                Some(Err(InstantiateError::MissingKey(k))) => (None, k),
                Some(Err(InstantiateError::Syntax(_))) => (None, Vec::new()),
            };
            WorkedStep {
                step: s.index,
                text,
                missing_keys,
                closed: probe.is_none_or(|p| p.closed),
                breaks_here: eval.break_step == Some(s.index),
            }
        })
        .collect()
}

/// Formalize, analyze and precompute in one go.
pub fn run_all(
    entry: &CorpusEntry,
    provider: &dyn GenerationProvider,
    runner: &LeanRunner,
    workdir: &Path,
) -> Result<ProofDocument, PipelineError> {
    let mut doc = formalize(entry, provider, runner, workdir, DEFAULT_MAX_ATTEMPTS)?;
    analyze(&mut doc, provider, runner, workdir, DEFAULT_MAX_ATTEMPTS)?;
    if doc.written.oracle.is_some() {
        precompute_defaults(&mut doc, runner, &ProbeContext::new(workdir))?;
    }
    Ok(doc)
}

/// Runs formalize and analyze for each id against the authored corpus,
/// recording every provider exchange into `fixtures`.
pub fn seed_fixtures(
    corpus: &Path,
    ids: &[String],
    fixtures: &Path,
    runner: &LeanRunner,
    workdir: &Path,
) -> Result<Vec<ProofDocument>, SeedError> {
    let provider =
        crate::provider::RecordingProvider::new(crate::corpus::CorpusProvider::new(corpus), fixtures);
    ids.iter()
        .map(|id| {
            let entry = crate::corpus::load_entry(corpus, id)?;
            let mut doc = formalize(&entry, &provider, runner, workdir, 1)?;
            analyze(&mut doc, &provider, runner, workdir, 1)?;
            Ok(doc)
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum SeedError {
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{default_corpus_dir, load_entry, CorpusProvider};

    fn build(id: &str) -> ProofDocument {
        let corpus = default_corpus_dir();
        let entry = load_entry(&corpus, id).unwrap();
        let provider = CorpusProvider::new(&corpus);
        let runner = LeanRunner::reference();
        let dir = tempfile::tempdir().unwrap();
        let mut doc = formalize(&entry, &provider, &runner, dir.path(), 1).unwrap();
        analyze(&mut doc, &provider, &runner, dir.path(), 1).unwrap();
        doc
    }

    #[test]
    fn b11_end_to_end() {
        let doc = build("b11");
        assert_eq!(doc.lean.step_blocks.len(), 8);
        assert_eq!(doc.links.var_link(2, "n"), Some("n"));
        assert!(doc.graph.warnings.is_empty(), "{:?}", doc.graph.warnings);
        let runner = LeanRunner::reference();
        let dir = tempfile::tempdir().unwrap();
        let ctx = ProbeContext::new(dir.path());
        let eval = evaluate_at(&doc, &Binding::new([("x", 2)]), &runner, &ctx).unwrap();
        assert!(!eval.hypotheses_ok);
        assert_eq!(eval.break_step, Some(5));
        let worked = worked_examples(&doc, &eval);
        assert!(worked.iter().all(|w| w.text.is_some()), "{worked:?}");
        assert_eq!(worked[1].text.as_deref(), Some("x^2 - 1 = 2^2 - 1 = 3"));
    }

    #[test]
    fn every_corpus_document_builds() {
        for id in crate::corpus::list_ids(&default_corpus_dir()).unwrap() {
            let doc = build(&id);
            assert!(crate::validate::validate_document(&doc).is_ok(), "{id}");
        }
    }

    #[test]
    fn precompute_hits_cache_on_rerun() {
        let mut doc = build("rfl_demo");
        let runner = LeanRunner::reference();
        let dir = tempfile::tempdir().unwrap();
        let ctx = ProbeContext::new(dir.path());
        let first = precompute_defaults(&mut doc, &runner, &ctx).unwrap();
        assert_eq!(first.computed, vec!["x"]);
        assert_eq!(doc.cached_sweep("x").unwrap().entries.len(), 21);
        let before = runner.probe_runs();
        let second = precompute_defaults(&mut doc, &runner, &ctx).unwrap();
        assert_eq!(second.cached, vec!["x"]);
        assert_eq!(runner.probe_runs(), before);
        let (_, cached) = evaluate(&doc, &Binding::new([("x", 3)]), &runner, &ctx).unwrap();
        assert!(cached);
        assert_eq!(runner.probe_runs(), before);
    }
}
