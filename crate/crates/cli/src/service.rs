//! Read-only HTTP API over loaded bundles.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use explorable_core::bundle::load_bundle;
use explorable_core::depgraph::FourMaps;
use explorable_core::lean::LeanRunner;
use explorable_core::pipeline::{cached_eval, worked_examples, WorkedStep};
use explorable_core::prober::{
    evaluate_at, oracle_eval, sweep, Binding, EvalResult, ProbeContext, ProbeError, ProbeResult, SweepEntry,
    DEFAULT_SWEEP_CAP,
};
use explorable_core::{InputVar, IntRange, OracleSpec, ProofDocument, StepIndex};
use serde::Serialize;
use tokio::sync::{OnceCell, Semaphore};
use tower_http::cors::CorsLayer;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Time an uncached evaluation may take before an oracle-only answer.
    pub deadline: Duration,
    /// Concurrent uncached evaluations; further requests queue.
    pub max_uncached: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            deadline: Duration::from_secs(30),
            max_uncached: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl From<ProbeError> for ApiError {
    fn from(e: ProbeError) -> Self {
        let status = match &e {
            e if e.is_environment_fault() => StatusCode::SERVICE_UNAVAILABLE,
            ProbeError::InvalidBinding(_)
            | ProbeError::UnboundInput(_)
            | ProbeError::UnknownVariable(_)
            | ProbeError::RangeTooLarge { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ProbeError::MissingOracle => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type EvalCell = Arc<OnceCell<Result<Arc<EvalResult>, ApiError>>>;

pub struct AppState {
    docs: BTreeMap<String, Arc<ProofDocument>>,
    runner: Arc<LeanRunner>,
    ctx: ProbeContext,
    config: ServiceConfig,
    permits: Arc<Semaphore>,
    inflight: Mutex<HashMap<(String, String), EvalCell>>,
}

impl AppState {
    pub fn new(
        docs: impl IntoIterator<Item = ProofDocument>,
        runner: Arc<LeanRunner>,
        ctx: ProbeContext,
        config: ServiceConfig,
    ) -> Self {
        Self {
            docs: docs.into_iter().map(|d| (d.id.clone(), Arc::new(d))).collect(),
            runner,
            ctx,
            permits: Arc::new(Semaphore::new(config.max_uncached.max(1))),
            config,
            inflight: Mutex::new(HashMap::new()),
        }
    }

    fn doc(&self, id: &str) -> Result<Arc<ProofDocument>, ApiError> {
        self.docs
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown document `{id}`")))
    }
}

/// Loads every `*.json` bundle in `dir`, sorted by file name.
pub fn load_documents(dir: &Path) -> Result<Vec<ProofDocument>, String> {
    let rd = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut paths: Vec<_> = rd
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let loaded = load_bundle(p).map_err(|e| format!("{}: {e}", p.display()))?;
            for w in &loaded.warnings {
                tracing::warn!(bundle = %p.display(), "{w}");
            }
            Ok(loaded.document)
        })
        .collect()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/documents", get(list_documents))
        .route("/documents/{id}", get(get_document))
        .route("/documents/{id}/sweep", get(get_sweep))
        .route("/documents/{id}/eval", get(get_eval))
        .route("/documents/{id}/deps", get(get_deps))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

fn json<T: Serialize>(value: &T) -> Json<serde_json::Value> {
    Json(serde_json::to_value(value).expect("views serialize"))
}

#[derive(Serialize)]
struct DocumentSummary<'a> {
    id: &'a str,
    theorem: &'a str,
    steps: usize,
    inputs: Vec<&'a str>,
}

async fn list_documents(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let list: Vec<_> = state
        .docs
        .values()
        .map(|d| DocumentSummary {
            id: &d.id,
            theorem: &d.written.theorem_text,
            steps: d.written.steps.len(),
            inputs: d.written.inputs.iter().map(|i| i.name.as_str()).collect(),
        })
        .collect();
    json(&list)
}

#[derive(Serialize)]
struct StepView<'a> {
    index: StepIndex,
    text: &'a str,
    propositions: BTreeMap<&'a str, &'a str>,
    template: Option<&'a str>,
    blocks: Vec<usize>,
}

#[derive(Serialize)]
struct NodeView<'a> {
    name: &'a str,
    type_text: &'a str,
    step: Option<StepIndex>,
}

#[derive(Serialize)]
struct DocumentView<'a> {
    id: &'a str,
    theorem: &'a str,
    steps: Vec<StepView<'a>>,
    inputs: &'a [InputVar],
    oracle: Option<&'a OracleSpec>,
    lean: &'a str,
    var_links: BTreeMap<String, &'a str>,
    nodes: Vec<NodeView<'a>>,
    edges: Vec<(&'a str, &'a str)>,
    maps: &'a FourMaps,
    warnings: Vec<String>,
    cached_sweeps: Vec<&'a str>,
}

async fn get_document(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let d = state.doc(&id)?;
    let steps = d
        .written
        .steps
        .iter()
        .map(|s| StepView {
            index: s.index,
            text: s.content(),
            propositions: s
                .propositions
                .iter()
                .map(|p| (p.name.as_str(), &s.text[p.range.clone()]))
                .collect(),
            template: d.templates.get(&s.index).map(|t| t.template_text.as_str()),
            blocks: d.links.block_links.get(&s.index).cloned().unwrap_or_default(),
        })
        .collect();
    let view = DocumentView {
        id: &d.id,
        theorem: &d.written.theorem_text,
        steps,
        inputs: &d.written.inputs,
        oracle: d.written.oracle.as_ref(),
        lean: &d.lean.full_text,
        var_links: d
            .links
            .var_links
            .iter()
            .map(|l| (format!("{}:{}", l.step, l.proposition), l.lean_name.as_str()))
            .collect(),
        nodes: d
            .graph
            .nodes
            .iter()
            .map(|(name, n)| NodeView {
                name,
                type_text: &n.type_text,
                step: n.step,
            })
            .collect(),
        edges: d
            .graph
            .edges
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect(),
        maps: &d.graph.step_maps,
        warnings: d.graph.warnings.iter().map(ToString::to_string).collect(),
        cached_sweeps: d
            .sweep_cache
            .iter()
            .flat_map(|c| c.keys().map(String::as_str))
            .collect(),
    };
    Ok(json(&view))
}

#[derive(Debug, serde::Deserialize)]
struct SweepQuery {
    var: Option<String>,
    lo: Option<i64>,
    hi: Option<i64>,
}

#[derive(Serialize)]
struct SweepPoint {
    value: i64,
    hypotheses_ok: bool,
    conclusion_holds: bool,
    break_step: Option<StepIndex>,
}

#[derive(Serialize)]
struct SweepView {
    variable: String,
    range: IntRange,
    fixed: BTreeMap<String, i64>,
    cached: bool,
    entries: Vec<SweepPoint>,
}

fn points<'a>(entries: impl Iterator<Item = &'a SweepEntry>) -> Vec<SweepPoint> {
    entries
        .map(|e| SweepPoint {
            value: e.value,
            hypotheses_ok: e.hypotheses_ok,
            conclusion_holds: e.conclusion_holds,
            break_step: e.break_step,
        })
        .collect()
}

async fn get_sweep(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<SweepQuery>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let d = state.doc(&id)?;
    let var = match q.var {
        Some(v) => v,
        None => d
            .written
            .inputs
            .first()
            .map(|i| i.name.clone())
            .ok_or_else(|| ApiError::invalid("document has no inputs"))?,
    };
    let input = d
        .written
        .input(&var)
        .ok_or_else(|| ApiError::invalid(format!("`{var}` is not an input variable")))?;
    let range = IntRange::new(
        q.lo.unwrap_or(input.default_range.lo),
        q.hi.unwrap_or(input.default_range.hi),
    );
    if range.is_empty() {
        return Err(ApiError::invalid(format!(
            "empty range {}..{}",
            range.lo, range.hi
        )));
    }
    let mut fixed = Binding::defaults(&d.written.inputs).assignments;
    fixed.remove(&var);
    if let Some(s) = d.cached_sweep(&var) {
        if s.fixed == fixed && s.range.lo <= range.lo && range.hi <= s.range.hi {
            return Ok(json(&SweepView {
                variable: var,
                range,
                fixed,
                cached: true,
                entries: points(s.entries.iter().filter(|e| range.contains(e.value))),
            }));
        }
    }
    if range.len() > DEFAULT_SWEEP_CAP {
        return Err(ProbeError::RangeTooLarge {
            len: range.len(),
            cap: DEFAULT_SWEEP_CAP,
        }
        .into());
    }
    let _permit = state
        .permits
        .clone()
        .acquire_owned()
        .await
        .expect("semaphore open");
    let (runner, ctx, doc, v) = (state.runner.clone(), state.ctx.clone(), d.clone(), var.clone());
    let s = tokio::task::spawn_blocking(move || sweep(&doc, &v, range, DEFAULT_SWEEP_CAP, &runner, &ctx))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(json(&SweepView {
        variable: var,
        range,
        fixed: s.fixed.clone(),
        cached: false,
        entries: points(s.entries.iter()),
    }))
}

#[derive(Serialize)]
struct EvalView<'a> {
    binding: &'a Binding,
    hypotheses_ok: bool,
    conclusion_holds: Option<bool>,
    break_step: Option<StepIndex>,
    per_step: &'a [ProbeResult],
    worked: Vec<WorkedStep>,
    cached: bool,
    probes_pending: bool,
}

fn eval_view(
    doc: &ProofDocument,
    e: &EvalResult,
    cached: bool,
    probes_pending: bool,
) -> Json<serde_json::Value> {
    json(&EvalView {
        binding: &e.binding,
        hypotheses_ok: e.hypotheses_ok,
        conclusion_holds: e.conclusion_holds,
        break_step: e.break_step,
        per_step: &e.per_step,
        worked: worked_examples(doc, e),
        cached,
        probes_pending,
    })
}

/// Inputs not given in the query take their default values.
fn parse_binding(doc: &ProofDocument, query: &BTreeMap<String, String>) -> Result<Binding, ApiError> {
    let mut binding = Binding::defaults(&doc.written.inputs);
    for (k, v) in query {
        if doc.written.input(k).is_none() {
            return Err(ApiError::invalid(format!("`{k}` is not an input variable")));
        }
        let value: i64 = v
            .trim()
            .parse()
            .map_err(|_| ApiError::invalid(format!("`{k}={v}` is not an integer")))?;
        binding = binding.with(k, value);
    }
    binding.validate(&doc.written.inputs)?;
    Ok(binding)
}

async fn get_eval(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(query): Query<BTreeMap<String, String>>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let doc = state.doc(&id)?;
    if doc.written.oracle.is_none() {
        return Err(ProbeError::MissingOracle.into());
    }
    let binding = parse_binding(&doc, &query)?;
    if let Some(e) = cached_eval(&doc, &binding) {
        return Ok(eval_view(&doc, &e, true, false));
    }
    let key = (id.clone(), binding.key());
    let cell = state
        .inflight
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .entry(key.clone())
        .or_default()
        .clone();
    if let Some(done) = cell.get() {
        return done.clone().map(|e| eval_view(&doc, &e, true, false));
    }
    let task = {
        let (state, doc, binding) = (state.clone(), doc.clone(), binding.clone());
        tokio::spawn(async move {
            let result = cell
                .get_or_init(|| async {
                    let _permit = state
                        .permits
                        .clone()
                        .acquire_owned()
                        .await
                        .expect("semaphore open");
                    let (runner, ctx) = (state.runner.clone(), state.ctx.clone());
                    tokio::task::spawn_blocking(move || evaluate_at(&doc, &binding, &runner, &ctx))
                        .await
                        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
                        .and_then(|r| r.map(Arc::new).map_err(ApiError::from))
                })
                .await
                .clone();
            if result.is_err() {
                state
                    .inflight
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .remove(&key);
            }
            result
        })
    };
    match tokio::time::timeout(state.config.deadline, task).await {
        Ok(Ok(result)) => result.map(|e| eval_view(&doc, &e, false, false)),
        Ok(Err(join)) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, join.to_string())),
        Err(_) => {
            let (hypotheses_ok, conclusion) = oracle_eval(&doc, &binding)?;
            let partial = EvalResult {
                binding,
                hypotheses_ok,
                conclusion_holds: Some(conclusion),
                break_step: None,
                per_step: Vec::new(),
            };
            Ok(eval_view(&doc, &partial, false, true))
        }
    }
}

#[derive(Debug, serde::Deserialize)]
struct DepsQuery {
    fact: Option<String>,
    step: Option<StepIndex>,
}

#[derive(Serialize)]
struct DepsView<'a> {
    fact: Option<&'a str>,
    step: Option<StepIndex>,
    /// Earlier steps this step relies on, with the facts it takes from each.
    upstream: BTreeMap<StepIndex, &'a BTreeSet<String>>,
    downstream: Vec<StepIndex>,
    /// Facts the fact is built from.
    uses: Vec<&'a str>,
    /// Facts built from the fact.
    used_by: Vec<&'a str>,
}

async fn get_deps(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<DepsQuery>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let d = state.doc(&id)?;
    let maps = &d.graph.step_maps;
    let (fact, step) = match (&q.fact, q.step) {
        (Some(f), _) => {
            let (name, node) = d
                .graph
                .nodes
                .get_key_value(f.as_str())
                .ok_or_else(|| ApiError::not_found(format!("unknown fact `{f}`")))?;
            (Some(name.as_str()), node.step)
        }
        (None, Some(s)) => {
            if d.written.step(s).is_none() {
                return Err(ApiError::not_found(format!("unknown step {s}")));
            }
            (None, Some(s))
        }
        (None, None) => return Err(ApiError::invalid("give `fact` or `step`")),
    };
    let upstream = step
        .and_then(|s| maps.relies_on.get(&s))
        .map(|m| m.iter().map(|(k, v)| (*k, v)).collect())
        .unwrap_or_default();
    let downstream = step
        .and_then(|s| maps.used_by.get(&s))
        .map(|v| v.iter().copied().collect())
        .unwrap_or_default();
    let (uses, used_by) = match fact {
        Some(f) => (
            d.graph
                .edges
                .iter()
                .filter(|(_, to)| to == f)
                .map(|(from, _)| from.as_str())
                .collect(),
            d.graph
                .edges
                .iter()
                .filter(|(from, _)| from == f)
                .map(|(_, to)| to.as_str())
                .collect(),
        ),
        None => (Vec::new(), Vec::new()),
    };
    Ok(json(&DepsView {
        fact,
        step,
        upstream,
        downstream,
        uses,
        used_by,
    }))
}
