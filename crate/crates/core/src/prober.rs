//! Concrete execution of a proof: per-step probe files that fix the inputs,
//! replay the step prefix under `try`, and reduce the resulting facts to
//! values; break detection per binding; range sweeps for slider coloring.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lean::expr::parse_expr;
use crate::lean::source::{HavePattern, ParsedProof, SourceError, Tactic};
use crate::lean::{LeanRunner, ProbeOutcome, RunnerError};
use crate::model::{InputVar, IntRange, LeanSource, LinkMap, ProofDocument, StepIndex};
use crate::oracle::{OracleError, Predicate};

/// Upper bound on sweep length unless configured otherwise.
pub const DEFAULT_SWEEP_CAP: usize = 201;

/// Prefix of the hypotheses that pin inputs inside probes.
pub const BIND_PREFIX: &str = "hbind_";

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Binding {
    pub assignments: BTreeMap<String, i64>,
}

impl Binding {
    pub fn new<I, K>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, i64)>,
        K: Into<String>,
    {
        Self {
            assignments: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    /// Every input at its default value.
    pub fn defaults(inputs: &[InputVar]) -> Self {
        Self::new(inputs.iter().map(|v| (v.name.clone(), v.default_value)))
    }

    pub fn with(mut self, var: &str, value: i64) -> Self {
        self.assignments.insert(var.to_string(), value);
        self
    }

    pub fn get(&self, var: &str) -> Option<i64> {
        self.assignments.get(var).copied()
    }

    /// Stable short key, used for probe directories and caches.
    pub fn key(&self) -> String {
        let canonical = self.to_string();
        hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
    }

    /// Checks the binding covers exactly `inputs` with in-domain values.
    pub fn validate(&self, inputs: &[InputVar]) -> Result<(), ProbeError> {
        for v in inputs {
            match self.get(&v.name) {
                None => return Err(ProbeError::UnboundInput(v.name.clone())),
                Some(x) if !v.number_domain.contains(x) => {
                    return Err(ProbeError::InvalidBinding(format!(
                        "{} = {x} is outside {}",
                        v.name,
                        v.number_domain.lean_type()
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = self
            .assignments
            .keys()
            .find(|k| !inputs.iter().any(|v| &v.name == *k))
        {
            return Err(ProbeError::InvalidBinding(format!("`{extra}` is not an input")));
        }
        Ok(())
    }
}

impl std::fmt::Display for Binding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.assignments.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReducedValue {
    Int(i64),
    Bool(bool),
    Symbolic(String),
}

impl std::fmt::Display for ReducedValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReducedValue::Int(v) => write!(f, "{v}"),
            ReducedValue::Bool(b) => write!(f, "{b}"),
            ReducedValue::Symbolic(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub step_index: StepIndex,
    pub closed: bool,
    pub values: BTreeMap<String, ReducedValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalResult {
    pub binding: Binding,
    pub hypotheses_ok: bool,
    pub conclusion_holds: Option<bool>,
    pub break_step: Option<StepIndex>,
    pub per_step: Vec<ProbeResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub value: i64,
    pub hypotheses_ok: bool,
    pub conclusion_holds: bool,
    pub break_step: Option<StepIndex>,
    /// Probe results for this binding, so evaluations can be served from
    /// the cache.
    pub per_step: Vec<ProbeResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: String,
    pub range: IntRange,
    /// Values of the other inputs during the sweep.
    pub fixed: BTreeMap<String, i64>,
    pub entries: Vec<SweepEntry>,
}

impl Sweep {
    pub fn binding_for(&self, value: i64) -> Binding {
        let mut b = Binding {
            assignments: self.fixed.clone(),
        };
        b.assignments.insert(self.variable.clone(), value);
        b
    }

    /// Cached evaluation for a binding, if the sweep covers it.
    pub fn lookup(&self, binding: &Binding) -> Option<EvalResult> {
        let value = binding.get(&self.variable)?;
        if self.binding_for(value) != *binding {
            return None;
        }
        let e = self.entries.iter().find(|e| e.value == value)?;
        Some(EvalResult {
            binding: binding.clone(),
            hypotheses_ok: e.hypotheses_ok,
            conclusion_holds: Some(e.conclusion_holds),
            break_step: e.break_step,
            per_step: e.per_step.clone(),
        })
    }
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("binding does not assign input `{0}`")]
    UnboundInput(String),
    #[error("invalid binding: {0}")]
    InvalidBinding(String),
    #[error("step {0} has no Lean block")]
    StepOutOfRange(StepIndex),
    #[error("document has no oracle predicates")]
    MissingOracle,
    #[error("`{0}` is not an input variable")]
    UnknownVariable(String),
    #[error("range of {len} values exceeds the cap of {cap}")]
    RangeTooLarge { len: usize, cap: usize },
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
}

impl ProbeError {
    pub fn is_environment_fault(&self) -> bool {
        matches!(self, ProbeError::Runner(e) if e.is_environment_fault())
    }
}

/// Where probe files are written.
#[derive(Debug, Clone)]
pub struct ProbeContext {
    pub workdir: PathBuf,
}

impl ProbeContext {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        Self {
            workdir: workdir.into(),
        }
    }

    pub fn probe_path(&self, doc: &str, binding: &Binding, step: StepIndex) -> PathBuf {
        self.workdir
            .join("probes")
            .join(doc)
            .join(binding.key())
            .join(format!("step{step}.lean"))
    }
}

/// Proof used for copied `have` statements inside probes.
pub const PROBE_TACTIC: &str = "by subst_vars; simp [Finset.sum_range_succ]; try rfl";

/// Emits the probe for `step_index`: the theorem's inputs become binders
/// pinned by `hbind_*` equations, every `have` up to the step is replayed
/// under `try`, the context is reduced by substitution and simplification,
/// and the step's facts are checked to exist.
pub fn make_probe(
    lean: &LeanSource,
    inputs: &[InputVar],
    step_index: StepIndex,
    binding: &Binding,
) -> Result<String, ProbeError> {
    let proof = ParsedProof::parse(&lean.full_text)?.ok_or(ProbeError::StepOutOfRange(step_index))?;
    if !lean.step_blocks.iter().any(|b| b.prose_step == step_index) {
        return Err(ProbeError::StepOutOfRange(step_index));
    }
    let prefix: Vec<_> = proof
        .tactics
        .iter()
        .filter(|t| t.step.is_some_and(|s| s <= step_index))
        .filter(|t| t.tactic.is_have())
        .collect();
    let mut mentioned = BTreeSet::new();
    for t in &prefix {
        mentioned.extend(
            crate::depgraph::ident_tokens(&t.text)
                .into_iter()
                .map(str::to_string),
        );
    }
    let mut header = String::from("example");
    for v in inputs {
        let value = match binding.get(&v.name) {
            Some(x) => x,
            None if mentioned.contains(&v.name) => return Err(ProbeError::UnboundInput(v.name.clone())),
            None => continue,
        };
        header.push_str(&format!(
            " ({} : {}) ({BIND_PREFIX}{} : {} = {value})",
            v.name,
            v.number_domain.lean_type(),
            v.name,
            v.name
        ));
    }
    header.push_str(" : True := by\n");

    let mut out = header;
    let mut defs: Vec<String> = Vec::new();
    let mut facts: Vec<(StepIndex, String)> = Vec::new();
    for t in &prefix {
        let Tactic::Have { pattern, ty, proof } = &t.tactic else {
            continue;
        };
        let step = t.step.unwrap_or(0);
        let line = match (pattern, ty) {
            (HavePattern::Destructure(names), Some(ty)) if is_definitional(proof) => {
                if let Some(h) = names.last() {
                    defs.push(h.clone());
                    facts.push((step, h.clone()));
                }
                format!("have ⟨{}⟩ : {ty} := {proof}", names.join(", "))
            }
            (HavePattern::Named(name), Some(ty)) => {
                if name != "_" && name != "this" {
                    facts.push((step, name.clone()));
                }
                format!("have {name} : {ty} := {PROBE_TACTIC}")
            }
            (HavePattern::Destructure(names), Some(ty)) => {
                for n in names {
                    facts.push((step, n.clone()));
                }
                format!("have ⟨{}⟩ : {ty} := {PROBE_TACTIC}", names.join(", "))
            }
            (_, None) => t.text.clone(),
        };
        out.push_str(&format!("  try ({line})\n  trace_state\n"));
    }
    for v in inputs {
        if binding.get(&v.name).is_some() {
            out.push_str(&format!("  try subst {BIND_PREFIX}{}\n", v.name));
        }
    }
    for (i, d) in defs.iter().enumerate() {
        if i > 0 {
            out.push_str(&format!("  try simp only [{}] at {d}\n", defs[..i].join(", ")));
        }
        out.push_str(&format!("  try norm_num at {d}\n"));
    }
    for (_, f) in facts.iter().filter(|(_, f)| !defs.contains(f)) {
        if !defs.is_empty() {
            out.push_str(&format!("  try simp only [{}] at {f}\n", defs.join(", ")));
        }
        out.push_str(&format!("  try norm_num at {f}\n"));
    }
    out.push_str("  trace_state\n");
    for (_, f) in facts.iter().filter(|(s, _)| *s == step_index) {
        out.push_str(&format!("  have _ := {f}\n"));
    }
    out.push_str("  trivial\n  trace_state\n");
    Ok(out)
}

fn is_definitional(proof: &str) -> bool {
    let p: String = proof.split_whitespace().collect();
    p == "⟨_,rfl⟩"
}

/// Reads values from the last non-terminal captured state. A definitional
/// `name = <numeral>` yields the numeral under `name`, a closed proposition
/// yields a boolean under the hypothesis name, anything else is kept as
/// text. A definition hypothesis that the links refer to directly also
/// gets the numeral under its own name.
pub fn extract_values(outcome: &ProbeOutcome, links: &LinkMap) -> BTreeMap<String, ReducedValue> {
    let mut values = BTreeMap::new();
    let Some(state) = outcome.raw_states.iter().rev().find(|s| !s.is_terminal()) else {
        return values;
    };
    let linked: BTreeSet<&str> = links.linked_names().collect();
    for h in &state.hypotheses {
        if h.name.starts_with(BIND_PREFIX) || h.name == "_" || is_sort(&h.type_text) {
            continue;
        }
        let parsed = parse_expr(&h.type_text).ok();
        if let Some((var, v)) = parsed.as_ref().and_then(|e| e.as_numeric_definition()) {
            if let Ok(v) = i64::try_from(v) {
                values.insert(var.to_string(), ReducedValue::Int(v));
                if linked.contains(h.name.as_str()) {
                    values.insert(h.name.clone(), ReducedValue::Int(v));
                }
                continue;
            }
        }
        let closed = parsed
            .as_ref()
            .filter(|e| e.free_vars().is_empty())
            .and_then(|e| e.eval_prop(&Default::default()).ok());
        let value = match closed {
            Some(b) => ReducedValue::Bool(b),
            None => ReducedValue::Symbolic(h.type_text.clone()),
        };
        values.insert(h.name.clone(), value);
    }
    values
}

fn is_sort(type_text: &str) -> bool {
    matches!(type_text.trim(), "ℤ" | "ℕ" | "Int" | "Nat")
}

/// Evaluates the oracle predicates at a binding.
pub fn oracle_eval(doc: &ProofDocument, binding: &Binding) -> Result<(bool, bool), ProbeError> {
    let spec = doc.written.oracle.as_ref().ok_or(ProbeError::MissingOracle)?;
    let hyp = Predicate::parse(&spec.hypothesis)?;
    let concl = Predicate::parse(&spec.conclusion)?;
    Ok((hyp.eval(&binding.assignments)?, concl.eval(&binding.assignments)?))
}

/// Runs every step's probe at `binding` and reports the first break.
pub fn evaluate_at(
    doc: &ProofDocument,
    binding: &Binding,
    runner: &LeanRunner,
    ctx: &ProbeContext,
) -> Result<EvalResult, ProbeError> {
    binding.validate(&doc.written.inputs)?;
    let (hypotheses_ok, conclusion_holds) = oracle_eval(doc, binding)?;
    let per_step = run_probes(doc, binding, runner, ctx)?;
    let break_step = per_step.iter().find(|p| !p.closed).map(|p| p.step_index);
    Ok(EvalResult {
        binding: binding.clone(),
        hypotheses_ok,
        conclusion_holds: Some(conclusion_holds),
        break_step,
        per_step,
    })
}

/// One probe per prose step that has a Lean block, in step order.
pub fn run_probes(
    doc: &ProofDocument,
    binding: &Binding,
    runner: &LeanRunner,
    ctx: &ProbeContext,
) -> Result<Vec<ProbeResult>, ProbeError> {
    let steps: BTreeSet<StepIndex> = doc.lean.step_blocks.iter().map(|b| b.prose_step).collect();
    let mut jobs = Vec::new();
    for &k in &steps {
        let text = make_probe(&doc.lean, &doc.written.inputs, k, binding)?;
        jobs.push((k, text, ctx.probe_path(&doc.id, binding, k)));
    }
    let outcomes = runner.run_parallel(jobs, |(k, text, path): (StepIndex, String, PathBuf)| {
        runner.run_probe(&text, k, &path)
    });
    let mut results = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let outcome = outcome?;
        let mut values = extract_values(&outcome, &doc.links);
        for (k, v) in &binding.assignments {
            values.insert(k.clone(), ReducedValue::Int(*v));
        }
        results.push(ProbeResult {
            step_index: outcome.step_index,
            closed: outcome.closed,
            values,
        });
    }
    Ok(results)
}

/// Evaluates `var` over `range` with the other inputs at their defaults.
pub fn sweep(
    doc: &ProofDocument,
    var: &str,
    range: IntRange,
    cap: usize,
    runner: &LeanRunner,
    ctx: &ProbeContext,
) -> Result<Sweep, ProbeError> {
    let input = doc
        .written
        .input(var)
        .ok_or_else(|| ProbeError::UnknownVariable(var.to_string()))?;
    if range.len() > cap {
        return Err(ProbeError::RangeTooLarge {
            len: range.len(),
            cap,
        });
    }
    if doc.written.oracle.is_none() {
        return Err(ProbeError::MissingOracle);
    }
    let mut fixed: BTreeMap<String, i64> = Binding::defaults(&doc.written.inputs).assignments;
    fixed.remove(var);
    let mut entries = Vec::with_capacity(range.len());
    for value in range.values() {
        if !input.number_domain.contains(value) {
            return Err(ProbeError::InvalidBinding(format!(
                "{var} = {value} is outside {}",
                input.number_domain.lean_type()
            )));
        }
        let mut binding = Binding {
            assignments: fixed.clone(),
        };
        binding.assignments.insert(var.to_string(), value);
        let eval = evaluate_at(doc, &binding, runner, ctx)?;
        entries.push(SweepEntry {
            value,
            hypotheses_ok: eval.hypotheses_ok,
            conclusion_holds: eval.conclusion_holds.unwrap_or(false),
            break_step: eval.break_step,
            per_step: eval.per_step,
        });
    }
    Ok(Sweep {
        variable: var.to_string(),
        range,
        fixed,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisagreementKind {
    /// The hypotheses hold but a probe failed.
    BreakUnderValidHypotheses,
    /// The hypotheses hold but the conclusion does not.
    ConclusionFailsUnderHypotheses,
    /// The conclusion fails yet every probe closed.
    UnbrokenFalseConclusion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub binding: Binding,
    pub kind: DisagreementKind,
    pub break_step: Option<StepIndex>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub checked: usize,
    pub disagreements: Vec<Disagreement>,
}

impl AgreementReport {
    pub fn is_clean(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// Compares the oracle with the probes on one evaluation.
pub fn agreement(eval: &EvalResult) -> Vec<Disagreement> {
    let mut out = Vec::new();
    let concl = eval.conclusion_holds.unwrap_or(true);
    let mut push = |kind| {
        out.push(Disagreement {
            binding: eval.binding.clone(),
            kind,
            break_step: eval.break_step,
        })
    };
    if eval.hypotheses_ok && eval.break_step.is_some() {
        push(DisagreementKind::BreakUnderValidHypotheses);
    }
    if eval.hypotheses_ok && !concl {
        push(DisagreementKind::ConclusionFailsUnderHypotheses);
    }
    if !concl && eval.break_step.is_none() {
        push(DisagreementKind::UnbrokenFalseConclusion);
    }
    out
}

/// Every binding in the cartesian product of the given value lists.
pub fn bindings_product(values: &BTreeMap<String, Vec<i64>>) -> Vec<Binding> {
    let mut out = vec![Binding::default()];
    for (var, vs) in values {
        let mut next = Vec::with_capacity(out.len() * vs.len());
        for b in &out {
            for v in vs {
                next.push(b.clone().with(var, *v));
            }
        }
        out = next;
    }
    if values.values().any(Vec::is_empty) {
        return Vec::new();
    }
    out
}

/// Checks oracle/probe agreement on every binding in `values`; inputs not
/// listed stay at their defaults.
pub fn oracle_check(
    doc: &ProofDocument,
    values: &BTreeMap<String, Vec<i64>>,
    runner: &LeanRunner,
    ctx: &ProbeContext,
) -> Result<AgreementReport, ProbeError> {
    for var in values.keys() {
        if doc.written.input(var).is_none() {
            return Err(ProbeError::UnknownVariable(var.clone()));
        }
    }
    let defaults = Binding::defaults(&doc.written.inputs);
    let mut report = AgreementReport::default();
    for partial in bindings_product(values) {
        let mut binding = defaults.clone();
        binding.assignments.extend(partial.assignments);
        let eval = evaluate_at(doc, &binding, runner, ctx)?;
        report.checked += 1;
        report.disagreements.extend(agreement(&eval));
    }
    Ok(report)
}

/// Checks extracted integers against the proof's defining equations and
/// equational facts. Returns one message per failed equation.
pub fn value_consistency(lean: &LeanSource, result: &ProbeResult) -> Vec<String> {
    let Ok(Some(proof)) = ParsedProof::parse(&lean.full_text) else {
        return Vec::new();
    };
    let env: crate::lean::expr::Env = result
        .values
        .iter()
        .filter_map(|(k, v)| match v {
            ReducedValue::Int(i) => Some((k.clone(), *i as i128)),
            _ => None,
        })
        .collect();
    let mut failures = Vec::new();
    for t in &proof.tactics {
        if t.step.is_none_or(|s| s > result.step_index) {
            continue;
        }
        let Tactic::Have {
            pattern,
            ty: Some(ty),
            ..
        } = &t.tactic
        else {
            continue;
        };
        let Ok(mut e) = parse_expr(ty) else { continue };
        if let (HavePattern::Destructure(names), crate::lean::expr::Expr::Exists(bound, _, body)) =
            (pattern, &e)
        {
            if let Some(var) = names.first() {
                e = body.subst(bound, &crate::lean::expr::Expr::Var(var.clone()));
            }
        }
        let is_equation = matches!(
            e,
            crate::lean::expr::Expr::Rel(crate::lean::expr::RelOp::Eq, _, _)
        );
        if !is_equation || !e.free_vars().iter().all(|v| env.contains_key(v)) {
            continue;
        }
        if e.eval_prop(&env) != Ok(true) {
            failures.push(format!("`{e}` fails at {:?}", result.values));
        }
    }
    failures
}
