//! Fact dependency recovery by diffing consecutive proof states.
//!
//! Every hypothesis that appears between two states becomes a node labeled
//! with the prose step of the tactic that introduced it. An edge `f -> g`
//! records that `g`'s introducing tactic or `g`'s type mentions `f` as a
//! standalone identifier. Step-level maps are projections of those edges.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lean::source::TacticSpan;
use crate::model::{LeanSource, LinkMap, ProofState, StepIndex};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDelta {
    pub introduced: Vec<String>,
    /// Names present before and absent after (cleared or renamed).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub revoked: Vec<String>,
    pub goal_changed: bool,
    pub tactic_text: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("hypotheses revoked by `{}`: {}", .delta.tactic_text, .delta.revoked.join(", "))]
pub struct HypothesisRevoked {
    pub delta: StateDelta,
}

/// Diffs two consecutive states by hypothesis name. Revocations are
/// reported as an error that still carries the full delta.
pub fn diff_states(
    prev: &ProofState,
    next: &ProofState,
    tactic_text: &str,
) -> Result<StateDelta, HypothesisRevoked> {
    let before: BTreeSet<&str> = prev.names().collect();
    let after: BTreeSet<&str> = next.names().collect();
    let delta = StateDelta {
        introduced: next
            .names()
            .filter(|n| !before.contains(n))
            .map(str::to_string)
            .collect(),
        revoked: prev
            .names()
            .filter(|n| !after.contains(n))
            .map(str::to_string)
            .collect(),
        goal_changed: prev.goal_text != next.goal_text,
        tactic_text: tactic_text.to_string(),
    };
    if delta.revoked.is_empty() {
        Ok(delta)
    } else {
        Err(HypothesisRevoked { delta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeFlag {
    Bookkeeping,
    /// Present in the initial state; no introducing tactic.
    Hypothesis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactNode {
    pub type_text: String,
    pub step: Option<StepIndex>,
    pub tactic_text: String,
    #[serde(default)]
    pub flags: BTreeSet<NodeFlag>,
    /// False once a later state no longer contains the fact.
    pub active: bool,
    /// Introduction order; ties within one tactic keep context order.
    pub order: usize,
}

/// One tactic transition as seen by the diff.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub step: Option<StepIndex>,
    pub tactic_text: String,
    pub introduced: Vec<String>,
    pub goal_changed: bool,
    /// The transition left no goals.
    pub closed_goal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphWarning {
    /// A node produced by a bookkeeping tactic proving a reflexive equality.
    BookkeepingNode { fact: String, step: Option<StepIndex> },
    /// A step that discharged the goal with a closing tactic but introduced
    /// no fact, so the graph has no node for it.
    ClosingTacticGap { step: StepIndex, tactic_text: String },
}

impl std::fmt::Display for GraphWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GraphWarning::BookkeepingNode { fact, step } => match step {
                Some(s) => write!(f, "bookkeeping node `{fact}` in step {s}"),
                None => write!(f, "bookkeeping node `{fact}`"),
            },
            GraphWarning::ClosingTacticGap { step, tactic_text } => write!(
                f,
                "step {step} closes the goal with `{tactic_text}` but introduces no fact"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourMaps {
    /// step -> earlier step -> facts of the earlier step it consumes.
    pub relies_on: BTreeMap<StepIndex, BTreeMap<StepIndex, BTreeSet<String>>>,
    /// step -> later steps relying on it.
    pub used_by: BTreeMap<StepIndex, BTreeSet<StepIndex>>,
    /// step -> facts from earlier steps or initial hypotheses it references.
    pub consumes: BTreeMap<StepIndex, BTreeSet<String>>,
    /// step -> facts it introduces.
    pub introduces: BTreeMap<StepIndex, BTreeSet<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactGraph {
    pub nodes: BTreeMap<String, FactNode>,
    /// `(from, to)`: `to` references `from`.
    pub edges: BTreeSet<(String, String)>,
    pub transitions: Vec<Transition>,
    pub step_maps: FourMaps,
    pub warnings: Vec<GraphWarning>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("expected {expected} states for {tactics} tactics, got {got}")]
    StateCount {
        expected: usize,
        tactics: usize,
        got: usize,
    },
    #[error("dependency cycle through `{0}`")]
    CycleDetected(String),
}

/// Tactic sets used to recognize graph artifacts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactConfig {
    pub bookkeeping: Vec<String>,
    pub closing: Vec<String>,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        Self {
            bookkeeping: vec!["rfl".into(), "trivial".into()],
            closing: vec![
                "omega".into(),
                "contradiction".into(),
                "exact".into(),
                "linarith".into(),
            ],
        }
    }
}

/// Identifier tokens of a text, splitting on every non-identifier
/// character (including `.`).
pub fn ident_tokens(text: &str) -> BTreeSet<&str> {
    text.split(|c: char| !crate::model::is_ident_char(c))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Builds the graph from `states[i]` (before tactic `i`) and
/// `states[i + 1]` (after it).
pub fn build_fact_graph(
    states: &[ProofState],
    tactics: &[TacticSpan],
    links: &LinkMap,
    lean: &LeanSource,
) -> Result<FactGraph, GraphError> {
    build_fact_graph_with(states, tactics, links, lean, &ArtifactConfig::default())
}

pub fn build_fact_graph_with(
    states: &[ProofState],
    tactics: &[TacticSpan],
    links: &LinkMap,
    lean: &LeanSource,
    config: &ArtifactConfig,
) -> Result<FactGraph, GraphError> {
    if states.len() != tactics.len() + 1 {
        return Err(GraphError::StateCount {
            expected: tactics.len() + 1,
            tactics: tactics.len(),
            got: states.len(),
        });
    }
    let mut graph = FactGraph::default();
    let mut order = 0;
    if let Some(initial) = states.first() {
        for h in &initial.hypotheses {
            graph.nodes.insert(
                h.name.clone(),
                FactNode {
                    type_text: h.type_text.clone(),
                    step: None,
                    tactic_text: String::new(),
                    flags: BTreeSet::from([NodeFlag::Hypothesis]),
                    active: true,
                    order,
                },
            );
            order += 1;
        }
    }
    for (i, span) in tactics.iter().enumerate() {
        let (prev, next) = (&states[i], &states[i + 1]);
        let delta = match diff_states(prev, next, &span.text) {
            Ok(d) => d,
            Err(HypothesisRevoked { delta }) => {
                for name in &delta.revoked {
                    if let Some(node) = graph.nodes.get_mut(name) {
                        node.active = false;
                    }
                }
                delta
            }
        };
        let step = lean
            .block_at_line(span.start.line)
            .and_then(|b| links.step_of_block(b));
        let tactic_tokens = ident_tokens(&span.text);
        for name in &delta.introduced {
            let type_text = next
                .hypothesis(name)
                .map(|h| h.type_text.clone())
                .unwrap_or_default();
            let type_tokens = ident_tokens(&type_text);
            let sources: Vec<String> = graph
                .nodes
                .keys()
                .filter(|f| *f != name)
                .filter(|f| tactic_tokens.contains(f.as_str()) || type_tokens.contains(f.as_str()))
                .cloned()
                .collect();
            for f in sources {
                graph.edges.insert((f, name.clone()));
            }
            graph.nodes.insert(
                name.clone(),
                FactNode {
                    type_text,
                    step,
                    tactic_text: span.text.clone(),
                    flags: BTreeSet::new(),
                    active: true,
                    order,
                },
            );
            order += 1;
        }
        graph.transitions.push(Transition {
            step,
            tactic_text: span.text.clone(),
            introduced: delta.introduced,
            goal_changed: delta.goal_changed,
            closed_goal: !prev.is_terminal() && next.is_terminal(),
        });
    }
    graph.topological_order()?;
    graph.step_maps = step_maps(&graph);
    graph.warnings = detect_artifacts_with(&graph, config);
    for w in &graph.warnings {
        if let GraphWarning::BookkeepingNode { fact, .. } = w {
            if let Some(node) = graph.nodes.get_mut(fact) {
                node.flags.insert(NodeFlag::Bookkeeping);
            }
        }
    }
    Ok(graph)
}

/// Projects fact edges onto prose steps.
pub fn step_maps(graph: &FactGraph) -> FourMaps {
    let mut maps = FourMaps::default();
    let steps: BTreeSet<StepIndex> = graph
        .transitions
        .iter()
        .filter_map(|t| t.step)
        .chain(graph.nodes.values().filter_map(|n| n.step))
        .collect();
    for &k in &steps {
        maps.introduces.entry(k).or_default();
        maps.consumes.entry(k).or_default();
        maps.relies_on.entry(k).or_default();
        maps.used_by.entry(k).or_default();
    }
    for (name, node) in &graph.nodes {
        if let Some(k) = node.step {
            maps.introduces.entry(k).or_default().insert(name.clone());
        }
    }
    for (from, to) in &graph.edges {
        let (Some(src), Some(dst)) = (graph.nodes.get(from), graph.nodes.get(to)) else {
            continue;
        };
        let Some(k) = dst.step else { continue };
        match src.step {
            Some(j) if j < k => {
                maps.consumes.entry(k).or_default().insert(from.clone());
                maps.relies_on
                    .entry(k)
                    .or_default()
                    .entry(j)
                    .or_default()
                    .insert(from.clone());
                maps.used_by.entry(j).or_default().insert(k);
            }
            None if src.flags.contains(&NodeFlag::Hypothesis) => {
                maps.consumes.entry(k).or_default().insert(from.clone());
            }
            _ => {}
        }
    }
    maps
}

pub fn detect_artifacts(graph: &FactGraph) -> Vec<GraphWarning> {
    detect_artifacts_with(graph, &ArtifactConfig::default())
}

pub fn detect_artifacts_with(graph: &FactGraph, config: &ArtifactConfig) -> Vec<GraphWarning> {
    let mut warnings = Vec::new();
    let mut nodes: Vec<(&String, &FactNode)> = graph.nodes.iter().collect();
    nodes.sort_by_key(|(_, n)| n.order);
    for (name, node) in nodes {
        if node.flags.contains(&NodeFlag::Hypothesis) {
            continue;
        }
        let justification = justification(&node.tactic_text);
        let bookkeeping = config.bookkeeping.iter().any(|b| b == justification);
        if bookkeeping && is_reflexive_equality(&node.type_text) {
            warnings.push(GraphWarning::BookkeepingNode {
                fact: name.clone(),
                step: node.step,
            });
        }
    }
    let mut introduces: BTreeMap<StepIndex, usize> = BTreeMap::new();
    for t in &graph.transitions {
        if let Some(k) = t.step {
            *introduces.entry(k).or_default() += t.introduced.len();
        }
    }
    for t in &graph.transitions {
        let Some(k) = t.step else { continue };
        let head = t.tactic_text.split_whitespace().next().unwrap_or("");
        if introduces[&k] == 0 && t.closed_goal && config.closing.iter().any(|c| c == head) {
            warnings.push(GraphWarning::ClosingTacticGap {
                step: k,
                tactic_text: t.tactic_text.clone(),
            });
        }
    }
    warnings
}

/// The proof term or tactic after the top-level `:=` of a `have`, or the
/// tactic itself.
fn justification(tactic: &str) -> &str {
    let j = match tactic.find(":=") {
        Some(i) => tactic[i + 2..].trim(),
        None => tactic.trim(),
    };
    j.strip_prefix("by ").map(str::trim).unwrap_or(j)
}

fn is_reflexive_equality(type_text: &str) -> bool {
    match type_text.split_once(" = ") {
        Some((l, r)) => {
            let norm = |s: &str| s.split_whitespace().collect::<String>();
            !r.contains(" = ") && norm(l) == norm(r)
        }
        None => false,
    }
}

impl FactGraph {
    /// Node names in a dependency-respecting order.
    pub fn topological_order(&self) -> Result<Vec<String>, GraphError> {
        use petgraph::graphmap::DiGraphMap;
        let mut g: DiGraphMap<&str, ()> = DiGraphMap::new();
        let mut names: Vec<(&String, &FactNode)> = self.nodes.iter().collect();
        names.sort_by_key(|(_, n)| n.order);
        for (name, _) in &names {
            g.add_node(name.as_str());
        }
        for (f, t) in &self.edges {
            g.add_edge(f.as_str(), t.as_str(), ());
        }
        petgraph::algo::toposort(&g, None)
            .map(|order| order.into_iter().map(str::to_string).collect())
            .map_err(|cycle| GraphError::CycleDetected(cycle.node_id().to_string()))
    }

    pub fn step_of(&self, fact: &str) -> Option<StepIndex> {
        self.nodes.get(fact).and_then(|n| n.step)
    }

    /// Graphviz rendering; node ids are fact names.
    pub fn to_dot(&self) -> String {
        let esc = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut out = String::from("digraph facts {\n  rankdir=TB;\n");
        let mut nodes: Vec<(&String, &FactNode)> = self.nodes.iter().collect();
        nodes.sort_by_key(|(_, n)| n.order);
        for (name, node) in nodes {
            let step = node
                .step
                .map(|s| format!("step {s}"))
                .unwrap_or_else(|| "hypothesis".into());
            let mut attrs = format!("label=\"{} : {}\\n{step}\"", esc(name), esc(&node.type_text));
            if node.flags.contains(&NodeFlag::Bookkeeping) {
                attrs.push_str(", style=dashed");
            }
            if !node.active {
                attrs.push_str(", color=gray");
            }
            out.push_str(&format!("  \"{}\" [{attrs}];\n", esc(name)));
        }
        for (f, t) in &self.edges {
            out.push_str(&format!("  \"{}\" -> \"{}\";\n", esc(f), esc(t)));
        }
        out.push_str("}\n");
        out
    }
}

/// Hand-annotated step dependencies used to score recovery.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldGraph {
    pub steps: BTreeMap<StepIndex, GoldStep>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldStep {
    pub relies_on: BTreeSet<StepIndex>,
    /// Disputed dependencies: counted as correct whether recovered or not
    /// in the lenient score, required in the strict score.
    #[serde(default)]
    pub optional: BTreeSet<StepIndex>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecovery {
    pub step: StepIndex,
    pub recovered: BTreeSet<StepIndex>,
    pub expected: BTreeSet<StepIndex>,
    pub optional: BTreeSet<StepIndex>,
    pub strict: bool,
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub steps: Vec<StepRecovery>,
    pub strict: usize,
    pub lenient: usize,
    pub total: usize,
}

/// Scores recovered `relies_on` sets against a gold graph. A step is a
/// strict match when it recovers exactly the required and optional
/// dependencies, and a lenient match when it recovers every required one
/// and nothing outside the optional set.
pub fn compare_to_gold(maps: &FourMaps, gold: &GoldGraph) -> RecoveryReport {
    let mut steps = Vec::new();
    for (&k, g) in &gold.steps {
        let recovered: BTreeSet<StepIndex> = maps
            .relies_on
            .get(&k)
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default();
        let all: BTreeSet<StepIndex> = g.relies_on.union(&g.optional).copied().collect();
        steps.push(StepRecovery {
            step: k,
            strict: recovered == all,
            lenient: g.relies_on.is_subset(&recovered) && recovered.is_subset(&all),
            recovered,
            expected: g.relies_on.clone(),
            optional: g.optional.clone(),
        });
    }
    RecoveryReport {
        strict: steps.iter().filter(|s| s.strict).count(),
        lenient: steps.iter().filter(|s| s.lenient).count(),
        total: steps.len(),
        steps,
    }
}
