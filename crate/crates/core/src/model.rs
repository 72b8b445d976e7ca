//! Shared domain types for explorable proof documents.
//!
//! A [`ProofDocument`] pairs a written proof with its aligned Lean source and
//! carries everything derived from the pair: the prose/Lean links, the fact
//! dependency graph, worked-example templates and the optional sweep cache.
//! Types are plain data; derived artifacts are produced by the pipeline
//! modules and attached by building a new document.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::depgraph::FactGraph;
use crate::prober::Sweep;
use crate::templater::WorkedTemplate;

/// 1-based index of a prose step.
pub type StepIndex = usize;

/// 1-based ordinal of a Lean step block inside [`LeanSource::step_blocks`].
pub type BlockId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrittenProof {
    pub theorem_text: String,
    pub steps: Vec<ProseStep>,
    pub inputs: Vec<InputVar>,
    /// Direct arithmetic predicates used as ground truth for slider coloring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
}

impl WrittenProof {
    pub fn step(&self, index: StepIndex) -> Option<&ProseStep> {
        index.checked_sub(1).and_then(|i| self.steps.get(i))
    }

    pub fn input(&self, name: &str) -> Option<&InputVar> {
        self.inputs.iter().find(|v| v.name == name)
    }

    /// Rebuilds the original proof text from the step segments.
    pub fn reassemble(&self, delimiter: Option<&str>) -> String {
        let parts: Vec<&str> = self.steps.iter().map(|s| s.text.as_str()).collect();
        parts.join(delimiter.unwrap_or(""))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProseStep {
    pub index: StepIndex,
    /// Raw segment of the proof text, including surrounding whitespace.
    pub text: String,
    #[serde(default)]
    pub propositions: Vec<PropositionSpan>,
}

impl ProseStep {
    /// The segment with surrounding whitespace removed.
    pub fn content(&self) -> &str {
        self.text.trim()
    }

    pub fn proposition(&self, name: &str) -> Option<&PropositionSpan> {
        self.propositions.iter().find(|p| p.name == name)
    }
}

/// A named proposition inside a prose step, addressed by character range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropositionSpan {
    pub name: String,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumberDomain {
    Integer,
    Natural,
}

impl NumberDomain {
    pub fn contains(self, value: i64) -> bool {
        match self {
            NumberDomain::Integer => true,
            NumberDomain::Natural => value >= 0,
        }
    }

    pub fn lean_type(self) -> &'static str {
        match self {
            NumberDomain::Integer => "ℤ",
            NumberDomain::Natural => "ℕ",
        }
    }
}

/// Inclusive integer interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntRange {
    pub lo: i64,
    pub hi: i64,
}

impl IntRange {
    pub fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.hi - self.lo) as usize + 1
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn values(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

impl fmt::Display for IntRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

impl std::str::FromStr for IntRange {
    type Err = String;

    /// Parses `LO..HI` (inclusive).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s
            .split_once("..")
            .ok_or_else(|| format!("expected LO..HI, got `{s}`"))?;
        let lo = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
        let hi = hi
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|e| format!("bad upper bound: {e}"))?;
        Ok(IntRange { lo, hi })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputVar {
    pub name: String,
    pub number_domain: NumberDomain,
    pub default_range: IntRange,
    /// Value used for this variable while another variable is swept.
    pub default_value: i64,
}

/// Hypothesis and conclusion predicates over the inputs, written in the
/// oracle expression language (see [`crate::oracle`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub hypothesis: String,
    pub conclusion: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRange {
    /// First line, 1-based.
    pub start: usize,
    /// Last line, inclusive.
    pub end: usize,
}

impl LineRange {
    pub fn contains(&self, line: usize) -> bool {
        self.start <= line && line <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBlock {
    pub prose_step: StepIndex,
    pub lines: LineRange,
    /// Names introduced by `have` statements in this block, in source order.
    pub haves: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeanSource {
    pub full_text: String,
    pub theorem_name: String,
    pub step_blocks: Vec<StepBlock>,
    /// Toolchain the source was checked against.
    #[serde(default)]
    pub toolchain: String,
}

impl LeanSource {
    pub fn block(&self, id: BlockId) -> Option<&StepBlock> {
        id.checked_sub(1).and_then(|i| self.step_blocks.get(i))
    }

    /// Block containing the given 1-based line.
    pub fn block_at_line(&self, line: usize) -> Option<BlockId> {
        self.step_blocks
            .iter()
            .position(|b| b.lines.contains(line))
            .map(|i| i + 1)
    }

    pub fn have_names(&self) -> impl Iterator<Item = &str> {
        self.step_blocks
            .iter()
            .flat_map(|b| b.haves.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarLink {
    pub step: StepIndex,
    pub proposition: String,
    pub lean_name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkMap {
    pub block_links: BTreeMap<StepIndex, Vec<BlockId>>,
    pub var_links: Vec<VarLink>,
}

impl LinkMap {
    /// Prose step a Lean block is linked to (lowest if several).
    pub fn step_of_block(&self, block: BlockId) -> Option<StepIndex> {
        self.block_links
            .iter()
            .find(|(_, blocks)| blocks.contains(&block))
            .map(|(step, _)| *step)
    }

    pub fn var_link(&self, step: StepIndex, proposition: &str) -> Option<&str> {
        self.var_links
            .iter()
            .find(|l| l.step == step && l.proposition == proposition)
            .map(|l| l.lean_name.as_str())
    }

    pub fn linked_names(&self) -> impl Iterator<Item = &str> {
        self.var_links.iter().map(|l| l.lean_name.as_str())
    }
}

/// Line/column position in a Lean file. Lines are 1-based, columns 0-based,
/// matching the toolchain's diagnostic format.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl Position {
    pub fn new(line: usize, column: usize) -> Self {
        Self { line, column }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub type_text: String,
}

impl Hypothesis {
    pub fn new(name: impl Into<String>, type_text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            type_text: type_text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofState {
    pub position: Position,
    pub hypotheses: Vec<Hypothesis>,
    /// Empty when no goals remain.
    pub goal_text: String,
}

impl ProofState {
    pub fn is_terminal(&self) -> bool {
        self.goal_text.is_empty()
    }

    pub fn hypothesis(&self, name: &str) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.hypotheses.iter().map(|h| h.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofDocument {
    pub id: String,
    pub written: WrittenProof,
    pub lean: LeanSource,
    pub links: LinkMap,
    pub graph: FactGraph,
    pub templates: BTreeMap<StepIndex, WorkedTemplate>,
    /// One sweep per input variable.
    pub sweep_cache: Option<BTreeMap<String, Sweep>>,
}

impl ProofDocument {
    pub fn new(id: impl Into<String>, written: WrittenProof, lean: LeanSource) -> Self {
        Self {
            id: id.into(),
            written,
            lean,
            links: LinkMap::default(),
            graph: FactGraph::default(),
            templates: BTreeMap::new(),
            sweep_cache: None,
        }
    }

    pub fn cached_sweep(&self, var: &str) -> Option<&Sweep> {
        self.sweep_cache.as_ref().and_then(|c| c.get(var))
    }

    pub fn with_sweep(mut self, sweep: Sweep) -> Self {
        self.sweep_cache
            .get_or_insert_with(BTreeMap::new)
            .insert(sweep.variable.clone(), sweep);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

/// Invariant violations (and non-fatal warnings) with field paths.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violation(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn warning(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
        self.warnings.extend(other.warnings);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "violation at {}: {}", v.path, v.message)?;
        }
        for w in &self.warnings {
            writeln!(f, "warning at {}: {}", w.path, w.message)?;
        }
        Ok(())
    }
}

/// True when `name` is usable as a Lean identifier.
pub fn is_lean_ident(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(is_ident_char) && !crate::lean::expr::is_keyword(name)
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\'' || ('₀'..='₉').contains(&c)
}
