//! Aligned Lean generation and the structural alignment check.
//!
//! Alignment rules:
//! - order: prose indices attached to `have` statements are sorted;
//! - have: every step block contains at least one `have`. A block holding
//!   only `intro` is exempt, and so is a final block holding only the
//!   closing tactic. Exempt blocks are listed in the report.
//! - blocks: block indices form a non-decreasing cover of `1..=len(steps)`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lean::source::{ParsedProof, SourceError, Tactic};
use crate::lean::{CompileReport, LeanRunner, RunnerError};
use crate::model::{LeanSource, WrittenProof};
use crate::provider::{
    extract_code_block, fill_prompt, prompts, CompletionRequest, GenerationProvider, Message, ProviderError,
    RequestTags,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub rule_order_ok: bool,
    pub rule_have_ok: bool,
    pub rule_blocks_ok: bool,
    pub order_violations: Vec<String>,
    pub have_violations: Vec<String>,
    pub block_violations: Vec<String>,
    /// Blocks excused from the have rule.
    #[serde(default)]
    pub exempt_blocks: Vec<usize>,
    /// Fraction of prose proposition names that appear as Lean identifiers.
    pub name_overlap: f64,
    pub matched_names: BTreeSet<String>,
}

impl AlignmentReport {
    pub fn is_aligned(&self) -> bool {
        self.rule_order_ok && self.rule_have_ok && self.rule_blocks_ok
    }

    pub fn details(&self) -> impl Iterator<Item = &String> {
        self.order_violations
            .iter()
            .chain(&self.have_violations)
            .chain(&self.block_violations)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignmentError {
    #[error("line {line}: `have` outside any `-- step k` annotation")]
    UnannotatedBlock { line: usize },
    #[error(transparent)]
    Source(SourceError),
}

/// Checks the three alignment rules. Pure and deterministic.
pub fn check_alignment(written: &WrittenProof, lean: &LeanSource) -> Result<AlignmentReport, AlignmentError> {
    let proof = ParsedProof::parse(&lean.full_text).map_err(AlignmentError::Source)?;
    let tactics = proof.map(|p| p.tactics).unwrap_or_default();
    for t in &tactics {
        if t.step.is_none() {
            return Err(AlignmentError::UnannotatedBlock { line: t.start.line });
        }
    }
    let mut report = AlignmentReport {
        rule_order_ok: true,
        rule_have_ok: true,
        rule_blocks_ok: true,
        order_violations: vec![],
        have_violations: vec![],
        block_violations: vec![],
        exempt_blocks: vec![],
        name_overlap: 0.0,
        matched_names: BTreeSet::new(),
    };

    // Order: prose indices over have statements are sorted.
    let mut last = 0;
    for t in tactics.iter().filter(|t| t.tactic.is_have()) {
        let k = t.step.unwrap_or(0);
        if k < last {
            report.order_violations.push(format!(
                "line {}: have for step {k} follows a have for step {last}",
                t.start.line
            ));
        }
        last = last.max(k);
    }

    // Have: every block holds a have, barring the exemptions above.
    for (i, block) in lean.step_blocks.iter().enumerate() {
        let in_block: Vec<&Tactic> = tactics
            .iter()
            .filter(|t| block.lines.contains(t.start.line))
            .map(|t| &t.tactic)
            .collect();
        let has_have = in_block.iter().any(|t| t.is_have());
        let intro_only = !in_block.is_empty() && in_block.iter().all(|t| matches!(t, Tactic::Intro(_)));
        let closing_only =
            i + 1 == lean.step_blocks.len() && in_block.len() == 1 && matches!(in_block[0], Tactic::Other(_));
        if !has_have && (intro_only || closing_only) {
            report.exempt_blocks.push(i + 1);
        } else if !has_have {
            report.have_violations.push(format!(
                "block {} (step {}, lines {}-{}) has no have statement",
                i + 1,
                block.prose_step,
                block.lines.start,
                block.lines.end
            ));
        }
    }
    if lean.step_blocks.is_empty() {
        report.have_violations.push("proof has no step blocks".into());
    }

    // Blocks: non-decreasing cover of 1..=n.
    let indices: Vec<usize> = lean.step_blocks.iter().map(|b| b.prose_step).collect();
    if indices.windows(2).any(|w| w[1] < w[0]) {
        report
            .block_violations
            .push(format!("block step indices {indices:?} are not non-decreasing"));
    }
    let covered: BTreeSet<usize> = indices.iter().copied().collect();
    for k in 1..=written.steps.len() {
        if !covered.contains(&k) {
            report.block_violations.push(format!("step {k} has no block"));
        }
    }
    for k in &covered {
        if *k == 0 || *k > written.steps.len() {
            report
                .block_violations
                .push(format!("block annotated with nonexistent step {k}"));
        }
    }
    if indices.windows(2).any(|w| w[1] < w[0]) {
        report
            .order_violations
            .push("blocks are not in prose order".into());
    }

    report.rule_order_ok = report.order_violations.is_empty();
    report.rule_have_ok = report.have_violations.is_empty();
    report.rule_blocks_ok = report.block_violations.is_empty();

    let idents = crate::depgraph::ident_tokens(&lean.full_text);
    let prose_names: BTreeSet<&str> = written
        .steps
        .iter()
        .flat_map(|s| s.propositions.iter().map(|p| p.name.as_str()))
        .collect();
    report.matched_names = prose_names
        .iter()
        .filter(|n| idents.contains(*n))
        .map(|n| n.to_string())
        .collect();
    report.name_overlap = if prose_names.is_empty() {
        1.0
    } else {
        report.matched_names.len() as f64 / prose_names.len() as f64
    };
    Ok(report)
}

/// Name overlap below which an accepted proof is reported as diverging
/// from the prose strategy.
pub const DIVERGENCE_OVERLAP: f64 = 0.5;

#[derive(Debug, Error)]
pub enum FormalizeError {
    #[error("no aligned, compiling proof after {attempts} attempts")]
    ExhaustedAttempts {
        attempts: u32,
        alignment: Option<Box<AlignmentReport>>,
        compile: Option<Box<CompileReport>>,
        last_error: Option<String>,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
}

/// Numbered step list used in prompts.
pub fn render_steps(written: &WrittenProof) -> String {
    written
        .steps
        .iter()
        .map(|s| format!("{}. {}", s.index, s.content()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Generate, compile and check up to `max_attempts` times, feeding
/// diagnostics and alignment problems back into the next request.
pub fn generate_aligned_proof(
    doc: &str,
    written: &WrittenProof,
    provider: &dyn GenerationProvider,
    runner: &LeanRunner,
    workdir: &Path,
    max_attempts: u32,
) -> Result<LeanSource, FormalizeError> {
    let slots = BTreeMap::from([
        ("theorem", written.theorem_text.clone()),
        ("steps", render_steps(written)),
    ]);
    let mut messages = vec![
        Message::system(prompts::SYSTEM),
        Message::user(fill_prompt(prompts::FORMALIZE, &slots)),
    ];
    let attempts = max_attempts.max(1);
    let mut last_alignment = None;
    let mut last_compile = None;
    let mut last_error = None;
    for attempt in 1..=attempts {
        let request = CompletionRequest {
            tags: RequestTags {
                kind: "formalize".into(),
                doc: doc.into(),
                step: None,
                attempt,
            },
            messages: messages.clone(),
        };
        let response = provider.complete(&request)?;
        let text = extract_code_block(&response);
        messages.push(Message::assistant(text.clone()));
        let mut diagnostics = String::from("(none)");
        let mut alignment_text = String::from("(none)");
        match LeanSource::parse(&text) {
            Err(e) => {
                last_error = Some(e.to_string());
                alignment_text = e.to_string();
            }
            Ok(mut lean) => {
                let compile = runner.compile(&lean, workdir)?;
                if !compile.success {
                    diagnostics = compile.render(&format!("{doc}.lean"));
                }
                match check_alignment(written, &lean) {
                    Ok(report) => {
                        if !report.is_aligned() {
                            alignment_text = report
                                .details()
                                .map(|d| format!("- {d}"))
                                .collect::<Vec<_>>()
                                .join("\n");
                        }
                        if compile.success && report.is_aligned() {
                            if report.name_overlap < DIVERGENCE_OVERLAP {
                                tracing::warn!(
                                    doc,
                                    overlap = report.name_overlap,
                                    "few prose names reappear in the Lean proof; it may follow a different strategy"
                                );
                            }
                            lean.toolchain = runner.toolchain_version();
                            return Ok(lean);
                        }
                        last_alignment = Some(report);
                    }
                    Err(e) => {
                        alignment_text = e.to_string();
                        last_error = Some(e.to_string());
                    }
                }
                last_compile = Some(compile);
            }
        }
        tracing::info!(doc, attempt, "generated proof rejected");
        let feedback = BTreeMap::from([("diagnostics", diagnostics), ("alignment", alignment_text)]);
        messages.push(Message::user(fill_prompt(prompts::REPAIR, &feedback)));
    }
    Err(FormalizeError::ExhaustedAttempts {
        attempts,
        alignment: last_alignment.map(Box::new),
        compile: last_compile.map(Box::new),
        last_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PropositionSpan, ProseStep};

    fn written(n: usize) -> WrittenProof {
        WrittenProof {
            theorem_text: "For all integers $x$, if $x > 2$ then $x + 1 > 3$.".into(),
            steps: (1..=n)
                .map(|i| ProseStep {
                    index: i,
                    text: format!("Step {i}. Let $n$ be given."),
                    propositions: vec![PropositionSpan {
                        name: "n".into(),
                        range: 15..16,
                    }],
                })
                .collect(),
            inputs: vec![],
            oracle: None,
        }
    }

    fn lean(text: &str) -> LeanSource {
        LeanSource::parse(text).unwrap()
    }

    const ALIGNED: &str = "theorem t : ∀ x : ℤ, x > 2 → x + 1 > 3 := by
  -- step 1
  intro x hx
  -- step 2
  have ⟨n, n_def⟩ : ∃ n : ℤ, n = x + 1 := ⟨_, rfl⟩
  -- step 3
  have hn : n > 3 := by rw [n_def]; linarith
  linarith
";

    #[test]
    fn aligned_proof_passes() {
        let r = check_alignment(&written(3), &lean(ALIGNED)).unwrap();
        assert!(r.is_aligned(), "{:?}", r);
        assert_eq!(r.name_overlap, 1.0);
        assert!(r.matched_names.contains("n"));
    }

    #[test]
    fn out_of_order_blocks() {
        let text = ALIGNED.replace("-- step 2", "-- step 3").replacen(
            "-- step 3\n  have hn",
            "-- step 2\n  have hn",
            1,
        );
        let r = check_alignment(&written(3), &lean(&text)).unwrap();
        assert!(!r.rule_order_ok);
    }

    #[test]
    fn missing_have() {
        let text = "theorem t : ∀ x : ℤ, x > 2 → x > 1 := by\n  -- step 1\n  intro x hx\n  -- step 2\n  norm_num at hx\n  -- step 3\n  have h : x > 1 := by linarith\n  exact h\n";
        let r = check_alignment(&written(3), &lean(text)).unwrap();
        assert!(!r.rule_have_ok);
        assert!(r.rule_blocks_ok);
    }

    #[test]
    fn final_closing_block_exempt() {
        let text =
            "theorem t : ∀ x : ℤ, x > 2 → x > 1 := by\n  -- step 1\n  intro x hx\n  -- step 2\n  linarith\n";
        let r = check_alignment(&written(2), &lean(text)).unwrap();
        assert!(r.rule_have_ok);
        assert_eq!(r.exempt_blocks, vec![1, 2]);
    }

    #[test]
    fn unannotated_block() {
        let text =
            "theorem t (x : ℤ) (hx : x > 2) : x > 1 := by\n  have h : x > 1 := by linarith\n  exact h\n";
        assert_eq!(
            check_alignment(&written(1), &lean(text)),
            Err(AlignmentError::UnannotatedBlock { line: 2 })
        );
    }

    #[test]
    fn uncovered_step() {
        let r = check_alignment(&written(4), &lean(ALIGNED)).unwrap();
        assert!(!r.rule_blocks_ok);
        assert!(r.block_violations[0].contains("step 4"));
    }
}
