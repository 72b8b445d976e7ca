//! Links prose steps to Lean blocks and prose propositions to Lean names.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;

use crate::depgraph::ident_tokens;
use crate::model::{is_lean_ident, LeanSource, LinkMap, StepIndex, ValidationReport, VarLink, WrittenProof};
use crate::provider::{
    extract_code_block, fill_prompt, prompts, CompletionRequest, GenerationProvider, Message, ProviderError,
    RequestTags,
};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("prose step {0} has no Lean block")]
    UnlinkableStep(StepIndex),
    #[error("link reply is not a JSON array of links: {0}")]
    MalformedReply(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Block links from the `-- step k` annotations.
pub fn block_links(
    written: &WrittenProof,
    lean: &LeanSource,
) -> Result<BTreeMap<StepIndex, Vec<usize>>, LinkError> {
    let mut out: BTreeMap<StepIndex, Vec<usize>> = BTreeMap::new();
    for (i, b) in lean.step_blocks.iter().enumerate() {
        out.entry(b.prose_step).or_default().push(i + 1);
    }
    for s in &written.steps {
        if !out.contains_key(&s.index) {
            return Err(LinkError::UnlinkableStep(s.index));
        }
    }
    out.retain(|k, _| written.step(*k).is_some());
    Ok(out)
}

#[derive(Deserialize)]
struct RawLink {
    step: StepIndex,
    proposition: String,
    lean_name: String,
}

/// Parses a provider reply into var links, dropping those that do not refer
/// to a real proposition and a Lean identifier present in the source.
pub fn parse_var_links(
    reply: &str,
    written: &WrittenProof,
    lean: &LeanSource,
) -> Result<(Vec<VarLink>, Vec<String>), LinkError> {
    let body = extract_code_block(reply);
    let raw: Vec<RawLink> =
        serde_json::from_str(body.trim()).map_err(|e| LinkError::MalformedReply(e.to_string()))?;
    let idents = ident_tokens(&lean.full_text);
    let mut links = BTreeSet::new();
    let mut warnings = Vec::new();
    for r in raw {
        let known_prop = written
            .step(r.step)
            .is_some_and(|s| s.proposition(&r.proposition).is_some());
        if !known_prop {
            warnings.push(format!(
                "dropped link for unknown proposition `{}` in step {}",
                r.proposition, r.step
            ));
        } else if !is_lean_ident(&r.lean_name) || !idents.contains(r.lean_name.as_str()) {
            warnings.push(format!(
                "dropped link to `{}`: not an identifier in the Lean proof",
                r.lean_name
            ));
        } else {
            links.insert(VarLink {
                step: r.step,
                proposition: r.proposition,
                lean_name: r.lean_name,
            });
        }
    }
    for s in &written.steps {
        for p in &s.propositions {
            if !links.iter().any(|l| l.step == s.index && l.proposition == p.name) {
                warnings.push(format!(
                    "proposition `{}` in step {} has no Lean counterpart",
                    p.name, s.index
                ));
            }
        }
    }
    Ok((links.into_iter().collect(), warnings))
}

fn render_propositions(written: &WrittenProof) -> String {
    written
        .steps
        .iter()
        .map(|s| {
            let names: Vec<&str> = s.propositions.iter().map(|p| p.name.as_str()).collect();
            format!("{}. {} [{}]", s.index, s.content(), names.join(", "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Builds the full link map. Var links come from the provider.
pub fn make_links(
    doc: &str,
    written: &WrittenProof,
    lean: &LeanSource,
    provider: &dyn GenerationProvider,
) -> Result<(LinkMap, Vec<String>), LinkError> {
    let block_links = block_links(written, lean)?;
    let has_props = written.steps.iter().any(|s| !s.propositions.is_empty());
    let (var_links, warnings) = if has_props {
        let slots = BTreeMap::from([
            ("steps", render_propositions(written)),
            ("lean", lean.full_text.clone()),
        ]);
        let request = CompletionRequest {
            tags: RequestTags {
                kind: "link".into(),
                doc: doc.into(),
                step: None,
                attempt: 1,
            },
            messages: vec![
                Message::system(prompts::SYSTEM),
                Message::user(fill_prompt(prompts::LINK, &slots)),
            ],
        };
        let reply = provider.complete(&request)?;
        parse_var_links(&reply, written, lean)?
    } else {
        (Vec::new(), Vec::new())
    };
    for w in &warnings {
        tracing::warn!(doc, "{w}");
    }
    Ok((
        LinkMap {
            block_links,
            var_links,
        },
        warnings,
    ))
}

/// Structural checks on a link map against its two sides.
pub fn validate_links(written: &WrittenProof, lean: &LeanSource, links: &LinkMap) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen_blocks = BTreeSet::new();
    for (step, blocks) in &links.block_links {
        let path = format!("links.block_links[{step}]");
        if written.step(*step).is_none() {
            report.violation(&path, format!("step {step} does not exist"));
        }
        if blocks.is_empty() {
            report.violation(&path, "step links to no block");
        }
        for b in blocks {
            match lean.block(*b) {
                None => report.violation(&path, format!("block {b} does not exist")),
                Some(block) if block.prose_step != *step => report.violation(
                    &path,
                    format!("block {b} is annotated with step {}", block.prose_step),
                ),
                Some(_) => {}
            }
            if !seen_blocks.insert(*b) {
                report.violation(&path, format!("block {b} is linked more than once"));
            }
        }
    }
    for s in &written.steps {
        if !links.block_links.contains_key(&s.index) {
            report.violation(format!("links.block_links[{}]", s.index), "step has no block");
        }
    }
    let idents = ident_tokens(&lean.full_text);
    for (i, l) in links.var_links.iter().enumerate() {
        let path = format!("links.var_links[{i}]");
        if written
            .step(l.step)
            .and_then(|s| s.proposition(&l.proposition))
            .is_none()
        {
            report.violation(
                &path,
                format!("step {} has no proposition `{}`", l.step, l.proposition),
            );
        }
        if !idents.contains(l.lean_name.as_str()) {
            report.violation(
                &path,
                format!("`{}` does not occur in the Lean proof", l.lean_name),
            );
        }
    }
    report
}
