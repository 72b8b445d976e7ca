//! Worked-example templates: prose-shaped text with `{{key}}` placeholders
//! resolved from values computed by the probes.
//!
//! `\{{` produces a literal `{{`; a `}}` outside a placeholder is literal.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProofDocument, ProseStep, StepIndex, ValidationReport};
use crate::prober::ReducedValue;
use crate::provider::{
    fill_prompt, prompts, CompletionRequest, GenerationProvider, Message, ProviderError, RequestTags,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkedTemplate {
    pub prose_step: StepIndex,
    pub template_text: String,
    pub keys: BTreeSet<String>,
}

impl WorkedTemplate {
    /// Builds a template, deriving `keys` from the text.
    pub fn new(prose_step: StepIndex, text: impl Into<String>) -> Result<Self, TemplateSyntaxError> {
        let template_text = text.into();
        let keys = scan(&template_text)?
            .into_iter()
            .filter_map(|s| match s {
                Segment::Key(k) => Some(k.to_string()),
                Segment::Text(_) => None,
            })
            .collect();
        Ok(Self {
            prose_step,
            template_text,
            keys,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateSyntaxError {
    #[error("unbalanced braces at byte {0}")]
    Unbalanced(usize),
    #[error("empty placeholder at byte {0}")]
    EmptyKey(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment<'a> {
    Text(&'a str),
    Key(&'a str),
}

fn scan(text: &str) -> Result<Vec<Segment<'_>>, TemplateSyntaxError> {
    let mut out = Vec::new();
    let mut i = 0;
    let mut lit = 0;
    let bytes = text.as_bytes();
    while i < bytes.len() {
        if text[i..].starts_with("\\{{") {
            out.push(Segment::Text(&text[lit..i]));
            out.push(Segment::Text("{{"));
            i += 3;
            lit = i;
        } else if text[i..].starts_with("{{") {
            let close = text[i + 2..]
                .find("}}")
                .ok_or(TemplateSyntaxError::Unbalanced(i))?;
            let key = &text[i + 2..i + 2 + close];
            if key.contains('{') {
                return Err(TemplateSyntaxError::Unbalanced(i));
            }
            let key = key.trim();
            if key.is_empty() {
                return Err(TemplateSyntaxError::EmptyKey(i));
            }
            out.push(Segment::Text(&text[lit..i]));
            out.push(Segment::Key(key));
            i += close + 4;
            lit = i;
        } else {
            i += text[i..].chars().next().map_or(1, char::len_utf8);
        }
    }
    out.push(Segment::Text(&text[lit..]));
    out.retain(|s| !matches!(s, Segment::Text("")));
    Ok(out)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstantiateError {
    #[error("no value for keys: {}", .0.join(", "))]
    MissingKey(Vec<String>),
    #[error(transparent)]
    Syntax(#[from] TemplateSyntaxError),
}

/// Replaces every placeholder with the canonical rendering of its value.
pub fn instantiate(
    template: &WorkedTemplate,
    values: &BTreeMap<String, ReducedValue>,
) -> Result<String, InstantiateError> {
    let segments = scan(&template.template_text)?;
    let missing: BTreeSet<String> = segments
        .iter()
        .filter_map(|s| match s {
            Segment::Key(k) if !values.contains_key(*k) => Some(k.to_string()),
            _ => None,
        })
        .collect();
    if !missing.is_empty() {
        return Err(InstantiateError::MissingKey(missing.into_iter().collect()));
    }
    let mut out = String::with_capacity(template.template_text.len());
    for s in segments {
        match s {
            Segment::Text(t) => out.push_str(t),
            Segment::Key(k) => out.push_str(&values[k].to_string()),
        }
    }
    Ok(out)
}

pub fn validate_template(t: &WorkedTemplate, available_keys: &BTreeSet<String>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let path = format!("templates[{}]", t.prose_step);
    if t.template_text.trim().is_empty() {
        report.violation(format!("{path}.template_text"), "template is empty");
    }
    match scan(&t.template_text) {
        Err(e) => report.violation(format!("{path}.template_text"), e.to_string()),
        Ok(segments) => {
            let used: BTreeSet<String> = segments
                .iter()
                .filter_map(|s| match s {
                    Segment::Key(k) => Some(k.to_string()),
                    _ => None,
                })
                .collect();
            for k in &used {
                if !available_keys.contains(k) {
                    report.violation(format!("{path}.keys"), format!("unknown key `{k}`"));
                }
            }
            if used != t.keys {
                report.violation(
                    format!("{path}.keys"),
                    "keys do not match the placeholders in the text",
                );
            }
        }
    }
    report
}

/// Keys every evaluation can supply: the inputs and the term variables the
/// proof introduces.
pub fn available_keys(doc: &ProofDocument) -> BTreeSet<String> {
    let mut keys: BTreeSet<String> = doc.written.inputs.iter().map(|i| i.name.clone()).collect();
    keys.extend(
        doc.graph
            .nodes
            .iter()
            .filter(|(_, n)| matches!(n.type_text.trim(), "ℤ" | "ℕ" | "Int" | "Nat"))
            .map(|(name, _)| name.clone()),
    );
    keys
}

#[derive(Debug, Error)]
pub enum GenerateTemplateError {
    #[error("template for step {step} rejected after {attempts} attempts:\n{report}")]
    ExhaustedAttempts {
        step: StepIndex,
        attempts: u32,
        report: ValidationReport,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Requests a template and regenerates it while it fails validation.
pub fn generate_template(
    doc: &str,
    step: &ProseStep,
    available_keys: &BTreeSet<String>,
    provider: &dyn GenerationProvider,
    max_attempts: u32,
) -> Result<WorkedTemplate, GenerateTemplateError> {
    let keys = available_keys.iter().cloned().collect::<Vec<_>>().join(", ");
    let slots = BTreeMap::from([
        ("keys", keys.clone()),
        ("index", step.index.to_string()),
        ("step", step.content().to_string()),
    ]);
    let mut messages = vec![
        Message::system(prompts::SYSTEM),
        Message::user(fill_prompt(prompts::TEMPLATE, &slots)),
    ];
    let mut last = ValidationReport::default();
    for attempt in 1..=max_attempts.max(1) {
        let request = CompletionRequest {
            tags: RequestTags {
                kind: "template".into(),
                doc: doc.into(),
                step: Some(step.index),
                attempt,
            },
            messages: messages.clone(),
        };
        let response = provider.complete(&request)?;
        let text = response.trim_end_matches('\n').to_string();
        let template = match WorkedTemplate::new(step.index, text.clone()) {
            Ok(t) => t,
            Err(_) => WorkedTemplate {
                prose_step: step.index,
                template_text: text.clone(),
                keys: BTreeSet::new(),
            },
        };
        last = validate_template(&template, available_keys);
        if last.is_ok() {
            return Ok(template);
        }
        tracing::info!(step = step.index, attempt, "template rejected");
        messages.push(Message::assistant(text));
        let problems = last
            .violations
            .iter()
            .map(|v| format!("- {}", v.message))
            .collect::<Vec<_>>()
            .join("\n");
        let retry = BTreeMap::from([("problems", problems), ("keys", keys.clone())]);
        messages.push(Message::user(fill_prompt(prompts::TEMPLATE_RETRY, &retry)));
    }
    Err(GenerateTemplateError::ExhaustedAttempts {
        step: step.index,
        attempts: max_attempts.max(1),
        report: last,
    })
}
