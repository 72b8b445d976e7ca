//! Splitting a prose proof into steps.
//!
//! Segments keep every byte of the input: with an explicit delimiter the
//! steps joined by the delimiter reproduce the proof text, otherwise plain
//! concatenation does (separators stay attached to the preceding step).

use thiserror::Error;

use crate::model::{ProseStep, WrittenProof};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("proof text contains no sentences")]
    EmptyProof,
    #[error("step {0} is empty between delimiters")]
    EmptyStep(usize),
}

pub fn segment_written_proof(
    theorem_text: &str,
    proof_text: &str,
    delimiter: Option<&str>,
) -> Result<WrittenProof, SegmentError> {
    if proof_text.trim().is_empty() {
        return Err(SegmentError::EmptyProof);
    }
    let segments: Vec<&str> = match delimiter {
        Some(d) if !d.is_empty() => {
            let parts: Vec<&str> = proof_text.split(d).collect();
            if let Some(i) = parts.iter().position(|p| p.trim().is_empty()) {
                return Err(SegmentError::EmptyStep(i + 1));
            }
            parts
        }
        _ => {
            let paragraphs = split_paragraphs(proof_text);
            if paragraphs.len() > 1 {
                paragraphs
            } else {
                split_sentences(proof_text)
            }
        }
    };
    let steps = segments
        .into_iter()
        .enumerate()
        .map(|(i, text)| ProseStep {
            index: i + 1,
            text: text.to_string(),
            propositions: Vec::new(),
        })
        .collect();
    Ok(WrittenProof {
        theorem_text: theorem_text.to_string(),
        steps,
        inputs: Vec::new(),
        oracle: None,
    })
}

/// Splits at blank lines. Each paragraph keeps the blank-line run that
/// follows it; leading whitespace is attached to the first paragraph.
fn split_paragraphs(text: &str) -> Vec<&str> {
    let mut cuts = Vec::new();
    let mut offset = 0;
    let mut seen_content = false;
    let mut in_gap = false;
    for line in text.split_inclusive('\n') {
        let blank = line.trim().is_empty();
        if blank {
            if seen_content {
                in_gap = true;
            }
        } else {
            if in_gap {
                cuts.push(offset);
                in_gap = false;
            }
            seen_content = true;
        }
        offset += line.len();
    }
    cut(text, &cuts)
}

/// Splits after `.`, `!` or `?` followed by whitespace, outside `$...$` math.
fn split_sentences(text: &str) -> Vec<&str> {
    let mut cuts = Vec::new();
    let mut in_math = false;
    let mut prev_end = false;
    let mut pending_ws = false;
    for (i, c) in text.char_indices() {
        if pending_ws && !c.is_whitespace() {
            cuts.push(i);
            pending_ws = false;
        }
        if c == '$' {
            in_math = !in_math;
        }
        if prev_end && c.is_whitespace() && !in_math {
            pending_ws = true;
        }
        prev_end = !in_math && matches!(c, '.' | '!' | '?');
    }
    cut(text, &cuts)
}

fn cut<'a>(text: &'a str, cuts: &[usize]) -> Vec<&'a str> {
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for &c in cuts {
        out.push(&text[start..c]);
        start = c;
    }
    out.push(&text[start..]);
    out
}
