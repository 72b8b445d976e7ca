//! Line-level structure of a single-theorem Lean file: header, tactic
//! spans, `-- step k` annotations and `have` introductions.

use thiserror::Error;

use crate::model::{LeanSource, LineRange, Position, StepBlock};

use super::expr::{matching_paren, parse_binder_groups};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SourceError {
    #[error("no theorem, lemma or example declaration found")]
    NoDeclaration,
    #[error("line {line}: malformed declaration header: {message}")]
    BadHeader { line: usize, message: String },
    #[error("line {line}: `have` outside any `-- step k` annotation")]
    UnannotatedBlock { line: usize },
    #[error("line {line}: malformed step annotation `{text}`")]
    BadAnnotation { line: usize, text: String },
    #[error("duplicate have name `{0}`")]
    DuplicateHave(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HavePattern {
    Named(String),
    Destructure(Vec<String>),
}

impl HavePattern {
    pub fn names(&self) -> Vec<String> {
        match self {
            HavePattern::Named(n) => vec![n.clone()],
            HavePattern::Destructure(ns) => ns.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tactic {
    Intro(Vec<String>),
    Have {
        pattern: HavePattern,
        ty: Option<String>,
        proof: String,
    },
    Try(Vec<Tactic>),
    TraceState,
    Subst(Vec<String>),
    SimpOnlyAt {
        lemmas: Vec<String>,
        targets: Vec<String>,
    },
    NormNumAt(Vec<String>),
    /// Any other tactic; treated as an opaque goal-closing step.
    Other(String),
}

impl Tactic {
    pub fn is_have(&self) -> bool {
        matches!(self, Tactic::Have { .. })
    }

    /// Names a `have` (possibly under `try`) introduces.
    pub fn have_names(&self) -> Vec<String> {
        match self {
            Tactic::Have { pattern, .. } => pattern.names(),
            Tactic::Try(ts) => ts.iter().flat_map(Tactic::have_names).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TacticSpan {
    pub text: String,
    pub start: Position,
    pub end: Position,
    /// Prose step of the enclosing `-- step k` annotation.
    pub step: Option<usize>,
    pub tactic: Tactic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedProof {
    pub keyword: String,
    pub name: String,
    /// `(names, type text)` binder groups from the header.
    pub binders: Vec<(Vec<String>, String)>,
    pub statement: String,
    pub header_line: usize,
    /// Position just after `by`; the proof body starts here.
    pub body_start: Position,
    pub tactics: Vec<TacticSpan>,
    /// `(line, step)` of every annotation comment, in order.
    pub annotations: Vec<(usize, usize)>,
    pub last_line: usize,
}

impl ParsedProof {
    pub fn parse(text: &str) -> Result<Option<ParsedProof>, SourceError> {
        let lines: Vec<&str> = text.lines().collect();
        let Some(decl) = lines.iter().position(|l| {
            let t = l.trim_start();
            ["theorem ", "lemma ", "example "]
                .iter()
                .any(|k| t.starts_with(k))
                || t == "example"
        }) else {
            if lines.iter().all(|l| {
                l.trim().is_empty()
                    || l.trim_start().starts_with("--")
                    || l.trim_start().starts_with("import ")
            }) {
                return Ok(None);
            }
            return Err(SourceError::NoDeclaration);
        };
        // Header runs until `:= by` (possibly over several lines).
        let mut header = String::new();
        let mut by_line = None;
        for (i, line) in lines.iter().enumerate().skip(decl) {
            if !header.is_empty() {
                header.push(' ');
            }
            let code = strip_comment(line);
            header.push_str(code.trim());
            if code.trim_end().ends_with(":= by") || code.trim_end().ends_with(":=by") {
                by_line = Some(i);
                break;
            }
        }
        let line_no = decl + 1;
        let by_line = by_line.ok_or_else(|| SourceError::BadHeader {
            line: line_no,
            message: "expected a tactic proof ending in `:= by`".into(),
        })?;
        let header = header
            .trim_end()
            .trim_end_matches("by")
            .trim_end()
            .trim_end_matches(":=")
            .trim_end();
        let (keyword, rest) = header.split_once(' ').unwrap_or((header, ""));
        let (name, rest) = if keyword == "example" {
            ("example".to_string(), rest.trim())
        } else {
            let rest = rest.trim();
            let end = rest
                .find(|c: char| c.is_whitespace() || c == '(' || c == ':')
                .unwrap_or(rest.len());
            (rest[..end].to_string(), rest[end..].trim())
        };
        // Binder groups precede the top-level colon.
        let mut depth = 0i32;
        let mut colon = None;
        for (i, c) in rest.char_indices() {
            match c {
                '(' | '⟨' | '[' | '{' => depth += 1,
                ')' | '⟩' | ']' | '}' => depth -= 1,
                ':' if depth == 0 => {
                    colon = Some(i);
                    break;
                }
                _ => {}
            }
        }
        let colon = colon.ok_or_else(|| SourceError::BadHeader {
            line: line_no,
            message: "missing `:` before the statement".into(),
        })?;
        let binders = parse_binder_groups(&rest[..colon]).map_err(|e| SourceError::BadHeader {
            line: line_no,
            message: e.to_string(),
        })?;
        let statement = rest[colon + 1..].trim().to_string();
        let by_text = lines[by_line];
        let by_col = by_text
            .rfind("by")
            .map(|b| by_text[..b + 2].chars().count())
            .unwrap_or(0);

        let mut tactics: Vec<TacticSpan> = Vec::new();
        let mut annotations = Vec::new();
        let mut current_step = None;
        let mut open: Option<(usize, usize, Vec<String>)> = None; // (start line idx, indent, lines)
        let mut last_line = by_line + 1;
        let flush = |open: &mut Option<(usize, usize, Vec<String>)>,
                     tactics: &mut Vec<TacticSpan>,
                     step: Option<usize>,
                     lines: &[&str]| {
            if let Some((start, indent, parts)) = open.take() {
                let end_idx = start + parts.len() - 1;
                let text = parts.join(" ");
                let end_col = strip_comment(lines[end_idx]).trim_end().chars().count();
                tactics.push(TacticSpan {
                    tactic: parse_tactic(&text),
                    text,
                    start: Position::new(start + 1, indent),
                    end: Position::new(end_idx + 1, end_col),
                    step,
                });
            }
        };
        let mut open_step = None;
        for (i, raw) in lines.iter().enumerate().skip(by_line + 1) {
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            let indent = raw.chars().take_while(|c| c.is_whitespace()).count();
            if indent == 0 {
                // Back at top level: the proof has ended.
                break;
            }
            last_line = i + 1;
            if let Some(comment) = trimmed.strip_prefix("--") {
                let comment = comment.trim();
                if let Some(k) = comment.strip_prefix("step") {
                    flush(&mut open, &mut tactics, open_step, &lines);
                    let k = k.trim().trim_end_matches(':');
                    let k: usize = k.parse().map_err(|_| SourceError::BadAnnotation {
                        line: i + 1,
                        text: trimmed.to_string(),
                    })?;
                    annotations.push((i + 1, k));
                    current_step = Some(k);
                }
                continue;
            }
            let code = strip_comment(raw).trim().to_string();
            match &mut open {
                Some((_, open_indent, parts)) if indent > *open_indent => parts.push(code),
                _ => {
                    flush(&mut open, &mut tactics, open_step, &lines);
                    open = Some((i, indent, vec![code]));
                    open_step = current_step;
                }
            }
        }
        flush(&mut open, &mut tactics, open_step, &lines);
        Ok(Some(ParsedProof {
            keyword: keyword.to_string(),
            name,
            binders,
            statement,
            header_line: line_no,
            body_start: Position::new(by_line + 1, by_col),
            tactics,
            annotations,
            last_line,
        }))
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find("--") {
        Some(i) => &line[..i],
        None => line,
    }
}

impl LeanSource {
    /// Builds step blocks from `-- step k` annotations. Blocks run from an
    /// annotation to the line before the next one.
    pub fn parse(text: &str) -> Result<LeanSource, SourceError> {
        let Some(proof) = ParsedProof::parse(text)? else {
            return Ok(LeanSource {
                full_text: text.to_string(),
                theorem_name: String::new(),
                step_blocks: Vec::new(),
                toolchain: String::new(),
            });
        };
        let mut blocks: Vec<StepBlock> = Vec::new();
        for (i, (line, k)) in proof.annotations.iter().enumerate() {
            let end = proof
                .annotations
                .get(i + 1)
                .map(|(next, _)| next - 1)
                .unwrap_or(proof.last_line);
            blocks.push(StepBlock {
                prose_step: *k,
                lines: LineRange { start: *line, end },
                haves: Vec::new(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &proof.tactics {
            for name in t.tactic.have_names() {
                if name != "_" && name != "this" && !seen.insert(name.clone()) {
                    return Err(SourceError::DuplicateHave(name));
                }
                if let Some(b) = blocks.iter_mut().find(|b| b.lines.contains(t.start.line)) {
                    b.haves.push(name);
                }
            }
        }
        Ok(LeanSource {
            full_text: text.to_string(),
            theorem_name: proof.name,
            step_blocks: blocks,
            toolchain: String::new(),
        })
    }
}

/// Classifies one tactic.
pub fn parse_tactic(text: &str) -> Tactic {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("try") {
        if rest.is_empty() || rest.starts_with(char::is_whitespace) || rest.starts_with('(') {
            let rest = rest.trim();
            let inner = match rest.strip_prefix('(') {
                Some(r) => match matching_paren(r) {
                    Some(close) if r[close + 1..].trim().is_empty() => &r[..close],
                    _ => rest,
                },
                None => rest,
            };
            return Tactic::Try(split_seq(inner).into_iter().map(parse_tactic).collect());
        }
    }
    if t == "trace_state" {
        return Tactic::TraceState;
    }
    if let Some(rest) = word(t, "intro") {
        return Tactic::Intro(rest.split_whitespace().map(str::to_string).collect());
    }
    if let Some(rest) = word(t, "subst") {
        return Tactic::Subst(rest.split_whitespace().map(str::to_string).collect());
    }
    if let Some(rest) = t.strip_prefix("simp only") {
        if let Some((lemmas, targets)) = rest.trim().strip_prefix('[').and_then(|r| r.split_once(']')) {
            if let Some(targets) = targets.trim().strip_prefix("at") {
                return Tactic::SimpOnlyAt {
                    lemmas: lemmas
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect(),
                    targets: targets.split_whitespace().map(str::to_string).collect(),
                };
            }
        }
    }
    if let Some(rest) = word(t, "norm_num") {
        if let Some(targets) = rest.trim().strip_prefix("at") {
            return Tactic::NormNumAt(targets.split_whitespace().map(str::to_string).collect());
        }
    }
    let have_rest = word(t, "have").or_else(|| word(t, "obtain"));
    if let Some(rest) = have_rest {
        if let Some(h) = parse_have(rest) {
            return h;
        }
    }
    Tactic::Other(t.to_string())
}

fn word<'a>(t: &'a str, kw: &str) -> Option<&'a str> {
    let rest = t.strip_prefix(kw)?;
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        Some(rest.trim())
    } else {
        None
    }
}

fn parse_have(rest: &str) -> Option<Tactic> {
    let (pattern, after) = if let Some(r) = rest.strip_prefix('⟨') {
        let close = matching_paren(r)?;
        let names = r[..close].split(',').map(|s| s.trim().to_string()).collect();
        (
            HavePattern::Destructure(names),
            r[close + '⟩'.len_utf8()..].trim(),
        )
    } else if rest.starts_with(':') {
        (HavePattern::Named("this".into()), rest)
    } else {
        let end = rest
            .find(|c: char| c.is_whitespace() || c == ':')
            .unwrap_or(rest.len());
        (HavePattern::Named(rest[..end].to_string()), rest[end..].trim())
    };
    let (ty, proof) = split_assign(after)?;
    let ty = match ty.trim().strip_prefix(':') {
        Some(ty) => Some(ty.trim().to_string()),
        None if ty.trim().is_empty() => None,
        None => return None,
    };
    Some(Tactic::Have {
        pattern,
        ty,
        proof: proof.trim().to_string(),
    })
}

/// Splits at the first top-level `:=`.
fn split_assign(s: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    let bytes = s.as_bytes();
    for (i, c) in s.char_indices() {
        match c {
            '(' | '⟨' | '[' | '{' => depth += 1,
            ')' | '⟩' | ']' | '}' => depth -= 1,
            ':' if depth == 0 && bytes.get(i + 1) == Some(&b'=') => {
                return Some((&s[..i], &s[i + 2..]));
            }
            _ => {}
        }
    }
    None
}

/// Splits a tactic sequence on top-level `;`. A nested `by` block extends
/// to the end of the sequence.
fn split_seq(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if depth == 0 && c == 'b' && s[i..].starts_with("by") {
            let before = s[..i].chars().next_back();
            let after = s[i + 2..].chars().next();
            let boundary = |c: Option<char>| c.is_none_or(|c| !crate::model::is_ident_char(c));
            if boundary(before) && boundary(after) {
                break;
            }
        }
        match c {
            '(' | '⟨' | '[' | '{' => depth += 1,
            ')' | '⟩' | ']' | '}' => depth -= 1,
            ';' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out.retain(|p| !p.is_empty());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "import Mathlib

theorem demo : ∀ x : ℤ, x > 2 → x + 1 > 3 := by
  -- step 1
  intro x hx
  -- step 2
  have ⟨n, n_def⟩ : ∃ n : ℤ, n = x + 1 := ⟨_, rfl⟩
  have hn : n > 3 := by
    rw [n_def]; linarith
  -- step 3
  linarith
";

    #[test]
    fn blocks_and_haves() {
        let src = LeanSource::parse(SRC).unwrap();
        assert_eq!(src.theorem_name, "demo");
        assert_eq!(src.step_blocks.len(), 3);
        assert_eq!(src.step_blocks[1].haves, vec!["n", "n_def", "hn"]);
        assert_eq!(src.step_blocks[1].lines, LineRange { start: 6, end: 9 });
        assert_eq!(src.step_blocks[2].lines, LineRange { start: 10, end: 11 });
    }

    #[test]
    fn continuation_lines_join() {
        let p = ParsedProof::parse(SRC).unwrap().unwrap();
        assert_eq!(p.tactics.len(), 4);
        assert_eq!(p.tactics[2].text, "have hn : n > 3 := by rw [n_def]; linarith");
        assert_eq!(p.tactics[2].start, Position::new(8, 2));
        assert_eq!(p.tactics[2].end.line, 9);
        assert_eq!(p.tactics[3].step, Some(3));
        assert_eq!(p.statement, "∀ x : ℤ, x > 2 → x + 1 > 3");
    }

    #[test]
    fn tactic_forms() {
        assert_eq!(
            parse_tactic("try (have hr : r > 1 := by subst_vars; simp)"),
            Tactic::Try(vec![Tactic::Have {
                pattern: HavePattern::Named("hr".into()),
                ty: Some("r > 1".into()),
                proof: "by subst_vars; simp".into(),
            }])
        );
        assert_eq!(
            parse_tactic("simp only [r_def, s_def] at hr"),
            Tactic::SimpOnlyAt {
                lemmas: vec!["r_def".into(), "s_def".into()],
                targets: vec!["hr".into()],
            }
        );
        assert_eq!(
            parse_tactic("have _ := hr"),
            Tactic::Have {
                pattern: HavePattern::Named("_".into()),
                ty: None,
                proof: "hr".into(),
            }
        );
        assert!(matches!(parse_tactic("omega"), Tactic::Other(_)));
    }

    #[test]
    fn empty_file_has_no_blocks() {
        let src = LeanSource::parse("").unwrap();
        assert!(src.step_blocks.is_empty());
    }
}
