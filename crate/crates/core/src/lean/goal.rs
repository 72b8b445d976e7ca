//! The toolchain's textual goal display.
//!
//! ```text
//! x : ℤ
//! hx : x > 2
//! ⊢ ¬Prime (x ^ 2 - 1)
//! ```

use thiserror::Error;

use crate::model::{Hypothesis, Position, ProofState};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GoalParseError {
    #[error("goal display has no turnstile line")]
    NoTurnstile,
    #[error("hypothesis `{0}` appears twice")]
    DuplicateHypothesisName(String),
    #[error("malformed hypothesis line `{0}`")]
    MalformedHypothesis(String),
}

pub const NO_GOALS: &str = "no goals";

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses one goal block. Continuation lines (indented) extend the previous
/// hypothesis or the goal. `no goals` yields a terminal state.
pub fn parse_goal_text(raw: &str) -> Result<ProofState, GoalParseError> {
    if raw.trim() == NO_GOALS {
        return Ok(ProofState {
            position: Position::default(),
            hypotheses: Vec::new(),
            goal_text: String::new(),
        });
    }
    let mut entries: Vec<(Vec<String>, String)> = Vec::new();
    let mut goal: Option<String> = None;
    for line in raw.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let trimmed = line.trim_start();
        let turnstile = trimmed.strip_prefix('⊢').or_else(|| trimmed.strip_prefix("|-"));
        if let Some(g) = turnstile {
            goal = Some(g.trim().to_string());
            continue;
        }
        let continuation = line.starts_with(char::is_whitespace);
        if let Some(g) = goal.as_mut() {
            g.push(' ');
            g.push_str(trimmed.trim());
            continue;
        }
        if continuation {
            if let Some((_, ty)) = entries.last_mut() {
                ty.push(' ');
                ty.push_str(trimmed.trim());
                continue;
            }
        }
        let (names, ty) = split_hypothesis(trimmed)
            .ok_or_else(|| GoalParseError::MalformedHypothesis(trimmed.to_string()))?;
        entries.push((names, ty.to_string()));
    }
    let goal = goal.ok_or(GoalParseError::NoTurnstile)?;
    let mut hypotheses: Vec<Hypothesis> = Vec::new();
    for (names, ty) in entries {
        let ty = collapse(&ty);
        for name in names {
            if hypotheses.iter().any(|h| h.name == name) {
                return Err(GoalParseError::DuplicateHypothesisName(name));
            }
            hypotheses.push(Hypothesis::new(name, ty.clone()));
        }
    }
    Ok(ProofState {
        position: Position::default(),
        hypotheses,
        goal_text: goal,
    })
}

/// Splits `a b : T` at the first ` : ` whose left side is only names.
fn split_hypothesis(line: &str) -> Option<(Vec<String>, &str)> {
    let idx = line.find(" : ")?;
    let names: Vec<String> = line[..idx].split_whitespace().map(str::to_string).collect();
    if names.is_empty() || names.iter().any(|n| n.contains(['(', ')', ':'])) {
        return None;
    }
    Some((names, line[idx + 3..].trim()))
}

/// Renders a state in the standard display, grouping consecutive
/// hypotheses that share a type.
pub fn render_goal(state: &ProofState) -> String {
    if state.is_terminal() {
        return NO_GOALS.to_string();
    }
    let mut out = String::new();
    let mut i = 0;
    let hs = &state.hypotheses;
    while i < hs.len() {
        let mut j = i + 1;
        while j < hs.len() && hs[j].type_text == hs[i].type_text {
            j += 1;
        }
        let names: Vec<&str> = hs[i..j].iter().map(|h| h.name.as_str()).collect();
        out.push_str(&format!("{} : {}\n", names.join(" "), hs[i].type_text));
        i = j;
    }
    out.push_str("⊢ ");
    out.push_str(&state.goal_text);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn standard_display() {
        let s = parse_goal_text("x : ℤ\nhx : x > 2\n⊢ ¬ Prime (x ^ 2 - 1)").unwrap();
        assert_eq!(s.hypotheses.len(), 2);
        assert_eq!(s.hypotheses[1], Hypothesis::new("hx", "x > 2"));
        assert_eq!(s.goal_text, "¬ Prime (x ^ 2 - 1)");
    }

    #[test]
    fn hypothesis_free() {
        let s = parse_goal_text("⊢ True").unwrap();
        assert!(s.hypotheses.is_empty());
        assert_eq!(s.goal_text, "True");
    }

    #[test]
    fn grouped_binders_expand() {
        let s = parse_goal_text("a b : ℤ\n⊢ a = b").unwrap();
        assert_eq!(
            s.hypotheses,
            vec![Hypothesis::new("a", "ℤ"), Hypothesis::new("b", "ℤ")]
        );
    }

    #[test]
    fn ascii_turnstile_and_continuations() {
        let s = parse_goal_text("h : x +\n    1 = 2\n|- x = 1").unwrap();
        assert_eq!(s.hypotheses[0].type_text, "x + 1 = 2");
        assert_eq!(s.goal_text, "x = 1");
    }

    #[test]
    fn errors() {
        assert_eq!(parse_goal_text("x : ℤ"), Err(GoalParseError::NoTurnstile));
        assert_eq!(
            parse_goal_text("x : ℤ\nx : ℕ\n⊢ True"),
            Err(GoalParseError::DuplicateHypothesisName("x".into()))
        );
    }

    #[test]
    fn no_goals_is_terminal() {
        assert!(parse_goal_text("no goals").unwrap().is_terminal());
    }

    fn ident() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_]{0,4}".prop_filter("keyword", |s| !crate::lean::expr::is_keyword(s))
    }

    fn type_text() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("ℤ".to_string()),
            Just("ℕ".to_string()),
            Just("x > 2".to_string()),
            Just("n = x ^ 2 - 1".to_string()),
            Just("1 < s ∧ s < n".to_string()),
        ]
    }

    proptest! {
        #[test]
        fn parse_inverts_render(
            hyps in proptest::collection::btree_map(ident(), type_text(), 0..6),
            goal in type_text(),
        ) {
            let state = ProofState {
                position: Position::default(),
                hypotheses: hyps.into_iter().map(|(n, t)| Hypothesis::new(n, t)).collect(),
                goal_text: goal,
            };
            let back = parse_goal_text(&render_goal(&state)).unwrap();
            prop_assert_eq!(back, state);
        }
    }
}
