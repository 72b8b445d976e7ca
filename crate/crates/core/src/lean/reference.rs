//! In-process checker for the arithmetic fragment of Lean 4 tactic proofs.
//!
//! It elaborates the tactics the pipeline emits (`intro`, `have`, `try`,
//! `trace_state`, `subst`, `simp only [..] at`, `norm_num at`) and treats any
//! other tactic as an opaque closer. Statements are checked by evaluation:
//! under every assignment of the free integer variables within a bounded
//! window that satisfies the hypotheses in scope, the claimed proposition
//! must hold. Variables fixed by an equation in context (`x = 2`,
//! `n = x ^ 2 - 1`) are computed rather than enumerated, so probe files are
//! decided exactly.
//!
//! This is a refutation check, not a proof checker: a statement that holds
//! on the window but fails outside it is accepted.

use std::collections::HashSet;
use std::path::Path;
use std::time::Duration;

use crate::model::ProofState;

use super::expr::{parse_expr, Env, Expr, Kind, RelOp, Sort};
use super::goal::{render_goal, NO_GOALS};
use super::source::{HavePattern, ParsedProof, Tactic};
use super::{CompileReport, Diagnostic, RunnerError, Severity, Toolchain};

pub const REFERENCE_TOOLCHAIN: &str = "reference-interpreter/lean4-arith-fragment v1";

/// Window of values enumerated for each free variable.
#[derive(Debug, Clone, Copy)]
pub struct CheckWindow {
    pub lo: i128,
    pub hi: i128,
    /// Give up enumerating above this many free variables.
    pub max_free_vars: usize,
}

impl Default for CheckWindow {
    fn default() -> Self {
        Self {
            lo: -10,
            hi: 10,
            max_free_vars: 4,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReferenceToolchain {
    pub window: CheckWindow,
}

impl ReferenceToolchain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks source text directly, without going through a file.
    pub fn check_text(&self, text: &str) -> CompileReport {
        let proof = match ParsedProof::parse(text) {
            Ok(None) => return CompileReport::from_diagnostics(Vec::new()),
            Ok(Some(p)) => p,
            Err(e) => {
                let line = match &e {
                    super::source::SourceError::BadHeader { line, .. }
                    | super::source::SourceError::BadAnnotation { line, .. }
                    | super::source::SourceError::UnannotatedBlock { line } => *line,
                    _ => 1,
                };
                return CompileReport::from_diagnostics(vec![Diagnostic::error(line, 0, e.to_string())]);
            }
        };
        let mut diags = Vec::new();
        let mut m = Machine::new(self.window);
        if let Err(msg) = m.start(&proof) {
            diags.push(Diagnostic::error(proof.header_line, 0, msg));
            return CompileReport::from_diagnostics(diags);
        }
        for span in &proof.tactics {
            if m.goal.is_none() && span.tactic == Tactic::TraceState {
                diags.push(Diagnostic {
                    severity: Severity::Info,
                    line: span.start.line,
                    column: span.start.column,
                    message: NO_GOALS.to_string(),
                });
                continue;
            }
            if m.goal.is_none() {
                diags.push(Diagnostic::error(
                    span.start.line,
                    span.start.column,
                    "no goals to be proved",
                ));
                continue;
            }
            let mut infos = Vec::new();
            if let Err(msg) = m.exec(&span.tactic, &mut infos) {
                diags.push(Diagnostic::error(span.start.line, span.start.column, msg));
            }
            for info in infos {
                diags.push(Diagnostic {
                    severity: Severity::Info,
                    line: span.start.line,
                    column: span.start.column,
                    message: info,
                });
            }
        }
        if m.goal.is_some() {
            diags.push(Diagnostic::error(
                proof.body_start.line,
                proof.body_start.column,
                format!("unsolved goals\n{}", render_goal(&m.state())),
            ));
        }
        CompileReport::from_diagnostics(diags)
    }
}

impl Toolchain for ReferenceToolchain {
    fn version(&self) -> String {
        REFERENCE_TOOLCHAIN.to_string()
    }

    fn check_file(&self, path: &Path, _timeout: Duration) -> Result<CompileReport, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunnerError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(self.check_text(&text))
    }
}

#[derive(Debug, Clone)]
enum Entry {
    Var { name: String, sort: Sort },
    Hyp { name: String, prop: Expr },
}

impl Entry {
    fn name(&self) -> &str {
        match self {
            Entry::Var { name, .. } | Entry::Hyp { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Machine {
    entries: Vec<Entry>,
    goal: Option<Expr>,
    /// Hypotheses rewritten by `subst`/`simp`/`norm_num`; shown reduced.
    reduced: HashSet<String>,
    window: CheckWindow,
}

impl Machine {
    fn new(window: CheckWindow) -> Self {
        Self {
            entries: Vec::new(),
            goal: None,
            reduced: HashSet::new(),
            window,
        }
    }

    fn start(&mut self, proof: &ParsedProof) -> Result<(), String> {
        for (names, ty) in &proof.binders {
            match Sort::parse_type(ty) {
                Some(sort) => {
                    for n in names {
                        self.entries.push(Entry::Var {
                            name: n.clone(),
                            sort,
                        });
                    }
                }
                None => {
                    let prop = self.parse_prop(ty)?;
                    for n in names {
                        self.entries.push(Entry::Hyp {
                            name: n.clone(),
                            prop: prop.clone(),
                        });
                    }
                }
            }
        }
        self.goal = Some(self.parse_prop(&proof.statement)?);
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.name() == name)
    }

    fn scope_kind(&self, name: &str) -> Option<Kind> {
        self.lookup(name).map(|e| match e {
            Entry::Var { .. } => Kind::Term,
            Entry::Hyp { .. } => Kind::Prop,
        })
    }

    fn parse_prop(&self, text: &str) -> Result<Expr, String> {
        let e = parse_expr(text).map_err(|e| format!("unexpected syntax: {e}"))?;
        match e.kind(&|n| self.scope_kind(n)) {
            Ok(Kind::Prop) => Ok(e),
            Ok(Kind::Term) => Err(format!("type mismatch: `{e}` is not a proposition")),
            Err(err) => Err(err.to_string()),
        }
    }

    fn state(&self) -> ProofState {
        ProofState {
            position: Default::default(),
            hypotheses: self
                .entries
                .iter()
                .map(|e| match e {
                    Entry::Var { name, sort } => {
                        crate::model::Hypothesis::new(name.clone(), sort.lean_name())
                    }
                    Entry::Hyp { name, prop, .. } => {
                        let shown = if self.reduced.contains(name) {
                            prop.reduce()
                        } else {
                            prop.clone()
                        };
                        crate::model::Hypothesis::new(name.clone(), shown.to_string())
                    }
                })
                .collect(),
            goal_text: self.goal.as_ref().map(|g| g.to_string()).unwrap_or_default(),
        }
    }

    fn exec(&mut self, tactic: &Tactic, infos: &mut Vec<String>) -> Result<(), String> {
        match tactic {
            Tactic::TraceState => {
                let s = self.state();
                infos.push(if s.is_terminal() {
                    NO_GOALS.to_string()
                } else {
                    render_goal(&s)
                });
                Ok(())
            }
            Tactic::Try(seq) => {
                let snapshot = self.clone();
                let mut inner = Vec::new();
                for t in seq {
                    if self.exec(t, &mut inner).is_err() {
                        *self = snapshot;
                        return Ok(());
                    }
                }
                infos.extend(inner);
                Ok(())
            }
            Tactic::Intro(names) => self.intro(names),
            Tactic::Have { pattern, ty, proof } => self.have(pattern, ty.as_deref(), proof),
            Tactic::Subst(names) => {
                for n in names {
                    self.subst(n)?;
                }
                Ok(())
            }
            Tactic::SimpOnlyAt { lemmas, targets } => self.simp_only(lemmas, targets),
            Tactic::NormNumAt(targets) => {
                for t in targets {
                    match self.lookup(t) {
                        Some(Entry::Hyp { .. }) => {
                            self.reduced.insert(t.clone());
                        }
                        _ => return Err(format!("unknown hypothesis '{t}'")),
                    }
                }
                Ok(())
            }
            Tactic::Other(text) => {
                let goal = self.goal.clone().ok_or("no goals to be proved")?;
                match self.refute(&goal)? {
                    None => {
                        self.goal = None;
                        Ok(())
                    }
                    Some(cex) => Err(format!(
                        "`{}` failed: goal `{goal}` does not hold at {cex}",
                        text.split_whitespace().next().unwrap_or(text)
                    )),
                }
            }
        }
    }

    fn intro(&mut self, names: &[String]) -> Result<(), String> {
        for name in names {
            let goal = self.goal.take().ok_or("no goals to be proved")?;
            let (entry, rest) = match goal {
                Expr::Forall(mut vars, body) => {
                    let (bound, sort) = vars.remove(0);
                    let rename = |e: &Expr| e.subst(&bound, &Expr::Var(name.clone()));
                    let rest = if vars.is_empty() {
                        rename(&body)
                    } else {
                        rename(&Expr::Forall(vars, body))
                    };
                    (
                        Entry::Var {
                            name: name.clone(),
                            sort,
                        },
                        rest,
                    )
                }
                Expr::Imp(p, q) => (
                    Entry::Hyp {
                        name: name.clone(),
                        prop: *p,
                    },
                    *q,
                ),
                Expr::Not(p) => (
                    Entry::Hyp {
                        name: name.clone(),
                        prop: *p,
                    },
                    Expr::False,
                ),
                Expr::Rel(RelOp::Ne, l, r) => (
                    Entry::Hyp {
                        name: name.clone(),
                        prop: Expr::Rel(RelOp::Eq, l, r),
                    },
                    Expr::False,
                ),
                other => {
                    self.goal = Some(other);
                    return Err(format!("no additional binders to introduce for '{name}'"));
                }
            };
            self.entries.push(entry);
            self.goal = Some(rest);
        }
        Ok(())
    }

    fn have(&mut self, pattern: &HavePattern, ty: Option<&str>, proof: &str) -> Result<(), String> {
        let Some(ty) = ty else {
            // `have h := h'` re-states an existing hypothesis.
            let source = proof.trim();
            let prop = match self.lookup(source) {
                Some(Entry::Hyp { prop, .. }) => prop.clone(),
                Some(Entry::Var { .. }) => return Err(format!("type mismatch: '{source}' is not a proof")),
                None => return Err(format!("unknown identifier '{source}'")),
            };
            if let HavePattern::Named(n) = pattern {
                if n != "_" {
                    self.entries.push(Entry::Hyp {
                        name: n.clone(),
                        prop,
                    });
                }
            }
            return Ok(());
        };
        let prop = self.parse_prop(ty)?;
        match pattern {
            HavePattern::Named(name) => {
                let verdict = self.refute(&prop);
                if name != "_" {
                    self.entries.push(Entry::Hyp {
                        name: name.clone(),
                        prop: prop.clone(),
                    });
                }
                match verdict? {
                    None => Ok(()),
                    Some(cex) => Err(format!("have '{name}' : `{prop}` does not hold at {cex}")),
                }
            }
            HavePattern::Destructure(names) => match (&prop, names.as_slice()) {
                (Expr::Exists(bound, sort, body), [var, h]) => {
                    let body = body.subst(bound, &Expr::Var(var.clone()));
                    let definition = matches!(&body,
                        Expr::Rel(RelOp::Eq, l, r)
                            if **l == Expr::Var(var.clone()) && !r.free_vars().contains(var.as_str()));
                    if !definition {
                        return Err(format!(
                            "cannot check existential `{prop}`: only definitional witnesses are supported"
                        ));
                    }
                    self.entries.push(Entry::Var {
                        name: var.clone(),
                        sort: *sort,
                    });
                    self.entries.push(Entry::Hyp {
                        name: h.clone(),
                        prop: body,
                    });
                    Ok(())
                }
                (Expr::And(a, b2), [ha, hb]) => {
                    let verdict = self.refute(&prop);
                    self.entries.push(Entry::Hyp {
                        name: ha.clone(),
                        prop: (**a).clone(),
                    });
                    self.entries.push(Entry::Hyp {
                        name: hb.clone(),
                        prop: (**b2).clone(),
                    });
                    match verdict? {
                        None => Ok(()),
                        Some(cex) => Err(format!("have : `{prop}` does not hold at {cex}")),
                    }
                }
                _ => Err(format!("unsupported pattern for `{prop}`")),
            },
        }
    }

    fn subst(&mut self, h: &str) -> Result<(), String> {
        let Some(Entry::Hyp { prop, .. }) = self.lookup(h).cloned() else {
            return Err(format!("unknown hypothesis '{h}'"));
        };
        let (var, value) = match &prop {
            Expr::Rel(RelOp::Eq, l, r) => match (l.as_ref(), r.as_ref()) {
                (Expr::Var(v), e) | (e, Expr::Var(v))
                    if matches!(self.lookup(v), Some(Entry::Var { .. }))
                        && !e.free_vars().contains(v.as_str()) =>
                {
                    (v.clone(), e.clone())
                }
                _ => {
                    return Err(format!(
                        "invalid equality proof, it is not of the form (x = t) or (t = x): {prop}"
                    ))
                }
            },
            _ => return Err(format!("'{h}' is not an equality")),
        };
        self.entries.retain(|e| e.name() != h && e.name() != var);
        for e in &mut self.entries {
            if let Entry::Hyp { prop, name, .. } = e {
                let new = prop.subst(&var, &value);
                if new != *prop {
                    self.reduced.insert(name.clone());
                    *prop = new;
                }
            }
        }
        if let Some(g) = &self.goal {
            self.goal = Some(g.subst(&var, &value));
        }
        Ok(())
    }

    fn simp_only(&mut self, lemmas: &[String], targets: &[String]) -> Result<(), String> {
        let mut rewrites = Vec::new();
        for l in lemmas {
            match self.lookup(l) {
                Some(Entry::Hyp {
                    prop: Expr::Rel(RelOp::Eq, lhs, rhs),
                    ..
                }) => match lhs.as_ref() {
                    Expr::Var(v) => rewrites.push((v.clone(), (**rhs).clone())),
                    _ => return Err(format!("simp lemma '{l}' does not rewrite a variable")),
                },
                Some(_) => return Err(format!("'{l}' is not an equation")),
                None => return Err(format!("unknown identifier '{l}'")),
            }
        }
        for t in targets {
            let idx = self
                .entries
                .iter()
                .rposition(|e| e.name() == t)
                .ok_or_else(|| format!("unknown hypothesis '{t}'"))?;
            let Entry::Hyp { prop, .. } = &mut self.entries[idx] else {
                return Err(format!("'{t}' is not a hypothesis"));
            };
            let mut new = prop.clone();
            for (v, e) in &rewrites {
                new = new.subst(v, e);
            }
            if new == *prop {
                return Err("simp made no progress".to_string());
            }
            *prop = new;
            self.reduced.insert(t.clone());
        }
        Ok(())
    }

    /// Searches the window for an assignment satisfying every hypothesis in
    /// scope but not `prop`. Returns it rendered as `x = 3, n = 5`.
    fn refute(&self, prop: &Expr) -> Result<Option<String>, String> {
        let mut order: Vec<(String, Sort, Option<Expr>)> = Vec::new();
        let mut known: HashSet<String> = HashSet::new();
        for e in &self.entries {
            if let Entry::Var { name, sort } = e {
                let def = self.entries.iter().find_map(|h| match h {
                    Entry::Hyp {
                        prop: Expr::Rel(RelOp::Eq, l, r),
                        ..
                    } if **l == Expr::Var(name.clone())
                        && r.free_vars().iter().all(|v| known.contains(v)) =>
                    {
                        Some((**r).clone())
                    }
                    _ => None,
                });
                known.insert(name.clone());
                order.push((name.clone(), *sort, def));
            }
        }
        let free: Vec<(String, Sort)> = order
            .iter()
            .filter(|(_, _, d)| d.is_none())
            .map(|(n, s, _)| (n.clone(), *s))
            .collect();
        if free.len() > self.window.max_free_vars {
            return Err(format!("too many free variables to check ({})", free.len()));
        }
        let hyps: Vec<&Expr> = self
            .entries
            .iter()
            .filter_map(|e| match e {
                Entry::Hyp { prop, .. } => Some(prop),
                _ => None,
            })
            .collect();
        let ranges: Vec<(i128, i128)> = free
            .iter()
            .map(|(_, s)| match s {
                Sort::Int => (self.window.lo, self.window.hi),
                Sort::Nat => (self.window.lo.max(0), self.window.hi),
            })
            .collect();
        let mut idx: Vec<i128> = ranges.iter().map(|r| r.0).collect();
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            return Ok(None);
        }
        loop {
            let mut env = Env::new();
            for (i, (n, _)) in free.iter().enumerate() {
                env.insert(n.clone(), idx[i]);
            }
            let mut ok = true;
            for (n, sort, def) in &order {
                if let Some(d) = def {
                    match d.eval_term(&env) {
                        Ok(v) if *sort == Sort::Int || v >= 0 => {
                            env.insert(n.clone(), v);
                        }
                        _ => {
                            ok = false;
                            break;
                        }
                    }
                }
            }
            // Assignments where a hypothesis cannot be evaluated are skipped.
            if ok && hyps.iter().all(|h| h.eval_prop(&env).unwrap_or(false)) {
                match prop.eval_prop(&env) {
                    Ok(true) => {}
                    Ok(false) => return Ok(Some(render_assignment(&free, &env))),
                    Err(e) => return Err(format!("cannot evaluate `{prop}`: {e}")),
                }
            }
            // Odometer increment.
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return Ok(None);
                }
                if idx[k] < ranges[k].1 {
                    idx[k] += 1;
                    break;
                }
                idx[k] = ranges[k].0;
                k += 1;
            }
        }
    }
}

fn render_assignment(free: &[(String, Sort)], env: &Env) -> String {
    if free.is_empty() {
        return "the given values".to_string();
    }
    free.iter()
        .map(|(n, _)| format!("{n} = {}", env[n]))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Sort {
    fn parse_type(s: &str) -> Option<Sort> {
        match s.trim() {
            "ℤ" | "Int" => Some(Sort::Int),
            "ℕ" | "Nat" => Some(Sort::Nat),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(src: &str) -> CompileReport {
        ReferenceToolchain::new().check_text(src)
    }

    #[test]
    fn empty_file_compiles() {
        let r = check("");
        assert!(r.success);
        assert!(r.diagnostics.is_empty());
    }

    #[test]
    fn simple_proof() {
        let r = check(
            "theorem t : ∀ x : ℤ, x > 2 → x + 1 > 3 := by\n  intro x hx\n  have h : x + 1 > 3 := by linarith\n  exact h\n",
        );
        assert!(r.success, "{:?}", r.diagnostics);
    }

    #[test]
    fn refuted_have_reports_line() {
        let r = check(
            "theorem t : ∀ x : ℤ, x > 2 → x + 1 > 3 := by\n  intro x hx\n  have h : x > 3 := by linarith\n  exact h\n",
        );
        assert!(!r.success);
        let e = r.errors().next().unwrap();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("x = 3"), "{}", e.message);
    }

    #[test]
    fn sort_error() {
        let r =
            check("theorem t (x : ℤ) (hx : x > 2) : x > 1 := by\n  have h : x > True := by simp\n  omega\n");
        assert!(!r.success);
        assert_eq!(r.errors().next().unwrap().line, 2);
    }

    #[test]
    fn unsolved_goal() {
        let r = check("theorem t (x : ℤ) : x = x := by\n  have h : 1 = 1 := rfl\n");
        assert!(!r.success);
        assert!(r.errors().next().unwrap().message.starts_with("unsolved goals"));
    }

    #[test]
    fn try_reverts_and_trace_reports() {
        let src = "example (x : ℤ) (hbind_x : x = 2) : True := by
  try (have ⟨n, n_def⟩ : ∃ n : ℤ, n = x ^ 2 - 1 := ⟨_, rfl⟩)
  try (have hn : n > 5 := by subst_vars; simp)
  trace_state
  try subst hbind_x
  try norm_num at n_def
  trace_state
  trivial
";
        let r = check(src);
        assert!(r.success, "{:?}", r.diagnostics);
        let infos: Vec<&str> = r.infos().map(|d| d.message.as_str()).collect();
        assert_eq!(infos.len(), 2);
        assert!(!infos[0].contains("hn"));
        assert!(infos[0].contains("n_def : n = x ^ 2 - 1"));
        assert!(infos[1].contains("n_def : n = 3"), "{}", infos[1]);
    }
}
