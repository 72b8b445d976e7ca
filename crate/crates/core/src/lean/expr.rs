//! The arithmetic fragment of Lean 4 term syntax used by proof documents:
//! integer arithmetic, order relations, divisibility, `Prime`, `IsSquare`,
//! `Odd`/`Even`, the propositional connectives, binders and finite sums over
//! `Finset.range`.
//!
//! Printing follows Lean's pretty-printer conventions closely enough that
//! re-parsing printed output yields the same tree.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sort {
    Int,
    Nat,
}

impl Sort {
    pub fn lean_name(self) -> &'static str {
        match self {
            Sort::Int => "ℤ",
            Sort::Nat => "ℕ",
        }
    }

    fn parse(name: &str) -> Option<Sort> {
        match name {
            "ℤ" | "Int" => Some(Sort::Int),
            "ℕ" | "Nat" => Some(Sort::Nat),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    Dvd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pred {
    Prime,
    NatPrime,
    IsSquare,
    Odd,
    Even,
}

impl Pred {
    fn name(self) -> &'static str {
        match self {
            Pred::Prime => "Prime",
            Pred::NatPrime => "Nat.Prime",
            Pred::IsSquare => "IsSquare",
            Pred::Odd => "Odd",
            Pred::Even => "Even",
        }
    }

    fn parse(name: &str) -> Option<Pred> {
        match name {
            "Prime" => Some(Pred::Prime),
            "Nat.Prime" => Some(Pred::NatPrime),
            "IsSquare" => Some(Pred::IsSquare),
            "Odd" => Some(Pred::Odd),
            "Even" => Some(Pred::Even),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Num(i128),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// `∑ var in Finset.range bound, body`
    Sum {
        var: String,
        bound: Box<Expr>,
        body: Box<Expr>,
    },
    /// Coercion (`↑e` or `(e : ℤ)`); the identity on values.
    Cast(Box<Expr>),
    Rel(RelOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Imp(Box<Expr>, Box<Expr>),
    Pred(Pred, Box<Expr>),
    True,
    False,
    Forall(Vec<(String, Sort)>, Box<Expr>),
    Exists(String, Sort, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unexpected end of input, expected {0}")]
    Eof(&'static str),
    #[error("unexpected token `{found}` at offset {offset}, expected {expected}")]
    Unexpected {
        found: String,
        offset: usize,
        expected: &'static str,
    },
    #[error("unknown sort `{0}`")]
    UnknownSort(String),
    #[error("invalid numeral `{0}`")]
    BadNumeral(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unknown identifier '{0}'")]
    Unbound(String),
    #[error("arithmetic overflow")]
    Overflow,
    #[error("negative exponent")]
    NegativeExponent,
    #[error("cannot evaluate {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SortError {
    #[error("unknown identifier '{0}'")]
    Unknown(String),
    #[error("type mismatch: expected {expected}, got `{term}`")]
    Mismatch { expected: &'static str, term: String },
}

/// Whether an expression denotes a number or a proposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Term,
    Prop,
}

const KEYWORDS: &[&str] = &[
    "have", "in", "fun", "by", "at", "with", "theorem", "lemma", "example", "let", "show", "from", "then",
    "else", "if", "do", "def",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

// ---------------------------------------------------------------------------
// Lexing

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Num(String),
    Ident(String),
    Sym(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(n) => f.write_str(n),
            Tok::Ident(s) => f.write_str(s),
            Tok::Sym(s) => f.write_str(s),
        }
    }
}

const SYMBOLS: &[(&str, &str)] = &[
    ("<=", "≤"),
    (">=", "≥"),
    ("!=", "≠"),
    ("->", "→"),
    ("/\\", "∧"),
    ("\\/", "∨"),
    ("(", "("),
    (")", ")"),
    ("⟨", "⟨"),
    ("⟩", "⟩"),
    (",", ","),
    (":", ":"),
    ("+", "+"),
    ("-", "-"),
    ("*", "*"),
    ("·", "*"),
    ("/", "/"),
    ("%", "%"),
    ("^", "^"),
    ("=", "="),
    ("≠", "≠"),
    ("<", "<"),
    (">", ">"),
    ("≤", "≤"),
    ("≥", "≥"),
    ("∣", "∣"),
    ("¬", "¬"),
    ("∧", "∧"),
    ("∨", "∨"),
    ("→", "→"),
    ("∀", "∀"),
    ("∃", "∃"),
    ("∑", "∑"),
    ("∈", "in"),
    ("↑", "↑"),
];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut out = Vec::new();
    let mut i = 0;
    let bytes = src;
    'outer: while i < src.len() {
        let rest = &bytes[i..];
        let c = rest.chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c.is_ascii_digit() {
            let len = rest.find(|ch: char| !ch.is_ascii_digit()).unwrap_or(rest.len());
            out.push((Tok::Num(rest[..len].to_string()), i));
            i += len;
            continue;
        }
        if c.is_alphabetic() || c == '_' || c == 'ℤ' || c == 'ℕ' {
            let mut len = 0;
            let mut prev_dot = false;
            for ch in rest.chars() {
                let ok = crate::model::is_ident_char(ch) || ch == 'ℤ' || ch == 'ℕ';
                if ok {
                    prev_dot = false;
                } else if ch == '.' && !prev_dot && len > 0 {
                    // `Nat.Prime`, `Finset.range`: dotted names continue only
                    // when followed by an identifier character.
                    let after = rest[len + 1..].chars().next();
                    if !after.is_some_and(|a| a.is_alphabetic() || a == '_') {
                        break;
                    }
                    prev_dot = true;
                } else {
                    break;
                }
                len += ch.len_utf8();
            }
            out.push((Tok::Ident(rest[..len].to_string()), i));
            i += len;
            continue;
        }
        for (pat, sym) in SYMBOLS {
            if rest.starts_with(pat) {
                out.push((Tok::Sym(sym), i));
                i += pat.len();
                continue 'outer;
            }
        }
        return Err(ParseError::Unexpected {
            found: c.to_string(),
            offset: i,
            expected: "a token",
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parsing

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

const PREC_IMP: u8 = 25;
const PREC_OR: u8 = 30;
const PREC_AND: u8 = 35;
const PREC_NOT: u8 = 40;
const PREC_REL: u8 = 50;
const PREC_ADD: u8 = 65;
const PREC_SUM_BODY: u8 = 67;
const PREC_MUL: u8 = 70;
const PREC_NEG: u8 = 75;
const PREC_POW: u8 = 75;
const PREC_MAX: u8 = 100;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, o)| *o).unwrap_or(usize::MAX)
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        match self.peek() {
            None => ParseError::Eof(expected),
            Some(t) => ParseError::Unexpected {
                found: t.to_string(),
                offset: self.offset(),
                expected,
            },
        }
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &'static str) -> Result<(), ParseError> {
        if self.eat(sym) {
            Ok(())
        } else {
            Err(self.unexpected(sym))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !is_keyword(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn sort(&mut self) -> Result<Sort, ParseError> {
        let name = self.ident()?;
        Sort::parse(&name).ok_or(ParseError::UnknownSort(name))
    }

    fn expr(&mut self, min: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.prefix()?;
        while let Some(Tok::Sym(sym)) = self.peek() {
            let (prec, next_min): (u8, u8) = match *sym {
                "→" => (PREC_IMP, PREC_IMP),
                "∨" => (PREC_OR, PREC_OR),
                "∧" => (PREC_AND, PREC_AND),
                "=" | "≠" | "<" | ">" | "≤" | "≥" | "∣" => (PREC_REL, PREC_REL + 1),
                "+" | "-" => (PREC_ADD, PREC_ADD + 1),
                "*" | "/" | "%" => (PREC_MUL, PREC_MUL + 1),
                "^" => (PREC_POW, PREC_POW),
                _ => break,
            };
            if prec < min {
                break;
            }
            let sym = *sym;
            self.pos += 1;
            let rhs = self.expr(next_min)?;
            lhs = match sym {
                "→" => Expr::Imp(b(lhs), b(rhs)),
                "∨" => Expr::Or(b(lhs), b(rhs)),
                "∧" => Expr::And(b(lhs), b(rhs)),
                "=" => Expr::Rel(RelOp::Eq, b(lhs), b(rhs)),
                "≠" => Expr::Rel(RelOp::Ne, b(lhs), b(rhs)),
                "<" => Expr::Rel(RelOp::Lt, b(lhs), b(rhs)),
                ">" => Expr::Rel(RelOp::Gt, b(lhs), b(rhs)),
                "≤" => Expr::Rel(RelOp::Le, b(lhs), b(rhs)),
                "≥" => Expr::Rel(RelOp::Ge, b(lhs), b(rhs)),
                "∣" => Expr::Rel(RelOp::Dvd, b(lhs), b(rhs)),
                "+" => Expr::Bin(BinOp::Add, b(lhs), b(rhs)),
                "-" => Expr::Bin(BinOp::Sub, b(lhs), b(rhs)),
                "*" => Expr::Bin(BinOp::Mul, b(lhs), b(rhs)),
                "/" => Expr::Bin(BinOp::Div, b(lhs), b(rhs)),
                "%" => Expr::Bin(BinOp::Mod, b(lhs), b(rhs)),
                "^" => Expr::Bin(BinOp::Pow, b(lhs), b(rhs)),
                _ => unreachable!(),
            };
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Sym("¬")) => {
                self.pos += 1;
                Ok(Expr::Not(b(self.expr(PREC_NOT)?)))
            }
            Some(Tok::Sym("-")) => {
                self.pos += 1;
                Ok(Expr::Neg(b(self.expr(PREC_NEG)?)))
            }
            Some(Tok::Sym("∀")) => {
                self.pos += 1;
                let mut vars = Vec::new();
                loop {
                    let mut names = vec![self.ident()?];
                    while let Some(Tok::Ident(_)) = self.peek() {
                        names.push(self.ident()?);
                    }
                    self.expect(":")?;
                    let sort = self.sort()?;
                    vars.extend(names.into_iter().map(|n| (n, sort)));
                    if self.eat(",") {
                        if self.eat("∀") {
                            continue;
                        }
                        break;
                    }
                    return Err(self.unexpected(","));
                }
                Ok(Expr::Forall(vars, b(self.expr(0)?)))
            }
            Some(Tok::Sym("∃")) => {
                self.pos += 1;
                let var = self.ident()?;
                self.expect(":")?;
                let sort = self.sort()?;
                self.expect(",")?;
                Ok(Expr::Exists(var, sort, b(self.expr(0)?)))
            }
            Some(Tok::Sym("∑")) => {
                self.pos += 1;
                let var = self.ident()?;
                if !self.eat("in") && !matches!(self.next(), Some(Tok::Ident(ref s)) if s == "in") {
                    return Err(self.unexpected("`in`"));
                }
                match self.next() {
                    Some(Tok::Ident(ref s)) if s == "Finset.range" => {}
                    _ => return Err(self.unexpected("Finset.range")),
                }
                let bound = self.application_arg()?;
                self.expect(",")?;
                let body = self.expr(PREC_SUM_BODY)?;
                Ok(Expr::Sum {
                    var,
                    bound: b(bound),
                    body: b(body),
                })
            }
            _ => self.application(),
        }
    }

    fn application(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Ident(name)) = self.peek() {
            if let Some(pred) = Pred::parse(name) {
                self.pos += 1;
                return Ok(Expr::Pred(pred, b(self.application_arg()?)));
            }
        }
        self.atom()
    }

    fn application_arg(&mut self) -> Result<Expr, ParseError> {
        if self.eat("↑") {
            return Ok(Expr::Cast(b(self.application_arg()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            Some(Tok::Num(n)) => n
                .parse::<i128>()
                .map(Expr::Num)
                .map_err(|_| ParseError::BadNumeral(n)),
            Some(Tok::Ident(s)) if s == "True" => Ok(Expr::True),
            Some(Tok::Ident(s)) if s == "False" => Ok(Expr::False),
            Some(Tok::Ident(s)) if !is_keyword(&s) => Ok(Expr::Var(s)),
            Some(Tok::Sym("↑")) => Ok(Expr::Cast(b(self.application_arg()?))),
            Some(Tok::Sym("(")) => {
                let inner = self.expr(0)?;
                if self.eat(":") {
                    self.sort()?;
                    self.expect(")")?;
                    return Ok(Expr::Cast(b(inner)));
                }
                self.expect(")")?;
                Ok(inner)
            }
            _ => {
                self.pos -= 1;
                Err(self.unexpected("term"))
            }
        }
    }
}

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

/// Parses a complete expression.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let e = p.expr(0)?;
    if p.peek().is_some() {
        return Err(p.unexpected("end of expression"));
    }
    Ok(e)
}

/// Parses a `∀`-binder group list such as `(x y : ℤ) (hx : x > 2)` as it
/// appears in a theorem header. Returns `(names, type text)` pairs.
pub fn parse_binder_groups(src: &str) -> Result<Vec<(Vec<String>, String)>, ParseError> {
    let mut out = Vec::new();
    let mut rest = src.trim();
    while !rest.is_empty() {
        let Some(inner_start) = rest.strip_prefix('(') else {
            return Err(ParseError::Unexpected {
                found: rest.chars().next().unwrap().to_string(),
                offset: src.len() - rest.len(),
                expected: "(",
            });
        };
        let close = matching_paren(inner_start).ok_or(ParseError::Eof(")"))?;
        let inner = &inner_start[..close];
        let (names, ty) = inner.split_once(':').ok_or(ParseError::Eof(":"))?;
        let names = names.split_whitespace().map(str::to_string).collect();
        out.push((names, ty.trim().to_string()));
        rest = inner_start[close + 1..].trim_start();
    }
    Ok(out)
}

/// Byte offset of the `)` closing an already-opened paren.
pub fn matching_paren(s: &str) -> Option<usize> {
    let mut depth = 1usize;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '⟨' | '[' => depth += 1,
            ')' | '⟩' | ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Printing

impl Expr {
    fn prec(&self) -> u8 {
        match self {
            Expr::Num(n) if *n < 0 => PREC_NEG,
            Expr::Num(_) | Expr::Var(_) | Expr::True | Expr::False | Expr::Cast(_) => PREC_MAX,
            Expr::Pred(..) => PREC_MAX - 1,
            Expr::Neg(_) => PREC_NEG,
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
            Expr::Bin(BinOp::Mul | BinOp::Div | BinOp::Mod, ..) => PREC_MUL,
            Expr::Bin(BinOp::Pow, ..) => PREC_POW,
            Expr::Rel(..) => PREC_REL,
            Expr::Not(_) => PREC_NOT,
            Expr::And(..) => PREC_AND,
            Expr::Or(..) => PREC_OR,
            Expr::Imp(..) => PREC_IMP,
            Expr::Sum { .. } => PREC_SUM_BODY,
            Expr::Forall(..) | Expr::Exists(..) => 0,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.prec() < min {
            f.write_str("(")?;
            self.write_at(f, 0)?;
            return f.write_str(")");
        }
        match self {
            Expr::Num(n) => write!(f, "{n}"),
            Expr::Var(v) => f.write_str(v),
            Expr::True => f.write_str("True"),
            Expr::False => f.write_str("False"),
            Expr::Cast(e) => {
                f.write_str("↑")?;
                e.write_at(f, PREC_MAX)
            }
            Expr::Pred(p, e) => {
                write!(f, "{} ", p.name())?;
                e.write_at(f, PREC_MAX)
            }
            Expr::Neg(e) => {
                f.write_str("-")?;
                e.write_at(f, PREC_NEG)
            }
            Expr::Bin(op, l, r) => {
                let (sym, lp, rp) = match op {
                    BinOp::Add => ("+", PREC_ADD, PREC_ADD + 1),
                    BinOp::Sub => ("-", PREC_ADD, PREC_ADD + 1),
                    BinOp::Mul => ("*", PREC_MUL, PREC_MUL + 1),
                    BinOp::Div => ("/", PREC_MUL, PREC_MUL + 1),
                    BinOp::Mod => ("%", PREC_MUL, PREC_MUL + 1),
                    BinOp::Pow => ("^", PREC_POW + 1, PREC_POW),
                };
                l.write_at(f, lp)?;
                write!(f, " {sym} ")?;
                r.write_at(f, rp)
            }
            Expr::Rel(op, l, r) => {
                let sym = match op {
                    RelOp::Eq => "=",
                    RelOp::Ne => "≠",
                    RelOp::Lt => "<",
                    RelOp::Gt => ">",
                    RelOp::Le => "≤",
                    RelOp::Ge => "≥",
                    RelOp::Dvd => "∣",
                };
                l.write_at(f, PREC_REL + 1)?;
                write!(f, " {sym} ")?;
                r.write_at(f, PREC_REL + 1)
            }
            Expr::Not(e) => {
                f.write_str("¬")?;
                e.write_at(f, PREC_NOT)
            }
            Expr::And(l, r) => {
                l.write_at(f, PREC_AND + 1)?;
                f.write_str(" ∧ ")?;
                r.write_at(f, PREC_AND)
            }
            Expr::Or(l, r) => {
                l.write_at(f, PREC_OR + 1)?;
                f.write_str(" ∨ ")?;
                r.write_at(f, PREC_OR)
            }
            Expr::Imp(l, r) => {
                l.write_at(f, PREC_IMP + 1)?;
                f.write_str(" → ")?;
                r.write_at(f, PREC_IMP)
            }
            Expr::Sum { var, bound, body } => {
                write!(f, "∑ {var} ∈ Finset.range ")?;
                bound.write_at(f, PREC_MAX)?;
                f.write_str(", ")?;
                body.write_at(f, PREC_SUM_BODY)
            }
            Expr::Forall(vars, body) => {
                f.write_str("∀ ")?;
                let mut i = 0;
                while i < vars.len() {
                    let sort = vars[i].1;
                    let mut j = i;
                    while j < vars.len() && vars[j].1 == sort {
                        j += 1;
                    }
                    if i > 0 {
                        f.write_str(", ∀ ")?;
                    }
                    let names: Vec<&str> = vars[i..j].iter().map(|(n, _)| n.as_str()).collect();
                    write!(f, "{} : {}", names.join(" "), sort.lean_name())?;
                    i = j;
                }
                f.write_str(", ")?;
                body.write_at(f, 0)
            }
            Expr::Exists(v, sort, body) => {
                write!(f, "∃ {v} : {}, ", sort.lean_name())?;
                body.write_at(f, 0)
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

// ---------------------------------------------------------------------------
// Analysis

impl Expr {
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(v) => {
                if !bound.contains(v) {
                    out.insert(v.clone());
                }
            }
            Expr::Num(_) | Expr::True | Expr::False => {}
            Expr::Neg(e) | Expr::Cast(e) | Expr::Not(e) | Expr::Pred(_, e) => e.collect_free(bound, out),
            Expr::Bin(_, l, r) | Expr::Rel(_, l, r) | Expr::And(l, r) | Expr::Or(l, r) | Expr::Imp(l, r) => {
                l.collect_free(bound, out);
                r.collect_free(bound, out);
            }
            Expr::Sum { var, bound: n, body } => {
                n.collect_free(bound, out);
                bound.push(var.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            Expr::Forall(vars, body) => {
                let k = bound.len();
                bound.extend(vars.iter().map(|(v, _)| v.clone()));
                body.collect_free(bound, out);
                bound.truncate(k);
            }
            Expr::Exists(v, _, body) => {
                bound.push(v.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// Replaces free occurrences of `var` with `with`.
    pub fn subst(&self, var: &str, with: &Expr) -> Expr {
        match self {
            Expr::Var(v) if v == var => with.clone(),
            Expr::Var(_) | Expr::Num(_) | Expr::True | Expr::False => self.clone(),
            Expr::Neg(e) => Expr::Neg(b(e.subst(var, with))),
            Expr::Cast(e) => Expr::Cast(b(e.subst(var, with))),
            Expr::Not(e) => Expr::Not(b(e.subst(var, with))),
            Expr::Pred(p, e) => Expr::Pred(*p, b(e.subst(var, with))),
            Expr::Bin(op, l, r) => Expr::Bin(*op, b(l.subst(var, with)), b(r.subst(var, with))),
            Expr::Rel(op, l, r) => Expr::Rel(*op, b(l.subst(var, with)), b(r.subst(var, with))),
            Expr::And(l, r) => Expr::And(b(l.subst(var, with)), b(r.subst(var, with))),
            Expr::Or(l, r) => Expr::Or(b(l.subst(var, with)), b(r.subst(var, with))),
            Expr::Imp(l, r) => Expr::Imp(b(l.subst(var, with)), b(r.subst(var, with))),
            Expr::Sum { var: v, bound, body } => Expr::Sum {
                var: v.clone(),
                bound: b(bound.subst(var, with)),
                body: if v == var {
                    body.clone()
                } else {
                    b(body.subst(var, with))
                },
            },
            Expr::Forall(vars, body) => {
                if vars.iter().any(|(v, _)| v == var) {
                    self.clone()
                } else {
                    Expr::Forall(vars.clone(), b(body.subst(var, with)))
                }
            }
            Expr::Exists(v, s, body) => {
                if v == var {
                    self.clone()
                } else {
                    Expr::Exists(v.clone(), *s, b(body.subst(var, with)))
                }
            }
        }
    }

    /// Sort check against a scope that classifies identifiers.
    pub fn kind(&self, scope: &dyn Fn(&str) -> Option<Kind>) -> Result<Kind, SortError> {
        self.kind_in(scope, &mut Vec::new())
    }

    fn kind_in(
        &self,
        scope: &dyn Fn(&str) -> Option<Kind>,
        bound: &mut Vec<String>,
    ) -> Result<Kind, SortError> {
        let want = |e: &Expr, k: Kind, bound: &mut Vec<String>| -> Result<(), SortError> {
            let got = e.kind_in(scope, bound)?;
            if got == k {
                Ok(())
            } else {
                Err(SortError::Mismatch {
                    expected: match k {
                        Kind::Term => "a number",
                        Kind::Prop => "a proposition",
                    },
                    term: e.to_string(),
                })
            }
        };
        match self {
            Expr::Num(_) => Ok(Kind::Term),
            Expr::True | Expr::False => Ok(Kind::Prop),
            Expr::Var(v) => {
                if bound.contains(v) {
                    return Ok(Kind::Term);
                }
                match scope(v) {
                    Some(Kind::Term) => Ok(Kind::Term),
                    Some(Kind::Prop) => Err(SortError::Mismatch {
                        expected: "a number",
                        term: v.clone(),
                    }),
                    None => Err(SortError::Unknown(v.clone())),
                }
            }
            Expr::Neg(e) | Expr::Cast(e) => {
                want(e, Kind::Term, bound)?;
                Ok(Kind::Term)
            }
            Expr::Bin(_, l, r) => {
                want(l, Kind::Term, bound)?;
                want(r, Kind::Term, bound)?;
                Ok(Kind::Term)
            }
            Expr::Sum { var, bound: n, body } => {
                want(n, Kind::Term, bound)?;
                bound.push(var.clone());
                let r = want(body, Kind::Term, bound);
                bound.pop();
                r?;
                Ok(Kind::Term)
            }
            Expr::Rel(_, l, r) => {
                want(l, Kind::Term, bound)?;
                want(r, Kind::Term, bound)?;
                Ok(Kind::Prop)
            }
            Expr::Pred(_, e) => {
                want(e, Kind::Term, bound)?;
                Ok(Kind::Prop)
            }
            Expr::Not(e) => {
                want(e, Kind::Prop, bound)?;
                Ok(Kind::Prop)
            }
            Expr::And(l, r) | Expr::Or(l, r) | Expr::Imp(l, r) => {
                want(l, Kind::Prop, bound)?;
                want(r, Kind::Prop, bound)?;
                Ok(Kind::Prop)
            }
            Expr::Forall(vars, body) => {
                let k = bound.len();
                bound.extend(vars.iter().map(|(v, _)| v.clone()));
                let r = want(body, Kind::Prop, bound);
                bound.truncate(k);
                r?;
                Ok(Kind::Prop)
            }
            Expr::Exists(v, _, body) => {
                bound.push(v.clone());
                let r = want(body, Kind::Prop, bound);
                bound.pop();
                r?;
                Ok(Kind::Prop)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

pub type Env = HashMap<String, i128>;

impl Expr {
    pub fn eval_term(&self, env: &Env) -> Result<i128, EvalError> {
        match self {
            Expr::Num(n) => Ok(*n),
            Expr::Var(v) => env.get(v).copied().ok_or_else(|| EvalError::Unbound(v.clone())),
            Expr::Neg(e) => e.eval_term(env)?.checked_neg().ok_or(EvalError::Overflow),
            Expr::Cast(e) => e.eval_term(env),
            Expr::Bin(op, l, r) => {
                let (l, r) = (l.eval_term(env)?, r.eval_term(env)?);
                match op {
                    BinOp::Add => l.checked_add(r),
                    BinOp::Sub => l.checked_sub(r),
                    BinOp::Mul => l.checked_mul(r),
                    // Lean's `Int` division and modulus are Euclidean; `x / 0 = 0`
                    // and `x % 0 = x`.
                    BinOp::Div => Some(if r == 0 { 0 } else { l.div_euclid(r) }),
                    BinOp::Mod => Some(if r == 0 { l } else { l.rem_euclid(r) }),
                    BinOp::Pow => {
                        if r < 0 {
                            return Err(EvalError::NegativeExponent);
                        }
                        u32::try_from(r).ok().and_then(|r| l.checked_pow(r))
                    }
                }
                .ok_or(EvalError::Overflow)
            }
            Expr::Sum { var, bound, body } => {
                let n = bound.eval_term(env)?;
                let mut env = env.clone();
                let mut acc: i128 = 0;
                for i in 0..n.max(0) {
                    env.insert(var.clone(), i);
                    acc = acc
                        .checked_add(body.eval_term(&env)?)
                        .ok_or(EvalError::Overflow)?;
                }
                Ok(acc)
            }
            other => Err(EvalError::Unsupported(format!("`{other}` as a number"))),
        }
    }

    pub fn eval_prop(&self, env: &Env) -> Result<bool, EvalError> {
        match self {
            Expr::True => Ok(true),
            Expr::False => Ok(false),
            Expr::Rel(op, l, r) => {
                let (l, r) = (l.eval_term(env)?, r.eval_term(env)?);
                Ok(match op {
                    RelOp::Eq => l == r,
                    RelOp::Ne => l != r,
                    RelOp::Lt => l < r,
                    RelOp::Gt => l > r,
                    RelOp::Le => l <= r,
                    RelOp::Ge => l >= r,
                    RelOp::Dvd => {
                        if l == 0 {
                            r == 0
                        } else {
                            r % l == 0
                        }
                    }
                })
            }
            Expr::Pred(p, e) => {
                let v = e.eval_term(env)?;
                Ok(match p {
                    Pred::Prime => is_prime(v.unsigned_abs()),
                    Pred::NatPrime => v >= 0 && is_prime(v as u128),
                    Pred::IsSquare => {
                        v >= 0 && {
                            let r = isqrt(v as u128);
                            r * r == v as u128
                        }
                    }
                    Pred::Odd => v.rem_euclid(2) == 1,
                    Pred::Even => v.rem_euclid(2) == 0,
                })
            }
            Expr::Not(e) => Ok(!e.eval_prop(env)?),
            Expr::And(l, r) => Ok(l.eval_prop(env)? && r.eval_prop(env)?),
            Expr::Or(l, r) => Ok(l.eval_prop(env)? || r.eval_prop(env)?),
            Expr::Imp(l, r) => Ok(!l.eval_prop(env)? || r.eval_prop(env)?),
            other => Err(EvalError::Unsupported(format!("`{other}` as a proposition"))),
        }
    }

    /// Normalizes for display the way `subst`/`simp` leave a concrete fact:
    /// closed arithmetic subterms become numerals and `>`/`≥` flip to `<`/`≤`.
    pub fn reduce(&self) -> Expr {
        let empty = Env::new();
        if self.free_vars().is_empty() {
            if let Ok(v) = self.eval_term(&empty) {
                return Expr::Num(v);
            }
        }
        match self {
            Expr::Rel(RelOp::Gt, l, r) => Expr::Rel(RelOp::Lt, b(r.reduce()), b(l.reduce())),
            Expr::Rel(RelOp::Ge, l, r) => Expr::Rel(RelOp::Le, b(r.reduce()), b(l.reduce())),
            Expr::Rel(op, l, r) => Expr::Rel(*op, b(l.reduce()), b(r.reduce())),
            Expr::Neg(e) => Expr::Neg(b(e.reduce())),
            Expr::Cast(e) => match e.reduce() {
                n @ Expr::Num(_) => n,
                e => Expr::Cast(b(e)),
            },
            Expr::Bin(op, l, r) => Expr::Bin(*op, b(l.reduce()), b(r.reduce())),
            Expr::Pred(p, e) => Expr::Pred(*p, b(e.reduce())),
            Expr::Not(e) => Expr::Not(b(e.reduce())),
            Expr::And(l, r) => Expr::And(b(l.reduce()), b(r.reduce())),
            Expr::Or(l, r) => Expr::Or(b(l.reduce()), b(r.reduce())),
            Expr::Imp(l, r) => Expr::Imp(b(l.reduce()), b(r.reduce())),
            other => other.clone(),
        }
    }

    /// `name = <numeral>` with an optional coercion around the numeral.
    pub fn as_numeric_definition(&self) -> Option<(&str, i128)> {
        if let Expr::Rel(RelOp::Eq, l, r) = self {
            if let Expr::Var(name) = l.as_ref() {
                return r.as_numeral().map(|v| (name.as_str(), v));
            }
        }
        None
    }

    pub fn as_numeral(&self) -> Option<i128> {
        match self {
            Expr::Num(n) => Some(*n),
            Expr::Neg(e) => e.as_numeral().and_then(i128::checked_neg),
            Expr::Cast(e) => e.as_numeral(),
            _ => None,
        }
    }
}

fn isqrt(v: u128) -> u128 {
    if v < 2 {
        return v;
    }
    let mut x = (v as f64).sqrt() as u128;
    while x * x > v {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= v {
        x += 1;
    }
    x
}

fn is_prime(v: u128) -> bool {
    if v < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= v {
        if v.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}
