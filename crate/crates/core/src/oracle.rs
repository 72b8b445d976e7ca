//! Direct integer evaluation of a document's hypothesis and conclusion
//! predicates. Deliberately independent of the Lean expression machinery so
//! it can serve as ground truth for the probes.
//!
//! Grammar (ASCII):
//!
//! ```text
//! pred  := or
//! or    := and ("||" and)*
//! and   := unary ("&&" unary)*
//! unary := "!" unary | "(" pred ")" | call | cmp | "true" | "false"
//! cmp   := term ("<" | "<=" | ">" | ">=" | "==" | "!=" | "|") term
//! call  := ("prime" | "is_square" | "odd" | "even") "(" term ")"
//! term  := product (("+" | "-") product)*
//! product := power (("*" | "/" | "%") power)*
//! power := "-" power | atom ("^" power)?
//! atom  := integer | name | "(" term ")"
//! ```
//!
//! `a | b` is divisibility. Primality ignores sign, matching the usual
//! convention for integer primes.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("oracle references unbound variable `{0}`")]
    Unbound(String),
    #[error("arithmetic overflow in oracle evaluation")]
    Overflow,
    #[error("division by zero in oracle evaluation")]
    DivisionByZero,
}

#[derive(Debug, Clone, PartialEq)]
enum Term {
    Lit(i128),
    Var(String),
    Neg(Box<Term>),
    Op(char, Box<Term>, Box<Term>),
}

#[derive(Debug, Clone, PartialEq)]
enum Pred {
    Const(bool),
    Not(Box<Pred>),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
    Cmp(&'static str, Term, Term),
    Call(&'static str, Term),
}

/// A parsed oracle predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate(Pred);

impl Predicate {
    pub fn parse(src: &str) -> Result<Self, OracleError> {
        let mut p = Parser { src, pos: 0 };
        let pred = p.pred()?;
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.error("trailing input"));
        }
        Ok(Predicate(pred))
    }

    pub fn eval(&self, binding: &BTreeMap<String, i64>) -> Result<bool, OracleError> {
        eval_pred(&self.0, binding)
    }

    /// Variable names the predicate mentions.
    pub fn free_vars(&self) -> BTreeSet<String> {
        fn term(t: &Term, out: &mut BTreeSet<String>) {
            match t {
                Term::Lit(_) => {}
                Term::Var(v) => {
                    out.insert(v.clone());
                }
                Term::Neg(a) => term(a, out),
                Term::Op(_, a, b) => {
                    term(a, out);
                    term(b, out);
                }
            }
        }
        fn pred(p: &Pred, out: &mut BTreeSet<String>) {
            match p {
                Pred::Const(_) => {}
                Pred::Not(a) => pred(a, out),
                Pred::And(a, b) | Pred::Or(a, b) => {
                    pred(a, out);
                    pred(b, out);
                }
                Pred::Cmp(_, a, b) => {
                    term(a, out);
                    term(b, out);
                }
                Pred::Call(_, a) => term(a, out),
            }
        }
        let mut out = BTreeSet::new();
        pred(&self.0, &mut out);
        out
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> OracleError {
        OracleError::Syntax {
            pos: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.rest().starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        if len == 0 || rest.starts_with(|c: char| c.is_ascii_digit()) {
            return None;
        }
        self.pos += len;
        Some(&rest[..len])
    }

    fn pred(&mut self) -> Result<Pred, OracleError> {
        let mut lhs = self.conj()?;
        while self.eat("||") {
            lhs = Pred::Or(Box::new(lhs), Box::new(self.conj()?));
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> Result<Pred, OracleError> {
        let mut lhs = self.unary()?;
        while self.eat("&&") {
            lhs = Pred::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Pred, OracleError> {
        if self.eat("!") {
            if self.rest().starts_with('=') {
                return Err(self.error("unexpected `!=`"));
            }
            return Ok(Pred::Not(Box::new(self.unary()?)));
        }
        let save = self.pos;
        if self.eat("(") {
            // Either a parenthesized predicate or the start of a term.
            if let Ok(p) = self.pred() {
                if self.eat(")") && !self.at_cmp_or_arith() {
                    return Ok(p);
                }
            }
            self.pos = save;
        }
        let save = self.pos;
        if let Some(name) = self.ident() {
            let call = match name {
                "prime" => Some("prime"),
                "is_square" => Some("is_square"),
                "odd" => Some("odd"),
                "even" => Some("even"),
                "true" => return Ok(Pred::Const(true)),
                "false" => return Ok(Pred::Const(false)),
                _ => None,
            };
            if let Some(call) = call {
                if !self.eat("(") {
                    return Err(self.error("expected `(`"));
                }
                let t = self.term()?;
                if !self.eat(")") {
                    return Err(self.error("expected `)`"));
                }
                return Ok(Pred::Call(call, t));
            }
            self.pos = save;
        }
        let lhs = self.term()?;
        self.skip_ws();
        for op in ["<=", ">=", "==", "!=", "<", ">", "|"] {
            if self.rest().starts_with(op) && !(op == "|" && self.rest().starts_with("||")) {
                self.pos += op.len();
                let rhs = self.term()?;
                return Ok(Pred::Cmp(op, lhs, rhs));
            }
        }
        Err(self.error("expected a comparison"))
    }

    fn at_cmp_or_arith(&mut self) -> bool {
        self.skip_ws();
        let r = self.rest();
        ["<", ">", "==", "!=", "+", "-", "*", "/", "%", "^"]
            .iter()
            .any(|op| r.starts_with(op))
            || (r.starts_with('|') && !r.starts_with("||"))
    }

    fn term(&mut self) -> Result<Term, OracleError> {
        let mut lhs = self.product()?;
        loop {
            if self.eat("+") {
                lhs = Term::Op('+', Box::new(lhs), Box::new(self.product()?));
            } else if self.eat("-") {
                lhs = Term::Op('-', Box::new(lhs), Box::new(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Term, OracleError> {
        let mut lhs = self.power()?;
        loop {
            let op = ['*', '/', '%'].into_iter().find(|c| {
                self.skip_ws();
                self.rest().starts_with(*c)
            });
            match op {
                Some(c) => {
                    self.pos += 1;
                    lhs = Term::Op(c, Box::new(lhs), Box::new(self.power()?));
                }
                None => return Ok(lhs),
            }
        }
    }

    fn power(&mut self) -> Result<Term, OracleError> {
        if self.eat("-") {
            return Ok(Term::Neg(Box::new(self.power()?)));
        }
        let base = self.atom()?;
        if self.eat("^") {
            return Ok(Term::Op('^', Box::new(base), Box::new(self.power()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Term, OracleError> {
        if self.eat("(") {
            let t = self.term()?;
            if !self.eat(")") {
                return Err(self.error("expected `)`"));
            }
            return Ok(t);
        }
        self.skip_ws();
        let rest = self.rest();
        let digits = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
        if digits > 0 {
            let v = rest[..digits]
                .parse()
                .map_err(|_| self.error("integer too large"))?;
            self.pos += digits;
            return Ok(Term::Lit(v));
        }
        match self.ident() {
            Some(name) => Ok(Term::Var(name.to_string())),
            None => Err(self.error("expected a term")),
        }
    }
}

fn eval_term(t: &Term, env: &BTreeMap<String, i64>) -> Result<i128, OracleError> {
    use OracleError::*;
    Ok(match t {
        Term::Lit(v) => *v,
        Term::Var(n) => *env.get(n).ok_or_else(|| Unbound(n.clone()))? as i128,
        Term::Neg(e) => eval_term(e, env)?.checked_neg().ok_or(Overflow)?,
        Term::Op(op, a, b) => {
            let (a, b) = (eval_term(a, env)?, eval_term(b, env)?);
            match op {
                '+' => a.checked_add(b).ok_or(Overflow)?,
                '-' => a.checked_sub(b).ok_or(Overflow)?,
                '*' => a.checked_mul(b).ok_or(Overflow)?,
                '/' if b == 0 => return Err(DivisionByZero),
                '%' if b == 0 => return Err(DivisionByZero),
                '/' => a.div_euclid(b),
                '%' => a.rem_euclid(b),
                '^' => {
                    let e = u32::try_from(b).map_err(|_| Overflow)?;
                    a.checked_pow(e).ok_or(Overflow)?
                }
                _ => unreachable!("parser only builds known operators"),
            }
        }
    })
}

fn eval_pred(p: &Pred, env: &BTreeMap<String, i64>) -> Result<bool, OracleError> {
    Ok(match p {
        Pred::Const(b) => *b,
        Pred::Not(p) => !eval_pred(p, env)?,
        Pred::And(a, b) => eval_pred(a, env)? && eval_pred(b, env)?,
        Pred::Or(a, b) => eval_pred(a, env)? || eval_pred(b, env)?,
        Pred::Cmp(op, a, b) => {
            let (a, b) = (eval_term(a, env)?, eval_term(b, env)?);
            match *op {
                "<" => a < b,
                "<=" => a <= b,
                ">" => a > b,
                ">=" => a >= b,
                "==" => a == b,
                "!=" => a != b,
                "|" => {
                    if a == 0 {
                        b == 0
                    } else {
                        b % a == 0
                    }
                }
                _ => unreachable!("parser only builds known comparisons"),
            }
        }
        Pred::Call(f, t) => {
            let v = eval_term(t, env)?;
            match *f {
                "prime" => trial_division_prime(v.unsigned_abs()),
                "is_square" => v >= 0 && integer_sqrt(v as u128).pow(2) == v as u128,
                "odd" => v.rem_euclid(2) == 1,
                "even" => v.rem_euclid(2) == 0,
                _ => unreachable!("parser only builds known calls"),
            }
        }
    })
}

fn trial_division_prime(v: u128) -> bool {
    v >= 2 && (2..).take_while(|d| d * d <= v).all(|d| !v.is_multiple_of(d))
}

/// Floor square root by Newton iteration.
fn integer_sqrt(v: u128) -> u128 {
    if v < 2 {
        return v;
    }
    let mut x = v;
    let mut y = x.div_ceil(2);
    while y < x {
        x = y;
        y = (x + v / x) / 2;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(pairs: &[(&str, i64)]) -> BTreeMap<String, i64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn holds(src: &str, pairs: &[(&str, i64)]) -> bool {
        Predicate::parse(src).unwrap().eval(&at(pairs)).unwrap()
    }

    #[test]
    fn composite_square_minus_one() {
        assert!(holds("x > 2", &[("x", 4)]));
        assert!(holds("!prime(x^2 - 1)", &[("x", 4)]));
        assert!(!holds("!prime(x^2 - 1)", &[("x", 2)]));
        assert!(!holds("!prime(x^2 - 1)", &[("x", -2)]));
    }

    #[test]
    fn perfect_square_products() {
        let src = "is_square(n*(n+1)*(n+2)*(n+3) + 1)";
        for n in -10..=10 {
            assert!(holds(src, &[("n", n)]), "n = {n}");
        }
        assert!(!holds("is_square(n)", &[("n", -4)]));
        assert!(!holds("is_square(n)", &[("n", 8)]));
    }

    #[test]
    fn odd_powers() {
        let hyp = "odd(n) && n > 1 && x > 1";
        assert!(holds(hyp, &[("x", 3), ("n", 3)]));
        assert!(!holds(hyp, &[("x", 3), ("n", 1)]));
        assert!(holds("!prime(x^n + 1)", &[("x", 3), ("n", 3)]));
        assert!(!holds("!prime(x^n + 1)", &[("x", 1), ("n", 1)]));
    }

    #[test]
    fn precedence_and_divisibility() {
        assert!(holds("2 + 3 * 4 == 14", &[]));
        assert!(holds("2 ^ 3 ^ 2 == 512", &[]));
        assert!(holds("-x ^ 2 == 0 - 9", &[("x", 3)]));
        assert!(holds("3 | 12 && !(5 | 12)", &[]));
        assert!(holds("(x + 1) * 2 > 3 || false", &[("x", 1)]));
        assert!(holds("(x > 1) && (x < 3)", &[("x", 2)]));
        assert!(holds("-7 % 3 == 2", &[]));
    }

    #[test]
    fn errors() {
        assert!(matches!(Predicate::parse("x >"), Err(OracleError::Syntax { .. })));
        assert!(matches!(
            Predicate::parse("prime x"),
            Err(OracleError::Syntax { .. })
        ));
        assert_eq!(
            Predicate::parse("y > 1").unwrap().eval(&at(&[])),
            Err(OracleError::Unbound("y".into()))
        );
        assert_eq!(
            Predicate::parse("x / 0 > 1").unwrap().eval(&at(&[("x", 1)])),
            Err(OracleError::DivisionByZero)
        );
    }

    #[test]
    fn sqrt_is_exact() {
        for v in 0u128..2000 {
            let r = integer_sqrt(v);
            assert!(r * r <= v && (r + 1) * (r + 1) > v);
        }
    }
}
