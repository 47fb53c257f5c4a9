//! Bounded linear temporal logic over simulation traces.
//!
//! Formulas are evaluated at position 0 of a trace. Bounds count steps, one
//! state per step. Properties are compiled to a small stack-machine program
//! ([`compile`]) that a [`MonitorSession`] runs incrementally as states
//! arrive, answering `True`, `False` or `Undecided` with Kleene semantics.
//! [`reference_eval`] is an independent recursive evaluator over a complete
//! trace used to cross-check the VM.
//!
//! Text syntax:
//!
//! ```text
//! φ ::= φ -> φ | φ '|' φ | φ & φ | φ U<=t φ
//!     | ! φ | X φ | F<=t φ | G<=t φ
//!     | forall b : Type . φ | exists b : Type . φ
//!     | true | false | ( φ ) | <boolean expression>
//! ```

mod compile;
mod parse;
mod reference;
mod vm;

use std::fmt;
use std::sync::Arc;

pub use compile::{compile, CompileError, Op, PropertyProgram};
pub use parse::{parse_formula, FORMULA_RESERVED};
pub use reference::{reference_eval, ReferenceError};
pub use vm::{MonitorError, MonitorSession};

use crate::syntax::Expr;

/// Three-valued verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    True,
    False,
    Undecided,
}

impl Verdict {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Verdict::True
        } else {
            Verdict::False
        }
    }

    pub fn is_decided(self) -> bool {
        self != Verdict::Undecided
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Verdict::True => Some(true),
            Verdict::False => Some(false),
            Verdict::Undecided => None,
        }
    }

    pub fn and(self, o: Self) -> Self {
        match (self, o) {
            (Verdict::False, _) | (_, Verdict::False) => Verdict::False,
            (Verdict::True, Verdict::True) => Verdict::True,
            _ => Verdict::Undecided,
        }
    }

    pub fn or(self, o: Self) -> Self {
        !(!self).and(!o)
    }
}

impl std::ops::Not for Verdict {
    type Output = Verdict;

    fn not(self) -> Verdict {
        match self {
            Verdict::True => Verdict::False,
            Verdict::False => Verdict::True,
            Verdict::Undecided => Verdict::Undecided,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::True => "true",
            Verdict::False => "false",
            Verdict::Undecided => "undecided",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quantifier {
    ForAll,
    Exists,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    True,
    False,
    /// Boolean state expression.
    Atom(Expr),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Eventually(u32, Box<Formula>),
    Always(u32, Box<Formula>),
    Until(u32, Box<Formula>, Box<Formula>),
    /// Binds `binder` to each instance of `type_name` present at the state
    /// where the quantifier is evaluated.
    Quant { q: Quantifier, binder: Arc<str>, type_name: Arc<str>, body: Box<Formula> },
}

impl Formula {
    pub fn atom(e: Expr) -> Self {
        Formula::Atom(e)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn eventually(t: u32, f: Formula) -> Self {
        Formula::Eventually(t, Box::new(f))
    }

    pub fn always(t: u32, f: Formula) -> Self {
        Formula::Always(t, Box::new(f))
    }

    pub fn until(t: u32, a: Formula, b: Formula) -> Self {
        Formula::Until(t, Box::new(a), Box::new(b))
    }

    pub fn forall(binder: &str, type_name: &str, body: Formula) -> Self {
        Formula::Quant { q: Quantifier::ForAll, binder: binder.into(), type_name: type_name.into(), body: Box::new(body) }
    }

    pub fn exists(binder: &str, type_name: &str, body: Formula) -> Self {
        Formula::Quant { q: Quantifier::Exists, binder: binder.into(), type_name: type_name.into(), body: Box::new(body) }
    }

    /// Number of future steps needed beyond the evaluation point.
    pub fn required_window(&self) -> u64 {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => 0,
            Formula::Not(f) | Formula::Quant { body: f, .. } => f.required_window(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.required_window().max(b.required_window())
            }
            Formula::Next(f) => 1 + f.required_window(),
            Formula::Eventually(t, f) | Formula::Always(t, f) => u64::from(*t) + f.required_window(),
            Formula::Until(t, a, b) => u64::from(*t) + a.required_window().max(b.required_window()),
        }
    }

    /// Nesting depth of operators; atoms and constants have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => 0,
            Formula::Not(f) | Formula::Next(f) | Formula::Eventually(_, f) | Formula::Always(_, f) => 1 + f.depth(),
            Formula::Quant { body, .. } => 1 + body.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Until(_, a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    /// Whether any atom below refers to a binder not bound inside `self`.
    pub(crate) fn has_free_binders(&self, bound_outside: &[Arc<str>]) -> bool {
        fn walk(f: &Formula, outer: &[Arc<str>], inner: &mut Vec<Arc<str>>) -> bool {
            match f {
                Formula::True | Formula::False => false,
                Formula::Atom(e) => {
                    let mut hit = false;
                    e.visit_refs(&mut Vec::new(), &mut |p, local| {
                        if let Some(first) = p.first() {
                            if !local.contains(&&**first) && !inner.contains(first) && outer.contains(first) {
                                hit = true;
                            }
                        }
                    });
                    hit
                }
                Formula::Not(x) | Formula::Next(x) | Formula::Eventually(_, x) | Formula::Always(_, x) => {
                    walk(x, outer, inner)
                }
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Until(_, a, b) => {
                    walk(a, outer, inner) || walk(b, outer, inner)
                }
                Formula::Quant { binder, body, .. } => {
                    inner.push(binder.clone());
                    let r = walk(body, outer, inner);
                    inner.pop();
                    r
                }
            }
        }
        walk(self, bound_outside, &mut Vec::new())
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Quant { .. } => 0,
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Until(..) => 4,
            Formula::Not(_) | Formula::Next(_) | Formula::Eventually(..) | Formula::Always(..) => 5,
            Formula::True | Formula::False | Formula::Atom(_) => 6,
        }
    }
}

/// Writes `f`, parenthesized when its precedence is below `min`.
fn write_at(out: &mut fmt::Formatter<'_>, f: &Formula, min: u8) -> fmt::Result {
    if f.precedence() < min {
        out.write_str("(")?;
        write!(out, "{f}")?;
        return out.write_str(")");
    }
    write!(out, "{f}")
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(e) => {
                // atoms always print in parentheses unless they are a bare path
                if matches!(e, Expr::Ref(_)) {
                    write!(f, "{e}")
                } else {
                    write!(f, "({e})")
                }
            }
            Formula::Not(x) => {
                f.write_str("!")?;
                write_at(f, x, 5)
            }
            Formula::Next(x) => {
                f.write_str("X ")?;
                write_at(f, x, 5)
            }
            Formula::Eventually(t, x) => {
                write!(f, "F<={t} ")?;
                write_at(f, x, 5)
            }
            Formula::Always(t, x) => {
                write!(f, "G<={t} ")?;
                write_at(f, x, 5)
            }
            Formula::Until(t, a, b) => {
                write_at(f, a, 5)?;
                write!(f, " U<={t} ")?;
                write_at(f, b, 5)
            }
            Formula::And(a, b) => {
                write_at(f, a, 3)?;
                f.write_str(" & ")?;
                write_at(f, b, 4)
            }
            Formula::Or(a, b) => {
                write_at(f, a, 2)?;
                f.write_str(" | ")?;
                write_at(f, b, 3)
            }
            Formula::Implies(a, b) => {
                write_at(f, a, 2)?;
                f.write_str(" -> ")?;
                write_at(f, b, 1)
            }
            Formula::Quant { q, binder, type_name, body } => {
                let kw = match q {
                    Quantifier::ForAll => "forall",
                    Quantifier::Exists => "exists",
                };
                write!(f, "{kw} {binder} : {type_name} . {body}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_expr;

    fn p(name: &str) -> Formula {
        Formula::atom(parse_expr(name).unwrap())
    }

    #[test]
    fn window_rule() {
        assert_eq!(p("x > 0").required_window(), 0);
        assert_eq!(Formula::always(5, Formula::eventually(3, p("p"))).required_window(), 8);
        let f = Formula::and(Formula::eventually(2, p("p")), Formula::always(7, p("q")));
        assert_eq!(f.required_window(), 7);
        assert_eq!(Formula::next(Formula::until(4, p("a"), Formula::next(p("b")))).required_window(), 6);
        assert_eq!(Formula::forall("a", "T", Formula::always(3, p("a.x"))).required_window(), 3);
    }

    #[test]
    fn kleene_tables() {
        use Verdict::*;
        let all = [True, False, Undecided];
        for a in all {
            for b in all {
                // oracle: order False < Undecided < True, and = min, or = max
                let rank = |v: Verdict| match v {
                    False => 0,
                    Undecided => 1,
                    True => 2,
                };
                let from = |r: i32| [False, Undecided, True][r as usize];
                assert_eq!(a.and(b), from(rank(a).min(rank(b))));
                assert_eq!(a.or(b), from(rank(a).max(rank(b))));
            }
            assert_eq!(!!a, a);
        }
    }

    #[test]
    fn free_binders() {
        let body = p("a.x > 0");
        assert!(body.has_free_binders(&["a".into()]));
        assert!(!Formula::forall("a", "T", body.clone()).has_free_binders(&[]));
        assert!(!p("T.allInstances()->forAll(a | a.x > 0)").has_free_binders(&["a".into()]));
    }
}
