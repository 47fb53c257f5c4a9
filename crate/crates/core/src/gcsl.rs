//! Goal contracts: OCL-style quantification over component instances wrapped
//! around a small catalog of timed patterns.
//!
//! ```text
//! contract   = quantified | pattern ;
//! quantified = TYPE ".allInstances()" "->" ("forAll" | "exists")
//!              "(" BINDER "|" contract ")" ;
//! pattern    = "whenever" slot "occurs" slot "holds" "during" "following" bound
//!            | "whenever" slot "occurs" slot "occurs" "within" bound
//!            | slot "holds" "during" bound ;
//! slot       = "[" expr "]" ;
//! bound      = "[" UINT "]" ;
//! ```
//!
//! Keywords are case-insensitive. Slot expressions use the descriptor
//! expression language, including `T.allInstances()->forAll(b | e)`,
//! `->exists`, `->select(b | e)->size()` and `->size()`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::bltl::{Formula, Quantifier};
use crate::schema::{Schema, Scope, TypeError};
use crate::syntax::{Cursor, Expr, ExprParser, Pos, SyntaxError, Tok};

#[derive(Clone, Debug, PartialEq)]
pub struct Slot {
    pub expr: Expr,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Pattern {
    /// `whenever [P] occurs [Q] holds during following [t]`
    Persistence { trigger: Slot, response: Slot, bound: u32 },
    /// `whenever [P] occurs [Q] occurs within [t]`
    Response { trigger: Slot, response: Slot, bound: u32 },
    /// `[P] holds during [t]`
    Invariant { condition: Slot, bound: u32 },
}

impl Pattern {
    pub fn bound(&self) -> u32 {
        match self {
            Pattern::Persistence { bound, .. } | Pattern::Response { bound, .. } | Pattern::Invariant { bound, .. } => {
                *bound
            }
        }
    }

    pub fn slots(&self) -> Vec<&Slot> {
        match self {
            Pattern::Persistence { trigger, response, .. } | Pattern::Response { trigger, response, .. } => {
                vec![trigger, response]
            }
            Pattern::Invariant { condition, .. } => vec![condition],
        }
    }

    /// Catalog identifier.
    pub fn id(&self) -> &'static str {
        match self {
            Pattern::Persistence { .. } => "P1",
            Pattern::Response { .. } => "P2",
            Pattern::Invariant { .. } => "P3",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantPrefix {
    pub q: Quantifier,
    pub binder: Arc<str>,
    pub type_name: Arc<str>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcslAst {
    /// Outermost first.
    pub prefix: Vec<QuantPrefix>,
    pub pattern: Pattern,
    pub pos: Pos,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum GcslError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("unknown pattern at {pos}: {found}")]
    UnknownPattern { pos: Pos, found: String },
    #[error("binder `{name}` at {pos} is not in scope")]
    UnboundBinder { pos: Pos, name: String },
    #[error("binder `{name}` at {pos} is never used")]
    UnusedBinder { pos: Pos, name: String },
    #[error("binder `{name}` at {pos} is already bound")]
    DuplicateBinder { pos: Pos, name: String },
    #[error("type error at {pos}: {source}")]
    Type { pos: Pos, source: TypeError },
    #[error("pattern bound {bound} exceeds horizon {horizon}")]
    HorizonTooSmall { bound: u32, horizon: u32 },
}

impl GcslError {
    pub fn pos(&self) -> Option<Pos> {
        match self {
            GcslError::Syntax(e) => Some(e.pos),
            GcslError::UnknownPattern { pos, .. }
            | GcslError::UnboundBinder { pos, .. }
            | GcslError::UnusedBinder { pos, .. }
            | GcslError::DuplicateBinder { pos, .. }
            | GcslError::Type { pos, .. } => Some(*pos),
            GcslError::HorizonTooSmall { .. } => None,
        }
    }
}

const SLOT_EXPR: ExprParser<'static> = ExprParser { allow_uniform: false, reserved: &[] };

/// Parses one contract and checks its binder discipline.
pub fn parse_gcsl(text: &str) -> Result<GcslAst, GcslError> {
    let mut c = Cursor::new(text)?;
    let pos = c.pos();
    let mut prefix = Vec::new();
    let pattern = contract(&mut c, &mut prefix)?;
    c.expect_eof()?;
    let ast = GcslAst { prefix, pattern, pos };
    check_binders(&ast)?;
    Ok(ast)
}

fn contract(c: &mut Cursor, prefix: &mut Vec<QuantPrefix>) -> Result<Pattern, GcslError> {
    if let Some(q) = quant_header(c) {
        let pos = c.pos();
        let type_name: Arc<str> = c.ident()?.into();
        for _ in 0..6 {
            c.bump(); // `. allInstances ( ) -> op`
        }
        c.expect_sym("(")?;
        let binder: Arc<str> = c.ident()?.into();
        c.expect_sym("|")?;
        prefix.push(QuantPrefix { q, binder, type_name, pos });
        let p = contract(c, prefix)?;
        c.expect_sym(")")?;
        return Ok(p);
    }
    pattern(c)
}

/// Recognises `T.allInstances()->forAll(b | ` followed by a pattern, as
/// opposed to a collection expression.
fn quant_header(c: &Cursor) -> Option<Quantifier> {
    let shape = matches!(c.peek(), Tok::Ident(_))
        && matches!(c.peek_at(1), Tok::Sym("."))
        && c.is_kw_at(2, "allInstances")
        && matches!(c.peek_at(3), Tok::Sym("("))
        && matches!(c.peek_at(4), Tok::Sym(")"))
        && matches!(c.peek_at(5), Tok::Sym("->"))
        && matches!(c.peek_at(7), Tok::Sym("("))
        && matches!(c.peek_at(8), Tok::Ident(_))
        && matches!(c.peek_at(9), Tok::Sym("|"))
        && (matches!(c.peek_at(10), Tok::Sym("[")) || c.is_kw_at(10, "whenever") || c.is_kw_at(12, "allInstances"));
    if !shape {
        return None;
    }
    if c.is_kw_at(6, "forAll") {
        Some(Quantifier::ForAll)
    } else if c.is_kw_at(6, "exists") {
        Some(Quantifier::Exists)
    } else {
        None
    }
}

fn unknown(c: &Cursor) -> GcslError {
    GcslError::UnknownPattern {
        pos: c.pos(),
        found: format!(
            "expected `whenever [P] occurs ...` or `[P] holds during [t]`, found {}",
            c.peek()
        ),
    }
}

fn slot(c: &mut Cursor) -> Result<Slot, GcslError> {
    c.expect_sym("[")?;
    let pos = c.pos();
    let expr = SLOT_EXPR.parse(c)?;
    c.expect_sym("]")?;
    Ok(Slot { expr, pos })
}

fn bound(c: &mut Cursor) -> Result<u32, GcslError> {
    c.expect_sym("[")?;
    let pos = c.pos();
    let t = c.uint()?;
    c.expect_sym("]")?;
    u32::try_from(t).map_err(|_| SyntaxError::new(pos, "time bound out of range").into())
}

fn phrase(c: &mut Cursor, words: &[&str]) -> Result<(), GcslError> {
    for w in words {
        if !c.eat_kw(w) {
            return Err(unknown(c));
        }
    }
    Ok(())
}

fn pattern(c: &mut Cursor) -> Result<Pattern, GcslError> {
    if c.eat_kw("whenever") {
        let trigger = slot(c)?;
        phrase(c, &["occurs"])?;
        let response = slot(c)?;
        if c.is_kw("holds") {
            phrase(c, &["holds", "during", "following"])?;
            let bound = bound(c)?;
            return Ok(Pattern::Persistence { trigger, response, bound });
        }
        phrase(c, &["occurs", "within"])?;
        let bound = bound(c)?;
        return Ok(Pattern::Response { trigger, response, bound });
    }
    if c.is_sym("[") {
        let condition = slot(c)?;
        phrase(c, &["holds", "during"])?;
        let bound = bound(c)?;
        return Ok(Pattern::Invariant { condition, bound });
    }
    Err(unknown(c))
}

fn check_binders(ast: &GcslAst) -> Result<(), GcslError> {
    for (i, p) in ast.prefix.iter().enumerate() {
        if ast.prefix[..i].iter().any(|o| o.binder == p.binder) {
            return Err(GcslError::DuplicateBinder { pos: p.pos, name: p.binder.to_string() });
        }
    }
    let mut used = vec![false; ast.prefix.len()];
    for s in ast.pattern.slots() {
        let mut shadow = None;
        s.expr.visit_refs(&mut Vec::new(), &mut |path, locals| {
            let Some(head) = path.first() else { return };
            if locals.contains(&&**head) {
                return;
            }
            if let Some(i) = ast.prefix.iter().position(|p| p.binder == *head) {
                used[i] = true;
            }
        });
        collection_binders(&s.expr, &mut |b| {
            if shadow.is_none() && ast.prefix.iter().any(|p| *p.binder == *b) {
                shadow = Some(b.to_string());
            }
        });
        if let Some(name) = shadow {
            return Err(GcslError::DuplicateBinder { pos: s.pos, name });
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        let p = &ast.prefix[i];
        return Err(GcslError::UnusedBinder { pos: p.pos, name: p.binder.to_string() });
    }
    Ok(())
}

fn collection_binders(e: &Expr, f: &mut dyn FnMut(&str)) {
    match e {
        Expr::Collection { binder, body, .. } => {
            f(binder);
            collection_binders(body, f);
        }
        Expr::Unary(_, x) => collection_binders(x, f),
        Expr::Binary(_, a, b) => {
            collection_binders(a, f);
            collection_binders(b, f);
        }
        Expr::Call(_, args) => args.iter().for_each(|a| collection_binders(a, f)),
        _ => {}
    }
}

/// Type-checks every slot as a boolean state expression under the
/// quantifier binders.
pub fn check_gcsl(ast: &GcslAst, schema: &Schema) -> Result<(), GcslError> {
    let mut scope = Scope::default();
    for p in &ast.prefix {
        schema.check_type_name(&p.type_name).map_err(|source| GcslError::Type { pos: p.pos, source })?;
        scope = scope.with_binder(p.binder.clone(), p.type_name.clone());
    }
    for s in ast.pattern.slots() {
        schema.check_bool(&s.expr, &scope).map_err(|e| match e {
            TypeError::UnboundName(name) => GcslError::UnboundBinder { pos: s.pos, name },
            source => GcslError::Type { pos: s.pos, source },
        })?;
    }
    Ok(())
}

/// Translates a contract into a bounded formula for a run of `horizon`
/// steps. The quantifier prefix is evaluated at each state the outer `G`
/// visits.
pub fn translate_to_bltl(ast: &GcslAst, horizon: u32) -> Result<Formula, GcslError> {
    let t = ast.pattern.bound();
    if t > horizon {
        return Err(GcslError::HorizonTooSmall { bound: t, horizon });
    }
    let atom = |s: &Slot| Formula::Atom(s.expr.clone());
    let quantify = |body: Formula| {
        ast.prefix.iter().rev().fold(body, |body, p| Formula::Quant {
            q: p.q,
            binder: p.binder.clone(),
            type_name: p.type_name.clone(),
            body: Box::new(body),
        })
    };
    Ok(match &ast.pattern {
        Pattern::Persistence { trigger, response, bound } => Formula::always(
            horizon - bound,
            quantify(Formula::implies(atom(trigger), Formula::always(*bound, atom(response)))),
        ),
        Pattern::Response { trigger, response, bound } => Formula::always(
            horizon - bound,
            quantify(Formula::implies(atom(trigger), Formula::eventually(*bound, atom(response)))),
        ),
        Pattern::Invariant { condition, bound } => Formula::always(*bound, quantify(atom(condition))),
    })
}

impl fmt::Display for GcslAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.prefix {
            let op = match p.q {
                Quantifier::ForAll => "forAll",
                Quantifier::Exists => "exists",
            };
            write!(f, "{}.allInstances()->{op}({} | ", p.type_name, p.binder)?;
        }
        match &self.pattern {
            Pattern::Persistence { trigger, response, bound } => write!(
                f,
                "whenever [{}] occurs [{}] holds during following [{bound}]",
                trigger.expr, response.expr
            )?,
            Pattern::Response { trigger, response, bound } => {
                write!(f, "whenever [{}] occurs [{}] occurs within [{bound}]", trigger.expr, response.expr)?
            }
            Pattern::Invariant { condition, bound } => write!(f, "[{}] holds during [{bound}]", condition.expr)?,
        }
        for _ in &self.prefix {
            f.write_str(")")?;
        }
        Ok(())
    }
}
