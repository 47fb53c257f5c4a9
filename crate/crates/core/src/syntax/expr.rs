use std::fmt;
use std::sync::Arc;

use super::{Cursor, SyntaxError, Tok};
use crate::model::{Path, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }

    pub fn is_arithmetic(self) -> bool {
        self.precedence() >= 5
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Min,
    Max,
    Abs,
    Floor,
    Mod,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Abs => "abs",
            Builtin::Floor => "floor",
            Builtin::Mod => "mod",
        }
    }

    fn lookup(name: &str) -> Option<Self> {
        [Builtin::Min, Builtin::Max, Builtin::Abs, Builtin::Floor, Builtin::Mod]
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(name))
    }
}

/// `Type.allInstances()->op(binder | body)`
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollectionOp {
    ForAll,
    Exists,
    /// `->select(b | e)->size()`
    SelectSize,
}

/// A side-effect free expression over one simulation state.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Lit(Value),
    Ref(Path),
    Time,
    /// The fresh uniform(0,1) sample of a custom distribution.
    Uniform,
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
    /// `Type.allInstances()->size()`
    Count(Arc<str>),
    Collection { op: CollectionOp, type_name: Arc<str>, binder: Arc<str>, body: Box<Expr> },
}

impl Expr {
    pub fn bool(b: bool) -> Expr {
        Expr::Lit(Value::Bool(b))
    }

    pub fn int(i: i64) -> Expr {
        Expr::Lit(Value::Int(i))
    }

    pub fn path(text: &str) -> Expr {
        Expr::Ref(Path::parse(text).expect("valid path literal"))
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Visits every path reference together with the binders in scope.
    pub fn visit_refs<'a>(&'a self, scope: &mut Vec<&'a str>, f: &mut dyn FnMut(&'a Path, &[&'a str])) {
        match self {
            Expr::Ref(p) => f(p, scope),
            Expr::Lit(_) | Expr::Time | Expr::Uniform | Expr::Count(_) => {}
            Expr::Unary(_, e) => e.visit_refs(scope, f),
            Expr::Binary(_, l, r) => {
                l.visit_refs(scope, f);
                r.visit_refs(scope, f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_refs(scope, f)),
            Expr::Collection { binder, body, .. } => {
                scope.push(binder);
                body.visit_refs(scope, f);
                scope.pop();
            }
        }
    }

    /// Replaces every free path reference (binder-relative ones are left
    /// alone) with the expression `f` returns for it.
    pub fn map_refs(&self, f: &dyn Fn(&Path) -> Expr) -> Expr {
        self.map_refs_scoped(&mut Vec::new(), f)
    }

    fn map_refs_scoped(&self, scope: &mut Vec<Arc<str>>, f: &dyn Fn(&Path) -> Expr) -> Expr {
        match self {
            Expr::Ref(p) => {
                if p.first().is_some_and(|s| scope.contains(s)) {
                    Expr::Ref(p.clone())
                } else {
                    f(p)
                }
            }
            Expr::Lit(_) | Expr::Time | Expr::Uniform | Expr::Count(_) => self.clone(),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.map_refs_scoped(scope, f))),
            Expr::Binary(op, l, r) => Expr::Binary(
                *op,
                Box::new(l.map_refs_scoped(scope, f)),
                Box::new(r.map_refs_scoped(scope, f)),
            ),
            Expr::Call(b, args) => Expr::Call(*b, args.iter().map(|a| a.map_refs_scoped(scope, f)).collect()),
            Expr::Collection { op, type_name, binder, body } => {
                scope.push(binder.clone());
                let body = body.map_refs_scoped(scope, f);
                scope.pop();
                Expr::Collection { op: *op, type_name: type_name.clone(), binder: binder.clone(), body: Box::new(body) }
            }
        }
    }

    /// True when the expression does not read the state.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Lit(_) => true,
            Expr::Ref(_) | Expr::Time | Expr::Uniform | Expr::Count(_) | Expr::Collection { .. } => false,
            Expr::Unary(_, e) => e.is_constant(),
            Expr::Binary(_, l, r) => l.is_constant() && r.is_constant(),
            Expr::Call(_, args) => args.iter().all(Expr::is_constant),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Unary(UnOp::Not, _) => 3,
            Expr::Unary(UnOp::Neg, _) => 7,
            Expr::Lit(Value::Int(i)) if *i < 0 => 7,
            Expr::Lit(Value::Real(r)) if r.is_sign_negative() => 7,
            _ => 8,
        }
    }
}

const EXPR_KEYWORDS: &[&str] = &["and", "or", "not", "true", "false", "time"];

/// Recursive-descent parser for [`Expr`].
#[derive(Clone, Debug, Default)]
pub struct ExprParser<'r> {
    /// Allow the reserved symbol `u` (custom distributions).
    pub allow_uniform: bool,
    /// Case-sensitive identifiers that terminate an expression (operators of
    /// an enclosing language).
    pub reserved: &'r [&'r str],
}

pub fn parse_expr(src: &str) -> Result<Expr, SyntaxError> {
    let mut c = Cursor::new(src)?;
    let e = ExprParser::default().parse(&mut c)?;
    c.expect_eof()?;
    Ok(e)
}

impl ExprParser<'_> {
    pub fn parse(&self, c: &mut Cursor) -> Result<Expr, SyntaxError> {
        self.or(c)
    }

    pub fn starts_expr(&self, c: &Cursor) -> bool {
        match c.peek() {
            Tok::Int(_) | Tok::Real(_) | Tok::Str(_) => true,
            Tok::Sym(s) => matches!(*s, "(" | "-"),
            Tok::Ident(s) => !self.reserved.contains(&s.as_str()),
            Tok::Eof => false,
        }
    }

    fn or(&self, c: &mut Cursor) -> Result<Expr, SyntaxError> {
        let mut l = self.and(c)?;
        while c.eat_kw("or") {
            l = Expr::bin(BinOp::Or, l, self.and(c)?);
        }
        Ok(l)
    }

    fn and(&self, c: &mut Cursor) -> Result<Expr, SyntaxError> {
        let mut l = self.not(c)?;
        while c.eat_kw("and") {
            l = Expr::bin(BinOp::And, l, self.not(c)?);
        }
        Ok(l)
    }

    fn not(&self, c: &mut Cursor) -> Result<Expr, SyntaxError> {
        if c.eat_kw("not") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.not(c)?)));
        }
        self.cmp(c)
    }

    fn cmp(&self, c: &mut Cursor) -> Result<Expr, SyntaxError> {
        let l = self.add(c)?;
        let op = match c.peek() {
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym(">=") => BinOp::Ge,
            Tok::Sym("=") | Tok::Sym("==") => BinOp::Eq,
            Tok::Sym("!=") | Tok::Sym("<>") => BinOp::Ne,
            _ => return Ok(l),
        };
        c.bump();
        let r = self.add(c)?;
        Ok(Expr::bin(op, l, r))
    }

    fn add(&self, c: &mut Cursor) -> Result<Expr, SyntaxError> {
        let mut l = self.mul(c)?;
        loop {
            let op = match c.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                _ => return Ok(l),
            };
            c.bump();
            l = Expr::bin(op, l, self.mul(c)?);
        }
    }

    fn mul(&self, c: &mut Cursor) -> Result<Expr, SyntaxError> {
        let mut l = self.unary(c)?;
        loop {
            let op = match c.peek() {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/") => BinOp::Div,
                Tok::Sym("%") => BinOp::Mod,
                _ => return Ok(l),
            };
            c.bump();
            l = Expr::bin(op, l, self.unary(c)?);
        }
    }

    fn unary(&self, c: &mut Cursor) -> Result<Expr, SyntaxError> {
        if c.is_sym("-") {
            let pos = c.pos();
            c.bump();
            // `-` directly followed by a literal folds into a negative literal.
            match *c.peek() {
                Tok::Int(v) => {
                    c.bump();
                    let v = if v == 1u64 << 63 {
                        i64::MIN
                    } else {
                        -(i64::try_from(v).map_err(|_| SyntaxError::new(pos, "integer literal out of range"))?)
                    };
                    return Ok(Expr::int(v));
                }
                Tok::Real(r) => {
                    c.bump();
                    return Ok(Expr::Lit(Value::Real(-r)));
                }
                _ => return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary(c)?))),
            }
        }
        self.primary(c)
    }

    fn primary(&self, c: &mut Cursor) -> Result<Expr, SyntaxError> {
        let pos = c.pos();
        match c.peek().clone() {
            Tok::Int(v) => {
                c.bump();
                let v = i64::try_from(v).map_err(|_| SyntaxError::new(pos, "integer literal out of range"))?;
                Ok(Expr::int(v))
            }
            Tok::Real(r) => {
                c.bump();
                Ok(Expr::Lit(Value::Real(r)))
            }
            Tok::Str(s) => {
                c.bump();
                Ok(Expr::Lit(Value::Str(s.into())))
            }
            Tok::Sym("(") => {
                c.bump();
                let e = self.parse(c)?;
                c.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.reserved.contains(&name.as_str()) {
                    return Err(c.unexpected("an expression"));
                }
                if name.eq_ignore_ascii_case("true") || name.eq_ignore_ascii_case("false") {
                    c.bump();
                    return Ok(Expr::bool(name.eq_ignore_ascii_case("true")));
                }
                if name.eq_ignore_ascii_case("time") {
                    c.bump();
                    return Ok(Expr::Time);
                }
                if self.allow_uniform && name == "u" && !matches!(c.peek_at(1), Tok::Sym(".")) {
                    c.bump();
                    return Ok(Expr::Uniform);
                }
                if EXPR_KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(&name)) {
                    return Err(c.unexpected("an expression"));
                }
                if matches!(c.peek_at(1), Tok::Sym("(")) {
                    return self.call(c, &name);
                }
                self.path_or_collection(c)
            }
            _ => Err(c.unexpected("an expression")),
        }
    }

    fn call(&self, c: &mut Cursor, name: &str) -> Result<Expr, SyntaxError> {
        let pos = c.pos();
        let b = Builtin::lookup(name).ok_or_else(|| SyntaxError::new(pos, format!("unknown function `{name}`")))?;
        c.bump();
        c.expect_sym("(")?;
        let mut args = Vec::new();
        if !c.is_sym(")") {
            loop {
                args.push(self.parse(c)?);
                if !c.eat_sym(",") {
                    break;
                }
            }
        }
        c.expect_sym(")")?;
        let ok = match b {
            Builtin::Min | Builtin::Max => args.len() >= 2,
            Builtin::Abs | Builtin::Floor => args.len() == 1,
            Builtin::Mod => args.len() == 2,
        };
        if !ok {
            return Err(SyntaxError::new(pos, format!("wrong number of arguments to `{}`", b.name())));
        }
        Ok(Expr::Call(b, args))
    }

    fn path_or_collection(&self, c: &mut Cursor) -> Result<Expr, SyntaxError> {
        let start = c.pos();
        let mut segs: Vec<Arc<str>> = vec![c.ident()?.into()];
        while c.is_sym(".") {
            c.bump();
            let seg = c.ident()?;
            if seg.eq_ignore_ascii_case("allInstances") && matches!(c.peek(), Tok::Sym("(")) {
                if segs.len() != 1 {
                    return Err(SyntaxError::new(start, "allInstances() applies to a type name"));
                }
                c.expect_sym("(")?;
                c.expect_sym(")")?;
                return self.collection(c, segs.pop().unwrap());
            }
            segs.push(seg.into());
        }
        Ok(Expr::Ref(Path::new(segs)))
    }

    fn collection(&self, c: &mut Cursor, type_name: Arc<str>) -> Result<Expr, SyntaxError> {
        c.expect_sym("->")?;
        let pos = c.pos();
        let op_name = c.ident()?;
        let op = if op_name.eq_ignore_ascii_case("size") {
            c.expect_sym("(")?;
            c.expect_sym(")")?;
            return Ok(Expr::Count(type_name));
        } else if op_name.eq_ignore_ascii_case("forAll") {
            CollectionOp::ForAll
        } else if op_name.eq_ignore_ascii_case("exists") {
            CollectionOp::Exists
        } else if op_name.eq_ignore_ascii_case("select") {
            CollectionOp::SelectSize
        } else {
            return Err(SyntaxError::new(pos, format!("unknown collection operation `{op_name}`")));
        };
        c.expect_sym("(")?;
        let binder: Arc<str> = c.ident()?.into();
        c.expect_sym("|")?;
        let body = self.parse(c)?;
        c.expect_sym(")")?;
        if op == CollectionOp::SelectSize {
            c.expect_sym("->")?;
            c.expect_kw("size")?;
            c.expect_sym("(")?;
            c.expect_sym(")")?;
        }
        Ok(Expr::Collection { op, type_name, binder, body: Box::new(body) })
    }
}

pub(crate) fn write_str_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for ch in s.chars() {
        match ch {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            other => write!(f, "{other}")?,
        }
    }
    f.write_str("\"")
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(Value::Str(s)) => write_str_literal(f, s),
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Ref(p) => write!(f, "{p}"),
            Expr::Time => f.write_str("time"),
            Expr::Uniform => f.write_str("u"),
            Expr::Unary(UnOp::Not, e) => {
                f.write_str("not ")?;
                write_operand(f, e, 3)
            }
            Expr::Unary(UnOp::Neg, e) => {
                f.write_str("-")?;
                // keep `-(3)` distinct from the literal `-3`
                if matches!(**e, Expr::Lit(_)) || e.precedence() < 8 {
                    write!(f, "({e})")
                } else {
                    write!(f, "{e}")
                }
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                let (lp, rp) = if op.is_comparison() { (p + 1, p + 1) } else { (p, p + 1) };
                write_operand(f, l, lp)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, r, rp)
            }
            Expr::Call(b, args) => {
                write!(f, "{}(", b.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Count(t) => write!(f, "{t}.allInstances()->size()"),
            Expr::Collection { op, type_name, binder, body } => {
                let name = match op {
                    CollectionOp::ForAll => "forAll",
                    CollectionOp::Exists => "exists",
                    CollectionOp::SelectSize => "select",
                };
                write!(f, "{type_name}.allInstances()->{name}({binder} | {body})")?;
                if *op == CollectionOp::SelectSize {
                    f.write_str("->size()")?;
                }
                Ok(())
            }
        }
    }
}
