use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::{Formula, Quantifier, Verdict};
use crate::model::{Path, Value};
use crate::schema::{Schema, Scope, TypeError};
use crate::syntax::{BinOp, Builtin, CollectionOp, Expr, UnOp};

/// One instruction. Jump targets are absolute program counters.
///
/// Expression ops work on a value stack and only run inside an
/// `AtomBegin`/`AtomEnd` pair, at the current position. Formula ops work on
/// a verdict stack.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Const(u32),
    /// Load an absolute path.
    Load(u32),
    /// Load `paths[rest]` relative to the instance bound in `slot`.
    LoadBound { slot: u16, rest: u32 },
    Time,
    Neg,
    Not,
    Bin(BinOp),
    /// Expression `and`: jump keeping `false` on the stack, otherwise pop.
    JumpIfFalseKeep(u32),
    /// Expression `or`: jump keeping `true` on the stack, otherwise pop.
    JumpIfTrueKeep(u32),
    /// Fails unless the top of the value stack is a boolean.
    AssertBool,
    Call(Builtin, u8),
    Count(u32),
    IterBegin { ty: u32, slot: u16, op: CollectionOp },
    /// Bind the next instance, or jump to `done` when exhausted.
    IterNext { slot: u16, done: u32 },
    IterAccum,
    IterEnd,
    Jump(u32),

    /// Push `Undecided` and jump to `end` if the current position has not
    /// been observed yet.
    AtomBegin { end: u32 },
    AtomEnd,
    Push(Verdict),
    Not3,
    JumpIfFalse3(u32),
    JumpIfTrue3(u32),
    And3,
    Or3,
    Shift(u32),
    Unshift(u32),
    /// `F<=bound` (`always == false`) or `G<=bound` loop header.
    LoopBegin { bound: u32, always: bool },
    LoopStep { always: bool, body: u32 },
    UntilBegin { bound: u32 },
    /// After the right operand at offset k.
    UntilPsi { end: u32 },
    /// After the left operand at offset k.
    UntilPhi { body: u32 },
    QuantBegin { ty: u32, slot: u16, q: Quantifier, end: u32 },
    QuantStep { body: u32 },
    /// Reuse a definite verdict of a binder-free subformula at this position.
    MemoCheck { reg: u32, end: u32 },
    MemoStore(u32),
    /// Like `MemoCheck`, keyed on the current binder assignment as well.
    BoundMemoCheck { reg: u32, end: u32 },
    BoundMemoStore(u32),
    Halt,
}

/// Compiled property: bytecode plus constant pools.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyProgram {
    pub code: Vec<Op>,
    pub consts: Vec<Value>,
    pub paths: Vec<Path>,
    pub types: Vec<Arc<str>>,
    pub memo_registers: u32,
    pub binder_slots: u16,
    /// `required_window` of the source formula.
    pub window: u64,
    pub source: Formula,
}

impl PropertyProgram {
    /// Retained-state capacity of a monitor running this program.
    pub fn capacity(&self) -> usize {
        self.window as usize + 1
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum CompileError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("binder `{0}` shadows an enclosing binder")]
    Shadowed(String),
}

struct Compiler<'s> {
    schema: &'s Schema,
    code: Vec<Op>,
    consts: Vec<Value>,
    paths: Vec<Path>,
    path_ids: HashMap<Path, u32>,
    types: Vec<Arc<str>>,
    memo: u32,
    bound_memo: u32,
    max_slots: u16,
    /// Binder name to slot, innermost last.
    binders: Vec<(Arc<str>, Arc<str>)>,
}

/// Type-checks `f` against `schema` and compiles it. Deterministic: the same
/// formula always yields the same program.
pub fn compile(f: &Formula, schema: &Schema) -> Result<PropertyProgram, CompileError> {
    let mut c = Compiler {
        schema,
        code: Vec::new(),
        consts: Vec::new(),
        paths: Vec::new(),
        path_ids: HashMap::new(),
        types: Vec::new(),
        memo: 0,
        bound_memo: 0,
        max_slots: 0,
        binders: Vec::new(),
    };
    c.formula(f)?;
    c.emit(Op::Halt);
    Ok(PropertyProgram {
        code: c.code,
        consts: c.consts,
        paths: c.paths,
        types: c.types,
        memo_registers: c.memo,
        binder_slots: c.max_slots,
        window: f.required_window(),
        source: f.clone(),
    })
}

impl Compiler<'_> {
    fn emit(&mut self, op: Op) -> u32 {
        self.code.push(op);
        (self.code.len() - 1) as u32
    }

    fn here(&self) -> u32 {
        self.code.len() as u32
    }

    fn patch(&mut self, at: u32, target: u32) {
        match &mut self.code[at as usize] {
            Op::JumpIfFalseKeep(t)
            | Op::JumpIfTrueKeep(t)
            | Op::Jump(t)
            | Op::JumpIfFalse3(t)
            | Op::JumpIfTrue3(t)
            | Op::AtomBegin { end: t }
            | Op::IterNext { done: t, .. }
            | Op::UntilPsi { end: t }
            | Op::QuantBegin { end: t, .. }
            | Op::MemoCheck { end: t, .. }
            | Op::BoundMemoCheck { end: t, .. } => *t = target,
            op => unreachable!("not a jump: {op:?}"),
        }
    }

    fn scope(&self) -> Scope {
        Scope { binders: self.binders.clone(), ..Scope::default() }
    }

    fn slot(&self) -> u16 {
        self.binders.len() as u16
    }

    fn push_binder(&mut self, name: &Arc<str>, ty: &Arc<str>) -> Result<u16, CompileError> {
        if self.binders.iter().any(|(b, _)| b == name) {
            return Err(CompileError::Shadowed(name.to_string()));
        }
        let slot = self.slot();
        self.binders.push((name.clone(), ty.clone()));
        self.max_slots = self.max_slots.max(self.slot());
        Ok(slot)
    }

    fn const_id(&mut self, v: &Value) -> u32 {
        if let Some(i) = self.consts.iter().position(|c| c == v && c.value_type() == v.value_type()) {
            return i as u32;
        }
        self.consts.push(v.clone());
        (self.consts.len() - 1) as u32
    }

    fn path_id(&mut self, p: Path) -> u32 {
        if let Some(&i) = self.path_ids.get(&p) {
            return i;
        }
        let i = self.paths.len() as u32;
        self.paths.push(p.clone());
        self.path_ids.insert(p, i);
        i
    }

    fn type_id(&mut self, t: &Arc<str>) -> u32 {
        if let Some(i) = self.types.iter().position(|x| x == t) {
            return i as u32;
        }
        self.types.push(t.clone());
        (self.types.len() - 1) as u32
    }

    fn formula(&mut self, f: &Formula) -> Result<(), CompileError> {
        match f {
            Formula::True => {
                self.emit(Op::Push(Verdict::True));
                return Ok(());
            }
            Formula::False => {
                self.emit(Op::Push(Verdict::False));
                return Ok(());
            }
            _ => {}
        }
        let outer: Vec<Arc<str>> = self.binders.iter().map(|(b, _)| b.clone()).collect();
        let temporal =
            matches!(f, Formula::Next(_) | Formula::Eventually(..) | Formula::Always(..) | Formula::Until(..));
        let memo = if !f.has_free_binders(&outer) {
            let reg = self.memo;
            self.memo += 1;
            Some((Op::MemoStore(reg), self.emit(Op::MemoCheck { reg, end: 0 })))
        } else if temporal {
            let reg = self.bound_memo;
            self.bound_memo += 1;
            Some((Op::BoundMemoStore(reg), self.emit(Op::BoundMemoCheck { reg, end: 0 })))
        } else {
            None
        };
        self.node(f)?;
        if let Some((store, check)) = memo {
            self.emit(store);
            let end = self.here();
            self.patch(check, end);
        }
        Ok(())
    }

    fn node(&mut self, f: &Formula) -> Result<(), CompileError> {
        match f {
            Formula::True | Formula::False => unreachable!(),
            Formula::Atom(e) => {
                self.schema.check_bool(e, &self.scope())?;
                let begin = self.emit(Op::AtomBegin { end: 0 });
                self.expr(e)?;
                self.emit(Op::AtomEnd);
                let end = self.here();
                self.patch(begin, end);
            }
            Formula::Not(x) => {
                self.formula(x)?;
                self.emit(Op::Not3);
            }
            Formula::And(a, b) => {
                self.formula(a)?;
                let j = self.emit(Op::JumpIfFalse3(0));
                self.formula(b)?;
                self.emit(Op::And3);
                let end = self.here();
                self.patch(j, end);
            }
            Formula::Or(a, b) => {
                self.formula(a)?;
                let j = self.emit(Op::JumpIfTrue3(0));
                self.formula(b)?;
                self.emit(Op::Or3);
                let end = self.here();
                self.patch(j, end);
            }
            Formula::Implies(a, b) => {
                self.formula(a)?;
                self.emit(Op::Not3);
                let j = self.emit(Op::JumpIfTrue3(0));
                self.formula(b)?;
                self.emit(Op::Or3);
                let end = self.here();
                self.patch(j, end);
            }
            Formula::Next(x) => {
                self.emit(Op::Shift(1));
                self.formula(x)?;
                self.emit(Op::Unshift(1));
            }
            Formula::Eventually(t, x) | Formula::Always(t, x) => {
                let always = matches!(f, Formula::Always(..));
                self.emit(Op::LoopBegin { bound: *t, always });
                let body = self.here();
                self.formula(x)?;
                self.emit(Op::LoopStep { always, body });
            }
            Formula::Until(t, a, b) => {
                self.emit(Op::UntilBegin { bound: *t });
                let body = self.here();
                self.formula(b)?;
                let psi = self.emit(Op::UntilPsi { end: 0 });
                self.formula(a)?;
                self.emit(Op::UntilPhi { body });
                let end = self.here();
                self.patch(psi, end);
            }
            Formula::Quant { q, binder, type_name, body } => {
                self.schema.check_type_name(type_name)?;
                let ty = self.type_id(type_name);
                let slot = self.push_binder(binder, type_name)?;
                let begin = self.emit(Op::QuantBegin { ty, slot, q: *q, end: 0 });
                let start = self.here();
                self.formula(body)?;
                self.emit(Op::QuantStep { body: start });
                self.binders.pop();
                let end = self.here();
                self.patch(begin, end);
            }
        }
        Ok(())
    }

    fn expr(&mut self, e: &Expr) -> Result<(), CompileError> {
        match e {
            Expr::Lit(v) => {
                let i = self.const_id(v);
                self.emit(Op::Const(i));
            }
            Expr::Time => {
                self.emit(Op::Time);
            }
            Expr::Uniform => return Err(TypeError::UnboundName("u".into()).into()),
            Expr::Ref(p) => {
                let segs = p.segments();
                let bound = segs
                    .first()
                    .and_then(|first| self.binders.iter().rposition(|(b, _)| b == first));
                match bound {
                    Some(slot) => {
                        let rest = self.path_id(Path::new(segs[1..].to_vec()));
                        self.emit(Op::LoadBound { slot: slot as u16, rest });
                    }
                    None => {
                        let i = self.path_id(p.clone());
                        self.emit(Op::Load(i));
                    }
                }
            }
            Expr::Unary(UnOp::Neg, x) => {
                self.expr(x)?;
                self.emit(Op::Neg);
            }
            Expr::Unary(UnOp::Not, x) => {
                self.expr(x)?;
                self.emit(Op::Not);
            }
            Expr::Binary(op @ (BinOp::And | BinOp::Or), l, r) => {
                self.expr(l)?;
                let j = if *op == BinOp::And {
                    self.emit(Op::JumpIfFalseKeep(0))
                } else {
                    self.emit(Op::JumpIfTrueKeep(0))
                };
                self.expr(r)?;
                self.emit(Op::AssertBool);
                let end = self.here();
                self.patch(j, end);
            }
            Expr::Binary(op, l, r) => {
                self.expr(l)?;
                self.expr(r)?;
                self.emit(Op::Bin(*op));
            }
            Expr::Call(b, args) => {
                for a in args {
                    self.expr(a)?;
                }
                self.emit(Op::Call(*b, args.len() as u8));
            }
            Expr::Count(t) => {
                let i = self.type_id(t);
                self.emit(Op::Count(i));
            }
            Expr::Collection { op, type_name, binder, body } => {
                let ty = self.type_id(type_name);
                let slot = self.push_binder(binder, type_name)?;
                self.emit(Op::IterBegin { ty, slot, op: *op });
                let head = self.emit(Op::IterNext { slot, done: 0 });
                self.expr(body)?;
                self.emit(Op::IterAccum);
                self.emit(Op::Jump(head));
                let done = self.emit(Op::IterEnd);
                self.patch(head, done);
                self.binders.pop();
            }
        }
        Ok(())
    }
}

impl fmt::Display for PropertyProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "; {}", self.source)?;
        writeln!(
            f,
            "; window {} (capacity {}), {} memo registers, {} binder slots",
            self.window,
            self.capacity(),
            self.memo_registers,
            self.binder_slots
        )?;
        for (pc, op) in self.code.iter().enumerate() {
            write!(f, "{pc:04}  ")?;
            match op {
                Op::Const(i) => write!(f, "CONST {}", self.consts[*i as usize])?,
                Op::Load(i) => write!(f, "LOAD {}", self.paths[*i as usize])?,
                Op::LoadBound { slot, rest } => write!(f, "LOADB ${slot}.{}", self.paths[*rest as usize])?,
                Op::Time => f.write_str("TIME")?,
                Op::Neg => f.write_str("NEG")?,
                Op::Not => f.write_str("NOT")?,
                Op::Bin(op) => write!(f, "{}", format!("{op:?}").to_uppercase())?,
                Op::JumpIfFalseKeep(t) => write!(f, "JF.KEEP {t:04}")?,
                Op::JumpIfTrueKeep(t) => write!(f, "JT.KEEP {t:04}")?,
                Op::AssertBool => f.write_str("ASSERT.BOOL")?,
                Op::Call(b, n) => write!(f, "CALL {}/{n}", b.name())?,
                Op::Count(t) => write!(f, "COUNT {}", self.types[*t as usize])?,
                Op::IterBegin { ty, slot, op } => {
                    write!(f, "ITER {:?} ${slot} in {}", op, self.types[*ty as usize])?
                }
                Op::IterNext { slot, done } => write!(f, "ITER.NEXT ${slot} else {done:04}")?,
                Op::IterAccum => f.write_str("ITER.ACC")?,
                Op::IterEnd => f.write_str("ITER.END")?,
                Op::Jump(t) => write!(f, "JMP {t:04}")?,
                Op::AtomBegin { end } => write!(f, "ATOM else {end:04}")?,
                Op::AtomEnd => f.write_str("DECIDE")?,
                Op::Push(v) => write!(f, "PUSH3 {v}")?,
                Op::Not3 => f.write_str("NOT3")?,
                Op::JumpIfFalse3(t) => write!(f, "JF3 {t:04}")?,
                Op::JumpIfTrue3(t) => write!(f, "JT3 {t:04}")?,
                Op::And3 => f.write_str("AND3")?,
                Op::Or3 => f.write_str("OR3")?,
                Op::Shift(n) => write!(f, "SHIFT +{n}")?,
                Op::Unshift(n) => write!(f, "SHIFT -{n}")?,
                Op::LoopBegin { bound, always } => write!(f, "{} <={bound}", if *always { "ALWAYS" } else { "EVENTUALLY" })?,
                Op::LoopStep { always, body } => {
                    write!(f, "{}.STEP {body:04}", if *always { "ALWAYS" } else { "EVENTUALLY" })?
                }
                Op::UntilBegin { bound } => write!(f, "UNTIL <={bound}")?,
                Op::UntilPsi { end } => write!(f, "UNTIL.RHS else {end:04}")?,
                Op::UntilPhi { body } => write!(f, "UNTIL.LHS {body:04}")?,
                Op::QuantBegin { ty, slot, q, end } => {
                    write!(f, "{} ${slot} in {} else {end:04}", match q {
                        Quantifier::ForAll => "FORALL",
                        Quantifier::Exists => "EXISTS",
                    }, self.types[*ty as usize])?
                }
                Op::QuantStep { body } => write!(f, "QUANT.STEP {body:04}")?,
                Op::MemoCheck { reg, end } => write!(f, "MEMO.GET r{reg} hit {end:04}")?,
                Op::MemoStore(reg) => write!(f, "MEMO.PUT r{reg}")?,
                Op::BoundMemoCheck { reg, end } => write!(f, "MEMO.GET b{reg} hit {end:04}")?,
                Op::BoundMemoStore(reg) => write!(f, "MEMO.PUT b{reg}")?,
                Op::Halt => f.write_str("HALT")?,
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
