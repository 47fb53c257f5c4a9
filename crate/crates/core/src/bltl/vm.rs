use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use super::compile::{Op, PropertyProgram};
use super::{Quantifier, Verdict};
use crate::model::{ComponentRef, Path, SimulationState, Value};
use crate::stochastic::{binary, call, negate, EvalError};
use crate::syntax::CollectionOp;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MonitorError {
    #[error("state for step {found} fed where step {expected} was expected")]
    OutOfOrderState { expected: u64, found: u64 },
    #[error("at position {position}: {source}")]
    Eval { position: usize, source: EvalError },
}

/// Incremental evaluation of one property over one trace.
///
/// States are fed in step order. The session keeps the states it may still
/// need (at most `window + 1`) and re-runs the program after every state,
/// reusing definite verdicts of binder-free subformulas. The first definite
/// top-level verdict is final.
#[derive(Clone, Debug)]
pub struct MonitorSession {
    program: Arc<PropertyProgram>,
    states: Vec<SimulationState>,
    next_step: Option<u64>,
    verdict: Verdict,
    memo: Vec<Vec<Option<Verdict>>>,
    bound_memo: BoundMemo,
    fed: u64,
    peak: usize,
}

/// Definite verdicts of binder-dependent subformulas by (register,
/// position, binder assignment).
type BoundMemo = HashMap<(u32, usize, Vec<Option<Path>>), Verdict>;

struct LoopFrame {
    base: usize,
    k: u32,
    bound: u32,
    acc: Verdict,
    /// Conjunction of the left operand so far (until only).
    prefix: Verdict,
}

struct QuantFrame {
    instances: Vec<ComponentRef>,
    idx: usize,
    slot: u16,
    q: Quantifier,
    acc: Verdict,
}

struct IterFrame {
    instances: Vec<ComponentRef>,
    idx: usize,
    slot: u16,
    op: CollectionOp,
    finished: bool,
    count: i64,
}

struct AtomFrame {
    values: usize,
    iters: usize,
    end: u32,
}

impl MonitorSession {
    pub fn new(program: Arc<PropertyProgram>) -> Self {
        let regs = program.memo_registers as usize;
        let cap = program.capacity();
        MonitorSession {
            program,
            states: Vec::with_capacity(cap),
            next_step: None,
            verdict: Verdict::Undecided,
            memo: vec![vec![None; cap]; regs],
            bound_memo: HashMap::new(),
            fed: 0,
            peak: 0,
        }
    }

    pub fn program(&self) -> &PropertyProgram {
        &self.program
    }

    pub fn verdict(&self) -> Verdict {
        self.verdict
    }

    /// States consumed so far, including ones fed after the decision.
    pub fn steps_consumed(&self) -> u64 {
        self.fed
    }

    pub fn retained(&self) -> usize {
        self.states.len()
    }

    pub fn peak_retained(&self) -> usize {
        self.peak
    }

    pub fn capacity(&self) -> usize {
        self.program.capacity()
    }

    /// Feeds the next state and returns the (possibly still undecided)
    /// top-level verdict.
    pub fn feed_state(&mut self, s: &SimulationState) -> Result<Verdict, MonitorError> {
        if let Some(expected) = self.next_step {
            if s.step != expected {
                return Err(MonitorError::OutOfOrderState { expected, found: s.step });
            }
        }
        self.next_step = Some(s.step + 1);
        self.fed += 1;
        if self.verdict.is_decided() {
            return Ok(self.verdict);
        }
        debug_assert!(self.states.len() < self.capacity());
        self.states.push(s.clone());
        self.peak = self.peak.max(self.states.len());
        let v = self.run()?;
        if v.is_decided() {
            self.verdict = v;
            self.states.clear();
            self.memo.clear();
            self.bound_memo.clear();
        }
        debug_assert!(v.is_decided() || self.states.len() < self.capacity(), "undecided with a full window");
        Ok(v)
    }

    fn run(&mut self) -> Result<Verdict, MonitorError> {
        let prog = Arc::clone(&self.program);
        let mut m = Machine {
            prog: &prog,
            states: &self.states,
            memo: &mut self.memo,
            bound_memo: &mut self.bound_memo,
            pc: 0,
            pos: 0,
            values: Vec::new(),
            verdicts: Vec::new(),
            loops: Vec::new(),
            quants: Vec::new(),
            iters: Vec::new(),
            atom: None,
            binds: vec![None; prog.binder_slots as usize],
        };
        m.run()
    }
}

struct Machine<'a> {
    prog: &'a PropertyProgram,
    states: &'a [SimulationState],
    memo: &'a mut Vec<Vec<Option<Verdict>>>,
    bound_memo: &'a mut BoundMemo,
    pc: usize,
    /// Absolute trace position the current subformula is evaluated at.
    pos: usize,
    values: Vec<Value>,
    verdicts: Vec<Verdict>,
    loops: Vec<LoopFrame>,
    quants: Vec<QuantFrame>,
    iters: Vec<IterFrame>,
    atom: Option<AtomFrame>,
    binds: Vec<Option<Path>>,
}

fn type_mismatch(what: &str, v: &Value) -> EvalError {
    EvalError::TypeMismatch(format!("{what} applied to {}", v.value_type()))
}

impl Machine<'_> {
    fn run(&mut self) -> Result<Verdict, MonitorError> {
        loop {
            let op = &self.prog.code[self.pc];
            self.pc += 1;
            match op {
                Op::Halt => return Ok(self.verdicts.pop().expect("top-level verdict")),
                Op::AtomBegin { end } => {
                    if self.pos >= self.states.len() {
                        self.verdicts.push(Verdict::Undecided);
                        self.pc = *end as usize;
                    } else {
                        self.atom = Some(AtomFrame { values: self.values.len(), iters: self.iters.len(), end: *end });
                    }
                }
                Op::AtomEnd => {
                    self.atom = None;
                    match self.values.pop().expect("atom value") {
                        Value::Bool(b) => self.verdicts.push(Verdict::from_bool(b)),
                        v => return Err(self.error(type_mismatch("atom", &v))),
                    }
                }
                Op::Push(v) => self.verdicts.push(*v),
                Op::Not3 => {
                    let v = self.verdicts.pop().unwrap();
                    self.verdicts.push(!v);
                }
                Op::JumpIfFalse3(t) => {
                    if self.verdicts.last() == Some(&Verdict::False) {
                        self.pc = *t as usize;
                    }
                }
                Op::JumpIfTrue3(t) => {
                    if self.verdicts.last() == Some(&Verdict::True) {
                        self.pc = *t as usize;
                    }
                }
                Op::And3 | Op::Or3 => {
                    let b = self.verdicts.pop().unwrap();
                    let a = self.verdicts.pop().unwrap();
                    self.verdicts.push(if matches!(op, Op::And3) { a.and(b) } else { a.or(b) });
                }
                Op::Shift(n) => self.pos += *n as usize,
                Op::Unshift(n) => self.pos -= *n as usize,
                Op::LoopBegin { bound, always } => self.loops.push(LoopFrame {
                    base: self.pos,
                    k: 0,
                    bound: *bound,
                    acc: Verdict::from_bool(*always),
                    prefix: Verdict::True,
                }),
                Op::LoopStep { always, body } => {
                    let v = self.verdicts.pop().unwrap();
                    let fr = self.loops.last_mut().unwrap();
                    fr.acc = if *always { fr.acc.and(v) } else { fr.acc.or(v) };
                    let decisive = if *always { Verdict::False } else { Verdict::True };
                    if fr.acc == decisive || fr.k == fr.bound {
                        let fr = self.loops.pop().unwrap();
                        self.pos = fr.base;
                        self.verdicts.push(fr.acc);
                    } else {
                        fr.k += 1;
                        self.pos = fr.base + fr.k as usize;
                        self.pc = *body as usize;
                    }
                }
                Op::UntilBegin { bound } => self.loops.push(LoopFrame {
                    base: self.pos,
                    k: 0,
                    bound: *bound,
                    acc: Verdict::False,
                    prefix: Verdict::True,
                }),
                Op::UntilPsi { end } => {
                    let v = self.verdicts.pop().unwrap();
                    let fr = self.loops.last_mut().unwrap();
                    fr.acc = fr.acc.or(fr.prefix.and(v));
                    if fr.acc == Verdict::True || fr.k == fr.bound {
                        let fr = self.loops.pop().unwrap();
                        self.pos = fr.base;
                        self.verdicts.push(fr.acc);
                        self.pc = *end as usize;
                    }
                }
                Op::UntilPhi { body } => {
                    let v = self.verdicts.pop().unwrap();
                    let fr = self.loops.last_mut().unwrap();
                    fr.prefix = fr.prefix.and(v);
                    if fr.prefix == Verdict::False {
                        let fr = self.loops.pop().unwrap();
                        self.pos = fr.base;
                        self.verdicts.push(fr.acc);
                    } else {
                        fr.k += 1;
                        self.pos = fr.base + fr.k as usize;
                        self.pc = *body as usize;
                    }
                }
                Op::QuantBegin { ty, slot, q, end } => {
                    if self.pos >= self.states.len() {
                        self.verdicts.push(Verdict::Undecided);
                        self.pc = *end as usize;
                        continue;
                    }
                    let instances = self.states[self.pos].system.instances_of_type(&self.prog.types[*ty as usize]);
                    let unit = Verdict::from_bool(*q == Quantifier::ForAll);
                    match instances.first() {
                        None => {
                            self.verdicts.push(unit);
                            self.pc = *end as usize;
                        }
                        Some(first) => {
                            self.binds[*slot as usize] = Some(first.path.clone());
                            self.quants.push(QuantFrame { instances, idx: 0, slot: *slot, q: *q, acc: unit });
                        }
                    }
                }
                Op::QuantStep { body } => {
                    let v = self.verdicts.pop().unwrap();
                    let fr = self.quants.last_mut().unwrap();
                    let forall = fr.q == Quantifier::ForAll;
                    fr.acc = if forall { fr.acc.and(v) } else { fr.acc.or(v) };
                    if fr.acc == Verdict::from_bool(!forall) || fr.idx + 1 == fr.instances.len() {
                        let fr = self.quants.pop().unwrap();
                        self.binds[fr.slot as usize] = None;
                        self.verdicts.push(fr.acc);
                    } else {
                        fr.idx += 1;
                        self.binds[fr.slot as usize] = Some(fr.instances[fr.idx].path.clone());
                        self.pc = *body as usize;
                    }
                }
                Op::MemoCheck { reg, end } => {
                    if let Some(v) = self.memo[*reg as usize].get(self.pos).copied().flatten() {
                        self.verdicts.push(v);
                        self.pc = *end as usize;
                    }
                }
                Op::BoundMemoCheck { reg, end } => {
                    if let Some(v) = self.bound_memo.get(&(*reg, self.pos, self.binds.clone())) {
                        self.verdicts.push(*v);
                        self.pc = *end as usize;
                    }
                }
                Op::BoundMemoStore(reg) => {
                    let v = *self.verdicts.last().unwrap();
                    if v.is_decided() {
                        self.bound_memo.insert((*reg, self.pos, self.binds.clone()), v);
                    }
                }
                Op::MemoStore(reg) => {
                    let v = *self.verdicts.last().unwrap();
                    if v.is_decided() {
                        if let Some(cell) = self.memo[*reg as usize].get_mut(self.pos) {
                            *cell = Some(v);
                        }
                    }
                }
                _ => {
                    if let Err(e) = self.expr_op(op) {
                        match (&e, self.atom.take()) {
                            (EvalError::BoundInstanceGone(_), Some(frame)) => {
                                // the instance an atom talks about has left the system
                                self.values.truncate(frame.values);
                                for it in self.iters.drain(frame.iters..) {
                                    self.binds[it.slot as usize] = None;
                                }
                                self.verdicts.push(Verdict::False);
                                self.pc = frame.end as usize;
                            }
                            _ => return Err(self.error(e)),
                        }
                    }
                }
            }
        }
    }

    fn error(&self, source: EvalError) -> MonitorError {
        MonitorError::Eval { position: self.pos, source }
    }

    fn expr_op(&mut self, op: &Op) -> Result<(), EvalError> {
        let prog = self.prog;
        let state = &self.states[self.pos];
        match op {
            Op::Const(i) => self.values.push(prog.consts[*i as usize].clone()),
            Op::Load(i) => {
                let v = state.system.value(&prog.paths[*i as usize])?;
                self.values.push(v.clone());
            }
            Op::LoadBound { slot, rest } => {
                let base = self.binds[*slot as usize].as_ref().expect("bound slot");
                if state.system.resolve(base).is_err() {
                    return Err(EvalError::BoundInstanceGone(base.to_string()));
                }
                let v = state.system.value(&base.join(prog.paths[*rest as usize].segments()))?;
                self.values.push(v.clone());
            }
            Op::Time => self.values.push(Value::Int(state.time as i64)),
            Op::Neg => {
                let v = self.values.pop().unwrap();
                self.values.push(negate(v)?);
            }
            Op::Not => match self.values.pop().unwrap() {
                Value::Bool(b) => self.values.push(Value::Bool(!b)),
                v => return Err(type_mismatch("`not`", &v)),
            },
            Op::Bin(o) => {
                let r = self.values.pop().unwrap();
                let l = self.values.pop().unwrap();
                self.values.push(binary(*o, l, r)?);
            }
            Op::JumpIfFalseKeep(t) | Op::JumpIfTrueKeep(t) => {
                let want = matches!(op, Op::JumpIfTrueKeep(_));
                match self.values.last().unwrap() {
                    Value::Bool(b) if *b == want => self.pc = *t as usize,
                    Value::Bool(_) => {
                        self.values.pop();
                    }
                    v => return Err(type_mismatch("logical operator", v)),
                }
            }
            Op::AssertBool => {
                if let Some(v) = self.values.last().filter(|v| !matches!(v, Value::Bool(_))) {
                    return Err(type_mismatch("logical operator", v));
                }
            }
            Op::Call(b, n) => {
                let args = self.values.split_off(self.values.len() - *n as usize);
                self.values.push(call(*b, &args)?);
            }
            Op::Count(t) => {
                let n = state.system.instances_of_type(&prog.types[*t as usize]).len();
                self.values.push(Value::Int(n as i64));
            }
            Op::IterBegin { ty, slot, op } => self.iters.push(IterFrame {
                instances: state.system.instances_of_type(&prog.types[*ty as usize]),
                idx: 0,
                slot: *slot,
                op: *op,
                finished: false,
                count: 0,
            }),
            Op::IterNext { slot, done } => {
                let it = self.iters.last_mut().unwrap();
                if it.finished || it.idx == it.instances.len() {
                    self.pc = *done as usize;
                } else {
                    self.binds[*slot as usize] = Some(it.instances[it.idx].path.clone());
                    it.idx += 1;
                }
            }
            Op::IterAccum => {
                let holds = match self.values.pop().unwrap() {
                    Value::Bool(b) => b,
                    v => return Err(type_mismatch("quantifier body", &v)),
                };
                let it = self.iters.last_mut().unwrap();
                match it.op {
                    CollectionOp::ForAll if !holds => it.finished = true,
                    CollectionOp::Exists if holds => it.finished = true,
                    CollectionOp::SelectSize if holds => it.count += 1,
                    _ => {}
                }
            }
            Op::IterEnd => {
                let it = self.iters.pop().unwrap();
                self.binds[it.slot as usize] = None;
                self.values.push(match it.op {
                    CollectionOp::ForAll => Value::Bool(!it.finished),
                    CollectionOp::Exists => Value::Bool(it.finished),
                    CollectionOp::SelectSize => Value::Int(it.count),
                });
            }
            Op::Jump(t) => self.pc = *t as usize,
            other => unreachable!("formula op {other:?} in expression position"),
        }
        Ok(())
    }
}
