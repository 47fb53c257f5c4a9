//! Expression evaluation and expression-parameterized random variables.
//!
//! Streams are ChaCha8 generators keyed by a SplitMix64 chain over
//! `(global_seed, trace_index, variable id)`, so every (trace, variable) pair
//! owns an independent, platform-stable sequence. Float and integer draws
//! are derived from raw 64-bit outputs here rather than through `rand`'s
//! distribution helpers, which keeps sample sequences fixed across crate
//! upgrades.

use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::model::{ModelError, Path, SimulationState, Value, ValueType};
use crate::syntax::{BinOp, Builtin, CollectionOp, Expr, UnOp};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("invalid distribution parameters: {0}")]
    InvalidParameters(String),
    #[error("`u` is only defined inside custom distributions")]
    UnboundUniform,
    /// A quantifier-bound instance no longer exists in the evaluated state.
    #[error("bound instance `{0}` no longer exists")]
    BoundInstanceGone(String),
}

/// Quantifier binders in scope: name and the bound component's path.
pub type Bindings = Vec<(Arc<str>, Path)>;

/// Evaluates `e` against `state` with no binders in scope.
pub fn eval_expr(e: &Expr, state: &SimulationState) -> Result<Value, EvalError> {
    eval_with(e, state, &mut Vec::new(), None)
}

/// Full evaluator: binders, and the value of `u` for custom distributions.
pub fn eval_with(
    e: &Expr,
    state: &SimulationState,
    bindings: &mut Bindings,
    uniform: Option<f64>,
) -> Result<Value, EvalError> {
    match e {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Time => Ok(Value::Int(state.time as i64)),
        Expr::Uniform => uniform.map(Value::Real).ok_or(EvalError::UnboundUniform),
        Expr::Ref(p) => lookup(p, state, bindings),
        Expr::Unary(UnOp::Not, x) => match eval_with(x, state, bindings, uniform)? {
            Value::Bool(b) => Ok(Value::Bool(!b)),
            v => Err(mismatch("not", &v)),
        },
        Expr::Unary(UnOp::Neg, x) => negate(eval_with(x, state, bindings, uniform)?),
        Expr::Binary(BinOp::And, l, r) => {
            if !expect_bool(eval_with(l, state, bindings, uniform)?, "and")? {
                return Ok(Value::Bool(false));
            }
            Ok(Value::Bool(expect_bool(eval_with(r, state, bindings, uniform)?, "and")?))
        }
        Expr::Binary(BinOp::Or, l, r) => {
            if expect_bool(eval_with(l, state, bindings, uniform)?, "or")? {
                return Ok(Value::Bool(true));
            }
            Ok(Value::Bool(expect_bool(eval_with(r, state, bindings, uniform)?, "or")?))
        }
        Expr::Binary(op, l, r) => {
            let a = eval_with(l, state, bindings, uniform)?;
            let b = eval_with(r, state, bindings, uniform)?;
            binary(*op, a, b)
        }
        Expr::Call(f, args) => {
            let vals = args
                .iter()
                .map(|a| eval_with(a, state, bindings, uniform))
                .collect::<Result<Vec<_>, _>>()?;
            call(*f, &vals)
        }
        Expr::Count(t) => Ok(Value::Int(state.system.instances_of_type(t).len() as i64)),
        Expr::Collection { op, type_name, binder, body } => {
            let mut count = 0i64;
            for inst in state.system.instances_of_type(type_name) {
                bindings.push((binder.clone(), inst.path));
                let r = eval_with(body, state, bindings, uniform);
                bindings.pop();
                let holds = expect_bool(r?, "quantifier body")?;
                match op {
                    CollectionOp::ForAll if !holds => return Ok(Value::Bool(false)),
                    CollectionOp::Exists if holds => return Ok(Value::Bool(true)),
                    CollectionOp::SelectSize if holds => count += 1,
                    _ => {}
                }
            }
            Ok(match op {
                CollectionOp::ForAll => Value::Bool(true),
                CollectionOp::Exists => Value::Bool(false),
                CollectionOp::SelectSize => Value::Int(count),
            })
        }
    }
}

/// Resolves a reference, honouring binders (innermost first).
pub fn lookup(p: &Path, state: &SimulationState, bindings: &Bindings) -> Result<Value, EvalError> {
    let segs = p.segments();
    if let Some(first) = segs.first() {
        if let Some((_, base)) = bindings.iter().rev().find(|(b, _)| b == first) {
            if state.system.resolve(base).is_err() {
                return Err(EvalError::BoundInstanceGone(base.to_string()));
            }
            return Ok(state.system.value(&base.join(&segs[1..]))?.clone());
        }
    }
    Ok(state.system.value(p)?.clone())
}

fn mismatch(op: &str, v: &Value) -> EvalError {
    EvalError::TypeMismatch(format!("`{op}` cannot be applied to {}", v.value_type()))
}

fn expect_bool(v: Value, op: &str) -> Result<bool, EvalError> {
    v.as_bool().ok_or_else(|| mismatch(op, &v))
}

pub(crate) fn negate(v: Value) -> Result<Value, EvalError> {
    match v {
        Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(EvalError::Overflow),
        Value::Real(r) => Ok(Value::Real(-r)),
        v => Err(mismatch("-", &v)),
    }
}

/// Strict (non short-circuit) binary operators shared with the property VM.
pub(crate) fn binary(op: BinOp, a: Value, b: Value) -> Result<Value, EvalError> {
    use Value::*;
    match op {
        BinOp::And | BinOp::Or => {
            let (x, y) = (expect_bool(a, "and/or")?, expect_bool(b, "and/or")?);
            Ok(Bool(if op == BinOp::And { x && y } else { x || y }))
        }
        BinOp::Eq | BinOp::Ne => {
            let eq = match (&a, &b) {
                (Int(x), Int(y)) => x == y,
                (Bool(x), Bool(y)) => x == y,
                (Str(x), Str(y)) => x == y,
                _ => match (a.as_f64(), b.as_f64()) {
                    (Some(x), Some(y)) => x == y,
                    _ => {
                        return Err(EvalError::TypeMismatch(format!(
                            "cannot compare {} with {}",
                            a.value_type(),
                            b.value_type()
                        )))
                    }
                },
            };
            Ok(Bool(eq == (op == BinOp::Eq)))
        }
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let ord = match (&a, &b) {
                (Int(x), Int(y)) => x.partial_cmp(y),
                (Str(x), Str(y)) => x.partial_cmp(y),
                _ => match (a.as_f64(), b.as_f64()) {
                    (Some(x), Some(y)) => x.partial_cmp(&y),
                    _ => {
                        return Err(EvalError::TypeMismatch(format!(
                            "cannot order {} and {}",
                            a.value_type(),
                            b.value_type()
                        )))
                    }
                },
            };
            let Some(ord) = ord else { return Ok(Bool(false)) };
            Ok(Bool(match op {
                BinOp::Lt => ord.is_lt(),
                BinOp::Le => ord.is_le(),
                BinOp::Gt => ord.is_gt(),
                _ => ord.is_ge(),
            }))
        }
        _ => arith(op, a, b),
    }
}

fn arith(op: BinOp, a: Value, b: Value) -> Result<Value, EvalError> {
    if let (Value::Int(x), Value::Int(y)) = (&a, &b) {
        let (x, y) = (*x, *y);
        let r = match op {
            BinOp::Add => x.checked_add(y),
            BinOp::Sub => x.checked_sub(y),
            BinOp::Mul => x.checked_mul(y),
            BinOp::Div | BinOp::Mod if y == 0 => return Err(EvalError::DivisionByZero),
            BinOp::Div => x.checked_div(y),
            _ => x.checked_rem_euclid(y),
        };
        return r.map(Value::Int).ok_or(EvalError::Overflow);
    }
    let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
        return Err(EvalError::TypeMismatch(format!(
            "arithmetic on {} and {}",
            a.value_type(),
            b.value_type()
        )));
    };
    Ok(Value::Real(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div | BinOp::Mod if y == 0.0 => return Err(EvalError::DivisionByZero),
        BinOp::Div => x / y,
        _ => x.rem_euclid(y),
    }))
}

pub(crate) fn call(f: Builtin, args: &[Value]) -> Result<Value, EvalError> {
    if let Some(bad) = args.iter().find(|v| v.as_f64().is_none()) {
        return Err(mismatch(f.name(), bad));
    }
    let all_int = args.iter().all(|v| matches!(v, Value::Int(_)));
    match f {
        Builtin::Abs => match args[0] {
            Value::Int(i) => i.checked_abs().map(Value::Int).ok_or(EvalError::Overflow),
            Value::Real(r) => Ok(Value::Real(r.abs())),
            _ => unreachable!(),
        },
        Builtin::Floor => match args[0] {
            Value::Int(i) => Ok(Value::Int(i)),
            Value::Real(r) => {
                let fl = r.floor();
                if fl.is_finite() && fl >= i64::MIN as f64 && fl < i64::MAX as f64 {
                    Ok(Value::Int(fl as i64))
                } else {
                    Err(EvalError::Overflow)
                }
            }
            _ => unreachable!(),
        },
        Builtin::Mod => arith(BinOp::Mod, args[0].clone(), args[1].clone()),
        Builtin::Min | Builtin::Max => {
            let pick_max = f == Builtin::Max;
            if all_int {
                let it = args.iter().filter_map(|v| if let Value::Int(i) = v { Some(*i) } else { None });
                let r = if pick_max { it.max() } else { it.min() };
                Ok(Value::Int(r.unwrap()))
            } else {
                let it = args.iter().map(|v| v.as_f64().unwrap());
                let r = it.reduce(|a, b| if pick_max { a.max(b) } else { a.min(b) });
                Ok(Value::Real(r.unwrap()))
            }
        }
    }
}

/// Deterministic per-(trace, variable) pseudo-random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8], basis: u64) -> u64 {
    bytes.iter().fold(basis, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Derives the stream for `var_id` in trace `trace_index`.
pub fn derive_stream(global_seed: u64, trace_index: u64, var_id: &str) -> RngStream {
    let mut x = global_seed;
    let mut key = [0u8; 32];
    let words = [
        splitmix64(&mut x),
        {
            x ^= trace_index;
            splitmix64(&mut x)
        },
        {
            x ^= fnv1a(var_id.as_bytes(), 0xCBF2_9CE4_8422_2325);
            splitmix64(&mut x)
        },
        {
            x ^= fnv1a(var_id.as_bytes(), 0x6C62_272E_07BB_0142);
            splitmix64(&mut x)
        },
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    RngStream { rng: ChaCha8Rng::from_seed(key) }
}

impl RngStream {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[lo, hi]` (both inclusive), unbiased.
    pub fn next_int_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        debug_assert!(lo <= hi);
        let span = (hi as i128 - lo as i128 + 1) as u128;
        if span > u64::MAX as u128 {
            return self.next_u64() as i64;
        }
        let span = span as u64;
        // Lemire's nearly divisionless method.
        let mut m = u128::from(self.next_u64()) * u128::from(span);
        if (m as u64) < span {
            let threshold = span.wrapping_neg() % span;
            while (m as u64) < threshold {
                m = u128::from(self.next_u64()) * u128::from(span);
            }
        }
        (lo as i128 + (m >> 64) as i128) as i64
    }

    /// Standard normal deviate via Box–Muller; consumes two uniforms.
    pub fn next_standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Distribution families; parameters are expressions re-evaluated at every
/// observation.
#[derive(Clone, Debug, PartialEq)]
pub enum DistributionSpec {
    UniformReal { min: Expr, max: Expr },
    UniformInt { min: Expr, max: Expr },
    NormalReal { mean: Expr, stddev: Expr },
    NormalInt { mean: Expr, stddev: Expr },
    /// Inverse-transform style expression over the fresh uniform sample `u`.
    CustomReal { observe: Expr },
    CustomInt { observe: Expr },
}

impl DistributionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DistributionSpec::UniformReal { .. } => "uniform_real",
            DistributionSpec::UniformInt { .. } => "uniform_int",
            DistributionSpec::NormalReal { .. } => "normal_real",
            DistributionSpec::NormalInt { .. } => "normal_int",
            DistributionSpec::CustomReal { .. } => "custom_real",
            DistributionSpec::CustomInt { .. } => "custom_int",
        }
    }

    pub fn value_type(&self) -> ValueType {
        match self {
            DistributionSpec::UniformReal { .. }
            | DistributionSpec::NormalReal { .. }
            | DistributionSpec::CustomReal { .. } => ValueType::Real,
            _ => ValueType::Int,
        }
    }

    pub fn params(&self) -> Vec<&Expr> {
        match self {
            DistributionSpec::UniformReal { min, max } | DistributionSpec::UniformInt { min, max } => vec![min, max],
            DistributionSpec::NormalReal { mean, stddev } | DistributionSpec::NormalInt { mean, stddev } => {
                vec![mean, stddev]
            }
            DistributionSpec::CustomReal { observe } | DistributionSpec::CustomInt { observe } => vec![observe],
        }
    }

    /// Builds a spec from its textual name and parameter list.
    pub fn from_parts(name: &str, mut params: Vec<Expr>) -> Option<Self> {
        let arity = if name.starts_with("custom") { 1 } else { 2 };
        if params.len() != arity {
            return None;
        }
        let second = if arity == 2 { params.pop() } else { None };
        let first = params.pop().unwrap();
        Some(match name {
            "uniform_real" => DistributionSpec::UniformReal { min: first, max: second? },
            "uniform_int" => DistributionSpec::UniformInt { min: first, max: second? },
            "normal_real" => DistributionSpec::NormalReal { mean: first, stddev: second? },
            "normal_int" => DistributionSpec::NormalInt { mean: first, stddev: second? },
            "custom_real" => DistributionSpec::CustomReal { observe: first },
            "custom_int" => DistributionSpec::CustomInt { observe: first },
            _ => return None,
        })
    }

    pub fn map_exprs(&self, f: &dyn Fn(&Expr) -> Expr) -> Self {
        let ps: Vec<Expr> = self.params().into_iter().map(f).collect();
        DistributionSpec::from_parts(self.name(), ps).expect("same arity")
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name())?;
        for (i, p) in self.params().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomVariable {
    pub id: Arc<str>,
    pub spec: DistributionSpec,
}

fn numeric_param(e: &Expr, state: &SimulationState, what: &str) -> Result<f64, EvalError> {
    let v = eval_expr(e, state)?;
    let x = v
        .as_f64()
        .ok_or_else(|| EvalError::TypeMismatch(format!("{what} must be numeric, found {}", v.value_type())))?;
    if x.is_nan() {
        return Err(EvalError::InvalidParameters(format!("{what} is NaN")));
    }
    Ok(x)
}

fn int_param(e: &Expr, state: &SimulationState, what: &str) -> Result<i64, EvalError> {
    match eval_expr(e, state)? {
        Value::Int(i) => Ok(i),
        v => Err(EvalError::TypeMismatch(format!("{what} must be int, found {}", v.value_type()))),
    }
}

fn round_to_int(x: f64) -> Result<i64, EvalError> {
    let r = x.round();
    if r.is_finite() && r >= i64::MIN as f64 && r < i64::MAX as f64 {
        Ok(r as i64)
    } else {
        Err(EvalError::Overflow)
    }
}

/// Draws one observation of `var` in `state`, advancing `stream`.
pub fn observe(var: &RandomVariable, state: &SimulationState, stream: &mut RngStream) -> Result<Value, EvalError> {
    match &var.spec {
        DistributionSpec::UniformReal { min, max } => {
            let (lo, hi) = (numeric_param(min, state, "min")?, numeric_param(max, state, "max")?);
            if lo > hi {
                return Err(EvalError::InvalidParameters(format!("{}: min {lo} > max {hi}", var.id)));
            }
            let x = lo + stream.next_f64() * (hi - lo);
            Ok(Value::Real(x.clamp(lo, hi)))
        }
        DistributionSpec::UniformInt { min, max } => {
            let (lo, hi) = (int_param(min, state, "min")?, int_param(max, state, "max")?);
            if lo > hi {
                return Err(EvalError::InvalidParameters(format!("{}: min {lo} > max {hi}", var.id)));
            }
            Ok(Value::Int(stream.next_int_inclusive(lo, hi)))
        }
        DistributionSpec::NormalReal { mean, stddev } | DistributionSpec::NormalInt { mean, stddev } => {
            let (mu, sd) = (numeric_param(mean, state, "mean")?, numeric_param(stddev, state, "stddev")?);
            if sd < 0.0 {
                return Err(EvalError::InvalidParameters(format!("{}: stddev {sd} < 0", var.id)));
            }
            let x = mu + sd * stream.next_standard_normal();
            if matches!(var.spec, DistributionSpec::NormalInt { .. }) {
                Ok(Value::Int(round_to_int(x)?))
            } else {
                Ok(Value::Real(x))
            }
        }
        DistributionSpec::CustomReal { observe } | DistributionSpec::CustomInt { observe } => {
            let u = stream.next_f64();
            let v = eval_with(observe, state, &mut Vec::new(), Some(u))?;
            let want = var.spec.value_type();
            let found = v.value_type();
            v.coerce_to(want).ok_or_else(|| {
                EvalError::TypeMismatch(format!("{} observe expression yields {found}, expected {want}", var.id))
            })
        }
    }
}
