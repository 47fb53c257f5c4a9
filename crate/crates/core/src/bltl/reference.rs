use thiserror::Error;

use super::{Formula, Quantifier, Verdict};
use crate::model::{SimulationState, Value};
use crate::stochastic::{eval_with, Bindings, EvalError};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ReferenceError {
    #[error("trace has {got} states, formula needs {needed}")]
    TraceTooShort { needed: u64, got: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Evaluates `f` at position 0 of a complete trace by direct recursion on
/// the semantics. The trace must cover the formula's window.
pub fn reference_eval(f: &Formula, trace: &[SimulationState]) -> Result<Verdict, ReferenceError> {
    let needed = f.required_window() + 1;
    if (trace.len() as u64) < needed {
        return Err(ReferenceError::TraceTooShort { needed, got: trace.len() });
    }
    Ok(Verdict::from_bool(holds(f, 0, trace, &mut Vec::new())?))
}

fn holds(f: &Formula, i: usize, trace: &[SimulationState], b: &mut Bindings) -> Result<bool, EvalError> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(e) => match eval_with(e, &trace[i], b, None) {
            Ok(Value::Bool(v)) => v,
            Ok(v) => return Err(EvalError::TypeMismatch(format!("atom applied to {}", v.value_type()))),
            Err(EvalError::BoundInstanceGone(_)) => false,
            Err(e) => return Err(e),
        },
        Formula::Not(x) => !holds(x, i, trace, b)?,
        Formula::And(x, y) => holds(x, i, trace, b)? && holds(y, i, trace, b)?,
        Formula::Or(x, y) => holds(x, i, trace, b)? || holds(y, i, trace, b)?,
        Formula::Implies(x, y) => !holds(x, i, trace, b)? || holds(y, i, trace, b)?,
        Formula::Next(x) => holds(x, i + 1, trace, b)?,
        Formula::Eventually(t, x) => {
            for k in 0..=*t as usize {
                if holds(x, i + k, trace, b)? {
                    return Ok(true);
                }
            }
            false
        }
        Formula::Always(t, x) => {
            for k in 0..=*t as usize {
                if !holds(x, i + k, trace, b)? {
                    return Ok(false);
                }
            }
            true
        }
        Formula::Until(t, x, y) => {
            for k in 0..=*t as usize {
                if holds(y, i + k, trace, b)? {
                    return Ok(true);
                }
                if !holds(x, i + k, trace, b)? {
                    return Ok(false);
                }
            }
            false
        }
        Formula::Quant { q, binder, type_name, body } => {
            let want = *q == Quantifier::Exists;
            for inst in trace[i].system.instances_of_type(type_name) {
                b.push((binder.clone(), inst.path));
                let r = holds(body, i, trace, b);
                b.pop();
                if r? == want {
                    return Ok(want);
                }
            }
            !want
        }
    })
}
