mod common;

use std::sync::Arc;

use common::*;
use sosmc_core::bltl::{compile, reference_eval, MonitorSession, Quantifier, Verdict};
use sosmc_core::gcsl::{check_gcsl, parse_gcsl, translate_to_bltl, GcslAst, GcslError, Pattern};
use sosmc_core::model::{SimulationState, Value};
use sosmc_core::schema::TypeError;
use sosmc_core::stochastic::{eval_with, Bindings, EvalError};
use sosmc_core::syntax::Expr;

fn truth(e: &Expr, s: &SimulationState, b: &mut Bindings) -> bool {
    match eval_with(e, s, b, None) {
        Ok(Value::Bool(v)) => v,
        Err(EvalError::BoundInstanceGone(_)) => false,
        other => panic!("{other:?}"),
    }
}

/// Applies the quantifier prefix at state `i`, then `body` under the bindings.
fn quantified(
    ast: &GcslAst,
    depth: usize,
    trace: &[SimulationState],
    i: usize,
    b: &mut Bindings,
    body: &dyn Fn(&mut Bindings) -> bool,
) -> bool {
    let Some(p) = ast.prefix.get(depth) else { return body(b) };
    let results: Vec<bool> = trace[i]
        .instances_of_type(&p.type_name)
        .into_iter()
        .map(|inst| {
            b.push((p.binder.clone(), inst.path));
            let r = quantified(ast, depth + 1, trace, i, b, body);
            b.pop();
            r
        })
        .collect();
    match p.q {
        Quantifier::ForAll => results.iter().all(|r| *r),
        Quantifier::Exists => results.iter().any(|r| *r),
    }
}

/// Direct reading of each pattern over a run of `horizon` steps.
fn pattern_holds(ast: &GcslAst, trace: &[SimulationState], horizon: usize) -> bool {
    match &ast.pattern {
        Pattern::Invariant { condition, bound } => (0..=*bound as usize)
            .all(|i| quantified(ast, 0, trace, i, &mut Vec::new(), &|b| truth(&condition.expr, &trace[i], b))),
        Pattern::Persistence { trigger, response, bound } => {
            let t = *bound as usize;
            (0..=horizon - t).all(|i| {
                quantified(ast, 0, trace, i, &mut Vec::new(), &|b| {
                    !truth(&trigger.expr, &trace[i], b) || (i..=i + t).all(|j| truth(&response.expr, &trace[j], b))
                })
            })
        }
        Pattern::Response { trigger, response, bound } => {
            let t = *bound as usize;
            (0..=horizon - t).all(|i| {
                quantified(ast, 0, trace, i, &mut Vec::new(), &|b| {
                    !truth(&trigger.expr, &trace[i], b) || (i..=i + t).any(|j| truth(&response.expr, &trace[j], b))
                })
            })
        }
    }
}

fn random_contract(rng: &mut sosmc_core::stochastic::RngStream, t: u32) -> String {
    let n_binders = rng.next_int_inclusive(0, 2) as usize;
    let binders: Vec<String> = (0..n_binders).map(|i| format!("b{i}")).collect();
    let cmp = ["<", "<=", "=", "!=", ">=", ">"];
    let atom = |owner: Option<&str>, rng: &mut sosmc_core::stochastic::RngStream| {
        let owners = ["c0", "c1"];
        let o = owner.map(str::to_string).unwrap_or_else(|| {
            let mut all: Vec<String> = owners.iter().map(|s| s.to_string()).collect();
            all.extend(binders.iter().cloned());
            all[rng.next_int_inclusive(0, all.len() as i64 - 1) as usize].clone()
        });
        format!(
            "{o}.{} {} {}",
            ATTRS[rng.next_int_inclusive(0, 2) as usize],
            cmp[rng.next_int_inclusive(0, 5) as usize],
            rng.next_int_inclusive(0, 2)
        )
    };
    let first = binders.first().map(String::as_str);
    let last = binders.last().map(String::as_str);
    let p = atom(first, rng);
    let q = atom(last, rng);
    let mut body = match rng.next_int_inclusive(0, 2) {
        0 => format!("whenever [{p}] occurs [{q}] holds during following [{t}]"),
        1 => format!("whenever [{p}] occurs [{q}] occurs within [{t}]"),
        _ => format!("[{p} or {q}] holds during [{t}]"),
    };
    for b in binders.iter().rev() {
        let op = if rng.next_int_inclusive(0, 1) == 0 { "forAll" } else { "exists" };
        body = format!("Cell.allInstances()->{op}({b} | {body})");
    }
    body
}

#[test]
fn translation_matches_pattern_checkers() {
    let schema = trace_schema();
    let mut rng = stream(77, "gcsl-oracle");
    let mut satisfied = 0;
    for case in 0..1500 {
        let horizon = rng.next_int_inclusive(0, 6) as u32;
        let t = rng.next_int_inclusive(0, i64::from(horizon)) as u32;
        let src = random_contract(&mut rng, t);
        let ast = parse_gcsl(&src).unwrap_or_else(|e| panic!("{src}: {e}"));
        check_gcsl(&ast, &schema).unwrap();
        let f = translate_to_bltl(&ast, horizon).unwrap();
        let trace = random_trace(&mut rng, horizon as usize + 1, 0);
        let want = pattern_holds(&ast, &trace, horizon as usize);
        let got = reference_eval(&f, &trace).unwrap();
        assert_eq!(got, Verdict::from_bool(want), "case {case}: {src} ~> {f}");
        let mut m = MonitorSession::new(Arc::new(compile(&f, &schema).unwrap()));
        let vm = trace.iter().map(|s| m.feed_state(s).unwrap()).last().unwrap();
        assert_eq!(vm, got, "case {case}: {f}");
        satisfied += usize::from(want);
    }
    assert!(satisfied > 150 && satisfied < 1350, "{satisfied}");
}

#[test]
fn persistence_example_shape() {
    let ast = parse_gcsl("whenever [x > 0] occurs [y > 0] holds during following [2]").unwrap();
    assert_eq!(translate_to_bltl(&ast, 10).unwrap().to_string(), "G<=8 ((x > 0) -> G<=2 (y > 0))");
}

#[test]
fn ambulance_invariant_shape() {
    let ast = parse_gcsl("Ambulance.allInstances()->forAll(a | [a.fuel > 0] holds during [100])").unwrap();
    let f = translate_to_bltl(&ast, 100).unwrap();
    assert_eq!(f.to_string(), "G<=100 (forall a : Ambulance . (a.fuel > 0))");
    assert_eq!(f.required_window(), 100);
}

#[test]
fn false_trigger_is_vacuous() {
    let mut rng = stream(5, "vacuous");
    let ast = parse_gcsl("whenever [false] occurs [c0.x = 9] occurs within [2]").unwrap();
    let f = translate_to_bltl(&ast, 6).unwrap();
    for _ in 0..50 {
        let trace = random_trace(&mut rng, 7, 0);
        assert_eq!(reference_eval(&f, &trace).unwrap(), Verdict::True);
    }
}

#[test]
fn empty_collections() {
    let mut schema = trace_schema();
    schema.declare_type(
        "Ghost".into(),
        sosmc_core::schema::TypeKind::Atomic { attributes: vec![("x".into(), sosmc_core::model::ValueType::Int)] },
    );
    let trace = random_trace(&mut stream(1, "e"), 4, 0);
    let all = parse_gcsl("Ghost.allInstances()->forAll(g | [g.x > 0] holds during [3])").unwrap();
    let any = parse_gcsl("Ghost.allInstances()->exists(g | [g.x > 0] holds during [3])").unwrap();
    check_gcsl(&all, &schema).unwrap();
    check_gcsl(&any, &schema).unwrap();
    assert_eq!(reference_eval(&translate_to_bltl(&all, 3).unwrap(), &trace).unwrap(), Verdict::True);
    assert_eq!(reference_eval(&translate_to_bltl(&any, 3).unwrap(), &trace).unwrap(), Verdict::False);
}

#[test]
fn type_and_scope_errors() {
    let schema = trace_schema();
    let bad = parse_gcsl("[Cell.allInstances()->forAll(a | a.x)] holds during [3]").unwrap();
    assert!(matches!(check_gcsl(&bad, &schema), Err(GcslError::Type { source: TypeError::Mismatch(_), .. })));
    let unbound = parse_gcsl("Cell.allInstances()->forAll(a | [a.x > 0 and b.y > 0] holds during [1])").unwrap();
    match check_gcsl(&unbound, &schema) {
        Err(GcslError::UnboundBinder { name, pos }) => {
            assert_eq!(name, "b");
            assert_eq!((pos.line, pos.col), (1, 34));
        }
        other => panic!("{other:?}"),
    }
    let unknown_type = parse_gcsl("Boat.allInstances()->forAll(a | [a.x > 0] holds during [1])").unwrap();
    assert!(matches!(
        check_gcsl(&unknown_type, &schema),
        Err(GcslError::Type { source: TypeError::UnknownComponentType(_), .. })
    ));
    let ast = parse_gcsl("[c0.x > 0] holds during [5]").unwrap();
    assert!(matches!(translate_to_bltl(&ast, 4), Err(GcslError::HorizonTooSmall { bound: 5, horizon: 4 })));
}
