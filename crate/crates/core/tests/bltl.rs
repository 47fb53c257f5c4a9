mod common;

use std::sync::Arc;

use common::*;
use sosmc_core::bltl::{
    compile, parse_formula, reference_eval, CompileError, Formula, MonitorError, MonitorSession, ReferenceError,
    Verdict,
};
use sosmc_core::model::{AtomicComponent, HierarchicalComponent, SimulationState, System, Value};
use sosmc_core::schema::{Schema, TypeError};

fn counter_states(values: &[i64]) -> Vec<SimulationState> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let root = HierarchicalComponent::new("System").with_child("c", AtomicComponent::new("Counter").with_attr("x", Value::Int(*v)));
            SimulationState { step: i as u64, time: i as u64, system: Arc::new(System::new(root, false)), structure_changed: false }
        })
        .collect()
}

fn counter_schema() -> Schema {
    Schema::from_system(&counter_states(&[0])[0].system)
}

fn monitor(src: &str, schema: &Schema) -> MonitorSession {
    let f = parse_formula(src).unwrap();
    MonitorSession::new(Arc::new(compile(&f, schema).unwrap()))
}

fn verdicts(m: &mut MonitorSession, states: &[SimulationState]) -> Vec<Verdict> {
    states.iter().map(|s| m.feed_state(s).unwrap()).collect()
}

#[test]
fn window_examples() {
    let w = |s: &str| parse_formula(s).unwrap().required_window();
    assert_eq!(w("x > 0"), 0);
    assert_eq!(w("G<=5 (F<=3 p)"), 8);
    assert_eq!(w("(F<=2 p) & (G<=7 q)"), 7);
    let schema = Schema::new();
    let prog = compile(&parse_formula("G<=5 (F<=3 true)").unwrap(), &schema).unwrap();
    assert_eq!(prog.capacity(), 9);
}

#[test]
fn immediate_and_exhausted_decisions() {
    let schema = counter_schema();
    let mut m = monitor("G<=0 (c.x > 0)", &schema);
    assert_eq!(verdicts(&mut m, &counter_states(&[1])), [Verdict::True]);

    let mut m = monitor("F<=2 (c.x = 1)", &schema);
    assert_eq!(verdicts(&mut m, &counter_states(&[0, 0, 0])), [Verdict::Undecided, Verdict::Undecided, Verdict::False]);

    let mut m = monitor("true", &schema);
    assert_eq!(verdicts(&mut m, &counter_states(&[5])), [Verdict::True]);
    assert_eq!(reference_eval(&Formula::True, &counter_states(&[5])).unwrap(), Verdict::True);
}

#[test]
fn earliest_decision_for_eventually() {
    let schema = counter_schema();
    for first_hit in 0..6usize {
        let mut vals = vec![0i64; 7];
        vals[first_hit] = 3;
        let mut m = monitor("F<=6 (c.x = 3)", &schema);
        let vs = verdicts(&mut m, &counter_states(&vals));
        for (i, v) in vs.iter().enumerate() {
            let expect = if i < first_hit { Verdict::Undecided } else { Verdict::True };
            assert_eq!(*v, expect, "hit at {first_hit}, state {i}");
        }
    }
}

#[test]
fn monotone_after_decision() {
    let schema = counter_schema();
    let mut m = monitor("G<=10 (c.x < 2)", &schema);
    let vs = verdicts(&mut m, &counter_states(&[0, 1, 2, 0, 0, 0]));
    assert_eq!(vs[..2], [Verdict::Undecided, Verdict::Undecided]);
    assert!(vs[2..].iter().all(|v| *v == Verdict::False));
    assert_eq!(m.retained(), 0);
    assert_eq!(m.steps_consumed(), 6);
}

#[test]
fn kleene_short_circuit() {
    let schema = counter_schema();
    // the left conjunct fails at once; the right one would need 6 more states
    let mut m = monitor("(c.x > 5) & (G<=5 c.x >= 0)", &schema);
    assert_eq!(m.feed_state(&counter_states(&[0])[0]).unwrap(), Verdict::False);
    let mut m = monitor("(F<=5 c.x = 9) | (c.x = 0)", &schema);
    assert_eq!(m.feed_state(&counter_states(&[0])[0]).unwrap(), Verdict::True);
}

#[test]
fn double_negation() {
    let schema = trace_schema();
    let mut rng = stream(3, "dneg");
    for _ in 0..200 {
        let p = random_formula(&mut rng, 3, 4);
        let nn = Formula::not(Formula::not(p.clone()));
        let trace = random_trace(&mut rng, 12, p.required_window() as usize + 1);
        assert_eq!(reference_eval(&p, &trace).unwrap(), reference_eval(&nn, &trace).unwrap());
        let run = |f: &Formula| {
            let mut m = MonitorSession::new(Arc::new(compile(f, &schema).unwrap()));
            trace.iter().map(|s| m.feed_state(s).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(&p), run(&nn));
    }
}

#[test]
fn compile_is_deterministic_and_checked() {
    let schema = counter_schema();
    let f = parse_formula("G<=3 (c.x > 0 -> F<=2 c.x = 3)").unwrap();
    let a = compile(&f, &schema).unwrap();
    let b = compile(&f, &schema).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_string(), b.to_string());

    let atom = compile(&parse_formula("c.x > 0").unwrap(), &schema).unwrap();
    let listing = atom.to_string();
    for op in ["ATOM", "LOAD c.x", "CONST 0", "GT", "DECIDE", "HALT"] {
        assert!(listing.contains(op), "{listing}");
    }

    let err = compile(&parse_formula("c.nope > 0").unwrap(), &schema).unwrap_err();
    assert!(matches!(err, CompileError::Type(TypeError::UnknownPath(_))), "{err:?}");
    let err = compile(&parse_formula("forall a : Boat . a.x > 0").unwrap(), &schema).unwrap_err();
    assert!(matches!(err, CompileError::Type(TypeError::UnknownComponentType(_))), "{err:?}");
    let err = compile(&parse_formula("c.x + 1").unwrap(), &schema).unwrap_err();
    assert!(matches!(err, CompileError::Type(TypeError::Mismatch(_))), "{err:?}");
    let err = compile(&parse_formula("forall a : Counter . forall a : Counter . a.x > 0").unwrap(), &schema).unwrap_err();
    assert!(matches!(err, CompileError::Shadowed(_)), "{err:?}");
}

#[test]
fn out_of_order_and_short_traces() {
    let schema = counter_schema();
    let states = counter_states(&[0, 1, 2]);
    let mut m = monitor("F<=5 c.x = 9", &schema);
    m.feed_state(&states[0]).unwrap();
    assert_eq!(m.feed_state(&states[2]), Err(MonitorError::OutOfOrderState { expected: 1, found: 2 }));
    let f = parse_formula("F<=5 c.x = 9").unwrap();
    assert_eq!(reference_eval(&f, &states), Err(ReferenceError::TraceTooShort { needed: 6, got: 3 }));
}

fn fleet_state(step: u64, fuels: &[(&str, i64)]) -> SimulationState {
    let mut fleet = HierarchicalComponent::new("Fleet");
    for (name, fuel) in fuels {
        fleet = fleet.with_child(name, AtomicComponent::new("Ambulance").with_attr("fuel", Value::Int(*fuel)));
    }
    let root = HierarchicalComponent::new("System").with_child("fleet", fleet);
    SimulationState { step, time: step, system: Arc::new(System::new(root, true)), structure_changed: false }
}

#[test]
fn ambulance_runs_dry_at_step_37() {
    let trace: Vec<_> = (0..=100u64)
        .map(|i| {
            let amb2 = if i >= 37 { 0 } else { 74 - 2 * i as i64 };
            fleet_state(i, &[("amb1", 80), ("amb2", amb2), ("amb3", 90)])
        })
        .collect();
    let f = parse_formula("G<=100 forall a : Ambulance . a.fuel > 0").unwrap();
    let schema = Schema::from_system(&trace[0].system);
    let mut m = MonitorSession::new(Arc::new(compile(&f, &schema).unwrap()));
    let mut decided_at = None;
    for s in &trace {
        let v = m.feed_state(s).unwrap();
        if v.is_decided() && decided_at.is_none() {
            decided_at = Some((s.step, v));
        }
    }
    assert_eq!(decided_at, Some((37, Verdict::False)));
    assert_eq!(reference_eval(&f, &trace).unwrap(), Verdict::False);
}

#[test]
fn quantifiers_rebind_per_state() {
    // amb9 appears at step 2 with no fuel; a quantifier evaluated at step 0
    // never sees it, one evaluated at step 2 does
    let trace: Vec<_> = (0..4u64)
        .map(|i| {
            if i >= 2 {
                fleet_state(i, &[("amb1", 5), ("amb9", 0)])
            } else {
                fleet_state(i, &[("amb1", 5)])
            }
        })
        .collect();
    let schema = Schema::from_system(&trace[0].system);
    let run = |src: &str| {
        let f = parse_formula(src).unwrap();
        let mut m = MonitorSession::new(Arc::new(compile(&f, &schema).unwrap()));
        let vm = trace.iter().map(|s| m.feed_state(s).unwrap()).last().unwrap();
        assert_eq!(vm, reference_eval(&f, &trace).unwrap(), "{src}");
        vm
    };
    assert_eq!(run("forall a : Ambulance . G<=3 a.fuel > 0"), Verdict::True);
    assert_eq!(run("G<=3 forall a : Ambulance . a.fuel > 0"), Verdict::False);
    assert_eq!(run("G<=1 forall a : Ambulance . a.fuel > 0"), Verdict::True);
    // empty collections
    assert_eq!(run("forall a : Fleet . false"), Verdict::False);
}

#[test]
fn vacuous_quantifiers() {
    let trace = vec![fleet_state(0, &[])];
    let mut schema = Schema::from_system(&fleet_state(0, &[("amb1", 1)]).system);
    schema.declare_type("Ghost".into(), sosmc_core::schema::TypeKind::Hierarchical);
    for (src, want) in [("forall g : Ghost . false", Verdict::True), ("exists g : Ghost . true", Verdict::False)] {
        let f = parse_formula(src).unwrap();
        let mut m = MonitorSession::new(Arc::new(compile(&f, &schema).unwrap()));
        assert_eq!(m.feed_state(&trace[0]).unwrap(), want);
        assert_eq!(reference_eval(&f, &trace).unwrap(), want);
    }
}

#[test]
fn vanished_bound_instance_makes_atom_false() {
    let trace = vec![
        fleet_state(0, &[("amb1", 5), ("amb2", 5)]),
        fleet_state(1, &[("amb1", 5)]),
        fleet_state(2, &[("amb1", 5)]),
    ];
    let schema = Schema::from_system(&trace[0].system);
    for (src, want) in [
        ("forall a : Ambulance . G<=2 a.fuel > 0", Verdict::False),
        ("forall a : Ambulance . G<=2 !(a.fuel > 0)", Verdict::False),
        ("exists a : Ambulance . X !(a.fuel > 9)", Verdict::True),
    ] {
        let f = parse_formula(src).unwrap();
        let mut m = MonitorSession::new(Arc::new(compile(&f, &schema).unwrap()));
        let vm = trace.iter().map(|s| m.feed_state(s).unwrap()).last().unwrap();
        assert_eq!(vm, want, "{src}");
        assert_eq!(reference_eval(&f, &trace).unwrap(), want, "{src}");
    }
}

/// The central property: VM and reference evaluator agree.
#[test]
fn differential_random_corpus() {
    let schema = trace_schema();
    let mut rng = stream(2024, "differential");
    let mut decided_early = 0;
    for case in 0..1000 {
        let f = random_formula(&mut rng, 4, 6);
        let w = f.required_window() as usize;
        let trace = random_trace(&mut rng, 12, w + 1);
        let expected = reference_eval(&f, &trace).unwrap();
        let prog = Arc::new(compile(&f, &schema).unwrap());
        let mut m = MonitorSession::new(prog);
        let mut first: Option<(usize, Verdict)> = None;
        for (i, s) in trace.iter().enumerate() {
            let v = m.feed_state(s).unwrap();
            match first {
                Some((_, d)) => assert_eq!(v, d, "case {case}: verdict changed after decision: {f}"),
                None if v.is_decided() => first = Some((i, v)),
                None => {}
            }
            assert!(m.peak_retained() <= w + 1, "case {case}: window exceeded: {f}");
        }
        let (at, got) = first.unwrap_or_else(|| panic!("case {case}: undecided after {} states: {f}", trace.len()));
        assert!(at <= w, "case {case}: decided only at {at} > window {w}");
        assert_eq!(got, expected, "case {case}: {f}");
        if at < w {
            decided_early += 1;
        }
    }
    // the corpus exercises early decisions, not just full windows
    assert!(decided_early > 100, "{decided_early}");
}
