use sosmc_core::descriptor::{build_model, parse_descriptor, BuildError, DiagnosticKind, Severity};
use sosmc_core::model::{Path, Value};
use sosmc_core::sim::dump_state;

fn demo_text() -> String {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../demos/ambulance.sosd");
    std::fs::read_to_string(path).expect("demo descriptor")
}

fn p(s: &str) -> Path {
    Path::parse(s).unwrap()
}

const MINIMAL: &str = "
type Tank { attr level : int = 50; }
system { instance t : Tank; }
";

#[test]
fn minimal_descriptor() {
    let def = parse_descriptor(MINIMAL);
    assert!(def.diagnostics.is_empty(), "{:?}", def.diagnostics);
    assert_eq!(def.types.len(), 1);
    assert_eq!(def.instances.len(), 1);
    let model = build_model(&def, 0).unwrap();
    assert_eq!(model.initial.system.value(&p("t.level")).unwrap(), &Value::Int(50));
    assert!(model.commands().is_empty());
}

#[test]
fn undeclared_type_is_named() {
    let def = parse_descriptor("type A { attr x : int = 1; } system { instance b : Boat; }");
    let errs: Vec<_> = def.errors().collect();
    assert_eq!(errs.len(), 1);
    assert_eq!(errs[0].kind, DiagnosticKind::UndeclaredType);
    assert!(errs[0].message.contains("Boat"));
    assert_eq!((errs[0].pos.line, errs[0].pos.col), (1, 39));
    assert!(matches!(build_model(&def, 0), Err(BuildError::Invalid(_))));
}

#[test]
fn demo_counts_and_clean() {
    let def = parse_descriptor(&demo_text());
    assert!(def.diagnostics.is_empty(), "{:?}", def.diagnostics);
    assert_eq!(def.types.len(), 2);
    let ambulances = def.instances.iter().filter(|i| &*i.type_name == "Ambulance").count();
    assert_eq!(ambulances, 3);
    let commands: usize = def.types.iter().map(|t| t.commands.len()).sum();
    assert!(commands >= 2);
    assert!(def.open);
}

#[test]
fn demo_builds_with_configured_values() {
    let model = build_model(&parse_descriptor(&demo_text()), 7).unwrap();
    let sys = &model.initial.system;
    assert_eq!(sys.value(&p("fleet.amb1.fuel")).unwrap(), &Value::Int(40));
    assert_eq!(sys.value(&p("fleet.amb2.fuel")).unwrap(), &Value::Int(30));
    assert_eq!(sys.instances_of_type("Ambulance").len(), 3);
    assert!(sys.open);
    // every grounded path resolves
    for cmd in model.commands() {
        cmd.guard.visit_refs(&mut Vec::new(), &mut |path, binders| {
            if !path.first().is_some_and(|f| binders.contains(&&**f)) {
                assert!(sys.resolve(path).is_ok(), "{} in {}", path, cmd.id);
            }
        });
    }
    assert!(model.commands().iter().any(|c| &*c.id == "fleet.amb2.drive"));
    assert!(model.variables().contains_key("fleet.amb3.leg"));
}

#[test]
fn init_from_earlier_attribute() {
    let def = parse_descriptor(
        "type B { attr cap : int = 10; attr fuel : int = cap * 2; attr half : real = self.fuel / 4; }
         system { instance b : B; }",
    );
    assert!(def.diagnostics.is_empty(), "{:?}", def.diagnostics);
    let model = build_model(&def, 0).unwrap();
    // oracle: 10 * 2 = 20, integer division 20 / 4 = 5 widened to real
    assert_eq!(model.initial.system.value(&p("b.fuel")).unwrap(), &Value::Int(20));
    assert_eq!(model.initial.system.value(&p("b.half")).unwrap(), &Value::Real(5.0));
}

#[test]
fn forward_reference_is_cyclic() {
    let def = parse_descriptor(
        "type B { attr fuel : int = cap * 2; attr cap : int = 10; } system { instance b : B; }",
    );
    assert!(def.errors().any(|d| d.kind == DiagnosticKind::CyclicInit));
    assert!(matches!(build_model(&def, 0), Err(BuildError::CyclicInit(_))));

    let def = parse_descriptor("type B { attr x : int = x + 1; } system { instance b : B; }");
    assert!(matches!(build_model(&def, 0), Err(BuildError::CyclicInit(_))));
}

#[test]
fn non_boolean_guard() {
    let def = parse_descriptor(
        "type B { attr fuel : int = 1; cmd c: when fuel + 1 rate 1 do skip; } system { instance b : B; }",
    );
    let errs: Vec<_> = def.errors().collect();
    assert_eq!(errs.len(), 1);
    assert!(errs[0].message.contains("guard must be boolean"), "{}", errs[0]);
    assert!(matches!(build_model(&def, 0), Err(BuildError::TypeError(_))));
}

#[test]
fn negative_constant_rate_warns() {
    let def = parse_descriptor(
        "type B { attr x : int = 1; cmd c: when true rate -1 do x := 2; } system { instance b : B; }",
    );
    assert_eq!(def.diagnostics.len(), 1);
    assert_eq!(def.diagnostics[0].severity, Severity::Warning);
    assert!(build_model(&def, 0).is_ok());
}

#[test]
fn type_errors_reported() {
    let cases = [
        "type B { attr x : int = true; } system { instance b : B; }",
        "type B { attr x : int = 1; cmd c: when true rate 1 do x := 1.5; } system { instance b : B; }",
        "type B { attr x : int = 1; cmd c: when true rate x > 0 do skip; } system { instance b : B; }",
        "type B { attr x : int = 1; cmd c: when B.allInstances()->forAll(a | a.x) rate 1 do skip; } system { instance b : B; }",
        "type B { attr x : int = 1; } system { instance b : B { x = 0.5; }; }",
    ];
    for src in cases {
        let def = parse_descriptor(src);
        assert!(def.errors().any(|d| d.kind == DiagnosticKind::Type), "{src}: {:?}", def.diagnostics);
    }
}

#[test]
fn structural_errors_reported() {
    let cases = [
        ("type B { attr x : int = 1; } system { instance b : B; instance b : B; }", DiagnosticKind::Duplicate),
        ("type B { attr x : int = 1; } system { instance c : B in b; }", DiagnosticKind::UnknownPath),
        ("type B { attr x : int = 1; } system { instance b : B; instance c : B in b; }", DiagnosticKind::Structure),
        ("type B { attr x : int = 1; } system { instance b : B; relation r: b -- zz; }", DiagnosticKind::UnknownPath),
        ("type B { attr x : int = 1; cmd c: when y > 0 rate 1 do skip; } system { }", DiagnosticKind::UnknownPath),
        ("type B { attr x : int = 1; cmd c: when true rate 1 do spawn Q in self; } system { open; }", DiagnosticKind::UndeclaredType),
    ];
    for (src, kind) in cases {
        let def = parse_descriptor(src);
        assert!(def.errors().any(|d| d.kind == kind), "{src}: {:?}", def.diagnostics);
    }
}

#[test]
fn spawn_in_closed_system_warns() {
    let def = parse_descriptor(
        "type B { attr x : int = 1; } type F { cmd c: when true rate 1 do spawn B in self; }
         system { instance f : F; }",
    );
    assert!(!def.has_errors(), "{:?}", def.diagnostics);
    assert!(def.diagnostics.iter().any(|d| d.severity == Severity::Warning && d.kind == DiagnosticKind::Structure));
}

#[test]
fn syntax_errors_have_locations_and_recover() {
    let def = parse_descriptor(
        "type A {\n  attr x : int = ;\n  attr y : int = 2;\n}\nsystem { instance a : A; }\n",
    );
    let errs: Vec<_> = def.errors().collect();
    assert_eq!(errs.len(), 1, "{errs:?}");
    assert_eq!(errs[0].kind, DiagnosticKind::Syntax);
    assert_eq!(errs[0].pos.line, 2);
    // parsing continued after the bad item
    assert_eq!(def.types[0].attributes.len(), 1);
    assert_eq!(def.instances.len(), 1);

    for bad in ["", "type", "system {", "type A { attr x : float = 1; } system {}", "type A { rv r ~ poisson(1); } system {}", "@"] {
        let def = parse_descriptor(bad);
        assert!(def.has_errors(), "{bad:?}");
    }
}

#[test]
fn keywords_case_insensitive() {
    let def = parse_descriptor(
        "TYPE B { ATTR x : INT = 1; CMD c: WHEN x > 0 AND TRUE RATE 1 DO x := 0; } SYSTEM { INSTANCE b : B; OPEN; }",
    );
    assert!(def.diagnostics.is_empty(), "{:?}", def.diagnostics);
    assert!(def.open);
}

#[test]
fn print_parse_fixpoint() {
    let sources = [MINIMAL.to_string(), demo_text(), "type A { attr x : real = -1.5; rv r ~ custom_real(u * 2.0 - x); rv n ~ normal_int(3, 0.5); cmd c: when not (x < 0) or x == 1.0 rate max(x, 1) do x := observe(r), x := 1; cmd d: when true rate 1 do skip; } type H { } system { instance h : H; instance a : A in h; instance b : A in h { x = 2.5; }; relation link: h.a -- h.b; closed; }".to_string()];
    for src in sources {
        let a = parse_descriptor(&src);
        assert!(!a.has_errors(), "{:?}", a.diagnostics);
        let printed = a.to_string();
        let b = parse_descriptor(&printed);
        assert!(!b.has_errors(), "{printed}\n{:?}", b.diagnostics);
        assert_eq!(b.to_string(), printed);
        let strip = |d: &sosmc_core::descriptor::ModelDefinition| {
            let mut d = d.clone();
            d.diagnostics.clear();
            d.types.iter().map(|t| (t.name.clone(), t.attributes.iter().map(|a| (a.name.clone(), a.ty, a.init.clone())).collect::<Vec<_>>(), t.variables.iter().map(|v| (v.name.clone(), v.spec.clone())).collect::<Vec<_>>(), t.commands.iter().map(|c| (c.name.clone(), c.guard.clone(), c.rate.clone(), c.actions.clone())).collect::<Vec<_>>())).collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.instances.len(), b.instances.len());
        assert_eq!(a.open, b.open);
    }
}

#[test]
fn build_is_deterministic() {
    let src = "type A { attr x : int = 0; rv r ~ uniform_int(0, 1000000); attr y : int = observe(r); attr z : real = 1.5; }
               system { instance a : A; instance b : A; }";
    let def = parse_descriptor(src);
    assert!(def.diagnostics.is_empty(), "{:?}", def.diagnostics);
    let m1 = build_model(&def, 11).unwrap();
    let m2 = build_model(&def, 11).unwrap();
    assert_eq!(m1.initial, m2.initial);
    assert_eq!(dump_state(&m1.initial), dump_state(&m2.initial));
    assert_eq!(m1.commands(), m2.commands());
    // per-instance streams differ
    let (ya, yb) = (m1.initial.system.value(&p("a.y")).unwrap(), m1.initial.system.value(&p("b.y")).unwrap());
    assert_ne!(ya, yb);
    let m3 = build_model(&def, 12).unwrap();
    assert_ne!(m1.initial, m3.initial);
}

#[test]
fn relations_are_wired() {
    let def = parse_descriptor(
        "type A { attr x : int = 1; } type H { } system { instance h : H; instance a : A in h; instance b : A in h; relation link: h.a -- h.b; }",
    );
    let model = build_model(&def, 0).unwrap();
    let sosmc_core::model::Resolved::Component(sosmc_core::model::Component::Hierarchical(h)) =
        model.initial.system.resolve(&p("h")).unwrap()
    else {
        panic!("h is hierarchical")
    };
    assert_eq!(h.relations.len(), 1);
    assert_eq!(&*h.relations[0].from, "a");
    assert_eq!(&*h.relations[0].to, "b");
}
