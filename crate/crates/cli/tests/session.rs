use std::path::{Path, PathBuf};

use sosmc_cli::*;
use sosmc_core::smc::AnalysisTechnique;

fn demos() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demos")
}

const MINIMAL: &str = "
model: m.sosd
technique: montecarlo n=100
property p: G<=2 c.x >= 0
";

#[test]
fn minimal_session() {
    let cfg = parse_session(MINIMAL, Path::new("/tmp/x")).unwrap();
    assert_eq!(cfg.model_path, Path::new("/tmp/x/m.sosd"));
    assert_eq!(cfg.technique, AnalysisTechnique::MonteCarlo { n: 100 });
    assert_eq!(cfg.properties.len(), 1);
    assert_eq!((cfg.seed, cfg.workers, cfg.format), (0, 1, Format::Text));
}

#[test]
fn session_errors() {
    let base = Path::new(".");
    assert_eq!(
        parse_session("model: m.sosd\ntechnique: montecarlo n=5\n", base),
        Err(SessionError::MissingField("properties".into()))
    );
    assert_eq!(
        parse_session("technique: montecarlo n=5\nproperty p: true\n", base),
        Err(SessionError::MissingField("model".into()))
    );
    assert!(matches!(
        parse_session("model: m\ntechnique: bayes k=1\nproperty p: true\n", base),
        Err(SessionError::UnknownTechnique { line: 2, .. })
    ));
    assert!(matches!(
        parse_session("model: m\ntechnique: chernoff epsilon=0 delta=0.1\nproperty p: true\n", base),
        Err(SessionError::Domain { line: 2, .. })
    ));
    assert!(matches!(
        parse_session("model: m\ntechnique: chernoff epsilon=0.1\nproperty p: true\n", base),
        Err(SessionError::MissingField(f)) if f == "technique.delta"
    ));
    assert!(matches!(
        parse_session("model m\n", base),
        Err(SessionError::Syntax { line: 1, .. })
    ));
    assert!(matches!(
        parse_session("model: m\ncolour: red\n", base),
        Err(SessionError::Syntax { line: 2, .. })
    ));
    assert!(matches!(
        parse_session("model: m\nmodel: n\n", base),
        Err(SessionError::Syntax { line: 2, .. })
    ));
    assert!(matches!(
        parse_session("model: m\ntechnique: montecarlo n=1\nproperty p: F<= x\n", base),
        Err(SessionError::Property { line: 3, .. })
    ));
    // contracts need a horizon that covers their bound
    assert_eq!(
        parse_session("model: m\ntechnique: montecarlo n=1\ncontract c: [x > 0] holds during [5]\n", base),
        Err(SessionError::MissingField("horizon".into()))
    );
    assert!(matches!(
        parse_session("model: m\nhorizon: 4\ntechnique: montecarlo n=1\ncontract c: [x > 0] holds during [5]\n", base),
        Err(SessionError::Property { line: 4, .. })
    ));
}

fn demo_config() -> SessionConfig {
    load_session(&demos().join("demo.smcs")).unwrap()
}

#[test]
fn demo_session_runs() {
    let mut cfg = demo_config();
    cfg.technique = AnalysisTechnique::MonteCarlo { n: 50 };
    let r = run_session(&cfg).unwrap();
    assert_eq!(r.results.len(), cfg.properties.len());
    for (p, spec) in r.results.iter().zip(&cfg.properties) {
        assert_eq!(p.name, spec.name);
        let e = p.outcome.as_ref().unwrap().estimate.unwrap();
        assert!((0.0..=1.0).contains(&e));
    }
}

#[test]
fn one_result_per_property() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(demos().join("ambulance.sosd"), dir.path().join("amb.sosd")).unwrap();
    let text = "model: amb.sosd\nhorizon: 10\ntechnique: montecarlo n=10\n\
                contract a: [fleet.amb1.fuel > 0] holds during [10]\nproperty b: G<=3 true\n";
    let cfg = parse_session(text, dir.path()).unwrap();
    let r = run_session(&cfg).unwrap();
    assert_eq!(r.results.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    assert_eq!(r.results[1].outcome.as_ref().unwrap().estimate, Some(1.0));
}

#[test]
fn property_failures_are_reported_per_property() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(demos().join("ambulance.sosd"), dir.path().join("amb.sosd")).unwrap();
    let text = "model: amb.sosd\nhorizon: 10\ntechnique: montecarlo n=10\n\
                contract bad: [fleet.amb1.speed > 0] holds during [10]\nproperty good: true\n";
    let r = run_session(&parse_session(text, dir.path()).unwrap()).unwrap();
    assert_eq!(r.failures(), 1);
    assert_eq!(r.results[0].outcome.as_ref().unwrap_err().stage, Stage::Contract);
    let text_out = render_results(&r, RenderOptions { format: Format::Text, timing: false });
    assert!(text_out.contains("failed (contract)"), "{text_out}");
    assert!(text_out.contains("errors:"), "{text_out}");
}

#[test]
fn model_errors_abort_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.sosd"), "type T { attr x : int = y; }\nsystem { instance t : T; }").unwrap();
    let cfg = parse_session("model: bad.sosd\ntechnique: montecarlo n=1\nproperty p: true\n", dir.path()).unwrap();
    assert_eq!(run_session(&cfg).unwrap_err().stage, Stage::Descriptor);
    let cfg = parse_session("model: missing.sosd\ntechnique: montecarlo n=1\nproperty p: true\n", dir.path()).unwrap();
    assert_eq!(run_session(&cfg).unwrap_err().stage, Stage::Model);
}

fn fuel_estimate(double: bool) -> f64 {
    let dir = tempfile::tempdir().unwrap();
    let mut model = std::fs::read_to_string(demos().join("ambulance.sosd")).unwrap();
    if double {
        model = model.replace("capacity : int = 40", "capacity : int = 80").replace("fuel = 30", "fuel = 60");
    }
    std::fs::write(dir.path().join("amb.sosd"), model).unwrap();
    let text = "model: amb.sosd\nhorizon: 100\nseed: 42\nworkers: 4\ntechnique: chernoff epsilon=0.05 delta=0.05\n\
                contract fuel: Ambulance.allInstances()->forAll(a | [a.fuel > 0] holds during [100])\n";
    let r = run_session(&parse_session(text, dir.path()).unwrap()).unwrap();
    r.results[0].outcome.as_ref().unwrap().estimate.unwrap()
}

#[test]
fn doubling_fuel_does_not_lower_the_estimate() {
    let base = fuel_estimate(false);
    let doubled = fuel_estimate(true);
    assert!(doubled >= base, "{doubled} < {base}");
}

#[test]
fn rendering() {
    let mut cfg = demo_config();
    cfg.technique = AnalysisTechnique::MonteCarlo { n: 20 };
    cfg.properties.truncate(1);
    let r = run_session(&cfg).unwrap();
    let text = render_results(&r, RenderOptions { format: Format::Text, timing: true });
    let table: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("property")).collect();
    assert_eq!(table.len(), 2, "{text}");
    assert!(table[1].starts_with("fuel "));
    let json = |timing| render_results(&r, RenderOptions { format: Format::Json, timing });
    assert_eq!(json(false), json(false));
    assert_eq!(json(true), json(true));
    let v: serde_json::Value = serde_json::from_str(&json(true)).unwrap();
    assert_eq!(v["schema"], SCHEMA);
    assert!(v["timing"]["wall_ms"].is_number());
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys.len(), 5);
    assert!(!json(false).contains("timing"));
    // key order is the declaration order, not alphabetical
    let s = json(false);
    assert!(s.find("\"schema\"").unwrap() < s.find("\"results\"").unwrap());
    assert!(s.find("\"property\"").unwrap() < s.find("\"estimate\"").unwrap());
}

#[test]
fn all_failed_summary() {
    let r = ResultsObject {
        model: "m.sosd".into(),
        model_sha256: "0".repeat(64),
        seed: 1,
        horizon: None,
        technique: AnalysisTechnique::MonteCarlo { n: 1 },
        results: vec![PropertyResult {
            name: "p".into(),
            kind: "bltl",
            source: "x".into(),
            formula: None,
            outcome: Err(Failure { stage: Stage::Compile, message: "unknown path `x`".into() }),
        }],
        wall_time: Default::default(),
    };
    let text = render_results(&r, RenderOptions { format: Format::Text, timing: true });
    assert!(text.contains("no results: 1 of 1 properties failed"), "{text}");
    assert!(text.contains("p [compile] unknown path `x`"), "{text}");
}
