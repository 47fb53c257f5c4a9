#![allow(dead_code)]

use std::sync::Arc;

use sosmc_core::bltl::Formula;
use sosmc_core::descriptor::{build_model, parse_descriptor};
use sosmc_core::model::{AtomicComponent, HierarchicalComponent, Path, SimulationState, System, Value};
use sosmc_core::schema::Schema;
use sosmc_core::sim::Model;
use sosmc_core::stochastic::{derive_stream, RngStream};
use sosmc_core::syntax::{BinOp, CollectionOp, Expr};

pub const ATTRS: [&str; 3] = ["x", "y", "z"];

pub fn model_from(src: &str, seed: u64) -> Model {
    let def = parse_descriptor(src);
    assert!(!def.has_errors(), "{:?}", def.diagnostics);
    build_model(&def, seed).expect("model builds")
}

pub fn demo_path(file: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demos").join(file)
}

/// `x` counts up by one every step.
pub const COUNTER: &str = "
type Counter { attr x : int = 0; cmd inc: when true rate 1 do x := x + 1; }
system { instance c : Counter; }
";

/// One fair coin flip at step 1, then nothing changes.
pub const COIN: &str = "
type Coin {
  attr flipped : bool = false;
  attr heads : bool = false;
  cmd h: when not flipped rate 1 do heads := true, flipped := true;
  cmd t: when not flipped rate 1 do heads := false, flipped := true;
}
system { instance coin : Coin; }
";

/// A coin with bias `p` expressed through integer rates `hi : lo`.
pub fn biased_coin(hi: u32, lo: u32) -> String {
    format!(
        "type Coin {{
  attr flipped : bool = false;
  attr heads : bool = false;
  cmd h: when not flipped rate {hi} do heads := true, flipped := true;
  cmd t: when not flipped rate {lo} do heads := false, flipped := true;
}}
system {{ instance coin : Coin; }}"
    )
}

/// Three-state chain: from 0 go to 1 (weight 1) or stay (weight 3); from 1
/// go to 2 (weight 1) or back to 0 (weight 3); 2 is absorbing.
pub const CHAIN: &str = "
type Chain {
  attr s : int = 0;
  cmd adv0: when s == 0 rate 1 do s := 1;
  cmd stay0: when s == 0 rate 3 do s := 0;
  cmd adv1: when s == 1 rate 1 do s := 2;
  cmd back1: when s == 1 rate 3 do s := 0;
}
system { instance m : Chain; }
";

pub fn stream(seed: u64, name: &str) -> RngStream {
    derive_stream(seed, 0, name)
}

fn cell(rng: &mut RngStream) -> AtomicComponent {
    let mut c = AtomicComponent::new("Cell");
    for a in ATTRS {
        c = c.with_attr(a, Value::Int(rng.next_int_inclusive(0, 2)));
    }
    c
}

/// Random states over cells `c0`, `c1` (always present) and `c2` (present
/// about half the time), stutter-extended to at least `min_len` states.
pub fn random_trace(rng: &mut RngStream, len: usize, min_len: usize) -> Vec<SimulationState> {
    let mut out: Vec<SimulationState> = Vec::new();
    for step in 0..len as u64 {
        let mut root = HierarchicalComponent::new("System").with_child("c0", cell(rng)).with_child("c1", cell(rng));
        if rng.next_int_inclusive(0, 1) == 1 {
            root = root.with_child("c2", cell(rng));
        }
        out.push(SimulationState { step, time: step, system: Arc::new(System::new(root, true)), structure_changed: false });
    }
    while out.len() < min_len {
        let last = out.last().unwrap().clone();
        out.push(SimulationState { step: last.step + 1, time: last.time + 1, ..last });
    }
    out
}

pub fn trace_schema() -> Schema {
    let root = HierarchicalComponent::new("System")
        .with_child("c0", AtomicComponent::new("Cell").with_attr("x", Value::Int(0)).with_attr("y", Value::Int(0)).with_attr("z", Value::Int(0)))
        .with_child("c1", AtomicComponent::new("Cell").with_attr("x", Value::Int(0)).with_attr("y", Value::Int(0)).with_attr("z", Value::Int(0)));
    Schema::from_system(&System::new(root, true))
}

fn pick<'a, T>(rng: &mut RngStream, xs: &'a [T]) -> &'a T {
    &xs[rng.next_int_inclusive(0, xs.len() as i64 - 1) as usize]
}

fn random_atom(rng: &mut RngStream, binders: &[String]) -> Expr {
    let base = |rng: &mut RngStream| -> Path {
        let mut owners: Vec<String> = vec!["c0".into(), "c1".into()];
        owners.extend(binders.iter().cloned());
        Path::parse(&format!("{}.{}", pick(rng, &owners), pick(rng, &ATTRS))).unwrap()
    };
    let cmp = *pick(rng, &[BinOp::Lt, BinOp::Le, BinOp::Eq, BinOp::Ne, BinOp::Ge, BinOp::Gt]);
    match rng.next_int_inclusive(0, 9) {
        0 => Expr::bin(
            BinOp::Or,
            Expr::bin(cmp, Expr::bin(BinOp::Add, Expr::Ref(base(rng)), Expr::Ref(base(rng))), Expr::int(2)),
            Expr::Unary(sosmc_core::syntax::UnOp::Not, Box::new(Expr::bin(BinOp::Eq, Expr::Ref(base(rng)), Expr::int(1)))),
        ),
        1 => Expr::Collection {
            op: CollectionOp::Exists,
            type_name: "Cell".into(),
            binder: "q".into(),
            body: Box::new(Expr::bin(cmp, Expr::path(&format!("q.{}", pick(rng, &ATTRS))), Expr::int(1))),
        },
        2 => Expr::bin(BinOp::Ge, Expr::Count("Cell".into()), Expr::int(3)),
        _ => Expr::bin(cmp, Expr::Ref(base(rng)), Expr::int(rng.next_int_inclusive(0, 2))),
    }
}

/// Random formula of operator depth at most `depth`, bounds at most `max_bound`.
pub fn random_formula(rng: &mut RngStream, depth: usize, max_bound: u32) -> Formula {
    fn go(rng: &mut RngStream, depth: usize, max_bound: u32, binders: &mut Vec<String>) -> Formula {
        if depth == 0 || rng.next_int_inclusive(0, 5) == 0 {
            return match rng.next_int_inclusive(0, 11) {
                0 => Formula::True,
                1 => Formula::False,
                _ => Formula::Atom(random_atom(rng, binders)),
            };
        }
        let t = rng.next_int_inclusive(0, i64::from(max_bound)) as u32;
        let d = depth - 1;
        match rng.next_int_inclusive(0, 9) {
            0 => Formula::not(go(rng, d, max_bound, binders)),
            1 => Formula::and(go(rng, d, max_bound, binders), go(rng, d, max_bound, binders)),
            2 => Formula::or(go(rng, d, max_bound, binders), go(rng, d, max_bound, binders)),
            3 => Formula::implies(go(rng, d, max_bound, binders), go(rng, d, max_bound, binders)),
            4 => Formula::next(go(rng, d, max_bound, binders)),
            5 => Formula::eventually(t, go(rng, d, max_bound, binders)),
            6 => Formula::always(t, go(rng, d, max_bound, binders)),
            7 => Formula::until(t, go(rng, d, max_bound, binders), go(rng, d, max_bound, binders)),
            _ => {
                let name = format!("b{}", binders.len());
                binders.push(name.clone());
                let body = go(rng, d, max_bound, binders);
                binders.pop();
                if rng.next_int_inclusive(0, 1) == 0 {
                    Formula::forall(&name, "Cell", body)
                } else {
                    Formula::exists(&name, "Cell", body)
                }
            }
        }
    }
    go(rng, depth, max_bound, &mut Vec::new())
}

pub fn program(model: &Model, formula: &str) -> Arc<sosmc_core::bltl::PropertyProgram> {
    let f = sosmc_core::bltl::parse_formula(formula).expect("formula parses");
    Arc::new(sosmc_core::bltl::compile(&f, &model.schema).expect("formula compiles"))
}

/// Probability that the chain of [`CHAIN`] has reached `s = 2` within
/// `steps` transitions, by enumerating every path.
pub fn chain_reach_exact(steps: u32) -> f64 {
    fn go(s: u8, left: u32) -> f64 {
        if s == 2 {
            return 1.0;
        }
        if left == 0 {
            return 0.0;
        }
        let (fwd, back) = if s == 0 { (1, 0) } else { (2, 0) };
        0.25 * go(fwd, left - 1) + 0.75 * go(back, left - 1)
    }
    go(0, steps)
}
