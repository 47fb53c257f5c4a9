//! Discrete-time execution of guarded commands.
//!
//! Every step picks one enabled command with probability proportional to its
//! rate and applies its actions atomically: all right-hand sides are
//! evaluated against the pre-step state, then the writes and structural
//! changes are applied in listed order. A state with no enabled command
//! stutters (time advances, nothing else changes).

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{
    apply_change, Attribute, AtomicComponent, Component, HierarchicalComponent, ModelError, Path, SimulationState,
    StructuralChange, Subcomponent, System, Value, ValueType,
};
use crate::schema::Schema;
use crate::stochastic::{derive_stream, eval_expr, observe, DistributionSpec, EvalError, RandomVariable, RngStream};
use crate::syntax::Expr;

/// Stream id reserved for command selection.
pub const SELECTION_STREAM: &str = "$select";

/// Trace index used for observations made while building the initial state.
pub const INIT_TRACE: u64 = u64::MAX;

/// Right-hand side of an assignment or attribute initializer.
#[derive(Clone, Debug, PartialEq)]
pub enum Rhs {
    Expr(Expr),
    /// Fresh observation of a random variable (a local name in templates, a
    /// full variable id once grounded).
    Observe(Arc<str>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Assign { target: Path, value: Rhs },
    Spawn { parent: Path, type_name: Arc<str> },
    Despawn(Path),
}

/// A grounded `(guard, rate, actions)` command.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleCommand {
    pub id: Arc<str>,
    pub guard: Expr,
    pub rate: Expr,
    pub actions: Vec<Action>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttrTemplate {
    pub name: Arc<str>,
    pub ty: ValueType,
    pub init: Rhs,
}

/// Per-type declarations; expressions are still instance relative.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeTemplate {
    pub name: Arc<str>,
    pub attributes: Vec<AttrTemplate>,
    pub variables: Vec<(Arc<str>, DistributionSpec)>,
    pub commands: Vec<SimpleCommand>,
}

impl TypeTemplate {
    pub fn is_atomic(&self) -> bool {
        !self.attributes.is_empty()
    }

    fn rewrite_path(&self, instance: &Path, p: &Path) -> Path {
        let segs = p.segments();
        match segs {
            [only] if self.attributes.iter().any(|a| a.name == *only) => instance.child(only.clone()),
            [first, rest @ ..] if &**first == "self" => instance.join(rest),
            _ => p.clone(),
        }
    }

    fn rewrite_expr(&self, instance: &Path, e: &Expr) -> Expr {
        e.map_refs(&|p| Expr::Ref(self.rewrite_path(instance, p)))
    }

    fn ground_command(&self, instance: &Path, cmd: &SimpleCommand) -> SimpleCommand {
        let actions = cmd
            .actions
            .iter()
            .map(|a| match a {
                Action::Assign { target, value } => Action::Assign {
                    target: self.rewrite_path(instance, target),
                    value: match value {
                        Rhs::Expr(e) => Rhs::Expr(self.rewrite_expr(instance, e)),
                        Rhs::Observe(v) => Rhs::Observe(variable_id(instance, v)),
                    },
                },
                Action::Spawn { parent, type_name } => {
                    Action::Spawn { parent: self.rewrite_path(instance, parent), type_name: type_name.clone() }
                }
                Action::Despawn(p) => Action::Despawn(self.rewrite_path(instance, p)),
            })
            .collect();
        SimpleCommand {
            id: variable_id(instance, &cmd.id),
            guard: self.rewrite_expr(instance, &cmd.guard),
            rate: self.rewrite_expr(instance, &cmd.rate),
            actions,
        }
    }
}

fn variable_id(instance: &Path, local: &str) -> Arc<str> {
    if instance.is_root() {
        local.into()
    } else {
        format!("{instance}.{local}").into()
    }
}

/// Commands and random variables of every instance in one system snapshot.
#[derive(Clone, Debug, Default)]
pub struct Grounding {
    pub generation: u64,
    pub commands: Vec<SimpleCommand>,
    pub variables: HashMap<Arc<str>, RandomVariable>,
}

/// All type templates of a model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Templates {
    pub types: BTreeMap<Arc<str>, TypeTemplate>,
}

impl Templates {
    /// Grounds every instance's commands and variables, depth-first in
    /// declaration order.
    pub fn ground(&self, sys: &System) -> Grounding {
        let mut g = Grounding { generation: sys.generation, ..Grounding::default() };
        let mut add = |path: &Path, ty: &str| {
            if let Some(t) = self.types.get(ty) {
                for c in &t.commands {
                    g.commands.push(t.ground_command(path, c));
                }
                for (name, spec) in &t.variables {
                    let id = variable_id(path, name);
                    let spec = spec.map_exprs(&|e| t.rewrite_expr(path, e));
                    g.variables.insert(id.clone(), RandomVariable { id, spec });
                }
            }
        };
        add(&Path::root(), &sys.root.type_name);
        sys.for_each_component(|path, c| add(path, c.type_name()));
        g
    }

    /// Creates a fresh instance of `type_name` at `path`, evaluating
    /// initializers in declaration order against `state`. Earlier attributes
    /// of the new instance are visible to later initializers.
    pub fn instantiate(
        &self,
        type_name: &str,
        path: &Path,
        state: &SimulationState,
        streams: &mut StreamBank,
    ) -> Result<Component, SimError> {
        let tpl = self.types.get(type_name).ok_or_else(|| SimError::UnknownType(type_name.to_string()))?;
        if !tpl.is_atomic() {
            return Ok(HierarchicalComponent::new(tpl.name.clone()).into());
        }
        let mut attrs: Vec<Attribute> = Vec::with_capacity(tpl.attributes.len());
        for a in &tpl.attributes {
            let subst = |p: &Path| -> Expr {
                let own = match p.segments() {
                    [only] => Some(only),
                    [s, attr] if &**s == "self" => Some(attr),
                    _ => None,
                };
                if let Some(done) = own.and_then(|n| attrs.iter().find(|x| x.name == *n)) {
                    return Expr::Lit(done.value.clone());
                }
                Expr::Ref(tpl.rewrite_path(path, p))
            };
            let init_err = |source| SimError::Init { attribute: format!("{path}.{}", a.name), source };
            let value = match &a.init {
                Rhs::Expr(e) => eval_expr(&e.map_refs(&subst), state).map_err(init_err)?,
                Rhs::Observe(v) => {
                    let spec = tpl
                        .variables
                        .iter()
                        .find(|(n, _)| n == v)
                        .ok_or_else(|| SimError::UnknownVariable(v.to_string()))?
                        .1
                        .map_exprs(&|e| e.map_refs(&subst));
                    let var = RandomVariable { id: variable_id(path, v), spec };
                    observe(&var, state, streams.stream(&var.id)).map_err(init_err)?
                }
            };
            let found = value.value_type();
            let value = value.coerce_to(a.ty).ok_or_else(|| {
                init_err(EvalError::TypeMismatch(format!("initializer yields {found}, expected {}", a.ty)))
            })?;
            if matches!(value, Value::Real(r) if !r.is_finite()) {
                return Err(init_err(EvalError::Model(ModelError::NonFinite(format!("{path}.{}", a.name)))));
            }
            attrs.push(Attribute { name: a.name.clone(), declared_type: a.ty, value });
        }
        Ok(AtomicComponent { type_name: tpl.name.clone(), attributes: attrs }.into())
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SimError {
    #[error("command `{command}`: {source}")]
    Command { command: Arc<str>, source: EvalError },
    #[error("command `{command}` has negative rate {rate}")]
    NegativeRate { command: Arc<str>, rate: f64 },
    #[error("enabled commands all have zero rate")]
    AllRatesZero,
    #[error("unknown random variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown component type `{0}`")]
    UnknownType(String),
    #[error("initializing `{attribute}`: {source}")]
    Init { attribute: String, source: EvalError },
}

/// Lazily derived per-variable streams of one trace.
#[derive(Clone, Debug)]
pub struct StreamBank {
    seed: u64,
    trace_index: u64,
    streams: HashMap<Arc<str>, RngStream>,
}

impl StreamBank {
    pub fn new(seed: u64, trace_index: u64) -> Self {
        StreamBank { seed, trace_index, streams: HashMap::new() }
    }

    pub fn stream(&mut self, id: &str) -> &mut RngStream {
        if !self.streams.contains_key(id) {
            self.streams.insert(id.into(), derive_stream(self.seed, self.trace_index, id));
        }
        self.streams.get_mut(id).unwrap()
    }
}

/// A compiled model: the initial snapshot plus everything needed to step it.
#[derive(Clone, Debug)]
pub struct Model {
    pub initial: SimulationState,
    pub templates: Arc<Templates>,
    pub schema: Arc<Schema>,
    grounding: Arc<Grounding>,
}

impl Model {
    pub fn new(initial: SimulationState, templates: Templates, schema: Schema) -> Self {
        let grounding = Arc::new(templates.ground(&initial.system));
        Model { initial, templates: Arc::new(templates), schema: Arc::new(schema), grounding }
    }

    /// Grounded commands of the initial system.
    pub fn commands(&self) -> &[SimpleCommand] {
        &self.grounding.commands
    }

    pub fn variables(&self) -> &HashMap<Arc<str>, RandomVariable> {
        &self.grounding.variables
    }

    pub fn trace(&self, seed: u64, trace_index: u64) -> Trace<'_> {
        Trace::new(self, seed, trace_index)
    }
}

/// Enabled commands paired with their evaluated rates, in declaration order.
pub fn enabled_commands<'c>(
    state: &SimulationState,
    commands: &'c [SimpleCommand],
) -> Result<Vec<(&'c SimpleCommand, f64)>, SimError> {
    let mut out = Vec::new();
    for cmd in commands {
        let err = |source| SimError::Command { command: cmd.id.clone(), source };
        let enabled = match eval_expr(&cmd.guard, state).map_err(err)? {
            Value::Bool(b) => b,
            v => return Err(err(EvalError::TypeMismatch(format!("guard yields {}", v.value_type())))),
        };
        if !enabled {
            continue;
        }
        let rv = eval_expr(&cmd.rate, state).map_err(err)?;
        let rate = rv
            .as_f64()
            .ok_or_else(|| err(EvalError::TypeMismatch(format!("rate yields {}", rv.value_type()))))?;
        if rate.is_nan() || rate < 0.0 || rate.is_infinite() {
            return Err(SimError::NegativeRate { command: cmd.id.clone(), rate });
        }
        out.push((cmd, rate));
    }
    Ok(out)
}

enum Pending {
    Set(Path, Value),
    Spawn(Path, Arc<str>),
    Despawn(Path),
}

/// Performs one step from `state`.
pub fn step(
    state: &SimulationState,
    grounding: &Grounding,
    templates: &Templates,
    streams: &mut StreamBank,
) -> Result<SimulationState, SimError> {
    let enabled = enabled_commands(state, &grounding.commands)?;
    let next = |system: Arc<System>, changed: bool| SimulationState {
        step: state.step + 1,
        time: state.time + 1,
        system,
        structure_changed: changed,
    };
    if enabled.is_empty() {
        return Ok(next(state.system.clone(), false));
    }
    let total: f64 = enabled.iter().map(|(_, r)| r).sum();
    if total <= 0.0 {
        return Err(SimError::AllRatesZero);
    }
    let target = streams.stream(SELECTION_STREAM).next_f64() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for (cmd, rate) in &enabled {
        acc += rate;
        if *rate > 0.0 {
            chosen = Some(*cmd);
            if target < acc {
                break;
            }
        }
    }
    let cmd = chosen.expect("a positive rate exists");
    let err = |source| SimError::Command { command: cmd.id.clone(), source };

    let mut pending = Vec::with_capacity(cmd.actions.len());
    for action in &cmd.actions {
        pending.push(match action {
            Action::Assign { target, value: Rhs::Expr(e) } => {
                Pending::Set(target.clone(), eval_expr(e, state).map_err(err)?)
            }
            Action::Assign { target, value: Rhs::Observe(id) } => {
                let var = grounding.variables.get(id).ok_or_else(|| SimError::UnknownVariable(id.to_string()))?;
                Pending::Set(target.clone(), observe(var, state, streams.stream(id)).map_err(err)?)
            }
            Action::Spawn { parent, type_name } => Pending::Spawn(parent.clone(), type_name.clone()),
            Action::Despawn(p) => Pending::Despawn(p.clone()),
        });
    }

    let mut sys = (*state.system).clone();
    let mut changed = false;
    for p in pending {
        match p {
            Pending::Set(path, v) => sys.set_attribute(&path, v).map_err(|e| err(e.into()))?,
            Pending::Spawn(parent, ty) => {
                if !sys.open {
                    return Err(err(ModelError::ClosedSystem.into()));
                }
                let name = fresh_name(&mut sys, &parent, &ty).map_err(|e| err(e.into()))?;
                let path = parent.child(name.clone());
                let component = templates.instantiate(&ty, &path, state, streams)?;
                let sub = Subcomponent { name, component: Arc::new(component) };
                apply_change(&mut sys, &StructuralChange::Add { parent, sub }).map_err(|e| err(e.into()))?;
                changed = true;
            }
            Pending::Despawn(path) => {
                apply_change(&mut sys, &StructuralChange::Remove(path)).map_err(|e| err(e.into()))?;
                changed = true;
            }
        }
    }
    Ok(next(Arc::new(sys), changed))
}

fn fresh_name(sys: &mut System, parent: &Path, ty: &str) -> Result<Arc<str>, ModelError> {
    sys.component_ref(parent)?;
    loop {
        sys.spawn_counter += 1;
        let name: Arc<str> = format!("{ty}_{}", sys.spawn_counter).into();
        if sys.resolve(&parent.child(name.clone())).is_err() {
            return Ok(name);
        }
    }
}

/// One lazily extended simulation run.
#[derive(Debug)]
pub struct Trace<'m> {
    model: &'m Model,
    streams: StreamBank,
    grounding: Arc<Grounding>,
    history: VecDeque<SimulationState>,
    retain: Option<usize>,
}

impl<'m> Trace<'m> {
    pub fn new(model: &'m Model, seed: u64, trace_index: u64) -> Self {
        let mut history = VecDeque::new();
        history.push_back(model.initial.clone());
        Trace {
            model,
            streams: StreamBank::new(seed, trace_index),
            grounding: model.grounding.clone(),
            history,
            retain: None,
        }
    }

    /// Keeps at most `n` (at least one) most recent states in memory.
    pub fn with_retention(mut self, n: usize) -> Self {
        self.retain = Some(n.max(1));
        self.evict();
        self
    }

    pub fn current(&self) -> &SimulationState {
        self.history.back().expect("trace is never empty")
    }

    /// Number of states produced so far, the initial one included.
    pub fn len(&self) -> u64 {
        self.current().step + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// State at `step`, if it is still retained.
    pub fn state(&self, step: u64) -> Option<&SimulationState> {
        let first = self.history.front()?.step;
        self.history.get(usize::try_from(step.checked_sub(first)?).ok()?)
    }

    pub fn retained(&self) -> usize {
        self.history.len()
    }

    /// Simulates one more step and returns the new state.
    pub fn advance(&mut self) -> Result<&SimulationState, SimError> {
        let cur = self.history.back().expect("trace is never empty");
        if cur.system.generation != self.grounding.generation {
            self.grounding = Arc::new(self.model.templates.ground(&cur.system));
        }
        let next = step(cur, &self.grounding, &self.model.templates, &mut self.streams)?;
        self.history.push_back(next);
        self.evict();
        Ok(self.current())
    }

    /// Extends the trace until it reaches step `target` (so that it holds
    /// `target + 1` states). Already produced states are never recomputed.
    pub fn extend(&mut self, target: u64) -> Result<(), SimError> {
        while self.current().step < target {
            self.advance()?;
        }
        Ok(())
    }

    fn evict(&mut self) {
        if let Some(n) = self.retain {
            while self.history.len() > n {
                self.history.pop_front();
            }
        }
    }
}

/// One debug line: `step<TAB>time<TAB>path=value...` over all attributes in
/// depth-first order.
pub fn dump_state(state: &SimulationState) -> String {
    let mut line = format!("{}\t{}", state.step, state.time);
    state.system.for_each_component(|path, c| {
        if let Component::Atomic(a) = c {
            for attr in &a.attributes {
                let _ = write!(line, "\t{path}.{}={}", attr.name, attr.value);
            }
        }
    });
    line
}
