use std::sync::Arc;

use thiserror::Error;

use super::validate::{schema_of, ROOT_TYPE};
use super::{validate, ActionDecl, Diagnostic, DiagnosticKind, ModelDefinition};
use crate::model::{
    apply_change, HierarchicalComponent, ModelError, Path, Relation, SimulationState, StructuralChange, Subcomponent,
    System,
};
use crate::sim::{Action, Rhs, AttrTemplate, Model, SimError, SimpleCommand, StreamBank, Templates, TypeTemplate, INIT_TRACE};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("type error: {0}")]
    TypeError(Diagnostic),
    #[error("cyclic initialization: {0}")]
    CyclicInit(Diagnostic),
    #[error("descriptor has {} error(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Init(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn templates_of(def: &ModelDefinition) -> Templates {
    let mut templates = Templates::default();
    for t in &def.types {
        let commands = t
            .commands
            .iter()
            .map(|c| SimpleCommand {
                id: c.name.clone(),
                guard: c.guard.clone(),
                rate: c.rate.clone(),
                actions: c
                    .actions
                    .iter()
                    .map(|a| match a {
                        ActionDecl::Assign { target, value } => Action::Assign { target: target.clone(), value: value.clone() },
                        ActionDecl::Spawn { type_name, parent } => {
                            Action::Spawn { parent: parent.clone(), type_name: type_name.clone() }
                        }
                        ActionDecl::Despawn(p) => Action::Despawn(p.clone()),
                    })
                    .collect(),
            })
            .collect();
        let tpl = TypeTemplate {
            name: t.name.clone(),
            attributes: t
                .attributes
                .iter()
                .map(|a| AttrTemplate { name: a.name.clone(), ty: a.ty, init: a.init.clone() })
                .collect(),
            variables: t.variables.iter().map(|v| (v.name.clone(), v.spec.clone())).collect(),
            commands,
        };
        templates.types.insert(t.name.clone(), tpl);
    }
    templates
}

/// Instantiates every declared instance in order, wires relations and
/// grounds commands. Random initializers draw from streams keyed by
/// `global_seed`, so the same inputs always give the same initial state.
pub fn build_model(def: &ModelDefinition, global_seed: u64) -> Result<Model, BuildError> {
    let mut errors: Vec<Diagnostic> = def.errors().cloned().collect();
    if !errors.iter().any(|d| d.kind == DiagnosticKind::Syntax) {
        for d in validate(def) {
            if d.is_error() && !errors.contains(&d) {
                errors.push(d);
            }
        }
    }
    if let Some(d) = errors.iter().find(|d| d.kind == DiagnosticKind::CyclicInit) {
        return Err(BuildError::CyclicInit(d.clone()));
    }
    if let Some(d) = errors.iter().find(|d| d.kind == DiagnosticKind::Type) {
        return Err(BuildError::TypeError(d.clone()));
    }
    if !errors.is_empty() {
        return Err(BuildError::Invalid(errors));
    }

    let templates = templates_of(def);
    let mut sys = System::new(HierarchicalComponent::new(ROOT_TYPE), true);
    let mut bank = StreamBank::new(global_seed, INIT_TRACE);
    for inst in &def.instances {
        let parent = inst.parent.clone().unwrap_or_else(Path::root);
        let state = SimulationState::initial(sys.clone());
        let component = if inst.overrides.is_empty() {
            templates.instantiate(&inst.type_name, &inst.path(), &state, &mut bank)?
        } else {
            let mut local = templates.clone();
            if let Some(tpl) = local.types.get_mut(&inst.type_name) {
                for o in &inst.overrides {
                    if let Some(a) = tpl.attributes.iter_mut().find(|a| a.name == o.name) {
                        a.init = Rhs::Expr(o.value.clone());
                    }
                }
            }
            local.instantiate(&inst.type_name, &inst.path(), &state, &mut bank)?
        };
        apply_change(&mut sys, &StructuralChange::Add { parent, sub: Subcomponent { name: inst.name.clone(), component: Arc::new(component) } })?;
    }
    for r in &def.relations {
        let parent = r.from.parent().unwrap_or_else(Path::root);
        let relation = Relation {
            name: r.name.clone(),
            from: r.from.last().cloned().unwrap_or_default(),
            to: r.to.last().cloned().unwrap_or_default(),
        };
        apply_change(&mut sys, &StructuralChange::AddRelation { parent, relation })?;
    }
    sys.open = def.open;
    sys.generation = 0;
    sys.validate()?;
    Ok(Model::new(SimulationState::initial(sys), templates, schema_of(def)))
}
