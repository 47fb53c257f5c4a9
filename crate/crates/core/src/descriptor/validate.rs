use std::collections::HashSet;
use std::sync::Arc;

use super::{ActionDecl, Diagnostic, DiagnosticKind, InstanceDecl, ModelDefinition, TypeDecl};
use crate::model::{HierarchicalComponent, Path, SimulationState, System, ValueType};
use crate::schema::{PathType, Schema, Scope, TypeError, TypeKind};
use crate::sim::Rhs;
use crate::stochastic::{eval_expr, DistributionSpec};
use crate::syntax::{Expr, Pos};

/// Name of the implicit root component.
pub(crate) const ROOT_TYPE: &str = "System";

/// Static schema of a definition: declared types plus the instance tree.
pub(crate) fn schema_of(def: &ModelDefinition) -> Schema {
    let mut schema = Schema::new();
    schema.set_root_type(ROOT_TYPE.into());
    for t in &def.types {
        let kind = if t.is_atomic() {
            TypeKind::Atomic { attributes: t.attributes.iter().map(|a| (a.name.clone(), a.ty)).collect() }
        } else {
            TypeKind::Hierarchical
        };
        schema.declare_type(t.name.clone(), kind);
    }
    for i in &def.instances {
        schema.insert_instance(&i.parent.clone().unwrap_or_else(Path::root), i.name.clone(), i.type_name.clone());
    }
    schema
}

fn assignable(to: ValueType, from: ValueType) -> bool {
    to == from || (to == ValueType::Real && from == ValueType::Int)
}

fn type_diag(pos: Pos, context: &str, e: TypeError) -> Diagnostic {
    let kind = match e {
        TypeError::UnknownComponentType(_) => DiagnosticKind::UndeclaredType,
        TypeError::UnknownPath(_) | TypeError::UnboundName(_) => DiagnosticKind::UnknownPath,
        TypeError::Mismatch(_) => DiagnosticKind::Type,
    };
    Diagnostic::error(kind, pos, format!("{context}: {e}"))
}

/// Type-checks every declaration. Pure; does not look at existing diagnostics.
pub fn validate(def: &ModelDefinition) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let schema = schema_of(def);

    let mut type_names = HashSet::new();
    for t in &def.types {
        if &*t.name == ROOT_TYPE {
            out.push(Diagnostic::error(DiagnosticKind::Duplicate, t.pos, format!("type name `{ROOT_TYPE}` is reserved")));
        }
        if !type_names.insert(t.name.clone()) {
            out.push(Diagnostic::error(DiagnosticKind::Duplicate, t.pos, format!("type `{}` declared twice", t.name)));
        }
        check_type(def, &schema, t, &mut out);
    }

    let mut paths = HashSet::new();
    for i in &def.instances {
        let Some(t) = def.type_decl(&i.type_name) else {
            out.push(Diagnostic::error(
                DiagnosticKind::UndeclaredType,
                i.pos,
                format!("instance `{}` has undeclared type `{}`", i.name, i.type_name),
            ));
            continue;
        };
        check_overrides(&schema, t, i, &mut out);
        if let Some(parent) = &i.parent {
            match def.instances.iter().take_while(|j| !std::ptr::eq(*j, i)).find(|j| j.path() == *parent) {
                None => out.push(Diagnostic::error(
                    DiagnosticKind::UnknownPath,
                    i.pos,
                    format!("parent `{parent}` of `{}` is not an earlier instance", i.name),
                )),
                Some(p) if def.type_decl(&p.type_name).is_some_and(TypeDecl::is_atomic) => out.push(Diagnostic::error(
                    DiagnosticKind::Structure,
                    i.pos,
                    format!("parent `{parent}` is atomic and cannot contain `{}`", i.name),
                )),
                Some(_) => {}
            }
        }
        if !paths.insert(i.path()) {
            out.push(Diagnostic::error(DiagnosticKind::Duplicate, i.pos, format!("instance `{}` declared twice", i.path())));
        }
    }

    let mut rel_names = HashSet::new();
    for r in &def.relations {
        if !rel_names.insert(r.name.clone()) {
            out.push(Diagnostic::error(DiagnosticKind::Duplicate, r.pos, format!("relation `{}` declared twice", r.name)));
        }
        for end in [&r.from, &r.to] {
            if !paths.contains(end) {
                out.push(Diagnostic::error(
                    DiagnosticKind::UnknownPath,
                    r.pos,
                    format!("relation `{}` endpoint `{end}` is not an instance", r.name),
                ));
            }
        }
        if r.from == r.to || r.from.parent() != r.to.parent() {
            out.push(Diagnostic::error(
                DiagnosticKind::Structure,
                r.pos,
                format!("relation `{}` must connect two distinct siblings", r.name),
            ));
        }
    }
    out
}

fn own_attr<'a>(t: &TypeDecl, p: &'a Path) -> Option<&'a Arc<str>> {
    match p.segments() {
        [only] if t.attributes.iter().any(|a| a.name == *only) => Some(only),
        [s, attr] if &**s == "self" => Some(attr),
        _ => None,
    }
}

/// First own attribute referenced by `e` that is not declared before index `idx`.
fn forward_ref(t: &TypeDecl, idx: usize, e: &Expr) -> Option<Arc<str>> {
    let mut found = None;
    e.visit_refs(&mut Vec::new(), &mut |p, binders| {
        if found.is_some() || p.first().is_some_and(|f| binders.contains(&&**f)) {
            return;
        }
        if let Some(n) = own_attr(t, p) {
            if !t.attributes[..idx].iter().any(|x| x.name == *n) {
                found = Some(n.clone());
            }
        }
    });
    found
}

fn check_overrides(schema: &Schema, t: &TypeDecl, inst: &InstanceDecl, out: &mut Vec<Diagnostic>) {
    let scope = Scope { self_type: Some(t.name.clone()), ..Scope::default() };
    let mut seen = HashSet::new();
    for o in &inst.overrides {
        if !seen.insert(o.name.clone()) {
            out.push(Diagnostic::error(DiagnosticKind::Duplicate, o.pos, format!("`{}` overridden twice", o.name)));
        }
        let Some(idx) = t.attributes.iter().position(|a| a.name == o.name) else {
            out.push(Diagnostic::error(
                DiagnosticKind::UnknownPath,
                o.pos,
                format!("type `{}` has no attribute `{}`", t.name, o.name),
            ));
            continue;
        };
        if let Some(n) = forward_ref(t, idx, &o.value) {
            out.push(Diagnostic::error(
                DiagnosticKind::CyclicInit,
                o.pos,
                format!("override of `{}` references `{n}`, which is not initialized yet", o.name),
            ));
            continue;
        }
        let ty = t.attributes[idx].ty;
        match schema.type_of(&o.value, &scope) {
            Ok(found) if assignable(ty, found) => {}
            Ok(found) => out.push(Diagnostic::error(
                DiagnosticKind::Type,
                o.pos,
                format!("override of `{}` has type {found}, expected {ty}", o.name),
            )),
            Err(e) => out.push(type_diag(o.pos, &format!("override of `{}`", o.name), e)),
        }
    }
}

fn check_type(def: &ModelDefinition, schema: &Schema, t: &TypeDecl, out: &mut Vec<Diagnostic>) {
    let scope = Scope { self_type: Some(t.name.clone()), ..Scope::default() };
    let mut seen = HashSet::new();
    for a in &t.attributes {
        if !seen.insert(a.name.clone()) {
            out.push(Diagnostic::error(DiagnosticKind::Duplicate, a.pos, format!("attribute `{}` declared twice", a.name)));
        }
    }
    seen.clear();
    for v in &t.variables {
        if !seen.insert(v.name.clone()) {
            out.push(Diagnostic::error(DiagnosticKind::Duplicate, v.pos, format!("random variable `{}` declared twice", v.name)));
        }
        let pscope = Scope { uniform: matches!(v.spec, DistributionSpec::CustomReal { .. } | DistributionSpec::CustomInt { .. }), ..scope.clone() };
        for p in v.spec.params() {
            match schema.type_of(p, &pscope) {
                Ok(ty) if ty.is_numeric() => {}
                Ok(ty) => out.push(Diagnostic::error(
                    DiagnosticKind::Type,
                    v.pos,
                    format!("parameter `{p}` of `{}` must be numeric, found {ty}", v.name),
                )),
                Err(e) => out.push(type_diag(v.pos, &format!("random variable `{}`", v.name), e)),
            }
        }
        if let DistributionSpec::UniformInt { min, max } = &v.spec {
            for p in [min, max] {
                if schema.type_of(p, &scope) == Ok(ValueType::Real) {
                    out.push(Diagnostic::error(
                        DiagnosticKind::Type,
                        v.pos,
                        format!("bounds of uniform_int `{}` must be integers", v.name),
                    ));
                }
            }
        }
    }

    // initializers may only see attributes declared before them
    for (idx, a) in t.attributes.iter().enumerate() {
        let mut refs: Vec<Arc<str>> = Vec::new();
        let mut collect = |e: &Expr| refs.extend(forward_ref(t, idx, e));
        let found = match &a.init {
            Rhs::Expr(e) => {
                collect(e);
                schema.type_of(e, &scope)
            }
            Rhs::Observe(v) => match t.variables.iter().find(|x| x.name == *v) {
                Some(var) => {
                    for p in var.spec.params() {
                        collect(p);
                    }
                    Ok(var.spec.value_type())
                }
                None => Err(TypeError::UnknownPath(v.to_string())),
            },
        };
        if let Some(n) = refs.first() {
            out.push(Diagnostic::error(
                DiagnosticKind::CyclicInit,
                a.pos,
                format!("initializer of `{}` references `{n}`, which is not initialized yet", a.name),
            ));
            continue;
        }
        match found {
            Ok(ty) if assignable(a.ty, ty) => {}
            Ok(ty) => out.push(Diagnostic::error(
                DiagnosticKind::Type,
                a.pos,
                format!("initializer of `{}` has type {ty}, expected {}", a.name, a.ty),
            )),
            Err(e) => out.push(type_diag(a.pos, &format!("initializer of `{}`", a.name), e)),
        }
    }

    seen.clear();
    for c in &t.commands {
        if !seen.insert(c.name.clone()) {
            out.push(Diagnostic::error(DiagnosticKind::Duplicate, c.pos, format!("command `{}` declared twice", c.name)));
        }
        let ctx = format!("command `{}`", c.name);
        match schema.type_of(&c.guard, &scope) {
            Ok(ValueType::Bool) => {}
            Ok(ty) => out.push(Diagnostic::error(
                DiagnosticKind::Type,
                c.pos,
                format!("{ctx}: guard must be boolean, found {ty}"),
            )),
            Err(e) => out.push(type_diag(c.pos, &ctx, e)),
        }
        match schema.type_of(&c.rate, &scope) {
            Ok(ty) if ty.is_numeric() => {
                if c.rate.is_constant() {
                    let probe = SimulationState::initial(System::new(HierarchicalComponent::new(ROOT_TYPE), false));
                    if let Ok(r) = eval_expr(&c.rate, &probe).map(|v| v.as_f64().unwrap_or(0.0)) {
                        if r < 0.0 {
                            out.push(Diagnostic::warning(
                                DiagnosticKind::Type,
                                c.pos,
                                format!("{ctx}: constant rate {r} is negative and fails if selected"),
                            ));
                        }
                    }
                }
            }
            Ok(ty) => out.push(Diagnostic::error(DiagnosticKind::Type, c.pos, format!("{ctx}: rate must be numeric, found {ty}"))),
            Err(e) => out.push(type_diag(c.pos, &ctx, e)),
        }
        for act in &c.actions {
            check_action(def, schema, t, &scope, c.pos, &ctx, act, out);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn check_action(
    def: &ModelDefinition,
    schema: &Schema,
    t: &TypeDecl,
    scope: &Scope,
    pos: Pos,
    ctx: &str,
    act: &ActionDecl,
    out: &mut Vec<Diagnostic>,
) {
    match act {
        ActionDecl::Assign { target, value } => {
            let target_ty = match schema.path_type(target, scope) {
                Ok(PathType::Value(ty)) => ty,
                Ok(PathType::Component(_)) => {
                    out.push(Diagnostic::error(DiagnosticKind::Type, pos, format!("{ctx}: `{target}` is not an attribute")));
                    return;
                }
                Err(e) => {
                    out.push(type_diag(pos, ctx, e));
                    return;
                }
            };
            let value_ty = match value {
                Rhs::Expr(e) => schema.type_of(e, scope),
                Rhs::Observe(v) => t
                    .variables
                    .iter()
                    .find(|x| x.name == *v)
                    .map(|x| x.spec.value_type())
                    .ok_or_else(|| TypeError::UnknownPath(format!("random variable {v}"))),
            };
            match value_ty {
                Ok(ty) if assignable(target_ty, ty) => {}
                Ok(ty) => out.push(Diagnostic::error(
                    DiagnosticKind::Type,
                    pos,
                    format!("{ctx}: cannot assign {ty} to `{target}` of type {target_ty}"),
                )),
                Err(e) => out.push(type_diag(pos, ctx, e)),
            }
        }
        ActionDecl::Spawn { type_name, parent } => {
            if def.type_decl(type_name).is_none() {
                out.push(Diagnostic::error(
                    DiagnosticKind::UndeclaredType,
                    pos,
                    format!("{ctx}: spawn of undeclared type `{type_name}`"),
                ));
            }
            match schema.path_type(parent, scope) {
                Ok(PathType::Component(pt)) if matches!(schema.type_kind(&pt), Some(TypeKind::Hierarchical)) => {}
                Ok(_) => out.push(Diagnostic::error(
                    DiagnosticKind::Structure,
                    pos,
                    format!("{ctx}: spawn target `{parent}` is not a container"),
                )),
                Err(e) => out.push(type_diag(pos, ctx, e)),
            }
            if !def.open {
                out.push(Diagnostic::warning(DiagnosticKind::Structure, pos, format!("{ctx}: spawn in a closed system fails at run time")));
            }
        }
        ActionDecl::Despawn(p) => {
            match schema.path_type(p, scope) {
                Ok(PathType::Component(_)) if !p.is_root() => {}
                Ok(_) => out.push(Diagnostic::error(DiagnosticKind::Structure, pos, format!("{ctx}: `{p}` is not a component"))),
                Err(e) => out.push(type_diag(pos, ctx, e)),
            }
            if !def.open {
                out.push(Diagnostic::warning(DiagnosticKind::Structure, pos, format!("{ctx}: despawn in a closed system fails at run time")));
            }
        }
    }
}
