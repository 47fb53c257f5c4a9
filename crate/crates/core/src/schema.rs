//! Static view of a model used to type-check expressions before they run.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{Component, HierarchicalComponent, Path, System, ValueType};
use crate::syntax::{BinOp, Builtin, CollectionOp, Expr, UnOp};

#[derive(Clone, Debug, PartialEq)]
pub enum TypeKind {
    Atomic { attributes: Vec<(Arc<str>, ValueType)> },
    Hierarchical,
}

#[derive(Clone, Debug, PartialEq)]
struct InstanceNode {
    type_name: Arc<str>,
    children: Vec<(Arc<str>, InstanceNode)>,
}

/// Component types plus the statically known instance tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    types: BTreeMap<Arc<str>, TypeKind>,
    root: InstanceNode,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum TypeError {
    #[error("unknown path `{0}`")]
    UnknownPath(String),
    #[error("unknown component type `{0}`")]
    UnknownComponentType(String),
    #[error("unbound name `{0}`")]
    UnboundName(String),
    #[error("{0}")]
    Mismatch(String),
}

/// What a path denotes statically.
#[derive(Clone, Debug, PartialEq)]
pub enum PathType {
    Value(ValueType),
    Component(Arc<str>),
}

/// Names in scope while type-checking.
#[derive(Clone, Debug, Default)]
pub struct Scope {
    /// Quantifier binders and the component type they range over.
    pub binders: Vec<(Arc<str>, Arc<str>)>,
    /// When checking a type declaration: the type whose bare attribute names
    /// (and `self`) are in scope.
    pub self_type: Option<Arc<str>>,
    /// Whether `u` is allowed.
    pub uniform: bool,
}

impl Scope {
    pub fn with_binder(&self, name: Arc<str>, ty: Arc<str>) -> Scope {
        let mut s = self.clone();
        s.binders.push((name, ty));
        s
    }
}

impl Schema {
    pub fn new() -> Self {
        Schema {
            types: BTreeMap::new(),
            root: InstanceNode { type_name: "System".into(), children: Vec::new() },
        }
    }

    /// Derives types and instances from a concrete system. Types that have
    /// no instance are unknown to the result; see [`Schema::declare_type`].
    pub fn from_system(sys: &System) -> Self {
        fn node(h: &HierarchicalComponent, types: &mut BTreeMap<Arc<str>, TypeKind>) -> InstanceNode {
            let mut children = Vec::new();
            for sub in &h.subcomponents {
                let child = match &*sub.component {
                    Component::Atomic(a) => {
                        types.entry(a.type_name.clone()).or_insert_with(|| TypeKind::Atomic {
                            attributes: a.attributes.iter().map(|x| (x.name.clone(), x.declared_type)).collect(),
                        });
                        InstanceNode { type_name: a.type_name.clone(), children: Vec::new() }
                    }
                    Component::Hierarchical(inner) => {
                        types.entry(inner.type_name.clone()).or_insert(TypeKind::Hierarchical);
                        node(inner, types)
                    }
                };
                children.push((sub.name.clone(), child));
            }
            InstanceNode { type_name: h.type_name.clone(), children }
        }
        let mut types = BTreeMap::new();
        types.insert(sys.root.type_name.clone(), TypeKind::Hierarchical);
        let root = node(&sys.root, &mut types);
        Schema { types, root }
    }

    pub fn declare_type(&mut self, name: Arc<str>, kind: TypeKind) {
        self.types.insert(name, kind);
    }

    /// Adds a statically known instance under `parent`. Returns false when
    /// the parent is unknown or the name is taken.
    pub fn insert_instance(&mut self, parent: &Path, name: Arc<str>, type_name: Arc<str>) -> bool {
        let mut node = &mut self.root;
        for seg in parent.segments() {
            match node.children.iter_mut().find(|(n, _)| n == seg) {
                Some((_, child)) => node = child,
                None => return false,
            }
        }
        if node.children.iter().any(|(n, _)| *n == name) {
            return false;
        }
        node.children.push((name, InstanceNode { type_name, children: Vec::new() }));
        true
    }

    pub fn set_root_type(&mut self, type_name: Arc<str>) {
        self.types.entry(type_name.clone()).or_insert(TypeKind::Hierarchical);
        self.root.type_name = type_name;
    }

    pub fn type_kind(&self, name: &str) -> Option<&TypeKind> {
        self.types.get(name)
    }

    pub fn attribute_type(&self, type_name: &str, attr: &str) -> Option<ValueType> {
        match self.types.get(type_name)? {
            TypeKind::Atomic { attributes } => attributes.iter().find(|(n, _)| &**n == attr).map(|(_, t)| *t),
            TypeKind::Hierarchical => None,
        }
    }

    fn member_type(&self, type_name: &Arc<str>, rest: &[Arc<str>], full: &Path) -> Result<PathType, TypeError> {
        match rest {
            [] => Ok(PathType::Component(type_name.clone())),
            [attr] => self
                .attribute_type(type_name, attr)
                .map(PathType::Value)
                .ok_or_else(|| TypeError::UnknownPath(full.to_string())),
            _ => Err(TypeError::UnknownPath(full.to_string())),
        }
    }

    /// Resolves a path under `scope`: binders first, then the attributes of
    /// `self_type`, then `self`, then absolute instance paths.
    pub fn path_type(&self, path: &Path, scope: &Scope) -> Result<PathType, TypeError> {
        let segs = path.segments();
        let Some(first) = segs.first() else {
            return Err(TypeError::UnknownPath(String::new()));
        };
        if let Some((_, ty)) = scope.binders.iter().rev().find(|(b, _)| b == first) {
            return self.member_type(ty, &segs[1..], path);
        }
        if let Some(st) = &scope.self_type {
            if segs.len() == 1 {
                if let Some(t) = self.attribute_type(st, first) {
                    return Ok(PathType::Value(t));
                }
            }
            if &**first == "self" {
                return self.member_type(st, &segs[1..], path);
            }
        }
        let mut node = &self.root;
        for (i, seg) in segs.iter().enumerate() {
            match node.children.iter().find(|(n, _)| n == seg) {
                Some((_, child)) => node = child,
                None => {
                    if i == 0 && !scope.binders.is_empty() {
                        return Err(TypeError::UnboundName(first.to_string()));
                    }
                    if i > 0 {
                        if let Some(TypeKind::Atomic { .. }) = self.types.get(&node.type_name) {
                            return self.member_type(&node.type_name, &segs[i..], path);
                        }
                    }
                    return Err(TypeError::UnknownPath(path.to_string()));
                }
            }
        }
        Ok(PathType::Component(node.type_name.clone()))
    }

    fn value_path(&self, path: &Path, scope: &Scope) -> Result<ValueType, TypeError> {
        match self.path_type(path, scope)? {
            PathType::Value(t) => Ok(t),
            PathType::Component(_) => {
                Err(TypeError::Mismatch(format!("`{path}` is a component, not a value")))
            }
        }
    }

    /// Infers the type of `e` or explains why it is ill-typed.
    pub fn type_of(&self, e: &Expr, scope: &Scope) -> Result<ValueType, TypeError> {
        use ValueType::*;
        match e {
            Expr::Lit(v) => Ok(v.value_type()),
            Expr::Ref(p) => self.value_path(p, scope),
            Expr::Time => Ok(Int),
            Expr::Uniform => {
                if scope.uniform {
                    Ok(Real)
                } else {
                    Err(TypeError::UnboundName("u".into()))
                }
            }
            Expr::Unary(UnOp::Not, x) => match self.type_of(x, scope)? {
                Bool => Ok(Bool),
                t => Err(TypeError::Mismatch(format!("`not` expects bool, found {t}"))),
            },
            Expr::Unary(UnOp::Neg, x) => match self.type_of(x, scope)? {
                t if t.is_numeric() => Ok(t),
                t => Err(TypeError::Mismatch(format!("negation expects a number, found {t}"))),
            },
            Expr::Binary(op, l, r) => {
                let (lt, rt) = (self.type_of(l, scope)?, self.type_of(r, scope)?);
                match op {
                    BinOp::And | BinOp::Or => {
                        if lt == Bool && rt == Bool {
                            Ok(Bool)
                        } else {
                            Err(TypeError::Mismatch(format!("`{}` expects bool operands", op_name(*op))))
                        }
                    }
                    BinOp::Eq | BinOp::Ne => {
                        if lt == rt || (lt.is_numeric() && rt.is_numeric()) {
                            Ok(Bool)
                        } else {
                            Err(TypeError::Mismatch(format!("cannot compare {lt} with {rt}")))
                        }
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        if (lt.is_numeric() && rt.is_numeric()) || (lt == Str && rt == Str) {
                            Ok(Bool)
                        } else {
                            Err(TypeError::Mismatch(format!("cannot order {lt} and {rt}")))
                        }
                    }
                    _ => numeric_result(lt, rt, op_name(*op)),
                }
            }
            Expr::Call(b, args) => {
                let tys = args.iter().map(|a| self.type_of(a, scope)).collect::<Result<Vec<_>, _>>()?;
                if let Some(t) = tys.iter().find(|t| !t.is_numeric()) {
                    return Err(TypeError::Mismatch(format!("`{}` expects numbers, found {t}", b.name())));
                }
                match b {
                    Builtin::Floor => Ok(Int),
                    Builtin::Abs => Ok(tys[0]),
                    Builtin::Min | Builtin::Max | Builtin::Mod => {
                        Ok(if tys.contains(&Real) { Real } else { Int })
                    }
                }
            }
            Expr::Count(t) => {
                self.check_type_name(t)?;
                Ok(Int)
            }
            Expr::Collection { op, type_name, binder, body } => {
                self.check_type_name(type_name)?;
                let inner = scope.with_binder(binder.clone(), type_name.clone());
                match self.type_of(body, &inner)? {
                    Bool => Ok(if *op == CollectionOp::SelectSize { Int } else { Bool }),
                    t => Err(TypeError::Mismatch(format!(
                        "body of `{binder}` quantifier must be boolean, found {t}"
                    ))),
                }
            }
        }
    }

    pub fn check_type_name(&self, t: &str) -> Result<(), TypeError> {
        if self.types.contains_key(t) {
            Ok(())
        } else {
            Err(TypeError::UnknownComponentType(t.to_string()))
        }
    }

    /// Like [`Schema::type_of`] but requires a boolean.
    pub fn check_bool(&self, e: &Expr, scope: &Scope) -> Result<(), TypeError> {
        match self.type_of(e, scope)? {
            ValueType::Bool => Ok(()),
            t => Err(TypeError::Mismatch(format!("expected a boolean expression, found {t}: `{e}`"))),
        }
    }
}

impl Default for Schema {
    fn default() -> Self {
        Schema::new()
    }
}

fn op_name(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::Div => "/",
        BinOp::Mod => "%",
        BinOp::And => "and",
        BinOp::Or => "or",
        _ => "comparison",
    }
}

fn numeric_result(l: ValueType, r: ValueType, op: &str) -> Result<ValueType, TypeError> {
    match (l, r) {
        (ValueType::Int, ValueType::Int) => Ok(ValueType::Int),
        (a, b) if a.is_numeric() && b.is_numeric() => Ok(ValueType::Real),
        _ => Err(TypeError::Mismatch(format!("`{op}` expects numbers, found {l} and {r}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AtomicComponent, Value};
    use crate::syntax::parse_expr;

    fn schema() -> Schema {
        let fleet = HierarchicalComponent::new("Fleet").with_child(
            "amb1",
            AtomicComponent::new("Ambulance").with_attr("fuel", Value::Int(1)).with_attr("busy", Value::Bool(false)),
        );
        Schema::from_system(&System::new(HierarchicalComponent::new("City").with_child("fleet", fleet), true))
    }

    fn ty(src: &str) -> Result<ValueType, TypeError> {
        schema().type_of(&parse_expr(src).unwrap(), &Scope::default())
    }

    #[test]
    fn infers_types() {
        assert_eq!(ty("fleet.amb1.fuel + 1"), Ok(ValueType::Int));
        assert_eq!(ty("fleet.amb1.fuel * 1.5"), Ok(ValueType::Real));
        assert_eq!(ty("fleet.amb1.fuel > 0 and not fleet.amb1.busy"), Ok(ValueType::Bool));
        assert_eq!(ty("floor(2.5)"), Ok(ValueType::Int));
        assert_eq!(ty("Ambulance.allInstances()->select(a | a.busy)->size()"), Ok(ValueType::Int));
    }

    #[test]
    fn rejects_ill_typed() {
        assert!(matches!(ty("fleet.amb1.fuel and true"), Err(TypeError::Mismatch(_))));
        assert!(matches!(ty("fleet.amb1"), Err(TypeError::Mismatch(_))));
        assert!(matches!(ty("fleet.amb9.fuel"), Err(TypeError::UnknownPath(_))));
        assert!(matches!(ty("Ambulance.allInstances()->forAll(a | a.fuel)"), Err(TypeError::Mismatch(_))));
        assert!(matches!(ty("Truck.allInstances()->size()"), Err(TypeError::UnknownComponentType(_))));
        assert!(matches!(
            ty("Ambulance.allInstances()->forAll(a | b.fuel > 0)"),
            Err(TypeError::UnboundName(_))
        ));
        let with_u = Expr::bin(BinOp::Add, Expr::Uniform, Expr::int(1));
        assert!(matches!(schema().type_of(&with_u, &Scope::default()), Err(TypeError::UnboundName(_))));
    }

    #[test]
    fn self_scope() {
        let s = schema();
        let scope = Scope { self_type: Some("Ambulance".into()), ..Scope::default() };
        assert_eq!(s.type_of(&parse_expr("fuel - 1").unwrap(), &scope), Ok(ValueType::Int));
        assert_eq!(s.path_type(&Path::parse("self").unwrap(), &scope), Ok(PathType::Component("Ambulance".into())));
    }
}
