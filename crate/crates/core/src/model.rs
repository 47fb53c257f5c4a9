//! Hierarchical component tree and the immutable state snapshots read by the
//! simulator and the property monitors.
//!
//! A [`System`] is a strict tree: the root is a [`HierarchicalComponent`],
//! leaves are [`AtomicComponent`]s carrying typed attributes. Subtrees are
//! reference counted so that a new snapshot only copies the spine of the
//! components it touches.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Type of an attribute or of an expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ValueType {
    Bool,
    Int,
    Real,
    Str,
}

impl ValueType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueType::Int | ValueType::Real)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ValueType::Bool => "bool",
            ValueType::Int => "int",
            ValueType::Real => "real",
            ValueType::Str => "string",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "bool" => Some(ValueType::Bool),
            "int" => Some(ValueType::Int),
            "real" => Some(ValueType::Real),
            "string" => Some(ValueType::Str),
            _ => None,
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// A tagged attribute value.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(Arc<str>),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Bool(_) => ValueType::Bool,
            Value::Int(_) => ValueType::Int,
            Value::Real(_) => ValueType::Real,
            Value::Str(_) => ValueType::Str,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    /// Converts the value so that it can be stored in an attribute of type
    /// `ty`. Integers widen to reals; everything else must match exactly.
    pub fn coerce_to(self, ty: ValueType) -> Option<Value> {
        match (self, ty) {
            (Value::Int(i), ValueType::Real) => Some(Value::Real(i as f64)),
            (v, ty) if v.value_type() == ty => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r:?}"),
            Value::Str(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Attribute {
    pub name: Arc<str>,
    pub declared_type: ValueType,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomicComponent {
    pub type_name: Arc<str>,
    pub attributes: Vec<Attribute>,
}

impl AtomicComponent {
    pub fn new(type_name: impl Into<Arc<str>>) -> Self {
        AtomicComponent { type_name: type_name.into(), attributes: Vec::new() }
    }

    pub fn with_attr(mut self, name: &str, value: Value) -> Self {
        self.attributes.push(Attribute {
            name: name.into(),
            declared_type: value.value_type(),
            value,
        });
        self
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| &*a.name == name)
    }
}

/// A named structural edge between two sibling subcomponents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub name: Arc<str>,
    pub from: Arc<str>,
    pub to: Arc<str>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalComponent {
    pub type_name: Arc<str>,
    pub subcomponents: Vec<Subcomponent>,
    pub relations: Vec<Relation>,
}

impl HierarchicalComponent {
    pub fn new(type_name: impl Into<Arc<str>>) -> Self {
        HierarchicalComponent {
            type_name: type_name.into(),
            subcomponents: Vec::new(),
            relations: Vec::new(),
        }
    }

    pub fn with_child(mut self, name: &str, component: impl Into<Component>) -> Self {
        self.subcomponents.push(Subcomponent::new(name, component));
        self
    }

    pub fn child(&self, name: &str) -> Option<&Subcomponent> {
        self.subcomponents.iter().find(|s| &*s.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Component {
    Atomic(AtomicComponent),
    Hierarchical(HierarchicalComponent),
}

impl Component {
    pub fn type_name(&self) -> &Arc<str> {
        match self {
            Component::Atomic(a) => &a.type_name,
            Component::Hierarchical(h) => &h.type_name,
        }
    }
}

impl From<AtomicComponent> for Component {
    fn from(a: AtomicComponent) -> Self {
        Component::Atomic(a)
    }
}

impl From<HierarchicalComponent> for Component {
    fn from(h: HierarchicalComponent) -> Self {
        Component::Hierarchical(h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subcomponent {
    pub name: Arc<str>,
    pub component: Arc<Component>,
}

impl Subcomponent {
    pub fn new(name: &str, component: impl Into<Component>) -> Self {
        Subcomponent { name: name.into(), component: Arc::new(component.into()) }
    }
}

/// Dot-separated address of a component or attribute, e.g. `fleet.amb1.fuel`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path(Vec<Arc<str>>);

impl Path {
    pub fn new(segments: Vec<Arc<str>>) -> Self {
        Path(segments)
    }

    /// Parses the textual dotted form. Segments must be non-empty.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let segs: Vec<Arc<str>> = text.split('.').map(|s| Arc::from(s.trim())).collect();
        if segs.iter().any(|s| s.is_empty()) {
            return Err(ModelError::InvalidPath(text.to_string()));
        }
        Ok(Path(segs))
    }

    pub fn root() -> Self {
        Path(Vec::new())
    }

    pub fn segments(&self) -> &[Arc<str>] {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<&Arc<str>> {
        self.0.first()
    }

    pub fn last(&self) -> Option<&Arc<str>> {
        self.0.last()
    }

    pub fn parent(&self) -> Option<Path> {
        if self.0.is_empty() {
            None
        } else {
            Some(Path(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn child(&self, name: impl Into<Arc<str>>) -> Path {
        let mut v = self.0.clone();
        v.push(name.into());
        Path(v)
    }

    pub fn join(&self, rest: &[Arc<str>]) -> Path {
        let mut v = self.0.clone();
        v.extend_from_slice(rest);
        Path(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            f.write_str(s)?;
        }
        Ok(())
    }
}

/// Reference to a component inside a particular snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentRef {
    pub path: Path,
    pub type_name: Arc<str>,
}

/// What a path resolved to.
#[derive(Clone, Debug, PartialEq)]
pub enum Resolved<'a> {
    Value(&'a Value),
    Component(&'a Component),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("path `{0}` not found")]
    PathNotFound(String),
    #[error("type mismatch at `{path}`: {detail}")]
    TypeMismatch { path: String, detail: String },
    #[error("system is closed; structural changes are not allowed")]
    ClosedSystem,
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("invalid path `{0}`")]
    InvalidPath(String),
    #[error("invalid relation `{0}`")]
    InvalidRelation(String),
    #[error("non-finite real stored at `{0}`")]
    NonFinite(String),
}

/// The whole system of systems: a component tree under a hierarchical root.
#[derive(Clone, Debug, PartialEq)]
pub struct System {
    pub root: HierarchicalComponent,
    pub open: bool,
    /// Monotonic counter used to name spawned instances.
    pub spawn_counter: u64,
    /// Incremented on every structural change.
    pub generation: u64,
}

impl System {
    pub fn new(root: HierarchicalComponent, open: bool) -> Self {
        System { root, open, spawn_counter: 0, generation: 0 }
    }

    pub fn resolve(&self, path: &Path) -> Result<Resolved<'_>, ModelError> {
        let segs = path.segments();
        let mut node = &self.root;
        for (i, seg) in segs.iter().enumerate() {
            let sub = node.child(seg).ok_or_else(|| not_found(segs, i))?;
            match &*sub.component {
                Component::Hierarchical(h) => {
                    if i + 1 == segs.len() {
                        return Ok(Resolved::Component(&sub.component));
                    }
                    node = h;
                }
                Component::Atomic(a) => {
                    if i + 1 == segs.len() {
                        return Ok(Resolved::Component(&sub.component));
                    }
                    let attr_name = &segs[i + 1];
                    let attr = a.attribute(attr_name).ok_or_else(|| not_found(segs, i + 1))?;
                    if i + 2 != segs.len() {
                        return Err(ModelError::TypeMismatch {
                            path: path.to_string(),
                            detail: format!("`{attr_name}` is an attribute, not a component"),
                        });
                    }
                    return Ok(Resolved::Value(&attr.value));
                }
            }
        }
        Err(ModelError::TypeMismatch {
            path: path.to_string(),
            detail: "the root is not addressable".into(),
        })
    }

    pub fn value(&self, path: &Path) -> Result<&Value, ModelError> {
        match self.resolve(path)? {
            Resolved::Value(v) => Ok(v),
            Resolved::Component(_) => Err(ModelError::TypeMismatch {
                path: path.to_string(),
                detail: "a component was used where a value is expected".into(),
            }),
        }
    }

    /// Component at `path`; the empty path denotes the root.
    pub fn component_ref(&self, path: &Path) -> Result<ComponentRef, ModelError> {
        if path.is_root() {
            return Ok(ComponentRef { path: Path::root(), type_name: self.root.type_name.clone() });
        }
        match self.resolve(path)? {
            Resolved::Component(c) => {
                Ok(ComponentRef { path: path.clone(), type_name: c.type_name().clone() })
            }
            Resolved::Value(_) => Err(ModelError::TypeMismatch {
                path: path.to_string(),
                detail: "an attribute was used where a component is expected".into(),
            }),
        }
    }

    /// Depth-first, declaration-ordered list of all components of the given
    /// type (the root included).
    pub fn instances_of_type(&self, type_name: &str) -> Vec<ComponentRef> {
        let mut out = Vec::new();
        if &*self.root.type_name == type_name {
            out.push(ComponentRef { path: Path::root(), type_name: self.root.type_name.clone() });
        }
        let mut prefix = Vec::new();
        collect_instances(&self.root, type_name, &mut prefix, &mut out);
        out
    }

    /// Visits every component (excluding the root) depth-first in declaration
    /// order.
    pub fn for_each_component(&self, mut f: impl FnMut(&Path, &Component)) {
        fn walk(
            h: &HierarchicalComponent,
            prefix: &mut Vec<Arc<str>>,
            f: &mut dyn FnMut(&Path, &Component),
        ) {
            for sub in &h.subcomponents {
                prefix.push(sub.name.clone());
                f(&Path::new(prefix.clone()), &sub.component);
                if let Component::Hierarchical(inner) = &*sub.component {
                    walk(inner, prefix, f);
                }
                prefix.pop();
            }
        }
        walk(&self.root, &mut Vec::new(), &mut f);
    }

    /// Overwrites an attribute value, enforcing the declared type.
    pub fn set_attribute(&mut self, path: &Path, value: Value) -> Result<(), ModelError> {
        let segs = path.segments();
        if segs.len() < 2 {
            return Err(ModelError::PathNotFound(path.to_string()));
        }
        let (attr_name, comp_segs) = segs.split_last().unwrap();
        let comp = self.component_mut(comp_segs, path)?;
        let Component::Atomic(a) = comp else {
            return Err(ModelError::TypeMismatch {
                path: path.to_string(),
                detail: "hierarchical components carry no attributes".into(),
            });
        };
        let attr = a
            .attributes
            .iter_mut()
            .find(|x| x.name == *attr_name)
            .ok_or_else(|| ModelError::PathNotFound(path.to_string()))?;
        let ty = attr.declared_type;
        let found = value.value_type();
        let v = value.coerce_to(ty).ok_or_else(|| ModelError::TypeMismatch {
            path: path.to_string(),
            detail: format!("cannot store {found} in {ty} attribute"),
        })?;
        if let Value::Real(r) = v {
            if !r.is_finite() {
                return Err(ModelError::NonFinite(path.to_string()));
            }
        }
        attr.value = v;
        Ok(())
    }

    fn component_mut(&mut self, segs: &[Arc<str>], full: &Path) -> Result<&mut Component, ModelError> {
        let (first, rest) = segs.split_first().ok_or_else(|| ModelError::PathNotFound(full.to_string()))?;
        let sub = self
            .root
            .subcomponents
            .iter_mut()
            .find(|s| s.name == *first)
            .ok_or_else(|| ModelError::PathNotFound(full.to_string()))?;
        let mut comp = Arc::make_mut(&mut sub.component);
        for seg in rest {
            let Component::Hierarchical(h) = comp else {
                return Err(ModelError::PathNotFound(full.to_string()));
            };
            let sub = h
                .subcomponents
                .iter_mut()
                .find(|s| s.name == *seg)
                .ok_or_else(|| ModelError::PathNotFound(full.to_string()))?;
            comp = Arc::make_mut(&mut sub.component);
        }
        Ok(comp)
    }

    fn hierarchical_mut(&mut self, path: &Path) -> Result<&mut HierarchicalComponent, ModelError> {
        if path.is_root() {
            return Ok(&mut self.root);
        }
        match self.component_mut(path.segments(), path)? {
            Component::Hierarchical(h) => Ok(h),
            Component::Atomic(_) => Err(ModelError::TypeMismatch {
                path: path.to_string(),
                detail: "atomic components cannot contain subcomponents".into(),
            }),
        }
    }

    /// Checks every structural invariant of the tree.
    pub fn validate(&self) -> Result<(), ModelError> {
        fn check(h: &HierarchicalComponent, prefix: &Path) -> Result<(), ModelError> {
            for (i, sub) in h.subcomponents.iter().enumerate() {
                if sub.name.is_empty() {
                    return Err(ModelError::InvalidPath(prefix.to_string()));
                }
                if h.subcomponents[..i].iter().any(|s| s.name == sub.name) {
                    return Err(ModelError::DuplicateName(prefix.child(sub.name.clone()).to_string()));
                }
                let here = prefix.child(sub.name.clone());
                match &*sub.component {
                    Component::Atomic(a) => {
                        for (j, attr) in a.attributes.iter().enumerate() {
                            if a.attributes[..j].iter().any(|x| x.name == attr.name) {
                                return Err(ModelError::DuplicateName(
                                    here.child(attr.name.clone()).to_string(),
                                ));
                            }
                            if attr.value.value_type() != attr.declared_type {
                                return Err(ModelError::TypeMismatch {
                                    path: here.child(attr.name.clone()).to_string(),
                                    detail: "value tag differs from declared type".into(),
                                });
                            }
                            if let Value::Real(r) = attr.value {
                                if !r.is_finite() {
                                    return Err(ModelError::NonFinite(
                                        here.child(attr.name.clone()).to_string(),
                                    ));
                                }
                            }
                        }
                    }
                    Component::Hierarchical(inner) => check(inner, &here)?,
                }
            }
            for (i, rel) in h.relations.iter().enumerate() {
                if h.relations[..i].iter().any(|r| r.name == rel.name) {
                    return Err(ModelError::DuplicateName(rel.name.to_string()));
                }
                if rel.from == rel.to || h.child(&rel.from).is_none() || h.child(&rel.to).is_none() {
                    return Err(ModelError::InvalidRelation(rel.name.to_string()));
                }
            }
            Ok(())
        }
        check(&self.root, &Path::root())
    }
}

fn not_found(segs: &[Arc<str>], upto: usize) -> ModelError {
    ModelError::PathNotFound(Path::new(segs[..=upto].to_vec()).to_string())
}

fn collect_instances(
    h: &HierarchicalComponent,
    type_name: &str,
    prefix: &mut Vec<Arc<str>>,
    out: &mut Vec<ComponentRef>,
) {
    for sub in &h.subcomponents {
        prefix.push(sub.name.clone());
        if &**sub.component.type_name() == type_name {
            out.push(ComponentRef {
                path: Path::new(prefix.clone()),
                type_name: sub.component.type_name().clone(),
            });
        }
        if let Component::Hierarchical(inner) = &*sub.component {
            collect_instances(inner, type_name, prefix, out);
        }
        prefix.pop();
    }
}

/// A change to the shape of an open system.
#[derive(Clone, Debug, PartialEq)]
pub enum StructuralChange {
    Add { parent: Path, sub: Subcomponent },
    Remove(Path),
    AddRelation { parent: Path, relation: Relation },
    RemoveRelation { parent: Path, name: Arc<str> },
}

/// Timestamped immutable projection of the simulated system.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationState {
    pub step: u64,
    pub time: u64,
    pub system: Arc<System>,
    /// Set when this snapshot's structure differs from its predecessor's.
    pub structure_changed: bool,
}

impl SimulationState {
    pub fn initial(system: System) -> Self {
        SimulationState { step: 0, time: 0, system: Arc::new(system), structure_changed: false }
    }

    pub fn resolve_path(&self, path: &Path) -> Result<Resolved<'_>, ModelError> {
        self.system.resolve(path)
    }

    pub fn instances_of_type(&self, type_name: &str) -> Vec<ComponentRef> {
        self.system.instances_of_type(type_name)
    }

    /// Returns a new snapshot with `change` applied; `self` is untouched.
    pub fn apply_structural_change(&self, change: &StructuralChange) -> Result<SimulationState, ModelError> {
        let mut sys = (*self.system).clone();
        apply_change(&mut sys, change)?;
        Ok(SimulationState {
            step: self.step,
            time: self.time,
            system: Arc::new(sys),
            structure_changed: true,
        })
    }
}

/// Applies a structural change in place. Fails on closed systems.
pub fn apply_change(sys: &mut System, change: &StructuralChange) -> Result<(), ModelError> {
    if !sys.open {
        return Err(ModelError::ClosedSystem);
    }
    match change {
        StructuralChange::Add { parent, sub } => {
            if sub.name.is_empty() || sub.name.contains('.') {
                return Err(ModelError::InvalidPath(sub.name.to_string()));
            }
            let h = sys.hierarchical_mut(parent)?;
            if h.child(&sub.name).is_some() {
                return Err(ModelError::DuplicateName(parent.child(sub.name.clone()).to_string()));
            }
            h.subcomponents.push(sub.clone());
        }
        StructuralChange::Remove(path) => {
            let parent = path.parent().filter(|_| !path.is_root()).ok_or_else(|| {
                ModelError::PathNotFound(path.to_string())
            })?;
            let name = path.last().unwrap().clone();
            let h = sys.hierarchical_mut(&parent).map_err(|_| ModelError::PathNotFound(path.to_string()))?;
            let idx = h
                .subcomponents
                .iter()
                .position(|s| s.name == name)
                .ok_or_else(|| ModelError::PathNotFound(path.to_string()))?;
            h.subcomponents.remove(idx);
            h.relations.retain(|r| r.from != name && r.to != name);
        }
        StructuralChange::AddRelation { parent, relation } => {
            let h = sys.hierarchical_mut(parent)?;
            if h.relations.iter().any(|r| r.name == relation.name) {
                return Err(ModelError::DuplicateName(relation.name.to_string()));
            }
            for end in [&relation.from, &relation.to] {
                if h.child(end).is_none() {
                    return Err(ModelError::PathNotFound(parent.child(end.clone()).to_string()));
                }
            }
            if relation.from == relation.to {
                return Err(ModelError::InvalidRelation(relation.name.to_string()));
            }
            h.relations.push(relation.clone());
        }
        StructuralChange::RemoveRelation { parent, name } => {
            let h = sys.hierarchical_mut(parent)?;
            let idx = h
                .relations
                .iter()
                .position(|r| r.name == *name)
                .ok_or_else(|| ModelError::PathNotFound(parent.child(name.clone()).to_string()))?;
            h.relations.remove(idx);
        }
    }
    sys.generation += 1;
    Ok(())
}
