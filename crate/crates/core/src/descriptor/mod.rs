//! The `.sosd` system descriptor: component types with attributes, random
//! variables and guarded commands, plus an instance tree.
//!
//! ```text
//! type Ambulance {
//!   attr fuel : int = 60;
//!   rv burn ~ uniform_int(fuel - 3, fuel - 1);
//!   cmd drive: when fuel > 0 rate 4 do fuel := observe(burn);
//! }
//! type Fleet { }
//! system {
//!   instance fleet : Fleet;
//!   instance amb1 : Ambulance in fleet;
//!   instance amb2 : Ambulance in fleet { fuel = 90; };
//!   open;
//! }
//! ```
//!
//! Inside a type, a bare attribute name and `self.<attr>` refer to the
//! instance being declared; every other path is absolute. Types that declare
//! attributes are atomic; types without attributes are containers that can
//! hold instances.

mod build;
mod parse;
mod validate;

use std::fmt;
use std::sync::Arc;

pub use build::{build_model, BuildError};
pub use parse::parse_descriptor;
pub use validate::validate;

use crate::model::{Path, ValueType};
use crate::sim::Rhs;
use crate::stochastic::DistributionSpec;
use crate::syntax::{Expr, Pos};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

/// Machine-checkable category of a diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    Syntax,
    UndeclaredType,
    Type,
    CyclicInit,
    Duplicate,
    UnknownPath,
    Structure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub pos: Pos,
    pub message: String,
}

impl Diagnostic {
    pub fn error(kind: DiagnosticKind, pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, kind, pos, message: message.into() }
    }

    pub fn warning(kind: DiagnosticKind, pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, kind, pos, message: message.into() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev} at {}: {}", self.pos, self.message)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttrDecl {
    pub name: Arc<str>,
    pub ty: ValueType,
    pub init: Rhs,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariableDecl {
    pub name: Arc<str>,
    pub spec: DistributionSpec,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ActionDecl {
    Assign { target: Path, value: Rhs },
    Spawn { type_name: Arc<str>, parent: Path },
    Despawn(Path),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommandDecl {
    pub name: Arc<str>,
    pub guard: Expr,
    pub rate: Expr,
    /// Empty means `skip`.
    pub actions: Vec<ActionDecl>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypeDecl {
    pub name: Arc<str>,
    pub attributes: Vec<AttrDecl>,
    pub variables: Vec<VariableDecl>,
    pub commands: Vec<CommandDecl>,
    pub pos: Pos,
}

impl TypeDecl {
    pub fn is_atomic(&self) -> bool {
        !self.attributes.is_empty()
    }
}

/// Instance-specific replacement for an attribute initializer.
#[derive(Clone, Debug, PartialEq)]
pub struct AttrOverride {
    pub name: Arc<str>,
    pub value: Expr,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceDecl {
    pub name: Arc<str>,
    pub type_name: Arc<str>,
    pub parent: Option<Path>,
    pub overrides: Vec<AttrOverride>,
    pub pos: Pos,
}

impl InstanceDecl {
    pub fn path(&self) -> Path {
        self.parent.clone().unwrap_or_else(Path::root).child(self.name.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationDecl {
    pub name: Arc<str>,
    pub from: Path,
    pub to: Path,
    pub pos: Pos,
}

/// Parsed descriptor together with every diagnostic found so far.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelDefinition {
    pub types: Vec<TypeDecl>,
    pub instances: Vec<InstanceDecl>,
    pub relations: Vec<RelationDecl>,
    pub open: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl ModelDefinition {
    pub fn type_decl(&self, name: &str) -> Option<&TypeDecl> {
        self.types.iter().find(|t| &*t.name == name)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }
}

fn write_rhs(f: &mut fmt::Formatter<'_>, rhs: &Rhs) -> fmt::Result {
    match rhs {
        Rhs::Expr(e) => write!(f, "{e}"),
        Rhs::Observe(v) => write!(f, "observe({v})"),
    }
}

/// Canonical pretty-printed form; parsing it yields the same definition.
impl fmt::Display for ModelDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.types {
            writeln!(f, "type {} {{", t.name)?;
            for a in &t.attributes {
                write!(f, "  attr {} : {} = ", a.name, a.ty)?;
                write_rhs(f, &a.init)?;
                writeln!(f, ";")?;
            }
            for v in &t.variables {
                writeln!(f, "  rv {} ~ {};", v.name, v.spec)?;
            }
            for c in &t.commands {
                write!(f, "  cmd {}: when {} rate {} do ", c.name, c.guard, c.rate)?;
                if c.actions.is_empty() {
                    f.write_str("skip")?;
                }
                for (i, a) in c.actions.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    match a {
                        ActionDecl::Assign { target, value } => {
                            write!(f, "{target} := ")?;
                            write_rhs(f, value)?;
                        }
                        ActionDecl::Spawn { type_name, parent } => write!(f, "spawn {type_name} in {parent}")?,
                        ActionDecl::Despawn(p) => write!(f, "despawn {p}")?,
                    }
                }
                writeln!(f, ";")?;
            }
            writeln!(f, "}}")?;
            writeln!(f)?;
        }
        writeln!(f, "system {{")?;
        for i in &self.instances {
            write!(f, "  instance {} : {}", i.name, i.type_name)?;
            if let Some(p) = &i.parent {
                write!(f, " in {p}")?;
            }
            if !i.overrides.is_empty() {
                f.write_str(" {")?;
                for o in &i.overrides {
                    write!(f, " {} = {};", o.name, o.value)?;
                }
                f.write_str(" }")?;
            }
            writeln!(f, ";")?;
        }
        for r in &self.relations {
            writeln!(f, "  relation {}: {} -- {};", r.name, r.from, r.to)?;
        }
        writeln!(f, "  {};", if self.open { "open" } else { "closed" })?;
        writeln!(f, "}}")
    }
}
