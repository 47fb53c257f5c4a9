use std::sync::Arc;

use super::{
    validate, ActionDecl, AttrDecl, AttrOverride, CommandDecl, Diagnostic, DiagnosticKind, InstanceDecl, ModelDefinition,
    RelationDecl, TypeDecl, VariableDecl,
};
use crate::model::{Path, ValueType};
use crate::sim::Rhs;
use crate::stochastic::DistributionSpec;
use crate::syntax::{Cursor, ExprParser, SyntaxError, Tok};

const PLAIN: ExprParser<'static> = ExprParser { allow_uniform: false, reserved: &[] };
const CUSTOM: ExprParser<'static> = ExprParser { allow_uniform: true, reserved: &[] };

/// Parses and validates a descriptor. Never fails: problems are reported in
/// [`ModelDefinition::diagnostics`].
pub fn parse_descriptor(text: &str) -> ModelDefinition {
    let mut def = ModelDefinition::default();
    let mut c = match Cursor::new(text) {
        Ok(c) => c,
        Err(e) => {
            def.diagnostics.push(syntax(e));
            return def;
        }
    };
    let mut seen_system = false;
    while !c.at_eof() {
        let pos = c.pos();
        let r = if c.is_kw("type") {
            parse_type(&mut c, &mut def)
        } else if c.is_kw("system") {
            if seen_system {
                def.diagnostics.push(Diagnostic::error(DiagnosticKind::Duplicate, pos, "second `system` block"));
            }
            seen_system = true;
            parse_system(&mut c, &mut def)
        } else {
            Err(c.unexpected("`type` or `system`"))
        };
        if let Err(e) = r {
            def.diagnostics.push(syntax(e));
            // resynchronize on the next top-level keyword
            c.bump();
            while !c.at_eof() && !(c.is_kw("type") || c.is_kw("system")) {
                c.bump();
            }
        }
    }
    if !seen_system && !def.has_errors() {
        def.diagnostics.push(Diagnostic::error(DiagnosticKind::Syntax, c.pos(), "missing `system` block"));
    }
    if !def.diagnostics.iter().any(|d| d.kind == DiagnosticKind::Syntax) {
        let mut more = validate(&def);
        def.diagnostics.append(&mut more);
    }
    def
}

fn syntax(e: SyntaxError) -> Diagnostic {
    Diagnostic::error(DiagnosticKind::Syntax, e.pos, e.message)
}

fn name(c: &mut Cursor) -> Result<Arc<str>, SyntaxError> {
    Ok(c.ident()?.into())
}

fn path(c: &mut Cursor) -> Result<Path, SyntaxError> {
    let mut segs = vec![name(c)?];
    while c.eat_sym(".") {
        segs.push(name(c)?);
    }
    Ok(Path::new(segs))
}

fn rhs(c: &mut Cursor) -> Result<Rhs, SyntaxError> {
    if c.is_kw("observe") && matches!(c.peek_at(1), Tok::Sym("(")) {
        c.bump();
        c.expect_sym("(")?;
        let v = name(c)?;
        c.expect_sym(")")?;
        return Ok(Rhs::Observe(v));
    }
    Ok(Rhs::Expr(PLAIN.parse(c)?))
}

/// Skips to just past the next `;` (or to a closing `}` without consuming it).
fn skip_item(c: &mut Cursor) {
    while !c.at_eof() && !c.is_sym("}") {
        if c.eat_sym(";") {
            return;
        }
        c.bump();
    }
}

fn parse_type(c: &mut Cursor, def: &mut ModelDefinition) -> Result<(), SyntaxError> {
    let pos = c.pos();
    c.expect_kw("type")?;
    let mut t = TypeDecl {
        name: name(c)?,
        attributes: Vec::new(),
        variables: Vec::new(),
        commands: Vec::new(),
        pos,
    };
    c.expect_sym("{")?;
    while !c.eat_sym("}") {
        if c.at_eof() {
            return Err(c.unexpected("`}`"));
        }
        if let Err(e) = parse_type_item(c, &mut t) {
            def.diagnostics.push(syntax(e));
            skip_item(c);
        }
    }
    def.types.push(t);
    Ok(())
}

fn parse_type_item(c: &mut Cursor, t: &mut TypeDecl) -> Result<(), SyntaxError> {
    let pos = c.pos();
    if c.eat_kw("attr") {
        let n = name(c)?;
        c.expect_sym(":")?;
        let tpos = c.pos();
        let ty_name = c.ident()?;
        let ty = ValueType::from_keyword(&ty_name.to_ascii_lowercase())
            .ok_or_else(|| SyntaxError::new(tpos, format!("unknown attribute type `{ty_name}`")))?;
        c.expect_sym("=")?;
        let init = rhs(c)?;
        c.expect_sym(";")?;
        t.attributes.push(AttrDecl { name: n, ty, init, pos });
    } else if c.eat_kw("rv") {
        let n = name(c)?;
        c.expect_sym("~")?;
        let dpos = c.pos();
        let dist = c.ident()?.to_ascii_lowercase();
        let parser = if dist.starts_with("custom") { CUSTOM } else { PLAIN };
        c.expect_sym("(")?;
        let mut params = vec![parser.parse(c)?];
        while c.eat_sym(",") {
            params.push(parser.parse(c)?);
        }
        c.expect_sym(")")?;
        c.expect_sym(";")?;
        let spec = DistributionSpec::from_parts(&dist, params)
            .ok_or_else(|| SyntaxError::new(dpos, format!("unknown distribution or wrong arity: `{dist}`")))?;
        t.variables.push(VariableDecl { name: n, spec, pos });
    } else if c.eat_kw("cmd") {
        let n = name(c)?;
        c.expect_sym(":")?;
        c.expect_kw("when")?;
        let guard = PLAIN.parse(c)?;
        c.expect_kw("rate")?;
        let rate = PLAIN.parse(c)?;
        c.expect_kw("do")?;
        let mut actions = Vec::new();
        if !c.eat_kw("skip") {
            loop {
                actions.push(action(c)?);
                if !c.eat_sym(",") {
                    break;
                }
            }
        }
        c.expect_sym(";")?;
        t.commands.push(CommandDecl { name: n, guard, rate, actions, pos });
    } else {
        return Err(c.unexpected("`attr`, `rv` or `cmd`"));
    }
    Ok(())
}

fn action(c: &mut Cursor) -> Result<ActionDecl, SyntaxError> {
    if c.is_kw("spawn") && matches!(c.peek_at(1), Tok::Ident(_)) {
        c.bump();
        let type_name = name(c)?;
        c.expect_kw("in")?;
        return Ok(ActionDecl::Spawn { type_name, parent: path(c)? });
    }
    if c.is_kw("despawn") && matches!(c.peek_at(1), Tok::Ident(_)) {
        c.bump();
        return Ok(ActionDecl::Despawn(path(c)?));
    }
    let target = path(c)?;
    c.expect_sym(":=")?;
    Ok(ActionDecl::Assign { target, value: rhs(c)? })
}

fn parse_system(c: &mut Cursor, def: &mut ModelDefinition) -> Result<(), SyntaxError> {
    c.expect_kw("system")?;
    c.expect_sym("{")?;
    while !c.eat_sym("}") {
        if c.at_eof() {
            return Err(c.unexpected("`}`"));
        }
        if let Err(e) = parse_system_item(c, def) {
            def.diagnostics.push(syntax(e));
            skip_item(c);
        }
    }
    Ok(())
}

fn parse_system_item(c: &mut Cursor, def: &mut ModelDefinition) -> Result<(), SyntaxError> {
    let pos = c.pos();
    if c.eat_kw("instance") {
        let n = name(c)?;
        c.expect_sym(":")?;
        let type_name = name(c)?;
        let parent = if c.eat_kw("in") { Some(path(c)?) } else { None };
        let mut overrides = Vec::new();
        if c.eat_sym("{") {
            while !c.eat_sym("}") {
                let opos = c.pos();
                let attr = name(c)?;
                c.expect_sym("=")?;
                let value = PLAIN.parse(c)?;
                c.expect_sym(";")?;
                overrides.push(AttrOverride { name: attr, value, pos: opos });
            }
        }
        c.expect_sym(";")?;
        def.instances.push(InstanceDecl { name: n, type_name, parent, overrides, pos });
    } else if c.eat_kw("relation") {
        let n = name(c)?;
        c.expect_sym(":")?;
        let from = path(c)?;
        c.expect_sym("--")?;
        let to = path(c)?;
        c.expect_sym(";")?;
        def.relations.push(RelationDecl { name: n, from, to, pos });
    } else if c.eat_kw("open") {
        c.expect_sym(";")?;
        def.open = true;
    } else if c.eat_kw("closed") {
        c.expect_sym(";")?;
        def.open = false;
    } else {
        return Err(c.unexpected("`instance`, `relation`, `open` or `closed`"));
    }
    Ok(())
}
