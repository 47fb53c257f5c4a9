use super::{Formula, Quantifier};
use crate::syntax::{Cursor, ExprParser, SyntaxError, Tok};

/// Identifiers that are temporal operators and cannot start a path.
pub const FORMULA_RESERVED: &[&str] = &["X", "F", "G", "U"];

const ATOMS: ExprParser<'static> = ExprParser { allow_uniform: false, reserved: FORMULA_RESERVED };

pub fn parse_formula(src: &str) -> Result<Formula, SyntaxError> {
    let mut c = Cursor::new(src)?;
    let f = formula(&mut c)?;
    c.expect_eof()?;
    Ok(f)
}

pub(crate) fn formula(c: &mut Cursor) -> Result<Formula, SyntaxError> {
    let l = or(c)?;
    if c.eat_sym("->") {
        return Ok(Formula::implies(l, formula(c)?));
    }
    Ok(l)
}

fn or(c: &mut Cursor) -> Result<Formula, SyntaxError> {
    let mut l = and(c)?;
    while c.eat_sym("|") || c.eat_sym("||") {
        l = Formula::or(l, and(c)?);
    }
    Ok(l)
}

fn and(c: &mut Cursor) -> Result<Formula, SyntaxError> {
    let mut l = until(c)?;
    while c.eat_sym("&") || c.eat_sym("&&") {
        l = Formula::and(l, until(c)?);
    }
    Ok(l)
}

fn is_op(c: &Cursor, name: &str) -> bool {
    matches!(c.peek(), Tok::Ident(s) if s == name)
}

fn bound(c: &mut Cursor) -> Result<u32, SyntaxError> {
    c.expect_sym("<=")?;
    let pos = c.pos();
    let t = c.uint()?;
    u32::try_from(t).map_err(|_| SyntaxError::new(pos, "time bound out of range"))
}

fn until(c: &mut Cursor) -> Result<Formula, SyntaxError> {
    let l = unary(c)?;
    if is_op(c, "U") {
        c.bump();
        let t = bound(c)?;
        return Ok(Formula::until(t, l, unary(c)?));
    }
    Ok(l)
}

fn unary(c: &mut Cursor) -> Result<Formula, SyntaxError> {
    if c.eat_sym("!") {
        return Ok(Formula::not(unary(c)?));
    }
    if is_op(c, "X") {
        c.bump();
        return Ok(Formula::next(unary(c)?));
    }
    if is_op(c, "F") || is_op(c, "G") {
        let always = is_op(c, "G");
        c.bump();
        let t = bound(c)?;
        let body = unary(c)?;
        return Ok(if always { Formula::always(t, body) } else { Formula::eventually(t, body) });
    }
    if (c.is_kw("forall") || c.is_kw("exists")) && matches!(c.peek_at(1), Tok::Ident(_)) && matches!(c.peek_at(2), Tok::Sym(":")) {
        let q = if c.eat_kw("forall") {
            Quantifier::ForAll
        } else {
            c.bump();
            Quantifier::Exists
        };
        let binder = c.ident()?.into();
        c.expect_sym(":")?;
        let type_name = c.ident()?.into();
        c.expect_sym(".")?;
        let body = Box::new(formula(c)?);
        return Ok(Formula::Quant { q, binder, type_name, body });
    }
    primary(c)
}

fn primary(c: &mut Cursor) -> Result<Formula, SyntaxError> {
    if c.is_kw("true") || c.is_kw("false") {
        let t = c.is_kw("true");
        c.bump();
        return Ok(if t { Formula::True } else { Formula::False });
    }
    if c.is_sym("(") {
        // a parenthesized state expression is an atom; otherwise a formula
        let mark = c.mark();
        if let Ok(e) = ATOMS.parse(c) {
            return Ok(Formula::Atom(e));
        }
        c.reset(mark);
        c.bump();
        let f = formula(c)?;
        c.expect_sym(")")?;
        return Ok(f);
    }
    if !ATOMS.starts_expr(c) {
        return Err(c.unexpected("a formula"));
    }
    Ok(Formula::Atom(ATOMS.parse(c)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_expr, Expr};
    use proptest::prelude::*;

    fn atom(s: &str) -> Formula {
        Formula::Atom(parse_expr(s).unwrap())
    }

    #[test]
    fn operators() {
        assert_eq!(
            parse_formula("G<=5 (F<=3 p)").unwrap(),
            Formula::always(5, Formula::eventually(3, atom("p")))
        );
        assert_eq!(
            parse_formula("x > 0 -> G<=2 y > 0").unwrap(),
            Formula::implies(atom("x > 0"), Formula::always(2, atom("y > 0")))
        );
        assert_eq!(
            parse_formula("(a) U<=3 b & !c").unwrap(),
            Formula::and(Formula::until(3, atom("a"), atom("b")), Formula::not(atom("c")))
        );
        assert_eq!(parse_formula("X X true").unwrap(), Formula::next(Formula::next(Formula::True)));
        // `&` between atoms is a formula conjunction
        assert_eq!(
            parse_formula("forall a : Ambulance . a.fuel > 0 & a.busy").unwrap(),
            Formula::forall("a", "Ambulance", Formula::and(atom("a.fuel > 0"), atom("a.busy")))
        );
        assert_eq!(
            parse_formula("EXISTS a : T . (a.x = 1 | a.y = 2)").unwrap(),
            Formula::exists("a", "T", Formula::or(atom("a.x = 1"), atom("a.y = 2")))
        );
        assert_eq!(
            parse_formula("(x = 1 and y) | T.allInstances()->exists(t | t.x > 0)").unwrap(),
            Formula::or(atom("x = 1 and y"), atom("T.allInstances()->exists(t | t.x > 0)"))
        );
    }

    #[test]
    fn errors() {
        for bad in ["", "F 3 p", "F<= p", "G<=-1 p", "(p", "p &", "X", "forall a : T", "p U q"] {
            assert!(parse_formula(bad).is_err(), "{bad:?}");
        }
    }

    fn arb_atom() -> impl Strategy<Value = Formula> {
        prop_oneof![
            (0..3usize, 0..4i64).prop_map(|(v, k)| {
                Formula::Atom(Expr::bin(crate::syntax::BinOp::Ge, Expr::path(["x", "y", "z"][v]), Expr::int(k)))
            }),
            Just(Formula::Atom(Expr::path("p"))),
            Just(Formula::True),
            Just(Formula::False),
        ]
    }

    fn arb_formula() -> impl Strategy<Value = Formula> {
        arb_atom().prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Formula::not),
                inner.clone().prop_map(Formula::next),
                (0..7u32, inner.clone()).prop_map(|(t, f)| Formula::eventually(t, f)),
                (0..7u32, inner.clone()).prop_map(|(t, f)| Formula::always(t, f)),
                (0..7u32, inner.clone(), inner.clone()).prop_map(|(t, a, b)| Formula::until(t, a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
                inner.clone().prop_map(|f| Formula::forall("c", "Cell", f)),
                inner.prop_map(|f| Formula::exists("c", "Cell", f)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_roundtrip(f in arb_formula()) {
            let text = f.to_string();
            let back = parse_formula(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
            prop_assert_eq!(back, f, "{}", text);
        }
    }
}
