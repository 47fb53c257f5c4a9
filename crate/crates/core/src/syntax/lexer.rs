use std::fmt;

use super::{Pos, SyntaxError};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Unsigned literal; the sign is applied by the parser.
    Int(u64),
    Real(f64),
    Str(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Real(r) => write!(f, "`{r}`"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

// Longest symbols first.
const SYMBOLS: &[&str] = &[
    ":=", "->", "--", "<=", ">=", "==", "!=", "<>", "&&", "||", "(", ")", "[", "]", "{", "}", ",", ";",
    ":", ".", "|", "+", "-", "*", "/", "%", "<", ">", "=", "!", "&", "~",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let pos = Pos { line, col };
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += (i - start) as u32;
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), pos });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_real = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                is_real = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_real = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            let tok = if is_real {
                Tok::Real(text.parse().map_err(|_| SyntaxError::new(pos, format!("bad number `{text}`")))?)
            } else {
                Tok::Int(
                    text.parse()
                        .map_err(|_| SyntaxError::new(pos, format!("integer literal `{text}` out of range")))?,
                )
            };
            out.push(Token { tok, pos });
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            advance(&mut i, &mut line, &mut col, c);
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(SyntaxError::new(pos, "unterminated string literal"));
                };
                advance(&mut i, &mut line, &mut col, ch);
                match ch {
                    '"' => break,
                    '\\' => {
                        let Some(&esc) = chars.get(i) else {
                            return Err(SyntaxError::new(pos, "unterminated string literal"));
                        };
                        advance(&mut i, &mut line, &mut col, esc);
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            '"' => '"',
                            '\\' => '\\',
                            other => {
                                return Err(SyntaxError::new(pos, format!("unknown escape `\\{other}`")))
                            }
                        });
                    }
                    other => s.push(other),
                }
            }
            out.push(Token { tok: Tok::Str(s), pos });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
            return Err(SyntaxError::new(pos, format!("unexpected character `{c}`")));
        };
        i += sym.len();
        col += sym.len() as u32;
        out.push(Token { tok: Tok::Sym(sym), pos });
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbols_and_positions() {
        let toks = tokenize("a := b->c -- 1.5e2 # note\n  x<=3").unwrap();
        let kinds: Vec<Tok> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("a".into()),
                Tok::Sym(":="),
                Tok::Ident("b".into()),
                Tok::Sym("->"),
                Tok::Ident("c".into()),
                Tok::Sym("--"),
                Tok::Real(150.0),
                Tok::Ident("x".into()),
                Tok::Sym("<="),
                Tok::Int(3),
                Tok::Eof,
            ]
        );
        assert_eq!(toks[7].pos, Pos { line: 2, col: 3 });
    }

    #[test]
    fn member_access_is_not_a_real() {
        let toks = tokenize("a.b 1.x").unwrap();
        assert_eq!(toks[1].tok, Tok::Sym("."));
        assert_eq!(toks[3].tok, Tok::Int(1));
    }

    #[test]
    fn string_escapes_and_errors() {
        let toks = tokenize(r#""a\"b""#).unwrap();
        assert_eq!(toks[0].tok, Tok::Str("a\"b".into()));
        assert!(tokenize("\"open").is_err());
        assert!(tokenize("a $ b").is_err());
        assert!(tokenize("99999999999999999999999").is_err());
    }
}
