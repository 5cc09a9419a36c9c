//! Minimal s-expression reader and printer for the prefix expression format.
//!
//! Lists use `( )`, vectors use `[ ]`, strings are double quoted and commas
//! count as whitespace. Everything else is a number or a bare atom.

use std::fmt;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Sexp {
    List(Vec<Sexp>),
    Vector(Vec<Sexp>),
    Str(String),
    Num(f64),
    Atom(String),
}

impl Sexp {
    pub fn as_list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items) => Some(items),
            _ => None,
        }
    }

    /// Head atom of a list form, e.g. `sum` in `(sum a b)`.
    pub fn head(&self) -> Option<(&str, &[Sexp])> {
        match self {
            Sexp::List(items) => match items.first() {
                Some(Sexp::Atom(h)) => Some((h.as_str(), &items[1..])),
                _ => None,
            },
            _ => None,
        }
    }
}

#[derive(Debug, PartialEq)]
enum Token {
    Open(char),
    Close(char),
    Str(String),
    Word(String),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() || c == ',' => {
                chars.next();
            }
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '(' | '[' => {
                out.push(Token::Open(c));
                chars.next();
            }
            ')' | ']' => {
                out.push(Token::Close(c));
                chars.next();
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some(e) => s.push(e),
                            None => return Err(Error::Parse("unterminated string".into())),
                        },
                        Some(ch) => s.push(ch),
                        None => return Err(Error::Parse("unterminated string".into())),
                    }
                }
                out.push(Token::Str(s));
            }
            _ => {
                let mut w = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_whitespace() || matches!(ch, '(' | ')' | '[' | ']' | ',' | '"' | ';') {
                        break;
                    }
                    w.push(ch);
                    chars.next();
                }
                out.push(Token::Word(w));
            }
        }
    }
    Ok(out)
}

fn parse_at(tokens: &[Token], pos: &mut usize) -> Result<Sexp> {
    let Some(tok) = tokens.get(*pos) else {
        return Err(Error::Parse("unexpected end of input".into()));
    };
    *pos += 1;
    match tok {
        Token::Open(open) => {
            let close = if *open == '(' { ')' } else { ']' };
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos) {
                    None => return Err(Error::Parse(format!("missing `{close}`"))),
                    Some(Token::Close(c)) if *c == close => {
                        *pos += 1;
                        break;
                    }
                    Some(Token::Close(c)) => {
                        return Err(Error::Parse(format!("expected `{close}`, found `{c}`")))
                    }
                    Some(_) => items.push(parse_at(tokens, pos)?),
                }
            }
            Ok(if *open == '(' {
                Sexp::List(items)
            } else {
                Sexp::Vector(items)
            })
        }
        Token::Close(c) => Err(Error::Parse(format!("unexpected `{c}`"))),
        Token::Str(s) => Ok(Sexp::Str(s.clone())),
        Token::Word(w) => Ok(match w.parse::<f64>() {
            Ok(x) if !w.eq_ignore_ascii_case("inf") && !w.eq_ignore_ascii_case("nan") => {
                Sexp::Num(x)
            }
            _ => Sexp::Atom(w.clone()),
        }),
    }
}

/// Parse exactly one expression.
pub fn parse(src: &str) -> Result<Sexp> {
    let tokens = tokenize(src)?;
    let mut pos = 0;
    let e = parse_at(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(Error::Parse("trailing input after expression".into()));
    }
    Ok(e)
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn seq(f: &mut fmt::Formatter<'_>, items: &[Sexp], sep: &str) -> fmt::Result {
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                write!(f, "{it}")?;
            }
            Ok(())
        }
        match self {
            Sexp::List(items) => {
                f.write_str("(")?;
                seq(f, items, " ")?;
                f.write_str(")")
            }
            Sexp::Vector(items) => {
                f.write_str("[")?;
                seq(f, items, ", ")?;
                f.write_str("]")
            }
            Sexp::Str(s) => write!(f, "{s:?}"),
            Sexp::Num(x) => write!(f, "{x}"),
            Sexp::Atom(a) => f.write_str(a),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_forms() {
        let e = parse(r#"(sum (prod (laurent "a") P) (scale [0, 1] J))"#).unwrap();
        let (head, rest) = e.head().unwrap();
        assert_eq!(head, "sum");
        assert_eq!(rest.len(), 2);
        assert_eq!(
            rest[1],
            Sexp::List(vec![
                Sexp::Atom("scale".into()),
                Sexp::Vector(vec![Sexp::Num(0.0), Sexp::Num(1.0)]),
                Sexp::Atom("J".into()),
            ])
        );
    }

    #[test]
    fn print_then_read() {
        let src = r#"(prod (laurent (flip "a")) [1.5, -2] Q)"#;
        let e = parse(src).unwrap();
        assert_eq!(e.to_string(), src);
        assert_eq!(parse(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn errors() {
        assert!(parse("(sum P").is_err());
        assert!(parse("(sum P]").is_err());
        assert!(parse("P Q").is_err());
        assert!(parse("\"abc").is_err());
    }
}
