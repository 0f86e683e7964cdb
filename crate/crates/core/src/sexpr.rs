//! Minimal s-expression reader for SMT-LIB scripts and solver responses.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

impl SExpr {
    pub fn atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(s) => Some(s),
            SExpr::List(_) => None,
        }
    }

    pub fn list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items) => Some(items),
            SExpr::Atom(_) => None,
        }
    }

    /// The leading atom of a list, e.g. `assert` for `(assert ...)`.
    pub fn head(&self) -> Option<&str> {
        self.list().and_then(|l| l.first()).and_then(SExpr::atom)
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Atom(s) => f.write_str(s),
            SExpr::List(items) => {
                f.write_str("(")?;
                for (idx, item) in items.iter().enumerate() {
                    if idx > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Parses every top-level expression in `src`. Line comments (`;`), string
/// literals and `|quoted|` symbols are handled.
pub fn parse_all(src: &str) -> Result<Vec<SExpr>> {
    let mut stack: Vec<Vec<SExpr>> = vec![Vec::new()];
    let mut chars = src.char_indices().peekable();
    while let Some((pos, c)) = chars.next() {
        match c {
            ';' => {
                for (_, c) in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '(' => stack.push(Vec::new()),
            ')' => {
                if stack.len() < 2 {
                    return Err(Error::Parse(format!("unbalanced `)` at byte {pos}")));
                }
                let done = stack.pop().unwrap_or_default();
                stack.last_mut().expect("root frame").push(SExpr::List(done));
            }
            c if c.is_whitespace() => {}
            '"' | '|' => {
                let close = c;
                let mut text = String::from(c);
                let mut closed = false;
                while let Some((_, d)) = chars.next() {
                    text.push(d);
                    if d == close {
                        // SMT-LIB escapes a quote inside a string by doubling it.
                        if close == '"' && chars.peek().map(|&(_, n)| n) == Some('"') {
                            text.push('"');
                            chars.next();
                            continue;
                        }
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(Error::Parse(format!("unterminated literal at byte {pos}")));
                }
                stack.last_mut().expect("root frame").push(SExpr::Atom(text));
            }
            _ => {
                let mut text = String::from(c);
                while let Some(&(_, d)) = chars.peek() {
                    if d.is_whitespace() || d == '(' || d == ')' || d == ';' {
                        break;
                    }
                    text.push(d);
                    chars.next();
                }
                stack.last_mut().expect("root frame").push(SExpr::Atom(text));
            }
        }
    }
    if stack.len() != 1 {
        return Err(Error::Parse(format!("{} unclosed `(`", stack.len() - 1)));
    }
    Ok(stack.pop().unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_nested() {
        let e = parse_all("(assert (<= (+ a11 a21) 1)) ; trailing\n(check-sat)").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].head(), Some("assert"));
        assert_eq!(e[0].to_string(), "(assert (<= (+ a11 a21) 1))");
        assert_eq!(e[1].head(), Some("check-sat"));
    }

    #[test]
    fn literals_and_errors() {
        let e = parse_all("(echo \"a (b) \"\"c\"\"\") |x y|").unwrap();
        assert_eq!(e[0].list().unwrap()[1].atom(), Some("\"a (b) \"\"c\"\"\""));
        assert_eq!(e[1].atom(), Some("|x y|"));
        assert!(parse_all("(a (b)").is_err());
        assert!(parse_all("a)").is_err());
        assert!(parse_all("\"open").is_err());
    }

    fn arb_sexpr() -> impl Strategy<Value = SExpr> {
        let leaf = "[a-z0-9_.+<=-]{1,6}".prop_map(SExpr::Atom);
        leaf.prop_recursive(4, 32, 5, |inner| {
            prop::collection::vec(inner, 0..5).prop_map(SExpr::List)
        })
    }

    proptest! {
        #[test]
        fn display_parse_roundtrip(e in arb_sexpr()) {
            let text = e.to_string();
            prop_assert_eq!(parse_all(&text).unwrap(), vec![e]);
        }
    }
}
