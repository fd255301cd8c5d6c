use std::sync::Arc;

use thiserror::Error;

use super::{Expr, Func, Node};

/// Parse failure. Positions are 1-based byte positions into the input; a
/// position one past the last byte means "unexpected end of input".
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown function '{name}' at offset {position}")]
    UnknownFunction { name: String, position: usize },
}

impl ParseError {
    pub fn position(&self) -> Option<usize> {
        match self {
            ParseError::Empty => None,
            ParseError::Syntax { position, .. } | ParseError::UnknownFunction { position, .. } => {
                Some(*position)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier '{s}'"),
        Tok::Plus => "'+'".into(),
        Tok::Minus => "'-'".into(),
        Tok::Star => "'*'".into(),
        Tok::Slash => "'/'".into(),
        Tok::Caret => "'^'".into(),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::End => "end of input".into(),
    }
}

fn syntax(offset: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        position: offset + 1,
        message: message.into(),
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => {
                if bytes.get(i + 1) == Some(&b'*') {
                    i += 1;
                    Tok::Caret
                } else {
                    Tok::Star
                }
            }
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| syntax(start, format!("malformed number '{text}'")))?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character '{ch}'")));
            }
        };
        i += 1;
        out.push((tok, start));
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::raw(Node::Add(lhs, rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::raw(Node::Sub(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::raw(Node::Mul(lhs, rhs));
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::raw(Node::Div(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(Expr::raw(Node::Neg(self.unary()?)))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::raw(Node::Pow(base, exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::num(v)),
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let f = Func::from_name(&name).ok_or(ParseError::UnknownFunction {
                        name: name.clone(),
                        position: offset + 1,
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Expr::raw(Node::Call(f, arg)))
                } else if Func::from_name(&name).is_some() {
                    Err(syntax(self.offset(), format!("expected '(' after '{name}'")))
                } else {
                    Ok(Expr::raw(Node::Var(Arc::from(name.as_str()))))
                }
            }
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            other => Err(syntax(offset, format!("unexpected {}", describe(&other)))),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        let offset = self.offset();
        match self.bump() {
            Tok::RParen => Ok(()),
            other => Err(syntax(offset, format!("expected ')' but found {}", describe(&other)))),
        }
    }
}

/// Parses the infix grammar: numbers, identifiers, `+ - * / ^` (`^` is
/// right-associative and binds tighter than unary minus on its left), and
/// calls to the functions in [`Func`].
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    if src.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        let t = p.peek().clone();
        return Err(syntax(p.offset(), format!("unexpected {}", describe(&t))));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unclosed_call_reports_end_position() {
        let err = parse("log(x1").unwrap_err();
        assert_eq!(err.position(), Some(7));
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn unknown_function_is_named() {
        match parse("2*foo(x)") {
            Err(ParseError::UnknownFunction { name, position }) => {
                assert_eq!(name, "foo");
                assert_eq!(position, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse("  "), Err(ParseError::Empty));
    }

    #[test]
    fn power_is_right_associative_and_binds_tighter_than_minus() {
        let e = parse("-x^2^3").unwrap();
        match e.node() {
            Node::Neg(inner) => match inner.node() {
                Node::Pow(_, rhs) => assert!(matches!(rhs.node(), Node::Pow(..))),
                _ => panic!(),
            },
            _ => panic!(),
        }
    }

    #[test]
    fn scientific_literals() {
        let e = parse("1.5e-3 + 2E2").unwrap();
        assert_eq!(e.to_string(), "0.0015 + 200.0");
    }

    #[test]
    fn trailing_garbage() {
        assert!(matches!(parse("x y"), Err(ParseError::Syntax { position: 3, .. })));
        assert!(parse("x +").is_err());
        assert!(parse("(x").is_err());
        assert!(parse("x $ y").is_err());
    }
}
