use thiserror::Error;

use super::ast::{AttrSlot, BinOp, CmpOp, Expr};
use super::registry::Registry;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at position {position}: {message}")]
pub struct ParseError {
    /// Character offset into the input.
    pub position: usize,
    pub message: String,
}

impl ParseError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError { position, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    /// Attribute label following a `.`; may start with a digit (`2017`).
    Label(String),
    Named(String),
    Dot,
    Comma,
    LParen,
    RParen,
    Op(char),
    Cmp(CmpOp),
    End,
}

fn is_word(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let after_dot = matches!(out.last(), Some((Tok::Dot, _)));
        if after_dot && is_word(c) {
            while i < chars.len() && is_word(chars[i]) {
                i += 1;
            }
            out.push((Tok::Label(chars[start..i].iter().collect()), start));
            continue;
        }
        let after_ident = matches!(out.last(), Some((Tok::Ident(_), _)));
        if c.is_ascii_digit() || (c == '.' && !after_ident && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| ParseError::new(start, format!("bad number `{s}`")))?;
            out.push((Tok::Num(v), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && is_word(chars[i]) {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start));
            continue;
        }
        if c == '$' {
            i += 1;
            while i < chars.len() && is_word(chars[i]) {
                i += 1;
            }
            if i == start + 1 {
                return Err(ParseError::new(start, "expected a name after `$`"));
            }
            out.push((Tok::Named(chars[start + 1..i].iter().collect()), start));
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        if let Some(op) = CmpOp::from_symbol(&two).filter(|_| two.chars().count() == 2) {
            out.push((Tok::Cmp(op), start));
            i += 2;
            continue;
        }
        let tok = match c {
            '.' => Tok::Dot,
            ',' => Tok::Comma,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '×' => Tok::Op('*'),
            '÷' => Tok::Op('/'),
            '−' => Tok::Op('-'),
            _ => match CmpOp::from_symbol(&c.to_string()) {
                Some(op) => Tok::Cmp(op),
                None => return Err(ParseError::new(start, format!("unexpected character `{c}`"))),
            },
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, chars.len()));
    Ok(out)
}

struct Parser<'r> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    registry: &'r Registry,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn at(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::new(self.at(), format!("expected {what}")))
        }
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.additive()?;
        if let Tok::Cmp(op) = *self.peek() {
            self.bump();
            let rhs = self.additive()?;
            if let Tok::Cmp(_) = self.peek() {
                return Err(ParseError::new(self.at(), "chained comparisons need parentheses"));
            }
            return Ok(Expr::compare(op, lhs, rhs));
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.at();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Number(v)),
            Tok::Named(n) => Ok(Expr::Named(n)),
            Tok::LParen => {
                let e = self.comparison()?;
                if *self.peek() != Tok::RParen {
                    return Err(ParseError::new(self.at(), "unbalanced parentheses: expected `)`"));
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => match self.peek() {
                Tok::LParen => self.call(name, at),
                Tok::Dot => {
                    self.bump();
                    let at = self.at();
                    match self.bump() {
                        Tok::Label(l) => Ok(Expr::value(name, label_slot(&l))),
                        _ => Err(ParseError::new(at, "expected an attribute after `.`")),
                    }
                }
                _ => match attr_var_index(&name) {
                    Some(k) => Ok(Expr::AttrVar(k)),
                    None => Err(ParseError::new(at, format!("unknown identifier `{name}`"))),
                },
            },
            Tok::End => Err(ParseError::new(at, if at == 0 { "empty input" } else { "unexpected end of input" })),
            Tok::RParen => Err(ParseError::new(at, "unbalanced parentheses: unexpected `)`")),
            _ => Err(ParseError::new(at, "expected an expression")),
        }
    }

    fn call(&mut self, name: String, at: usize) -> Result<Expr, ParseError> {
        let spec = self
            .registry
            .get(&name)
            .ok_or_else(|| ParseError::new(at, format!("unknown function `{name}`")))?
            .clone();
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let arg_at = self.at();
                if matches!(self.peek(), Tok::Comma | Tok::RParen) {
                    return Err(ParseError::new(arg_at, format!("missing argument {} of {}", args.len() + 1, spec.name)));
                }
                args.push(self.comparison()?);
                match self.peek() {
                    Tok::Comma => {
                        self.bump();
                    }
                    Tok::RParen => break,
                    _ => return Err(ParseError::new(self.at(), "expected `,` or `)` in argument list")),
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        if !spec.accepts(args.len()) {
            return Err(ParseError::new(at, format!("{} does not take {} argument(s)", spec.name, args.len())));
        }
        Ok(Expr::call(spec.name, args))
    }
}

fn attr_var_index(s: &str) -> Option<usize> {
    let digits = s.strip_prefix('A')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

fn label_slot(label: &str) -> AttrSlot {
    match attr_var_index(label) {
        Some(k) => AttrSlot::Var(k),
        None => AttrSlot::Label(label.to_string()),
    }
}

/// Parses with the standard function library.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    parse_with(text, Registry::standard())
}

pub fn parse_with(text: &str, registry: &Registry) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, registry };
    let e = p.comparison()?;
    match p.peek() {
        Tok::End => Ok(e),
        Tok::RParen => Err(ParseError::new(p.at(), "unbalanced parentheses: unexpected `)`")),
        _ => Err(ParseError::new(p.at(), "unexpected trailing input")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(alias: &str, label: &str) -> Expr {
        Expr::value(alias, AttrSlot::Label(label.into()))
    }

    #[test]
    fn growth_rate_query() {
        let e = parse("POWER(a.2017/b.2016,1/(2017-2016))-1").unwrap();
        let expected = Expr::binary(
            BinOp::Sub,
            Expr::call(
                "POWER",
                vec![
                    Expr::binary(BinOp::Div, v("a", "2017"), v("b", "2016")),
                    Expr::binary(
                        BinOp::Div,
                        Expr::Number(1.0),
                        Expr::binary(BinOp::Sub, Expr::Number(2017.0), Expr::Number(2016.0)),
                    ),
                ],
            ),
            Expr::Number(1.0),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn parenthesized_ratio() {
        let e = parse("(a.2017 / b.2000)").unwrap();
        assert_eq!(e, Expr::binary(BinOp::Div, v("a", "2017"), v("b", "2000")));
    }

    #[test]
    fn missing_argument_reports_position() {
        let err = parse("POWER(,)").unwrap_err();
        assert_eq!(err.position, 6);
        assert!(err.message.contains("argument 1"), "{}", err.message);
    }

    #[test]
    fn malformed_inputs() {
        assert_eq!(parse("").unwrap_err().message, "empty input");
        assert!(parse("(a.1 + 2").unwrap_err().message.contains("unbalanced"));
        assert!(parse("a.1 + 2)").unwrap_err().message.contains("unbalanced"));
        assert!(parse("FOO(1)").unwrap_err().message.contains("unknown function"));
        assert!(parse("ABS(1,2)").is_err());
        assert!(parse("x + 1").unwrap_err().message.contains("unknown identifier"));
        assert!(parse("1 < 2 < 3").is_err());
    }

    #[test]
    fn precedence_and_variables() {
        let e = parse("-a.A1^2 + 3*A2 > 100").unwrap();
        let lhs = Expr::binary(
            BinOp::Add,
            Expr::Neg(Box::new(Expr::binary(BinOp::Pow, Expr::value("a", AttrSlot::Var(1)), Expr::Number(2.0)))),
            Expr::binary(BinOp::Mul, Expr::Number(3.0), Expr::AttrVar(2)),
        );
        assert_eq!(e, Expr::compare(CmpOp::Gt, lhs, Expr::Number(100.0)));
        assert_eq!(parse("a.x ≠ 2").unwrap(), Expr::compare(CmpOp::Ne, v("a", "x"), Expr::Number(2.0)));
        assert_eq!(parse("$growth * 2").unwrap(), Expr::binary(BinOp::Mul, Expr::Named("growth".into()), Expr::Number(2.0)));
    }

    #[test]
    fn render_is_minimal_and_reparses() {
        for s in ["POWER(a.2017/b.2016,1/(2017-2016))-1", "a.x-(b.y-c.z)", "(a.x+b.y)*2", "2^3^2", "(2^3)^2", "-(a.x+1)", "(-2)^2", "a.x/b.y > 1"] {
            let e = parse(s).unwrap();
            assert_eq!(e.to_string(), s);
            assert_eq!(parse(&e.to_string()).unwrap(), e);
        }
    }
}
