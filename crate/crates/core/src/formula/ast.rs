use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => PREC_ADD,
            BinOp::Mul | BinOp::Div => PREC_MUL,
            BinOp::Pow => PREC_POW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = ">")]
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Gt => ">",
        }
    }

    pub fn from_symbol(s: &str) -> Option<CmpOp> {
        match s {
            "<" => Some(CmpOp::Lt),
            "=" | "==" => Some(CmpOp::Eq),
            "!=" | "<>" | "≠" => Some(CmpOp::Ne),
            ">" => Some(CmpOp::Gt),
            _ => None,
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Gt => lhs > rhs,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Attribute part of a cell look-up: a concrete label or an attribute variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttrSlot {
    Label(String),
    /// 1-based attribute variable index (`A1` is `Var(1)`).
    Var(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    /// Non-negative constant. Negative values are written as `Neg(Number)`.
    Number(f64),
    /// Cell look-up `alias.attribute`.
    Value { alias: String, attr: AttrSlot },
    /// Attribute variable used as a number, e.g. the `A1-A2` in a growth-rate exponent.
    AttrVar(usize),
    /// Reference to an intermediate value of a prior check, `$name`. Removed by [`super::flatten`].
    Named(String),
    Neg(Box<Expr>),
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Call { name: String, args: Vec<Expr> },
    Compare { op: CmpOp, lhs: Box<Expr>, rhs: Box<Expr> },
}

pub(crate) const PREC_CMP: u8 = 1;
pub(crate) const PREC_ADD: u8 = 2;
pub(crate) const PREC_MUL: u8 = 3;
pub(crate) const PREC_NEG: u8 = 4;
pub(crate) const PREC_POW: u8 = 5;
const PREC_ATOM: u8 = 6;

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn compare(op: CmpOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Compare { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn value(alias: impl Into<String>, attr: AttrSlot) -> Expr {
        Expr::Value { alias: alias.into(), attr }
    }

    pub fn call(name: impl Into<String>, args: Vec<Expr>) -> Expr {
        Expr::Call { name: name.into(), args }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Compare { .. } => PREC_CMP,
            Expr::Neg(_) => PREC_NEG,
            Expr::Number(x) if *x < 0.0 || x.is_sign_negative() => PREC_NEG,
            _ => PREC_ATOM,
        }
    }

    /// Visits every node in rendering (left-to-right) order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Neg(e) => e.walk(f),
            Expr::Binary { lhs, rhs, .. } | Expr::Compare { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            Expr::Call { args, .. } => args.iter().for_each(|a| a.walk(f)),
            _ => {}
        }
    }

    /// Rebuilds the tree bottom-up, letting `f` replace each node.
    pub fn map(&self, f: &mut impl FnMut(Expr) -> Expr) -> Expr {
        let rebuilt = match self {
            Expr::Neg(e) => Expr::Neg(Box::new(e.map(f))),
            Expr::Binary { op, lhs, rhs } => Expr::binary(*op, lhs.map(f), rhs.map(f)),
            Expr::Compare { op, lhs, rhs } => Expr::compare(*op, lhs.map(f), rhs.map(f)),
            Expr::Call { name, args } => Expr::call(name.clone(), args.iter().map(|a| a.map(f)).collect()),
            other => other.clone(),
        };
        f(rebuilt)
    }

    /// Number of nodes; the "claim complexity" proxy used by reports.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(x) => {
                if x.is_sign_negative() {
                    write!(f, "(-{})", -x)
                } else {
                    write!(f, "{x}")
                }
            }
            Expr::Value { alias, attr } => match attr {
                AttrSlot::Label(l) => write!(f, "{alias}.{l}"),
                AttrSlot::Var(k) => write!(f, "{alias}.A{k}"),
            },
            Expr::AttrVar(k) => write!(f, "A{k}"),
            Expr::Named(n) => write!(f, "${n}"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                e.fmt_child(f, e.precedence() < PREC_NEG)
            }
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                let (lp, rp) = if *op == BinOp::Pow {
                    (lhs.precedence() <= p, rhs.precedence() < p)
                } else {
                    (lhs.precedence() < p, rhs.precedence() <= p)
                };
                lhs.fmt_child(f, lp)?;
                f.write_str(op.symbol())?;
                rhs.fmt_child(f, rp)
            }
            Expr::Compare { op, lhs, rhs } => {
                lhs.fmt_child(f, lhs.precedence() <= PREC_CMP)?;
                write!(f, " {op} ")?;
                rhs.fmt_child(f, rhs.precedence() <= PREC_CMP)
            }
            Expr::Call { name, args } => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Canonical alias for the `i`-th value variable: `a`..`z`, then `v26`, `v27`, ...
pub fn alias_name(i: usize) -> String {
    if i < 26 {
        ((b'a' + i as u8) as char).to_string()
    } else {
        format!("v{i}")
    }
}
