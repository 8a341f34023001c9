use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{AttrSlot, BinOp, Expr};
use super::registry::Registry;
use super::template::{Binding, FormulaTemplate};

/// Read access to relation cells.
pub trait CellSource {
    fn cell(&self, relation: &str, key: &str, attribute: &str) -> Option<f64>;
    /// Name of the key column of `relation`, e.g. `Index`.
    fn key_attribute(&self, relation: &str) -> Option<&str>;
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum EvalError {
    #[error("missing cell {relation}[{key}][{attribute}]")]
    MissingCell { relation: String, key: String, attribute: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("attribute `{0}` is not numeric")]
    NonNumericAttribute(String),
    #[error("non-finite result")]
    NonFinite,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unbound value variable `{0}`")]
    UnboundAlias(String),
    #[error("attribute variable A{0} is not bound")]
    UnboundAttributeVariable(usize),
    #[error("inconsistent binding: {0}")]
    InconsistentBinding(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("unresolved intermediate value `${0}`")]
    UnresolvedName(String),
    #[error("cyclic definition of `${0}`")]
    CyclicDefinition(String),
}

/// Result of evaluating a check: arithmetic templates give a number, comparison-rooted ones a boolean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EvalValue {
    Number(f64),
    Bool(bool),
}

impl EvalValue {
    pub fn as_number(self) -> Option<f64> {
        match self {
            EvalValue::Number(x) => Some(x),
            EvalValue::Bool(_) => None,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            EvalValue::Bool(b) => Some(b),
            EvalValue::Number(_) => None,
        }
    }
}

struct Evaluator<'a, L, V>
where
    L: Fn(&str, &AttrSlot) -> Result<f64, EvalError>,
    V: Fn(usize) -> Result<f64, EvalError>,
{
    lookup: L,
    attr_var: V,
    registry: &'a Registry,
}

fn finite(x: f64) -> Result<f64, EvalError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(EvalError::NonFinite)
    }
}

impl<L, V> Evaluator<'_, L, V>
where
    L: Fn(&str, &AttrSlot) -> Result<f64, EvalError>,
    V: Fn(usize) -> Result<f64, EvalError>,
{
    fn top(&self, e: &Expr) -> Result<EvalValue, EvalError> {
        match e {
            Expr::Compare { op, lhs, rhs } => Ok(EvalValue::Bool(op.holds(self.num(lhs)?, self.num(rhs)?))),
            other => Ok(EvalValue::Number(self.num(other)?)),
        }
    }

    fn num(&self, e: &Expr) -> Result<f64, EvalError> {
        match e {
            Expr::Number(x) => Ok(*x),
            Expr::Value { alias, attr } => (self.lookup)(alias, attr),
            Expr::AttrVar(k) => (self.attr_var)(*k),
            Expr::Named(n) => Err(EvalError::UnresolvedName(n.clone())),
            Expr::Neg(inner) => Ok(-self.num(inner)?),
            Expr::Binary { op, lhs, rhs } => {
                let l = self.num(lhs)?;
                let r = self.num(rhs)?;
                finite(match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        l / r
                    }
                    BinOp::Pow => l.powf(r),
                })
            }
            Expr::Call { name, args } => {
                let spec = self.registry.get(name).ok_or_else(|| EvalError::UnknownFunction(name.clone()))?;
                let vals = args.iter().map(|a| self.num(a)).collect::<Result<Vec<_>, _>>()?;
                finite((spec.eval)(&vals)?)
            }
            Expr::Compare { .. } => Err(EvalError::TypeMismatch("comparison used as a number".into())),
        }
    }
}

fn parse_attr_number(label: &str) -> Result<f64, EvalError> {
    label.trim().parse::<f64>().map_err(|_| EvalError::NonNumericAttribute(label.to_string()))
}

/// Evaluates a template under a binding.
pub fn evaluate(template: &FormulaTemplate, binding: &Binding, source: &dyn CellSource) -> Result<EvalValue, EvalError> {
    let ev = Evaluator {
        lookup: |alias: &str, slot: &AttrSlot| {
            let idx = template
                .value_vars
                .iter()
                .position(|v| v == alias)
                .ok_or_else(|| EvalError::UnboundAlias(alias.to_string()))?;
            let cell = binding.cells.get(idx).ok_or_else(|| EvalError::UnboundAlias(alias.to_string()))?;
            let attribute = match slot {
                AttrSlot::Label(l) => l.as_str(),
                AttrSlot::Var(k) => binding.attrs.get(k - 1).ok_or(EvalError::UnboundAttributeVariable(*k))?.as_str(),
            };
            source.cell(&cell.relation, &cell.key, attribute).ok_or_else(|| EvalError::MissingCell {
                relation: cell.relation.clone(),
                key: cell.key.clone(),
                attribute: attribute.to_string(),
            })
        },
        attr_var: |k: usize| parse_attr_number(binding.attrs.get(k - 1).ok_or(EvalError::UnboundAttributeVariable(k))?),
        registry: Registry::standard(),
    };
    ev.top(&template.expression)
}

/// Evaluates a fully concrete expression, resolving each alias to a (relation, key) row.
pub fn evaluate_concrete(
    expr: &Expr,
    resolve: &dyn Fn(&str) -> Option<(String, String)>,
    source: &dyn CellSource,
) -> Result<EvalValue, EvalError> {
    let ev = Evaluator {
        lookup: |alias: &str, slot: &AttrSlot| {
            let (relation, key) = resolve(alias).ok_or_else(|| EvalError::UnboundAlias(alias.to_string()))?;
            match slot {
                AttrSlot::Label(l) => source.cell(&relation, &key, l).ok_or_else(|| EvalError::MissingCell {
                    relation,
                    key,
                    attribute: l.clone(),
                }),
                AttrSlot::Var(k) => Err(EvalError::UnboundAttributeVariable(*k)),
            }
        },
        attr_var: |k: usize| Err(EvalError::UnboundAttributeVariable(k)),
        registry: Registry::standard(),
    };
    ev.top(expr)
}
