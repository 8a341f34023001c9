//! The check-expression language.
//!
//! A check expression is the SELECT clause of a statistical check query: an
//! arithmetic combination of cell look-ups (`a.2017`), constants and library
//! functions, optionally compared against a parameter. Concrete expressions
//! are abstracted into reusable [`FormulaTemplate`]s whose value variables
//! (`a`, `b`, ...) and attribute variables (`A1`, `A2`, ...) get re-bound to
//! cells of a new claim.

mod ast;
mod eval;
mod parser;
mod registry;
mod sql;
mod template;

pub use ast::{alias_name, AttrSlot, BinOp, CmpOp, Expr};
pub use eval::{evaluate, evaluate_concrete, CellSource, EvalError, EvalValue};
pub use parser::{parse, parse_with, ParseError};
pub use registry::{FunctionSpec, Registry};
pub use sql::{render_sql, render_sql_alternatives, AliasAlternatives};
pub use template::{abstract_expr, flatten, Abstraction, Binding, CellRef, Comparison, FormulaTemplate};
