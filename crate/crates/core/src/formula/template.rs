use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::ast::{alias_name, AttrSlot, CmpOp, Expr};
use super::eval::EvalError;
use super::parser::{parse, ParseError};

/// Comparison carried by a comparison-rooted template (`op` and, when the
/// right-hand side is a constant, the parameter `p`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub op: CmpOp,
    pub parameter: Option<f64>,
}

/// A check expression with its value and attribute variables in canonical form.
///
/// Each value variable stands for one cell. Variables are named by first
/// occurrence (`a`, `b`, ... and `A1`, `A2`, ...), so alpha-equivalent
/// expressions produce the same template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaTemplate {
    pub expression: Expr,
    pub value_vars: Vec<String>,
    pub attr_vars: Vec<String>,
    pub embedded_comparison: Option<Comparison>,
}

/// One bound cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    pub relation: String,
    pub key: String,
    pub attribute: String,
}

impl CellRef {
    pub fn new(relation: impl Into<String>, key: impl Into<String>, attribute: impl Into<String>) -> Self {
        CellRef { relation: relation.into(), key: key.into(), attribute: attribute.into() }
    }
}

/// Cells for the value variables plus the labels of the attribute variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub cells: Vec<CellRef>,
    pub attrs: Vec<String>,
}

/// Output of [`abstract_expr`]: the template plus what it was abstracted from.
#[derive(Debug, Clone, PartialEq)]
pub struct Abstraction {
    pub template: FormulaTemplate,
    /// Original label of each attribute variable.
    pub attr_labels: Vec<String>,
    /// Original alias of each value variable.
    pub aliases: Vec<String>,
}

impl FormulaTemplate {
    /// Canonicalizes `expr`. Every distinct `(alias, attribute)` look-up becomes its own value variable.
    pub fn new(expr: Expr) -> Self {
        Self::canonical(expr).0
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        Ok(Self::new(parse(text)?))
    }

    fn canonical(expr: Expr) -> (Self, Vec<String>) {
        let mut cells: Vec<(String, AttrSlot)> = Vec::new();
        let mut attr_order: Vec<usize> = Vec::new();
        expr.walk(&mut |node| match node {
            Expr::Value { alias, attr } => {
                if !cells.iter().any(|(a, s)| a == alias && s == attr) {
                    cells.push((alias.clone(), attr.clone()));
                }
                if let AttrSlot::Var(k) = attr {
                    if !attr_order.contains(k) {
                        attr_order.push(*k);
                    }
                }
            }
            Expr::AttrVar(k) if !attr_order.contains(k) => attr_order.push(*k),
            _ => {}
        });
        let attr_map: HashMap<usize, usize> = attr_order.iter().enumerate().map(|(i, k)| (*k, i + 1)).collect();
        let renamed = expr.map(&mut |node| match node {
            Expr::Value { alias, attr } => {
                let idx = cells.iter().position(|(a, s)| *a == alias && *s == attr).expect("collected above");
                let attr = match attr {
                    AttrSlot::Var(k) => AttrSlot::Var(attr_map[&k]),
                    label => label,
                };
                Expr::Value { alias: alias_name(idx), attr }
            }
            Expr::AttrVar(k) => Expr::AttrVar(attr_map[&k]),
            other => other,
        });
        let embedded_comparison = match &renamed {
            Expr::Compare { op, rhs, .. } => Some(Comparison {
                op: *op,
                parameter: match rhs.as_ref() {
                    Expr::Number(x) => Some(*x),
                    Expr::Neg(inner) => match inner.as_ref() {
                        Expr::Number(x) => Some(-x),
                        _ => None,
                    },
                    _ => None,
                },
            }),
            _ => None,
        };
        let template = FormulaTemplate {
            expression: renamed,
            value_vars: (0..cells.len()).map(alias_name).collect(),
            attr_vars: (1..=attr_order.len()).map(|k| format!("A{k}")).collect(),
            embedded_comparison,
        };
        (template, cells.into_iter().map(|(a, _)| a).collect())
    }

    /// Canonical text, used as the formula label by the classifiers.
    pub fn key(&self) -> String {
        self.expression.to_string()
    }

    pub fn is_boolean(&self) -> bool {
        matches!(self.expression, Expr::Compare { .. })
    }

    /// Attribute slot of each value variable.
    pub fn value_slots(&self) -> Vec<AttrSlot> {
        let mut slots: Vec<Option<AttrSlot>> = vec![None; self.value_vars.len()];
        self.expression.walk(&mut |node| {
            if let Expr::Value { alias, attr } = node {
                if let Some(i) = self.value_vars.iter().position(|v| v == alias) {
                    slots[i].get_or_insert_with(|| attr.clone());
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every value variable occurs")).collect()
    }

    /// For each attribute variable, the first value variable whose look-up uses it.
    pub fn attr_links(&self) -> Vec<Option<usize>> {
        let slots = self.value_slots();
        (1..=self.attr_vars.len())
            .map(|k| slots.iter().position(|s| *s == AttrSlot::Var(k)))
            .collect()
    }

    /// Replaces variables by the bound labels, giving a concrete expression.
    pub fn instantiate(&self, binding: &Binding) -> Result<Expr, EvalError> {
        let label = |k: usize| binding.attrs.get(k - 1).cloned().ok_or(EvalError::UnboundAttributeVariable(k));
        let mut err = None;
        let out = self.expression.map(&mut |node| match node {
            Expr::Value { alias, attr: AttrSlot::Var(k) } => match label(k) {
                Ok(l) => Expr::Value { alias, attr: AttrSlot::Label(l) },
                Err(e) => {
                    err.get_or_insert(e);
                    Expr::Number(0.0)
                }
            },
            Expr::AttrVar(k) => match label(k).and_then(|l| l.trim().parse::<f64>().map_err(|_| EvalError::NonNumericAttribute(l))) {
                Ok(x) if x >= 0.0 => Expr::Number(x),
                Ok(x) => Expr::Neg(Box::new(Expr::Number(-x))),
                Err(e) => {
                    err.get_or_insert(e);
                    Expr::Number(0.0)
                }
            },
            other => other,
        });
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

impl Binding {
    /// Builds a binding from one cell per value variable; attribute variables
    /// take the attribute of their linked cell.
    pub fn derive(template: &FormulaTemplate, cells: Vec<CellRef>) -> Result<Binding, EvalError> {
        if cells.len() != template.value_vars.len() {
            return Err(EvalError::InconsistentBinding(format!(
                "{} cells for {} value variables",
                cells.len(),
                template.value_vars.len()
            )));
        }
        let mut attrs: Vec<Option<String>> = vec![None; template.attr_vars.len()];
        for (cell, slot) in cells.iter().zip(template.value_slots()) {
            match slot {
                AttrSlot::Var(k) => match &attrs[k - 1] {
                    None => attrs[k - 1] = Some(cell.attribute.clone()),
                    Some(l) if *l != cell.attribute => {
                        return Err(EvalError::InconsistentBinding(format!("A{k} bound to both `{l}` and `{}`", cell.attribute)))
                    }
                    Some(_) => {}
                },
                AttrSlot::Label(l) if l != cell.attribute => {
                    return Err(EvalError::InconsistentBinding(format!("look-up of `{l}` bound to attribute `{}`", cell.attribute)))
                }
                AttrSlot::Label(_) => {}
            }
        }
        let attrs = attrs
            .into_iter()
            .enumerate()
            .map(|(i, a)| a.ok_or(EvalError::UnboundAttributeVariable(i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Binding { cells, attrs })
    }
}

/// Abstracts a concrete check into a template. Attribute labels in
/// `context_attributes` are replaced by attribute variables wherever they
/// occur, including as numeric constants.
pub fn abstract_expr(concrete: &Expr, context_attributes: &[String]) -> Abstraction {
    let numeric_labels: Vec<(f64, &String)> = context_attributes
        .iter()
        .filter_map(|l| l.trim().parse::<f64>().ok().map(|x| (x, l)))
        .collect();
    let label_of_number = |x: f64| numeric_labels.iter().find(|(v, _)| *v == x).map(|(_, l)| (*l).clone());

    let mut order: Vec<String> = Vec::new();
    concrete.walk(&mut |node| {
        let label = match node {
            Expr::Value { attr: AttrSlot::Label(l), .. } if context_attributes.contains(l) => Some(l.clone()),
            Expr::Number(x) => label_of_number(*x),
            _ => None,
        };
        if let Some(l) = label {
            if !order.contains(&l) {
                order.push(l);
            }
        }
    });
    let var_of = |l: &str| order.iter().position(|o| o == l).map(|i| i + 1);
    let replaced = concrete.map(&mut |node| match node {
        Expr::Value { alias, attr: AttrSlot::Label(l) } => match var_of(&l) {
            Some(k) => Expr::Value { alias, attr: AttrSlot::Var(k) },
            None => Expr::Value { alias, attr: AttrSlot::Label(l) },
        },
        Expr::Number(x) => match label_of_number(x).and_then(|l| var_of(&l)) {
            Some(k) => Expr::AttrVar(k),
            None => Expr::Number(x),
        },
        other => other,
    });
    let (template, aliases) = FormulaTemplate::canonical(replaced);
    Abstraction { template, attr_labels: order, aliases }
}

/// Substitutes `$name` references by their definitions until only look-ups remain.
pub fn flatten(expr: &Expr, definitions: &BTreeMap<String, Expr>) -> Result<Expr, EvalError> {
    fn go(expr: &Expr, defs: &BTreeMap<String, Expr>, stack: &mut Vec<String>) -> Result<Expr, EvalError> {
        let mut err = None;
        let out = expr.map(&mut |node| match node {
            Expr::Named(name) if err.is_none() => {
                if stack.contains(&name) {
                    err = Some(EvalError::CyclicDefinition(name));
                    return Expr::Number(0.0);
                }
                let Some(def) = defs.get(&name) else {
                    err = Some(EvalError::UnresolvedName(name));
                    return Expr::Number(0.0);
                };
                stack.push(name);
                let r = go(def, defs, stack);
                stack.pop();
                r.unwrap_or_else(|e| {
                    err = Some(e);
                    Expr::Number(0.0)
                })
            }
            other => other,
        });
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
    go(expr, definitions, &mut Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(ls: &[&str]) -> Vec<String> {
        ls.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn growth_rate_abstraction() {
        let e = parse("POWER(a.2017/b.2016,1/(2017-2016))-1").unwrap();
        let abs = abstract_expr(&e, &labels(&["2016", "2017"]));
        assert_eq!(abs.template.key(), "POWER(a.A1/b.A2,1/(A1-A2))-1");
        assert_eq!(abs.attr_labels, labels(&["2017", "2016"]));
        assert_eq!(abs.template.value_vars, labels(&["a", "b"]));
        assert_eq!(abs.template.attr_vars, labels(&["A1", "A2"]));
    }

    #[test]
    fn ratio_abstraction() {
        let e = parse("(a.2017/b.2000)").unwrap();
        let abs = abstract_expr(&e, &labels(&["2017", "2000"]));
        assert_eq!(abs.template.key(), "a.A1/b.A2");
    }

    #[test]
    fn constants_are_untouched() {
        let e = parse("3*2").unwrap();
        let abs = abstract_expr(&e, &labels(&["2017"]));
        assert_eq!(abs.template.expression, e);
        assert!(abs.template.value_vars.is_empty());
        assert!(abs.template.attr_vars.is_empty());
    }

    #[test]
    fn labels_outside_context_stay_concrete() {
        let e = parse("a.Total*100/b.2017").unwrap();
        let abs = abstract_expr(&e, &labels(&["2017"]));
        assert_eq!(abs.template.key(), "a.Total*100/b.A1");
    }

    #[test]
    fn same_row_two_attributes_become_two_variables() {
        let e = parse("x.2018/x.2017-1").unwrap();
        let abs = abstract_expr(&e, &labels(&["2017", "2018"]));
        assert_eq!(abs.template.key(), "a.A1/b.A2-1");
        assert_eq!(abs.aliases, labels(&["x", "x"]));
    }

    #[test]
    fn alpha_equivalent_expressions_share_a_template() {
        let t1 = FormulaTemplate::parse("q.A7/r.A3 + A7").unwrap();
        let t2 = FormulaTemplate::parse("a.A1/b.A2 + A1").unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn embedded_comparison() {
        let t = FormulaTemplate::parse("a.A1/b.A2 > 100").unwrap();
        assert_eq!(t.embedded_comparison, Some(Comparison { op: CmpOp::Gt, parameter: Some(100.0) }));
        assert!(t.is_boolean());
    }

    #[test]
    fn binding_links_attribute_variables() {
        let t = FormulaTemplate::parse("POWER(a.A1/b.A2,1/(A1-A2))-1").unwrap();
        let b = Binding::derive(&t, vec![CellRef::new("GED", "K", "2018"), CellRef::new("GED", "K", "2017")]).unwrap();
        assert_eq!(b.attrs, labels(&["2018", "2017"]));
        assert_eq!(t.instantiate(&b).unwrap().to_string(), "POWER(a.2018/b.2017,1/(2018-2017))-1");

        let shared = FormulaTemplate::parse("a.A1/b.A1").unwrap();
        assert!(Binding::derive(&shared, vec![CellRef::new("R", "x", "2017"), CellRef::new("R", "y", "2018")]).is_err());
        assert!(Binding::derive(&shared, vec![CellRef::new("R", "x", "2017"), CellRef::new("R", "y", "2017")]).is_ok());
    }

    #[test]
    fn flatten_substitutes_and_rejects_cycles() {
        let mut defs = BTreeMap::new();
        defs.insert("growth".to_string(), parse("a.2018/b.2017").unwrap());
        defs.insert("pct".to_string(), parse("($growth-1)*100").unwrap());
        let flat = flatten(&parse("$pct").unwrap(), &defs).unwrap();
        assert_eq!(flat.to_string(), "(a.2018/b.2017-1)*100");

        defs.insert("x".to_string(), parse("$y+1").unwrap());
        defs.insert("y".to_string(), parse("$x*2").unwrap());
        assert_eq!(flatten(&parse("$x").unwrap(), &defs), Err(EvalError::CyclicDefinition("x".into())));
        assert_eq!(flatten(&parse("$nope").unwrap(), &defs), Err(EvalError::UnresolvedName("nope".into())));
    }
}
