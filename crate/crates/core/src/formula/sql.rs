use super::eval::{CellSource, EvalError};
use super::template::{Binding, FormulaTemplate};

/// Per value variable: its relation and one or more admissible key values.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasAlternatives {
    pub relation: String,
    pub keys: Vec<String>,
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

fn assemble(select: String, aliases: &[String], rows: &[AliasAlternatives], source: &dyn CellSource) -> String {
    let mut sql = format!("SELECT {select}");
    if rows.is_empty() {
        return sql;
    }
    let from: Vec<String> = rows.iter().zip(aliases).map(|(r, a)| format!("{} {a}", r.relation)).collect();
    let predicates: Vec<String> = rows
        .iter()
        .zip(aliases)
        .map(|(r, a)| {
            let key_attr = source.key_attribute(&r.relation).unwrap_or("key");
            let eqs: Vec<String> = r.keys.iter().map(|k| format!("{a}.{key_attr} = {}", quote(k))).collect();
            if eqs.len() == 1 {
                eqs.into_iter().next().unwrap()
            } else {
                format!("({})", eqs.join(" OR "))
            }
        })
        .collect();
    sql.push_str(&format!("\nFROM {}\nWHERE {}", from.join(", "), predicates.join(" AND ")));
    sql
}

/// Renders the statistical check query for a bound template.
pub fn render_sql(template: &FormulaTemplate, binding: &Binding, source: &dyn CellSource) -> Result<String, EvalError> {
    let select = template.instantiate(binding)?.to_string();
    let rows: Vec<AliasAlternatives> = binding
        .cells
        .iter()
        .map(|c| AliasAlternatives { relation: c.relation.clone(), keys: vec![c.key.clone()] })
        .collect();
    Ok(assemble(select, &template.value_vars, &rows, source))
}

/// Like [`render_sql`], but each value variable may admit several key values,
/// rendered as an OR group.
pub fn render_sql_alternatives(
    template: &FormulaTemplate,
    rows: &[AliasAlternatives],
    attrs: &[String],
    source: &dyn CellSource,
) -> Result<String, EvalError> {
    let binding = Binding { cells: Vec::new(), attrs: attrs.to_vec() };
    let select = template.instantiate(&binding)?.to_string();
    Ok(assemble(select, &template.value_vars, rows, source))
}
