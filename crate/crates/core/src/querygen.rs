//! Query candidates from a validated context.
//!
//! Every formula is instantiated with every ordered arrangement of the context's
//! existing cells onto its value variables. For explicit claims the candidates
//! whose value is within tolerance of the parameter form the matched set; when
//! no candidate matches, all alternatives are returned instead so that the
//! closest one can be proposed as a correction.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::relative_error;
use crate::formula::{evaluate, render_sql, AttrSlot, Binding, CellRef, CellSource, EvalError, EvalValue, FormulaTemplate};
use crate::par;

/// Relations, keys and attributes validated for a claim, plus ranked formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub relations: Vec<String>,
    pub keys: Vec<String>,
    pub attributes: Vec<String>,
    pub formulas: Vec<Arc<FormulaTemplate>>,
    pub parameter: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryGenConfig {
    /// Allow one cell to bind several value variables.
    pub allow_repetition: bool,
    /// Floor of the denominator in the relative-error test.
    pub eps_abs: f64,
    pub candidate_cap: usize,
    /// Render SQL text for each candidate. Planning can skip it.
    pub render_sql: bool,
}

impl Default for QueryGenConfig {
    fn default() -> Self {
        QueryGenConfig { allow_repetition: false, eps_abs: 1e-9, candidate_cap: 10_000, render_sql: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCandidate {
    /// Index of the formula in the context's ranking.
    pub formula_rank: usize,
    pub template: Arc<FormulaTemplate>,
    pub binding: Binding,
    pub value: Result<EvalValue, EvalError>,
    pub sql: String,
    pub matched: bool,
}

impl QueryCandidate {
    pub fn number(&self) -> Option<f64> {
        self.value.as_ref().ok().and_then(|v| v.as_number())
    }

    pub fn relations(&self) -> Vec<String> {
        crate::corpus::dedup(self.binding.cells.iter().map(|c| c.relation.clone()))
    }

    pub fn keys(&self) -> Vec<String> {
        crate::corpus::dedup(self.binding.cells.iter().map(|c| c.key.clone()))
    }

    pub fn attributes(&self) -> Vec<String> {
        crate::corpus::dedup(self.binding.cells.iter().map(|c| c.attribute.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// The matched set when non-empty, otherwise the alternatives.
    pub candidates: Vec<QueryCandidate>,
    /// Whether `candidates` is the matched set.
    pub matched: bool,
    /// Whether the candidate cap cut the enumeration short.
    pub truncated: bool,
}

/// All existing cells over relations × keys × attributes, in context order.
pub fn collect_values(relations: &[String], keys: &[String], attributes: &[String], source: &dyn CellSource) -> Vec<CellRef> {
    let mut out = Vec::new();
    for r in relations {
        for k in keys {
            for a in attributes {
                if source.cell(r, k, a).is_some() {
                    out.push(CellRef::new(r.clone(), k.clone(), a.clone()));
                }
            }
        }
    }
    out
}

/// Whether `value` lies within relative tolerance of `p`.
pub fn within_tolerance(value: f64, p: f64, tolerance: f64, eps_abs: f64) -> bool {
    (value - p).abs() / p.abs().max(eps_abs) < tolerance
}

/// Depth-first enumeration of consistent arrangements, in lexicographic index order.
fn arrangements(template: &FormulaTemplate, cells: &[CellRef], allow_repetition: bool, cap: usize) -> Vec<Binding> {
    let slots = template.value_slots();
    let n = slots.len();
    let mut out = Vec::new();
    if n == 0 {
        out.push(Binding { cells: Vec::new(), attrs: Vec::new() });
        return out;
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut attrs: Vec<Option<String>> = vec![None; template.attr_vars.len()];
    let mut used = vec![false; cells.len()];

    #[allow(clippy::too_many_arguments)]
    fn go(
        depth: usize,
        slots: &[AttrSlot],
        cells: &[CellRef],
        allow_repetition: bool,
        cap: usize,
        chosen: &mut Vec<usize>,
        attrs: &mut Vec<Option<String>>,
        used: &mut Vec<bool>,
        out: &mut Vec<Binding>,
    ) {
        if out.len() >= cap {
            return;
        }
        if depth == slots.len() {
            out.push(Binding {
                cells: chosen.iter().map(|&i| cells[i].clone()).collect(),
                attrs: attrs.iter().map(|a| a.clone().expect("every attribute variable is linked")).collect(),
            });
            return;
        }
        for (i, cell) in cells.iter().enumerate() {
            if used[i] && !allow_repetition {
                continue;
            }
            let mut assigned = None;
            match &slots[depth] {
                AttrSlot::Label(l) if *l != cell.attribute => continue,
                AttrSlot::Label(_) => {}
                AttrSlot::Var(k) => match &attrs[k - 1] {
                    Some(l) if *l != cell.attribute => continue,
                    Some(_) => {}
                    None => {
                        attrs[k - 1] = Some(cell.attribute.clone());
                        assigned = Some(k - 1);
                    }
                },
            }
            used[i] = true;
            chosen.push(i);
            go(depth + 1, slots, cells, allow_repetition, cap, chosen, attrs, used, out);
            chosen.pop();
            used[i] = chosen.contains(&i);
            if let Some(k) = assigned {
                attrs[k] = None;
            }
            if out.len() >= cap {
                return;
            }
        }
    }
    go(0, &slots, cells, allow_repetition, cap, &mut chosen, &mut attrs, &mut used, &mut out);
    out
}

fn candidates_for(
    rank: usize,
    template: &Arc<FormulaTemplate>,
    cells: &[CellRef],
    ctx: &Context,
    source: &(dyn CellSource + Sync),
    config: &QueryGenConfig,
) -> Vec<QueryCandidate> {
    arrangements(template, cells, config.allow_repetition, config.candidate_cap)
        .into_iter()
        .map(|binding| {
            let value = evaluate(template, &binding, source);
            let matched = match (&value, ctx.parameter) {
                (Ok(EvalValue::Number(v)), Some(p)) => within_tolerance(*v, p, ctx.tolerance, config.eps_abs),
                _ => false,
            };
            let sql = if config.render_sql { render_sql(template, &binding, source).unwrap_or_default() } else { String::new() };
            QueryCandidate { formula_rank: rank, template: Arc::clone(template), binding, value, sql, matched }
        })
        .collect()
}

/// Enumerates, evaluates and renders the candidates of a context.
///
/// Output order is formula rank, then enumeration order. Evaluation errors are
/// kept on the candidate.
pub fn generate(ctx: &Context, source: &(dyn CellSource + Sync), config: &QueryGenConfig) -> Generation {
    let cells = collect_values(&ctx.relations, &ctx.keys, &ctx.attributes, source);
    let per_formula = par::map_range(ctx.formulas.len(), |rank| candidates_for(rank, &ctx.formulas[rank], &cells, ctx, source, config));
    let mut matched = Vec::new();
    let mut alternatives = Vec::new();
    let mut total = 0usize;
    let mut truncated = false;
    for list in per_formula {
        for c in list {
            if total == config.candidate_cap {
                truncated = true;
                break;
            }
            total += 1;
            if c.matched {
                matched.push(c);
            } else {
                alternatives.push(c);
            }
        }
    }
    if !matched.is_empty() {
        Generation { candidates: matched, matched: true, truncated }
    } else {
        Generation { candidates: alternatives, matched: false, truncated }
    }
}

/// The alternative closest to `p` by relative distance; ties go to the lower formula rank.
pub fn suggest_correction(alternatives: &[QueryCandidate], p: f64) -> Option<&QueryCandidate> {
    alternatives
        .iter()
        .filter_map(|c| c.number().map(|v| (relative_error(v, p), c)))
        .min_by(|(da, a), (db, b)| da.total_cmp(db).then(a.formula_rank.cmp(&b.formula_rank)))
        .map(|(_, c)| c)
}
