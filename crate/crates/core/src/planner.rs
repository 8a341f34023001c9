//! Per-claim question planning: screen budgets, option ordering and greedy
//! property selection by pruning power.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifiers::{PropertyDistribution, PropertyKind};
use crate::formula::FormulaTemplate;
use crate::querygen::QueryCandidate;
use crate::{Error, Result};

/// Seconds spent per elementary checker action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Verify one property option.
    pub v_p: f64,
    /// Suggest one property answer.
    pub s_p: f64,
    /// Verify one full query option.
    pub v_f: f64,
    /// Suggest a full query.
    pub s_f: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { v_p: 3.0, s_p: 14.0, v_f: 17.0, s_f: 170.0 }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.v_p, self.s_p, self.v_f, self.s_f];
        if all.iter().any(|c| !c.is_finite() || *c <= 0.0) {
            return Err(Error::Config("cost model entries must be positive".into()));
        }
        if self.v_p >= self.v_f {
            return Err(Error::Config("v_p must be smaller than v_f".into()));
        }
        if self.s_p >= self.s_f {
            return Err(Error::Config("s_p must be smaller than s_f".into()));
        }
        Ok(())
    }

    /// Worst-case per-claim cost for the given budgets.
    pub fn worst_case(&self, nop: usize, nsc: usize) -> f64 {
        nop as f64 * self.v_f + nsc as f64 * (self.v_p + self.s_p) + self.s_f
    }
}

/// Options per screen and screens per claim that cap the overhead over manual
/// verification at a factor of three.
pub fn budget_screens(cost: &CostModel) -> (usize, usize) {
    let nop = (cost.s_f / cost.v_f).floor().max(1.0) as usize;
    let nsc = (cost.s_f / (cost.v_p + cost.s_p)).floor().max(1.0) as usize;
    (nop, nsc)
}

/// Expected cost of reading options top-down until the correct one:
/// option i is read unless one of the options before it was correct.
pub fn expected_cost(probabilities: &[f64], per_option: f64) -> f64 {
    let mut before = 0.0;
    let mut total = 0.0;
    for p in probabilities {
        total += 1.0 - before;
        before += p;
    }
    per_option * total
}

/// Descending probability, lexicographic on ties.
pub fn order_options(mut options: Vec<(String, f64)>) -> Vec<(String, f64)> {
    options.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    options
}

fn renormalized(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter().map(|x| x / s).collect()
    } else {
        vec![1.0 / p.len() as f64; p.len()]
    }
}

/// Answer options of one property and the queries each option excludes.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOptions {
    pub kind: PropertyKind,
    pub probabilities: Vec<f64>,
    /// `excluded[i][q]`: query q is inconsistent with option i.
    pub excluded: Vec<Vec<bool>>,
}

/// Exclusion sets for a query set, with the per-query probability mass that
/// keeps each query alive.
#[derive(Debug, Clone, PartialEq)]
pub struct PruningIndex {
    pub n_queries: usize,
    pub properties: Vec<PropertyOptions>,
    survive: Vec<Vec<f64>>,
}

/// Bitset of the options of one distribution each candidate uses.
struct OptionUse {
    words: usize,
    bits: Vec<u64>,
}

impl OptionUse {
    fn new(candidates: &[QueryCandidate], d: &PropertyDistribution) -> Self {
        let index: HashMap<&str, usize> = d.entries.iter().enumerate().map(|(i, (l, _))| (l.as_str(), i)).collect();
        let words = d.entries.len().div_ceil(64).max(1);
        let mut bits = vec![0u64; words * candidates.len()];
        let mut formula_keys: HashMap<*const FormulaTemplate, Option<usize>> = HashMap::new();
        for (q, c) in candidates.iter().enumerate() {
            let mut set = |i: usize| bits[q * words + i / 64] |= 1 << (i % 64);
            match d.kind {
                PropertyKind::Formula => {
                    let i = *formula_keys.entry(Arc::as_ptr(&c.template)).or_insert_with(|| index.get(c.template.key().as_str()).copied());
                    if let Some(i) = i {
                        set(i);
                    }
                }
                kind => {
                    for cell in &c.binding.cells {
                        let label = match kind {
                            PropertyKind::Relation => &cell.relation,
                            PropertyKind::KeyValue => &cell.key,
                            _ => &cell.attribute,
                        };
                        if let Some(&i) = index.get(label.as_str()) {
                            set(i);
                        }
                    }
                }
            }
        }
        OptionUse { words, bits }
    }

    fn get(&self, q: usize, i: usize) -> bool {
        self.bits[q * self.words + i / 64] & (1 << (i % 64)) != 0
    }
}

/// Labels a candidate uses for one property.
pub fn candidate_labels(candidate: &QueryCandidate, kind: PropertyKind) -> Vec<String> {
    match kind {
        PropertyKind::Relation => candidate.relations(),
        PropertyKind::KeyValue => candidate.keys(),
        PropertyKind::Attribute => candidate.attributes(),
        PropertyKind::Formula => vec![candidate.template.key()],
    }
}

impl PruningIndex {
    pub fn new(n_queries: usize, properties: Vec<PropertyOptions>) -> Self {
        let survive = properties
            .iter()
            .map(|prop| {
                (0..n_queries)
                    .map(|q| prop.probabilities.iter().zip(&prop.excluded).filter(|(_, ex)| !ex[q]).map(|(p, _)| *p).sum())
                    .collect()
            })
            .collect();
        PruningIndex { n_queries, properties, survive }
    }

    /// A query is excluded by an answer when it does not use that answer's label.
    pub fn build(candidates: &[QueryCandidate], distributions: &[PropertyDistribution]) -> Self {
        let properties = distributions
            .iter()
            .map(|d| {
                let uses = OptionUse::new(candidates, d);
                PropertyOptions {
                    kind: d.kind,
                    probabilities: d.probabilities(),
                    excluded: (0..d.entries.len()).map(|i| (0..candidates.len()).map(|q| !uses.get(q, i)).collect()).collect(),
                }
            })
            .collect();
        Self::new(candidates.len(), properties)
    }

    /// Probability mass of the options of property `s` that keep query `q`.
    pub fn survival(&self, s: usize, q: usize) -> f64 {
        self.survive[s][q]
    }

    /// Expected number of queries pruned by answering the given properties.
    pub fn pruning_power(&self, selected: &[usize]) -> f64 {
        (0..self.n_queries).map(|q| 1.0 - selected.iter().map(|&s| self.survive[s][q]).product::<f64>()).sum()
    }
}

/// Greedy selection of up to `nsc` properties, each maximizing the marginal
/// pruning power. Ties go to the earlier property.
pub fn select_properties(index: &PruningIndex, nsc: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < nsc.min(index.properties.len()) {
        let mut best: Option<(usize, f64)> = None;
        for s in 0..index.properties.len() {
            if chosen.contains(&s) {
                continue;
            }
            chosen.push(s);
            let v = index.pruning_power(&chosen);
            chosen.pop();
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((s, v));
            }
        }
        let (s, _) = best.expect("an unselected property remains");
        chosen.push(s);
    }
    chosen
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screen {
    pub kind: PropertyKind,
    /// Displayed options, most probable first, with raw model probabilities.
    pub options: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenPlan {
    pub screens: Vec<Screen>,
    /// Indices into the planned candidate list, most plausible first.
    pub final_candidates: Vec<usize>,
    pub nop: usize,
    pub nsc: usize,
    /// Expected verification cost of the whole plan in seconds.
    pub expected_cost: f64,
}

/// Expected cost of a property screen: options are renormalized over the
/// displayed list; an empty screen is a suggestion.
pub fn screen_expected_cost(options: &[(String, f64)], cost: &CostModel) -> f64 {
    if options.is_empty() {
        return cost.s_p;
    }
    let p: Vec<f64> = options.iter().map(|(_, p)| *p).collect();
    expected_cost(&renormalized(&p), cost.v_p)
}

/// Plans the screens for one claim. `distributions` holds one entry per
/// property kind; `candidates` is the query set the screens should narrow down.
pub fn plan_claim(
    distributions: &[PropertyDistribution],
    candidates: &[QueryCandidate],
    cost: &CostModel,
    budget: (usize, usize),
) -> ScreenPlan {
    let (nop, nsc) = budget;
    let shown: Vec<PropertyDistribution> = distributions
        .iter()
        .map(|d| {
            let mut entries = order_options(d.entries.clone());
            entries.truncate(nop);
            PropertyDistribution { kind: d.kind, entries }
        })
        .collect();
    let index = PruningIndex::build(candidates, &shown);
    let selected = select_properties(&index, nsc);
    let screens: Vec<Screen> = selected.iter().map(|&s| Screen { kind: shown[s].kind, options: shown[s].entries.clone() }).collect();

    // plausibility of a candidate: product over properties of the mass of the labels it uses
    let score: Vec<f64> = (0..candidates.len()).map(|q| (0..shown.len()).map(|s| index.survival(s, q).min(1.0)).product()).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    order.truncate(nop);

    let mut total: f64 = screens.iter().map(|s| screen_expected_cost(&s.options, cost)).sum();
    total += if order.is_empty() {
        cost.s_f
    } else {
        let p: Vec<f64> = order.iter().map(|&i| score[i]).collect();
        expected_cost(&renormalized(&p), cost.v_f)
    };
    ScreenPlan { screens, final_candidates: order, nop, nsc, expected_cost: total }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budgets() {
        assert_eq!(budget_screens(&CostModel { s_f: 100.0, v_f: 10.0, v_p: 2.0, s_p: 8.0 }), (10, 10));
        assert_eq!(budget_screens(&CostModel::default()), (10, 10));
        assert_eq!(budget_screens(&CostModel { s_f: 5.0, v_f: 10.0, v_p: 1.0, s_p: 2.0 }).0, 1);
    }

    #[test]
    fn cost_model_validation() {
        assert!(CostModel::default().validate().is_ok());
        assert!(CostModel { v_p: 20.0, ..Default::default() }.validate().is_err());
        assert!(CostModel { s_p: 200.0, ..Default::default() }.validate().is_err());
        assert!(CostModel { s_f: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn expected_cost_examples() {
        assert_eq!(expected_cost(&[1.0], 1.0), 1.0);
        assert!((expected_cost(&[0.5, 0.3, 0.2], 1.0) - 1.7).abs() < 1e-12);
        assert_eq!(expected_cost(&[1.0, 0.0, 0.0], 3.0), 3.0);
    }

    #[test]
    fn ordering() {
        let o = order_options(vec![("a".into(), 0.2), ("b".into(), 0.7), ("c".into(), 0.1)]);
        assert_eq!(o.iter().map(|x| x.0.as_str()).collect::<Vec<_>>(), ["b", "a", "c"]);
        let o = order_options(vec![("z".into(), 0.5), ("y".into(), 0.5)]);
        assert_eq!(o[0].0, "y");
    }

    #[test]
    fn two_query_pruning() {
        let prop = PropertyOptions { kind: PropertyKind::Relation, probabilities: vec![0.7, 0.3], excluded: vec![vec![false, true], vec![true, false]] };
        let index = PruningIndex::new(2, vec![prop]);
        assert_eq!(index.pruning_power(&[]), 0.0);
        assert!((index.pruning_power(&[0]) - 1.0).abs() < 1e-12);
        assert!(select_properties(&index, 0).is_empty());
    }
}
