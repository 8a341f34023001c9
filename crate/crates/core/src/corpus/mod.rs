//! Relations, documents, claims and prior-check annotations.

mod io;
mod params;
mod synth;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{self, abstract_expr, Binding, CellRef, CellSource, CmpOp, EvalValue, FormulaTemplate};

pub use io::{load_annotations, load_claims, load_corpus, load_relation_file, load_relations, save_corpus};
pub use params::{extract_parameter, general_comparison, ParameterLexicon};
pub use synth::{generate_synthetic_corpus, property_frequencies, scaled_percentiles, CorpusProfile, PercentileRow, PERCENTILE_POINTS};

/// Default admissible relative error for explicit claims.
pub const DEFAULT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{relation}: duplicate key `{key}` at row {row}")]
    DuplicateKey { relation: String, key: String, row: usize },
    #[error("{relation}: non-numeric cell `{value}` at row {row}, column `{column}`")]
    NonNumericCell { relation: String, row: usize, column: String, value: String },
    #[error("{0}: no rows")]
    NoRows(String),
    #[error("{0}: missing or invalid header")]
    BadHeader(String),
    #[error("claim {id}: {message}")]
    InvalidClaim { id: String, message: String },
    #[error("annotation for {claim}: {message}")]
    InvalidAnnotation { claim: String, message: String },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// A keyed numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub name: String,
    pub key_attribute: String,
    pub attributes: Vec<String>,
    rows: Vec<(String, Vec<Option<f64>>)>,
    key_index: HashMap<String, usize>,
    attr_index: HashMap<String, usize>,
}

impl Relation {
    pub fn new(name: impl Into<String>, key_attribute: impl Into<String>, attributes: Vec<String>) -> Result<Self, CorpusError> {
        let name = name.into();
        if attributes.iter().any(|a| a.trim().is_empty()) {
            return Err(CorpusError::BadHeader(name));
        }
        let attr_index = attributes.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        Ok(Relation { name, key_attribute: key_attribute.into(), attributes, rows: Vec::new(), key_index: HashMap::new(), attr_index })
    }

    pub fn push_row(&mut self, key: impl Into<String>, cells: Vec<Option<f64>>) -> Result<(), CorpusError> {
        let key = key.into();
        assert_eq!(cells.len(), self.attributes.len(), "row width must match the header");
        if self.key_index.contains_key(&key) {
            return Err(CorpusError::DuplicateKey { relation: self.name.clone(), key, row: self.rows.len() + 1 });
        }
        self.key_index.insert(key.clone(), self.rows.len());
        self.rows.push((key, cells));
        Ok(())
    }

    pub fn get(&self, key: &str, attribute: &str) -> Option<f64> {
        let r = *self.key_index.get(key)?;
        let c = *self.attr_index.get(attribute)?;
        self.rows[r].1[c]
    }

    pub fn has_key(&self, key: &str) -> bool {
        self.key_index.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|(k, _)| k.as_str())
    }

    pub fn rows(&self) -> &[(String, Vec<Option<f64>>)] {
        &self.rows
    }
}

/// All relations of a corpus, addressable by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    relations: Vec<Relation>,
    by_name: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(relations: Vec<Relation>) -> Self {
        let by_name = relations.iter().enumerate().map(|(i, r)| (r.name.clone(), i)).collect();
        Catalog { relations, by_name }
    }

    pub fn get(&self, name: &str) -> Option<&Relation> {
        self.by_name.get(name).map(|&i| &self.relations[i])
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}

impl CellSource for Catalog {
    fn cell(&self, relation: &str, key: &str, attribute: &str) -> Option<f64> {
        self.get(relation)?.get(key, attribute)
    }

    fn key_attribute(&self, relation: &str) -> Option<&str> {
        self.get(relation).map(|r| r.key_attribute.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub id: String,
    pub title: String,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn section_index(&self, id: &str) -> Option<usize> {
        self.sections.iter().position(|s| s.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimKind {
    Explicit,
    General,
}

/// A claim to verify. `span` is a character range into `sentence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub sentence: String,
    pub span: (usize, usize),
    pub section: String,
    pub kind: ClaimKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<CmpOp>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl Claim {
    /// The claim words inside the sentence.
    pub fn claim_text(&self) -> String {
        self.sentence.chars().skip(self.span.0).take(self.span.1 - self.span.0).collect()
    }

    /// Enforces the kind-specific invariants, filling in the equality comparison for explicit claims.
    pub fn validate(mut self) -> Result<Claim, CorpusError> {
        let bad = |m: &str| CorpusError::InvalidClaim { id: self.id.clone(), message: m.to_string() };
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(bad(&format!("tolerance {} outside (0,1)", self.tolerance)));
        }
        let len = self.sentence.chars().count();
        if self.span.0 > self.span.1 || self.span.1 > len {
            return Err(bad("claim span outside the sentence"));
        }
        if self.kind == ClaimKind::Explicit {
            if self.parameter.is_none() {
                return Err(bad("explicit claim without parameter"));
            }
            match self.comparison {
                None => self.comparison = Some(CmpOp::Eq),
                Some(CmpOp::Eq) => {}
                Some(_) => return Err(bad("explicit claims compare by equality")),
            }
        }
        Ok(self)
    }

    /// Whether `value` supports the claim: relative error below the tolerance for
    /// explicit claims, the stated comparison for general ones.
    pub fn accepts(&self, value: EvalValue) -> Option<bool> {
        match value {
            EvalValue::Bool(b) => Some(b),
            EvalValue::Number(v) => {
                let p = self.parameter?;
                match self.comparison.unwrap_or(CmpOp::Eq) {
                    CmpOp::Eq => Some(relative_error(v, p) < self.tolerance),
                    op => Some(op.holds(v, p)),
                }
            }
        }
    }
}

/// `|value - p| / max(|p|, 1e-9)`.
pub fn relative_error(value: f64, p: f64) -> f64 {
    (value - p).abs() / p.abs().max(1e-9)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
}

/// A prior check of a claim.
///
/// `relations` and `key_values` are listed per alias of `check_expression`, in
/// order of first occurrence; a shorter list repeats its last entry.
/// `definitions` name intermediate values referenced as `$name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub claim_id: String,
    pub relations: Vec<String>,
    pub key_values: Vec<String>,
    pub attributes: Vec<String>,
    pub check_expression: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub definitions: BTreeMap<String, String>,
    pub verdict: Verdict,
}

/// An annotation turned into a template, its binding and value.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedCheck {
    pub template: FormulaTemplate,
    pub binding: Binding,
    pub concrete: formula::Expr,
    pub value: EvalValue,
}

impl ResolvedCheck {
    pub fn relations(&self) -> Vec<String> {
        dedup(self.binding.cells.iter().map(|c| c.relation.clone()))
    }

    pub fn keys(&self) -> Vec<String> {
        dedup(self.binding.cells.iter().map(|c| c.key.clone()))
    }

    pub fn attributes(&self) -> Vec<String> {
        dedup(self.binding.cells.iter().map(|c| c.attribute.clone()))
    }
}

pub(crate) fn dedup(items: impl Iterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

impl Annotation {
    /// Parses, flattens and abstracts the check, then evaluates it.
    pub fn resolve(&self, catalog: &Catalog) -> Result<ResolvedCheck, CorpusError> {
        let bad = |m: String| CorpusError::InvalidAnnotation { claim: self.claim_id.clone(), message: m };
        let expr = formula::parse(&self.check_expression).map_err(|e| bad(e.to_string()))?;
        let mut defs = BTreeMap::new();
        for (name, text) in &self.definitions {
            defs.insert(name.clone(), formula::parse(text).map_err(|e| bad(format!("${name}: {e}")))?);
        }
        let concrete = formula::flatten(&expr, &defs).map_err(|e| bad(e.to_string()))?;
        let abs = abstract_expr(&concrete, &self.attributes);

        let mut alias_order: Vec<String> = Vec::new();
        concrete.walk(&mut |n| {
            if let formula::Expr::Value { alias, .. } = n {
                if !alias_order.contains(alias) {
                    alias_order.push(alias.clone());
                }
            }
        });
        let pick = |list: &[String], i: usize| -> Option<String> { list.get(i).or_else(|| list.last()).cloned() };
        let row_of = |alias: &str| -> Option<(String, String)> {
            let i = alias_order.iter().position(|a| a == alias)?;
            Some((pick(&self.relations, i)?, pick(&self.key_values, i)?))
        };

        let slots = abs.template.value_slots();
        let mut cells = Vec::with_capacity(slots.len());
        for (alias, slot) in abs.aliases.iter().zip(&slots) {
            let (relation, key) = row_of(alias).ok_or_else(|| bad(format!("no relation/key for alias `{alias}`")))?;
            let attribute = match slot {
                formula::AttrSlot::Label(l) => l.clone(),
                formula::AttrSlot::Var(k) => abs.attr_labels[k - 1].clone(),
            };
            let rel = catalog.get(&relation).ok_or_else(|| bad(format!("unknown relation `{relation}`")))?;
            if !rel.has_key(&key) {
                return Err(bad(format!("unknown key `{key}` in `{relation}`")));
            }
            if !rel.attributes.contains(&attribute) {
                return Err(bad(format!("unknown attribute `{attribute}` in `{relation}`")));
            }
            cells.push(CellRef { relation, key, attribute });
        }
        let binding = Binding::derive(&abs.template, cells).map_err(|e| bad(e.to_string()))?;
        let value = formula::evaluate(&abs.template, &binding, catalog).map_err(|e| bad(e.to_string()))?;
        Ok(ResolvedCheck { template: abs.template, binding, concrete, value })
    }
}

/// A loaded corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub catalog: Catalog,
    pub document: Document,
    pub claims: Vec<Claim>,
    pub annotations: Vec<Annotation>,
}

impl Corpus {
    pub fn claim(&self, id: &str) -> Option<&Claim> {
        self.claims.iter().find(|c| c.id == id)
    }

    pub fn annotation(&self, claim_id: &str) -> Option<&Annotation> {
        self.annotations.iter().find(|a| a.claim_id == claim_id)
    }

    /// Checks cross-references: claim sections exist, annotations resolve.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.document.sections {
            if !seen.insert(s.id.as_str()) {
                return Err(CorpusError::InvalidClaim { id: s.id.clone(), message: "duplicate section id".into() });
            }
        }
        for c in &self.claims {
            if self.document.section_index(&c.section).is_none() {
                return Err(CorpusError::InvalidClaim { id: c.id.clone(), message: format!("unknown section `{}`", c.section) });
            }
        }
        for a in &self.annotations {
            if self.claim(&a.claim_id).is_none() {
                return Err(CorpusError::InvalidAnnotation { claim: a.claim_id.clone(), message: "unknown claim".into() });
            }
            a.resolve(&self.catalog)?;
        }
        Ok(())
    }

    /// Resolved ground truth for every annotated claim, in claim order.
    pub fn ground_truth(&self) -> Result<Vec<Option<ResolvedCheck>>, CorpusError> {
        let by_claim: HashMap<&str, &Annotation> = self.annotations.iter().map(|a| (a.claim_id.as_str(), a)).collect();
        self.claims
            .iter()
            .map(|c| by_claim.get(c.id.as_str()).map(|a| a.resolve(&self.catalog)).transpose())
            .collect()
    }
}
