//! Explicit parameters from claim text.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::formula::{CmpOp, Comparison};

/// Domain words that stand for numbers.
///
/// `multipliers` map phrases such as "nine-fold" to explicit parameters.
/// `general` map vague words such as "aggressively" to an implicit comparison;
/// they never yield an explicit parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterLexicon {
    #[serde(default)]
    pub multipliers: BTreeMap<String, f64>,
    #[serde(default)]
    pub general: BTreeMap<String, Comparison>,
}

const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve", "thirteen",
    "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];

impl Default for ParameterLexicon {
    fn default() -> Self {
        let mut multipliers = BTreeMap::new();
        for (i, w) in NUMBER_WORDS.iter().enumerate().skip(2) {
            multipliers.insert(format!("{w}-fold"), i as f64);
            multipliers.insert(format!("{w}fold"), i as f64);
            multipliers.insert(format!("{w} times"), i as f64);
        }
        for (w, v) in [("doubled", 2.0), ("tripled", 3.0), ("quadrupled", 4.0), ("halved", 0.5)] {
            multipliers.insert(w.to_string(), v);
        }
        let mut general = BTreeMap::new();
        general.insert("aggressively".to_string(), Comparison { op: CmpOp::Gt, parameter: Some(100.0) });
        general.insert("scarcely".to_string(), Comparison { op: CmpOp::Lt, parameter: Some(0.02) });
        ParameterLexicon { multipliers, general }
    }
}

fn percent_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"{NUM}\s*(?:%|percent\b|per cent\b)")).unwrap())
}

fn fold_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"{NUM}\s*(?:-\s*fold\b|fold\b|times\b)")).unwrap())
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(NUM).unwrap())
}

// Sign, digits with optional space/comma thousands groups, optional fraction.
const NUM: &str = r"(?P<n>[-\u{2212}]?(?:\d{1,3}(?:[ ,\u{a0}]\d{3})+|\d+)(?:\.\d+)?)";

fn to_number(raw: &str) -> Option<f64> {
    super::io::parse_number(raw).ok().flatten()
}

fn is_year(raw: &str) -> bool {
    raw.len() == 4 && raw.chars().all(|c| c.is_ascii_digit()) && (1800..=2200).contains(&raw.parse::<u32>().unwrap_or(0))
}

fn contains_phrase(text: &str, phrase: &str) -> bool {
    text.match_indices(phrase).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + phrase.len()..].chars().next();
        !before.is_some_and(|c| c.is_alphanumeric()) && !after.is_some_and(|c| c.is_alphanumeric())
    })
}

impl ParameterLexicon {
    /// Finds the explicit parameter in `text`: a percentage (divided by 100), a
    /// multiplier, or else the first number that is not a year.
    pub fn extract(&self, text: &str) -> Option<(f64, CmpOp)> {
        let lower = text.to_lowercase();
        if let Some(c) = percent_re().captures(&lower) {
            return to_number(&c["n"]).map(|v| (v / 100.0, CmpOp::Eq));
        }
        if let Some(c) = fold_re().captures(&lower) {
            return to_number(&c["n"]).map(|v| (v, CmpOp::Eq));
        }
        let mut phrases: Vec<(&String, &f64)> = self.multipliers.iter().collect();
        phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));
        if let Some((_, v)) = phrases.into_iter().find(|(p, _)| contains_phrase(&lower, &p.to_lowercase())) {
            return Some((*v, CmpOp::Eq));
        }
        for m in number_re().captures_iter(&lower) {
            let raw = &m["n"];
            let start = m.get(0).unwrap().start();
            // Skip digits glued to letters, e.g. identifiers like "co2".
            if lower[..start].chars().next_back().is_some_and(|c| c.is_alphabetic()) {
                continue;
            }
            if !is_year(raw) {
                return to_number(raw).map(|v| (v, CmpOp::Eq));
            }
        }
        None
    }

    /// The implicit comparison carried by a general claim's vague wording.
    pub fn general_comparison(&self, text: &str) -> Option<Comparison> {
        let lower = text.to_lowercase();
        self.general.iter().find(|(w, _)| contains_phrase(&lower, &w.to_lowercase())).map(|(_, c)| *c)
    }

    pub fn from_toml(text: &str) -> Result<Self, crate::Error> {
        toml::from_str(text).map_err(|e| crate::Error::Config(e.to_string()))
    }
}

fn span_text(sentence: &str, span: (usize, usize)) -> String {
    sentence.chars().skip(span.0).take(span.1.saturating_sub(span.0)).collect()
}

/// Explicit parameter of the claim span using the default lexicon.
pub fn extract_parameter(sentence: &str, span: (usize, usize)) -> Option<(f64, CmpOp)> {
    ParameterLexicon::default().extract(&span_text(sentence, span))
}

/// Implicit comparison of the claim span using the default lexicon.
pub fn general_comparison(sentence: &str, span: (usize, usize)) -> Option<Comparison> {
    ParameterLexicon::default().general_comparison(&span_text(sentence, span))
}
