use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::PropertyKind;
use crate::corpus::Verdict;
use crate::formula::{CellRef, EvalValue};

/// How the next batch of claims is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every claim checked by hand; no screens (simulation only).
    Manual,
    /// Document-order slices of `b_u` claims.
    Sequential,
    /// Utility-maximizing batches.
    Scrutinizer,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "manual" => Ok(Mode::Manual),
            "sequential" => Ok(Mode::Sequential),
            "scrutinizer" => Ok(Mode::Scrutinizer),
            other => Err(format!("unknown mode `{other}` (manual, sequential, scrutinizer)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Manual => "manual",
            Mode::Sequential => "sequential",
            Mode::Scrutinizer => "scrutinizer",
        })
    }
}

/// A concrete query as shown to checkers and reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryView {
    /// Canonical template text.
    pub formula: String,
    pub sql: String,
    pub value: Option<EvalValue>,
    pub cells: Vec<CellRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionView {
    pub label: String,
    pub probability: f64,
}

/// Labels a checker settled for one property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyAnswer {
    pub kind: PropertyKind,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScreenContent {
    Property { kind: PropertyKind, options: Vec<OptionView> },
    Query { candidates: Vec<QueryView> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screen {
    pub id: String,
    pub claim_id: String,
    pub sentence: String,
    /// Character span of the claim within the sentence.
    pub span: (usize, usize),
    /// Zero-based index of this screen within the claim and the number of screens.
    pub step: usize,
    pub steps: usize,
    /// Properties answered on earlier screens of this claim.
    pub validated: Vec<PropertyAnswer>,
    pub content: ScreenContent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Next {
    Screen(Box<Screen>),
    /// Nothing for this checker until the other checkers finish the batch.
    Wait,
    Done,
}

/// A full query typed in by a checker, in check-expression syntax.
/// Empty lists default to the context validated on earlier screens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySuggestion {
    pub expression: String,
    #[serde(default)]
    pub relations: Vec<String>,
    #[serde(default)]
    pub key_values: Vec<String>,
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub definitions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Answer {
    /// Property screen: indices of the confirmed options plus typed-in labels.
    Property {
        #[serde(default)]
        selected: Vec<usize>,
        #[serde(default)]
        suggested: Vec<String>,
    },
    /// Final screen: the confirmed candidate.
    Accept { candidate: usize },
    /// Final screen: none fits, this query does.
    Suggest { query: QuerySuggestion },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub screen_id: String,
    /// Seconds charged for this screen.
    pub cost: f64,
    /// This checker finished the claim.
    pub claim_complete: bool,
    /// The answer completed the batch.
    pub batch_closed: bool,
    /// Claims decided when the batch closed.
    pub resolved: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnswerError {
    #[error("screen `{got}` is not the current screen (expected {expected:?})")]
    OutOfOrder { expected: Option<String>, got: String },
    #[error("screen `{0}` was already answered differently")]
    Conflict(String),
    #[error("malformed answer: {message}")]
    Malformed { message: String, position: Option<usize> },
}

/// One checker's outcome for one claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckerVerdict {
    pub checker: String,
    pub verdict: Verdict,
    pub query: QueryView,
    pub properties: Vec<PropertyAnswer>,
    /// Seconds this checker spent on the claim.
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Resolved,
    /// No majority within the re-queue limit.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub claim_id: String,
    pub status: Status,
    pub verdict: Option<Verdict>,
    /// Query supporting a correct claim.
    pub witness: Option<QueryView>,
    /// Query with the actual value of an incorrect claim.
    pub suggestion: Option<QueryView>,
    /// Properties confirmed by the deciding checker.
    pub properties: Vec<PropertyAnswer>,
    /// Checker outcomes of the last attempt.
    pub checkers: Vec<CheckerVerdict>,
    /// Mean checker seconds, summed over attempts.
    pub cost: f64,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    BatchStarted { batch: usize, claims: Vec<String>, sections: Vec<String> },
    Answered { checker: String, answer: Answer },
    ClaimResolved { verdict: Verdict },
    ClaimRequeued { attempts: usize },
    ClaimUnresolved,
    Retrained { fingerprint: String, examples: usize },
}

/// One line of the event log. `clock` is the cumulative cost in seconds after the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: usize,
    pub clock: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen: Option<String>,
    pub cost: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    /// Correct results whose witness was re-evaluated.
    pub checked: usize,
    /// Claims whose witness no longer supports them.
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mode: Mode,
    pub total_cost: f64,
    pub verification_cost: f64,
    pub reading_cost: f64,
    pub batches: usize,
    pub pending: usize,
    pub results: Vec<VerificationResult>,
    pub audit: Audit,
}
