//! Mixed-initiative verification of statistical claims.
//!
//! Claims found in a text document are translated into candidate queries over a
//! set of keyed numeric relations. Four text classifiers propose the relation,
//! key values, attributes and formula of each query; human (or simulated)
//! checkers confirm those proposals through short question screens, and a batch
//! scheduler picks which claims to verify next so that the classifiers learn
//! quickly while verification cost stays low.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: relations, documents, claims, annotations and a synthetic generator.
//! - [`formula`]: the check-expression language (parse, abstract, evaluate, render SQL).
//! - [`features`] and [`classifiers`]: claim featurization and softmax models.
//! - [`querygen`]: enumeration of query candidates from a validated context.
//! - [`planner`]: screen budgets, expected cost, pruning power and greedy question selection.
//! - [`batcher`]: claim batch selection as a 0-1 integer program solved by branch and bound.
//! - [`engine`]: the verification loop driven by checker answers.
//! - [`harness`]: simulated checkers, baselines and reports.

pub mod batcher;
pub mod classifiers;
pub mod config;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod features;
pub mod fingerprint;
pub mod formula;
pub mod harness;
pub mod par;
pub mod planner;
pub mod querygen;

pub use error::{Error, Result};
