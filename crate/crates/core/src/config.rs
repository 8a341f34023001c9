//! The run configuration: one TOML document with a section per concern.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::batcher::BatchConfig;
use crate::classifiers::TrainingConfig;
use crate::features::FeaturizerConfig;
use crate::planner::{budget_screens, CostModel};
use crate::querygen::QueryGenConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSection {
    /// Corpus directory; when unset a synthetic corpus is generated.
    pub path: Option<PathBuf>,
    pub profile: String,
    pub seed: u64,
    /// Optional word-vector file ("word v1 ... vd" per line).
    pub embeddings: Option<PathBuf>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection { path: None, profile: "table1_div10".into(), seed: 1, embeddings: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckerSection {
    /// Checkers per claim; a verdict needs a strict majority.
    pub count: usize,
    /// Probability that a simulated checker confirms a wrong final query.
    pub error_rate: f64,
    /// Times an undecided claim goes back into the pool before it is reported unresolved.
    pub requeue_limit: usize,
}

impl Default for CheckerSection {
    fn default() -> Self {
        CheckerSection { count: 3, error_rate: 0.0, requeue_limit: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSection {
    /// Options per screen; derived from the cost model when unset.
    pub nop: Option<usize>,
    /// Screens per claim; derived from the cost model when unset.
    pub nsc: Option<usize>,
    /// Predicted labels per property used to build the query set that screens prune.
    pub context_width: usize,
    /// Candidate cap of that query set.
    pub candidate_cap: usize,
}

impl Default for PlannerSection {
    fn default() -> Self {
        PlannerSection { nop: None, nsc: None, context_width: 3, candidate_cap: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub cost_model: CostModel,
    pub batch: BatchConfig,
    pub corpus: CorpusSection,
    pub checkers: CheckerSection,
    pub planner: PlannerSection,
    pub training: TrainingConfig,
    pub features: FeaturizerConfig,
    pub querygen: QueryGenConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.cost_model.validate()?;
        self.batch.validate()?;
        if self.checkers.count == 0 {
            return Err(Error::Config("checkers.count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.checkers.error_rate) {
            return Err(Error::Config("checkers.error_rate must lie in [0, 1]".into()));
        }
        if self.planner.nop == Some(0) {
            return Err(Error::Config("planner.nop must be at least 1".into()));
        }
        if self.training.learning_rate <= 0.0 || self.training.l2 < 0.0 {
            return Err(Error::Config("training.learning_rate must be positive and training.l2 non-negative".into()));
        }
        if self.features.embedding_dim == 0 {
            return Err(Error::Config("features.embedding_dim must be positive".into()));
        }
        Ok(())
    }

    /// (nop, nsc) after overrides.
    pub fn budget(&self) -> (usize, usize) {
        let (nop, nsc) = budget_screens(&self.cost_model);
        (self.planner.nop.unwrap_or(nop), self.planner.nsc.unwrap_or(nsc))
    }

    /// Applies a `section.key=value` override, with the value parsed as TOML.
    /// Cross-field checks are left to [`Config::validate`], so a run of
    /// overrides may pass through inconsistent states.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (path, value) = assignment.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {}", value.trim())) {
            Ok(mut t) => t.remove("v").expect("key present"),
            Err(_) => toml::Value::String(value.trim().to_string()),
        };
        let mut doc = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let mut slot = &mut doc;
        let parts: Vec<&str> = path.trim().split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = slot.as_table_mut().ok_or_else(|| Error::Config(format!("`{path}` is not a table path")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            slot = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let updated: Config = doc.try_into().map_err(|e: toml::de::Error| Error::Config(format!("{path}: {e}")))?;
        // serde drops keys it does not know; a key that does not come back is a typo
        let back = toml::Value::try_from(&updated).map_err(|e| Error::Config(e.to_string()))?;
        if parts.iter().try_fold(&back, |v, part| v.get(*part)).is_none() {
            return Err(Error::Config(format!("unknown configuration key `{}`", path.trim())));
        }
        *self = updated;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let mut c = Config::default();
        assert!(c.set("batch.nonsense=1").is_err());
        assert!(c.set("nowhere.b_u=1").is_err());
        c.set("planner.nop=7").unwrap();
        assert_eq!(c.planner.nop, Some(7));
        c.set("batch.section_costs.intro=12.5").unwrap();
        assert_eq!(c.batch.section_costs["intro"], 12.5);
    }

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(c.budget(), (10, 10));
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = Config::from_toml("[cost_model]\nv_p = 2.0\ns_p = 8.0\nv_f = 10.0\ns_f = 100.0\n[checkers]\ncount = 1\n").unwrap();
        assert_eq!(c.checkers.count, 1);
        assert_eq!(c.batch.b_u, 100);
        assert_eq!(c.budget(), (10, 10));
    }

    #[test]
    fn overrides() {
        let mut c = Config::default();
        c.set("batch.b_l=10").unwrap();
        c.set("batch.b_u=50").unwrap();
        c.set("corpus.profile=small").unwrap();
        c.set("batch.t_m=1000.0").unwrap();
        assert_eq!((c.batch.b_l, c.batch.b_u), (10, 50));
        assert_eq!(c.corpus.profile, "small");
        assert_eq!(c.batch.t_m, Some(1000.0));
        c.set("batch.b_l=500").unwrap();
        assert!(c.validate().is_err());
        assert!(c.set("batch.b_l=\"many\"").is_err());
        assert!(c.set("nonsense").is_err());
    }

    #[test]
    fn invalid_cost_model_is_rejected() {
        assert!(Config::from_toml("[cost_model]\nv_p = 30.0\ns_p = 14.0\nv_f = 17.0\ns_f = 170.0\n").is_err());
    }
}
