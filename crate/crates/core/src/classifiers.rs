//! Four softmax classifiers, one per query property, retrained on the
//! cumulative set of verified claims.

use std::fmt;
use std::fs;
use std::hash::Hasher;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, Featurizer};
use crate::fingerprint::Fnv1a;
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    Relation,
    KeyValue,
    Attribute,
    Formula,
}

impl PropertyKind {
    pub const ALL: [PropertyKind; 4] = [PropertyKind::Relation, PropertyKind::KeyValue, PropertyKind::Attribute, PropertyKind::Formula];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PropertyKind::Relation => "relation",
            PropertyKind::KeyValue => "key_value",
            PropertyKind::Attribute => "attribute",
            PropertyKind::Formula => "formula",
        }
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ranked answer labels with their predicted probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyDistribution {
    pub kind: PropertyKind,
    pub entries: Vec<(String, f64)>,
}

impl PropertyDistribution {
    pub fn empty(kind: PropertyKind) -> Self {
        PropertyDistribution { kind, entries: Vec::new() }
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, p)| *p).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { epochs: 200, learning_rate: 0.1, l2: 1e-4, seed: 0 }
    }
}

/// Multinomial logistic regression. Weights are stored column-major so a
/// sparse input touches one contiguous run of `labels.len()` weights per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: PropertyKind,
    pub labels: Vec<String>,
    pub width: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl Model {
    /// A model with all weights zero, predicting the uniform distribution.
    pub fn uniform(kind: PropertyKind, mut labels: Vec<String>, width: usize) -> Self {
        labels.sort();
        labels.dedup();
        let n = labels.len();
        Model { kind, labels, width, weights: vec![0.0; width * n], bias: vec![0.0; n] }
    }

    fn logits(&self, x: &FeatureVector, out: &mut [f64]) {
        let n = self.labels.len();
        out.copy_from_slice(&self.bias);
        x.for_each(|col, v| {
            if v != 0.0 && col < self.width {
                let w = &self.weights[col * n..(col + 1) * n];
                for (o, wi) in out.iter_mut().zip(w) {
                    *o += v * wi;
                }
            }
        });
    }

    /// Full softmax distribution, aligned with `labels`.
    pub fn probabilities(&self, x: &FeatureVector) -> Vec<f64> {
        let mut z = vec![0.0; self.labels.len()];
        self.logits(x, &mut z);
        softmax_in_place(&mut z);
        z
    }

    pub fn predict_topk(&self, x: &FeatureVector, k: usize) -> PropertyDistribution {
        let p = self.probabilities(x);
        let mut order: Vec<usize> = (0..p.len()).collect();
        // labels are sorted, so index order is lexicographic order
        order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
        order.truncate(k.max(1));
        PropertyDistribution { kind: self.kind, entries: order.into_iter().map(|i| (self.labels[i].clone(), p[i])).collect() }
    }

    pub fn entropy(&self, x: &FeatureVector) -> f64 {
        entropy_of(&self.probabilities(x))
    }
}

/// Shannon entropy in nats; zero entries contribute nothing.
pub fn entropy_of(p: &[f64]) -> f64 {
    p.iter().filter(|&&q| q > 0.0).map(|&q| -q * q.ln()).sum::<f64>().max(0.0)
}

/// Fits a model by per-example SGD over a seeded shuffle. L2 shrinkage is
/// applied once per epoch.
pub fn train(examples: &[(&FeatureVector, &str)], kind: PropertyKind, config: &TrainingConfig) -> Result<Model> {
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let width = examples.iter().map(|(x, _)| x.width).max().unwrap_or(0);
    let mut model = Model::uniform(kind, examples.iter().map(|(_, l)| l.to_string()).collect(), width);
    let n = model.labels.len();
    let targets: Vec<usize> = examples.iter().map(|(_, l)| model.labels.binary_search_by(|s| s.as_str().cmp(l)).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (kind.index() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut z = vec![0.0; n];
    let lr = config.learning_rate;
    let decay = (1.0 - lr * config.l2).max(0.0);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = examples[i].0;
            model.logits(x, &mut z);
            softmax_in_place(&mut z);
            z[targets[i]] -= 1.0;
            for (b, g) in model.bias.iter_mut().zip(&z) {
                *b -= lr * g;
            }
            let w = &mut model.weights;
            x.for_each(|col, v| {
                if v != 0.0 {
                    for (wi, g) in w[col * n..(col + 1) * n].iter_mut().zip(&z) {
                        *wi -= lr * v * g;
                    }
                }
            });
        }
        if decay != 1.0 {
            model.weights.iter_mut().for_each(|w| *w *= decay);
        }
    }
    Ok(model)
}

/// One verified claim: its features and the ground-truth labels per kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub claim_id: String,
    pub features: FeatureVector,
    pub labels: [Vec<String>; 4],
}

impl Example {
    pub fn labels(&self, kind: PropertyKind) -> &[String] {
        &self.labels[kind.index()]
    }
}

/// The four models, the featurizer they share, and the examples they were fit on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub featurizer: Arc<Featurizer>,
    pub config: TrainingConfig,
    models: [Option<Model>; 4],
    examples: Vec<Example>,
    fingerprint: u64,
}

const CHECKPOINT_FORMAT: &str = "claimcheck-models";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    fingerprint: u64,
    models: ModelSet,
}

impl ModelSet {
    /// An untrained set. Predictions are empty until the first retrain.
    pub fn new(featurizer: Arc<Featurizer>, config: TrainingConfig) -> Self {
        let mut set = ModelSet { featurizer, config, models: [None, None, None, None], examples: Vec::new(), fingerprint: 0 };
        set.fingerprint = set.compute_fingerprint();
        set
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn model(&self, kind: PropertyKind) -> Option<&Model> {
        self.models[kind.index()].as_ref()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn is_trained(&self) -> bool {
        self.models.iter().any(Option::is_some)
    }

    fn compute_fingerprint(&self) -> u64 {
        let mut h = Fnv1a::default();
        h.write_u64(self.featurizer.fingerprint());
        for e in &self.examples {
            h.write(e.claim_id.as_bytes());
            e.features.hash_into(&mut h);
            for labels in &e.labels {
                h.write_usize(labels.len());
                labels.iter().for_each(|l| h.write(l.as_bytes()));
            }
        }
        h.finish()
    }

    /// Refits every model on the cumulative example set. An empty delta is a no-op.
    pub fn retrain(&self, delta: Vec<Example>) -> ModelSet {
        if delta.is_empty() {
            return self.clone();
        }
        let mut examples = self.examples.clone();
        examples.extend(delta);
        let fitted = par::map(&PropertyKind::ALL, |&kind| {
            let pairs: Vec<(&FeatureVector, &str)> =
                examples.iter().flat_map(|e| e.labels(kind).iter().map(move |l| (&e.features, l.as_str()))).collect();
            train(&pairs, kind, &self.config).ok()
        });
        let mut models = [None, None, None, None];
        for (slot, m) in models.iter_mut().zip(fitted) {
            *slot = m;
        }
        let mut set = ModelSet { featurizer: self.featurizer.clone(), config: self.config, models, examples, fingerprint: 0 };
        set.fingerprint = set.compute_fingerprint();
        set
    }

    pub fn predict_topk(&self, kind: PropertyKind, x: &FeatureVector, k: usize) -> PropertyDistribution {
        match self.model(kind) {
            Some(m) => m.predict_topk(x, k),
            None => PropertyDistribution::empty(kind),
        }
    }

    /// Entropy of one model's prediction; an untrained model counts as zero.
    pub fn entropy(&self, kind: PropertyKind, x: &FeatureVector) -> f64 {
        self.model(kind).map_or(0.0, |m| m.entropy(x))
    }

    /// Sum of the four model entropies.
    pub fn utility(&self, x: &FeatureVector) -> f64 {
        PropertyKind::ALL.iter().map(|&k| self.entropy(k, x)).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let cp = Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, fingerprint: self.fingerprint, models: self.clone() };
        fs::write(path, serde_json::to_vec(&cp)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelSet> {
        let cp: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
        if cp.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format `{}`", cp.format)));
        }
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", cp.version)));
        }
        let mut set = cp.models;
        let mut featurizer = (*set.featurizer).clone();
        featurizer.reindex();
        set.featurizer = Arc::new(featurizer);
        if set.compute_fingerprint() != cp.fingerprint || set.fingerprint != cp.fingerprint {
            return Err(Error::Checkpoint("fingerprint mismatch".into()));
        }
        Ok(set)
    }
}
