//! Claim featurization: a sentence embedding followed by word n-gram and
//! character trigram TF-IDF scores of the claim span.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::hash::Hasher;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fingerprint::Fnv1a;
use crate::{Error, Result};

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

fn word_ngrams(tokens: &[String]) -> Vec<String> {
    let mut out: Vec<String> = tokens.to_vec();
    out.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

fn char_trigrams(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Word vectors. Words missing from a loaded table, and every word of a hashed
/// table, get a deterministic pseudo-random vector seeded by the word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dimension: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn hashed(dimension: usize) -> Self {
        EmbeddingTable { dimension, vectors: BTreeMap::new() }
    }

    /// Reads "word v1 v2 ... vd" lines.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut vectors = BTreeMap::new();
        let mut dimension = None;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let v = parts
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Config(format!("embedding line {}: {e}", i + 1)))?;
            match dimension {
                None => dimension = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::Config(format!("embedding line {}: dimension {} instead of {d}", i + 1, v.len())))
                }
                Some(_) => {}
            }
            vectors.insert(word.to_lowercase(), v);
        }
        let dimension = dimension.ok_or_else(|| Error::Config("empty embedding file".into()))?;
        Ok(EmbeddingTable { dimension, vectors })
    }

    pub fn vector(&self, word: &str) -> Vec<f64> {
        if let Some(v) = self.vectors.get(word) {
            return v.clone();
        }
        let mut h = Fnv1a::default();
        h.write(word.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let scale = 1.0 / (self.dimension as f64).sqrt();
        (0..self.dimension).map(|_| rng.gen_range(-1.0..1.0) * scale * 3f64.sqrt()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    pub embedding_dim: usize,
    pub word_vocab: usize,
    pub char_vocab: usize,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig { embedding_dim: 32, word_vocab: 1500, char_vocab: 1500 }
    }
}

/// A feature vector stored sparsely: the dense embedding block first, then the
/// non-zero TF-IDF entries as (column, value) pairs in increasing column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub width: usize,
    pub embedding: Vec<f64>,
    pub sparse: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        out[..self.embedding.len()].copy_from_slice(&self.embedding);
        for &(i, v) in &self.sparse {
            out[i as usize] = v;
        }
        out
    }

    /// Calls `f(column, value)` for every possibly non-zero entry.
    pub fn for_each(&self, mut f: impl FnMut(usize, f64)) {
        for (i, v) in self.embedding.iter().enumerate() {
            f(i, *v);
        }
        for &(i, v) in &self.sparse {
            f(i as usize, v);
        }
    }

    pub fn hash_into(&self, h: &mut impl Hasher) {
        h.write_usize(self.width);
        for v in &self.embedding {
            h.write_u64(v.to_bits());
        }
        for (i, v) in &self.sparse {
            h.write_u32(*i);
            h.write_u64(v.to_bits());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Vocabulary {
    terms: Vec<String>,
    idf: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn fit(docs: &[Vec<String>], cap: usize) -> Self {
        let mut df: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            let mut seen: Vec<&str> = doc.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(cap);
        let d = docs.len() as f64;
        let terms: Vec<String> = ranked.iter().map(|(t, _)| t.to_string()).collect();
        let idf = ranked.iter().map(|(_, n)| ((1.0 + d) / (1.0 + *n as f64)).ln() + 1.0).collect();
        let mut v = Vocabulary { terms, idf, index: HashMap::new() };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.index = self.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    fn len(&self) -> usize {
        self.terms.len()
    }

    /// TF-IDF entries with TF = count / term count of the document.
    fn score(&self, terms: &[String], offset: usize, out: &mut Vec<(u32, f64)>) {
        if terms.is_empty() || self.terms.is_empty() {
            return;
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for t in terms {
            if let Some(&i) = self.index.get(t) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let n = terms.len() as f64;
        out.extend(counts.into_iter().map(|(i, c)| ((offset + i) as u32, c as f64 / n * self.idf[i])));
    }
}

/// A fitted featurizer. Immutable; featurize is pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    embedding: EmbeddingTable,
    words: Vocabulary,
    chars: Vocabulary,
}

impl Featurizer {
    /// Fits the n-gram vocabularies on claim texts. The result does not depend on text order.
    pub fn fit(claim_texts: &[String], config: &FeaturizerConfig, embedding: EmbeddingTable) -> Result<Self> {
        if claim_texts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let word_docs: Vec<Vec<String>> = claim_texts.iter().map(|t| word_ngrams(&tokenize(t))).collect();
        let char_docs: Vec<Vec<String>> = claim_texts.iter().map(|t| char_trigrams(t)).collect();
        Ok(Featurizer { embedding, words: Vocabulary::fit(&word_docs, config.word_vocab), chars: Vocabulary::fit(&char_docs, config.char_vocab) })
    }

    /// Restores lookup indices after deserialization.
    pub fn reindex(&mut self) {
        self.words.reindex();
        self.chars.reindex();
    }

    pub fn width(&self) -> usize {
        self.embedding.dimension + self.words.len() + self.chars.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding.dimension
    }

    pub fn word_vocab(&self) -> &[String] {
        &self.words.terms
    }

    pub fn word_idf(&self) -> &[f64] {
        &self.words.idf
    }

    pub fn char_vocab(&self) -> &[String] {
        &self.chars.terms
    }

    /// Embedding mean over the whole sentence; TF-IDF over the claim span only.
    pub fn featurize(&self, sentence: &str, span: (usize, usize)) -> FeatureVector {
        let dim = self.embedding.dimension;
        let mut embedding = vec![0.0; dim];
        let words = tokenize(sentence);
        for w in &words {
            for (acc, x) in embedding.iter_mut().zip(self.embedding.vector(w)) {
                *acc += x;
            }
        }
        if !words.is_empty() {
            embedding.iter_mut().for_each(|x| *x /= words.len() as f64);
        }
        let claim: String = sentence.chars().skip(span.0).take(span.1.saturating_sub(span.0)).collect();
        let mut sparse = Vec::new();
        self.words.score(&word_ngrams(&tokenize(&claim)), dim, &mut sparse);
        self.chars.score(&char_trigrams(&claim), dim + self.words.len(), &mut sparse);
        FeatureVector { width: self.width(), embedding, sparse }
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::default();
        h.write_usize(self.embedding.dimension);
        for (w, v) in &self.embedding.vectors {
            h.write(w.as_bytes());
            v.iter().for_each(|x| h.write_u64(x.to_bits()));
        }
        for vocab in [&self.words, &self.chars] {
            h.write_usize(vocab.len());
            for (t, idf) in vocab.terms.iter().zip(&vocab.idf) {
                h.write(t.as_bytes());
                h.write_u64(idf.to_bits());
            }
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn idf_of_a_shared_word() {
        let f = Featurizer::fit(&texts(&["growth", "growth"]), &FeaturizerConfig::default(), EmbeddingTable::hashed(4)).unwrap();
        assert_eq!(f.word_vocab(), ["growth"]);
        assert_eq!(f.word_idf(), [1.0]);
    }

    #[test]
    fn zero_caps_leave_only_the_embedding() {
        let config = FeaturizerConfig { embedding_dim: 8, word_vocab: 0, char_vocab: 0 };
        let f = Featurizer::fit(&texts(&["demand grew by 3%"]), &config, EmbeddingTable::hashed(8)).unwrap();
        let v = f.featurize("demand grew by 3%", (0, 17));
        assert_eq!(v.width, 8);
        assert!(v.sparse.is_empty());
    }

    #[test]
    fn fit_ignores_text_order() {
        let a = texts(&["wind capacity grew", "solar output fell", "demand grew"]);
        let mut b = a.clone();
        b.reverse();
        let c = FeaturizerConfig { embedding_dim: 4, word_vocab: 3, char_vocab: 5 };
        let fa = Featurizer::fit(&a, &c, EmbeddingTable::hashed(4)).unwrap();
        let fb = Featurizer::fit(&b, &c, EmbeddingTable::hashed(4)).unwrap();
        assert_eq!(fa, fb);
        assert_eq!(fa.word_vocab(), ["grew", "capacity", "capacity grew"]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(Featurizer::fit(&[], &FeaturizerConfig::default(), EmbeddingTable::hashed(4)), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn singleton_sentence_embeds_as_its_word() {
        let table = EmbeddingTable::hashed(6);
        let f = Featurizer::fit(&texts(&["growth"]), &FeaturizerConfig::default(), table.clone()).unwrap();
        let v = f.featurize("Growth", (0, 6));
        assert_eq!(v.embedding, table.vector("growth"));
    }

    #[test]
    fn context_outside_the_span_only_moves_the_embedding() {
        let claim = "demand grew by 3%";
        let s1 = format!("In Europe {claim}");
        let s2 = format!("Across Asia {claim}");
        let f = Featurizer::fit(&texts(&[claim, "supply fell"]), &FeaturizerConfig::default(), EmbeddingTable::hashed(8)).unwrap();
        let a = f.featurize(&s1, (10, 10 + claim.len()));
        let b = f.featurize(&s2, (12, 12 + claim.len()));
        assert_eq!(a.sparse, b.sparse);
        assert_ne!(a.embedding, b.embedding);
    }

    #[test]
    fn unknown_words_score_zero() {
        let f = Featurizer::fit(&texts(&["growth"]), &FeaturizerConfig::default(), EmbeddingTable::hashed(4)).unwrap();
        let v = f.featurize("xyz", (0, 3));
        assert!(v.sparse.is_empty());
        assert!(v.to_dense().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn embedding_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vec.txt");
        fs::write(&p, "growth 1 0\ndemand 0 1\n").unwrap();
        let t = EmbeddingTable::load(&p).unwrap();
        assert_eq!(t.dimension, 2);
        assert_eq!(t.vector("growth"), vec![1.0, 0.0]);
        assert_eq!(t.vector("other").len(), 2);
        fs::write(&p, "growth 1 0\ndemand 0\n").unwrap();
        assert!(EmbeddingTable::load(&p).is_err());
    }
}
