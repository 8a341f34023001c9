//! Deterministic synthetic corpora shaped by a frequency profile.
//!
//! Property values (relations, keys, attributes, formulas) are used with
//! frequencies that follow the profile's percentile curve, rescaled to the
//! number of claims. Claim text mentions the words of its relation, keys,
//! attribute labels and formula so the classifiers have something to learn.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Annotation, Catalog, Claim, ClaimKind, Corpus, CorpusError, Document, Relation, Section, Verdict, DEFAULT_TOLERANCE};
use crate::formula::{evaluate, Binding, CellRef, CmpOp, EvalValue, FormulaTemplate};
use crate::querygen::{self, Context, QueryGenConfig};

/// Percentile ranks of the frequency profile.
pub const PERCENTILE_POINTS: [f64; 5] = [10.0, 25.0, 50.0, 95.0, 99.0];

/// Usage-count percentiles (at [`PERCENTILE_POINTS`]) per property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileRow {
    pub relation: [f64; 5],
    pub key: [f64; 5],
    pub attribute: [f64; 5],
    pub formula: [f64; 5],
}

impl PercentileRow {
    pub fn rows(&self) -> [(&'static str, [f64; 5]); 4] {
        [("relation", self.relation), ("key", self.key), ("attribute", self.attribute), ("formula", self.formula)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusProfile {
    pub n_relations: usize,
    pub n_keys: usize,
    pub n_attributes: usize,
    pub n_formulas: usize,
    pub n_claims: usize,
    pub n_sections: usize,
    pub percentiles: PercentileRow,
    /// Target share of explicit claims; the rest are general.
    #[serde(default = "default_explicit_fraction")]
    pub explicit_fraction: f64,
    /// Share of claims generated with a wrong parameter or a false comparison.
    #[serde(default = "default_error_rate")]
    pub error_rate: f64,
    /// Attribute labels are consecutive years starting here.
    #[serde(default = "default_first_year")]
    pub first_year: u32,
}

fn default_explicit_fraction() -> f64 {
    0.5
}
fn default_error_rate() -> f64 {
    0.2
}
fn default_first_year() -> u32 {
    2000
}

const TABLE1: PercentileRow = PercentileRow {
    relation: [2.0, 4.0, 10.0, 199.0, 532.0],
    key: [2.0, 2.0, 4.0, 39.0, 107.0],
    attribute: [1.0, 2.0, 7.0, 127.0, 1400.0],
    formula: [1.0, 1.0, 1.0, 8.0, 55.0],
};

impl CorpusProfile {
    /// Counts and percentiles of the energy-outlook report the method was built for.
    pub fn table1() -> Self {
        CorpusProfile {
            n_relations: 1791,
            n_keys: 830,
            n_attributes: 87,
            n_formulas: 413,
            n_claims: 1539,
            n_sections: 120,
            percentiles: TABLE1,
            explicit_fraction: default_explicit_fraction(),
            error_rate: default_error_rate(),
            first_year: default_first_year(),
        }
    }

    /// Relation, key and formula counts divided by ten; claims and the attribute
    /// schema kept. A label occurs at most once per claim, so a tenth of the
    /// attribute labels could not carry the attribute frequency shape.
    pub fn table1_div10() -> Self {
        CorpusProfile { n_relations: 179, n_keys: 83, n_formulas: 41, n_sections: 100, ..Self::table1() }
    }

    /// A few hundred claims, for fast tests.
    pub fn small() -> Self {
        CorpusProfile { n_relations: 12, n_keys: 16, n_attributes: 5, n_formulas: 10, n_claims: 200, n_sections: 12, ..Self::table1() }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "table1" => Some(Self::table1()),
            "table1_div10" => Some(Self::table1_div10()),
            "small" => Some(Self::small()),
            _ => None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        let p: Self = toml::from_str(text).map_err(|e| CorpusError::InvalidProfile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidProfile(m));
        let counts = [
            ("n_relations", self.n_relations),
            ("n_keys", self.n_keys),
            ("n_attributes", self.n_attributes),
            ("n_formulas", self.n_formulas),
            ("n_claims", self.n_claims),
            ("n_sections", self.n_sections),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, c)| *c == 0) {
            return bad(format!("{name} must be positive"));
        }
        if self.n_formulas > self.n_claims {
            return bad(format!("more formulas ({}) than claims ({})", self.n_formulas, self.n_claims));
        }
        for (name, row) in self.percentiles.rows() {
            if row.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || row.windows(2).any(|w| w[1] < w[0]) {
                return bad(format!("{name} percentiles must be positive and non-decreasing"));
            }
        }
        if !(0.0..=1.0).contains(&self.explicit_fraction) || !(0.0..1.0).contains(&self.error_rate) {
            return bad("explicit_fraction must lie in [0,1] and error_rate in [0,1)".into());
        }
        Ok(())
    }
}

/// Nearest-rank percentile of an ascending slice.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn percentiles_of(counts: &[usize]) -> [f64; 5] {
    let mut v: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
    v.sort_by(f64::total_cmp);
    PERCENTILE_POINTS.map(|q| percentile(&v, q))
}

/// Frequency at quantile `q` in (0,1), log-linear between the profile's points
/// and flat outside them.
fn quantile_curve(p: &[f64; 5], q: f64) -> f64 {
    let xs = PERCENTILE_POINTS.map(|x| x / 100.0);
    let ln = p.map(f64::ln);
    if q <= xs[0] {
        return p[0];
    }
    for i in 0..4 {
        if q <= xs[i + 1] {
            let t = (q - xs[i]) / (xs[i + 1] - xs[i]);
            return (ln[i] + t * (ln[i + 1] - ln[i])).exp();
        }
    }
    p[4]
}

/// Usage counts for `n` values summing to `total`, ascending, shaped by the
/// profile curve. Values beyond `total` stay unused.
fn allocate(p: &[f64; 5], n: usize, total: usize) -> (Vec<usize>, f64) {
    let m = n.min(total);
    if m == 0 {
        return (vec![0; n], 0.0);
    }
    let raw: Vec<f64> = (0..m).map(|i| quantile_curve(p, (i as f64 + 0.5) / m as f64)).collect();
    let scale = total as f64 / raw.iter().sum::<f64>();
    let mut counts: Vec<usize> = raw.iter().map(|f| ((f * scale).floor() as usize).max(1)).collect();
    let mut sum: usize = counts.iter().sum();
    if sum < total {
        let mut order: Vec<usize> = (0..m).collect();
        let frac = |i: usize| raw[i] * scale - (raw[i] * scale).floor();
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(b.cmp(&a)));
        let mut j = 0;
        while sum < total {
            counts[order[j % m]] += 1;
            sum += 1;
            j += 1;
        }
    }
    while sum > total {
        let i = (0..m).rev().max_by_key(|&i| counts[i]).expect("non-empty");
        counts[i] -= 1;
        sum -= 1;
    }
    counts.sort_unstable();
    let mut out = vec![0; n - m];
    out.extend(counts);
    (out, scale)
}

/// Profile percentiles rescaled the way the generator rescales them.
pub fn scaled_percentiles(p: &[f64; 5], n: usize, total: usize) -> [f64; 5] {
    let (_, scale) = allocate(p, n, total);
    p.map(|v| v * scale)
}

/// Realized usage-count percentiles of a corpus, from its resolved annotations.
pub fn property_frequencies(corpus: &Corpus) -> Result<(PercentileRow, [usize; 4]), CorpusError> {
    let mut maps: [BTreeMap<String, usize>; 4] = Default::default();
    for check in corpus.ground_truth()?.into_iter().flatten() {
        for r in check.relations() {
            *maps[0].entry(r).or_default() += 1;
        }
        for k in check.keys() {
            *maps[1].entry(k).or_default() += 1;
        }
        for a in check.attributes() {
            *maps[2].entry(a).or_default() += 1;
        }
        *maps[3].entry(check.template.key()).or_default() += 1;
    }
    let totals = [0, 1, 2, 3].map(|i| maps[i].values().sum::<usize>());
    let row = |i: usize| percentiles_of(&maps[i].values().copied().collect::<Vec<_>>());
    Ok((PercentileRow { relation: row(0), key: row(1), attribute: row(2), formula: row(3) }, totals))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Level,
    Ratio,
    Growth,
    Difference,
}

struct Shape {
    expr: &'static str,
    /// (key index, attribute index) of each value variable.
    roles: &'static [(usize, usize)],
    family: Family,
    phrase: &'static str,
}

impl Shape {
    fn n_keys(&self) -> usize {
        self.roles.iter().map(|r| r.0).max().unwrap_or(0) + 1
    }
    fn n_attrs(&self) -> usize {
        self.roles.iter().map(|r| r.1).max().unwrap_or(0) + 1
    }
}

const ONE_KEY_TWO_ATTRS: &[(usize, usize)] = &[(0, 0), (0, 1)];
const TWO_KEYS_ONE_ATTR: &[(usize, usize)] = &[(0, 0), (1, 0)];
const ONE_KEY_THREE_ATTRS: &[(usize, usize)] = &[(0, 0), (0, 1), (0, 2)];

// Every shape yields at most six arrangements over its own exact context.
const SHAPES: &[Shape] = &[
    Shape { expr: "a.A1/b.A2-1", roles: ONE_KEY_TWO_ATTRS, family: Family::Growth, phrase: "growth" },
    Shape { expr: "POWER(a.A1/b.A2,1/(A1-A2))-1", roles: ONE_KEY_TWO_ATTRS, family: Family::Growth, phrase: "annual growth" },
    Shape { expr: "a.A1/b.A2", roles: ONE_KEY_TWO_ATTRS, family: Family::Ratio, phrase: "ratio" },
    Shape { expr: "a.A1", roles: &[(0, 0)], family: Family::Level, phrase: "level" },
    Shape { expr: "a.A1-b.A2", roles: ONE_KEY_TWO_ATTRS, family: Family::Difference, phrase: "change" },
    Shape { expr: "(a.A1-b.A2)/b.A2", roles: ONE_KEY_TWO_ATTRS, family: Family::Growth, phrase: "relative change" },
    Shape { expr: "a.A1/b.A1", roles: TWO_KEYS_ONE_ATTR, family: Family::Ratio, phrase: "relative size" },
    Shape { expr: "a.A1/(a.A1+b.A1)", roles: TWO_KEYS_ONE_ATTR, family: Family::Ratio, phrase: "share" },
    Shape { expr: "AVG(a.A1,b.A2,c.A3)", roles: ONE_KEY_THREE_ATTRS, family: Family::Level, phrase: "average" },
    Shape { expr: "a.A1+b.A1", roles: TWO_KEYS_ONE_ATTR, family: Family::Level, phrase: "combined total" },
    Shape { expr: "MAX(a.A1,b.A2,c.A3)-MIN(a.A1,b.A2,c.A3)", roles: ONE_KEY_THREE_ATTRS, family: Family::Difference, phrase: "range" },
    Shape { expr: "a.A1-b.A1", roles: TWO_KEYS_ONE_ATTR, family: Family::Difference, phrase: "gap" },
    Shape { expr: "a.A1/b.A1-1", roles: TWO_KEYS_ONE_ATTR, family: Family::Growth, phrase: "lead" },
    Shape { expr: "SUM(a.A1,b.A2,c.A3)", roles: ONE_KEY_THREE_ATTRS, family: Family::Level, phrase: "cumulative total" },
];

const SCALES: &[f64] = &[100.0, 1000.0, 0.001, 0.01, 10.0, 0.1, 1e6, 1e-6, 2.0, 0.5, 3.0, 4.0, 1.5, 0.25, 60.0, 24.0, 3.6, 1.1, 5.0, 7.0];

fn thresholds(family: Family) -> &'static [f64] {
    match family {
        Family::Growth => &[0.0, 0.05, 0.1, 0.02, -0.02, 0.15, 0.2, 0.03, 0.08, 0.01, 0.25, 0.3],
        Family::Ratio => &[1.0, 1.1, 0.9, 1.2, 1.05, 0.95, 1.3, 0.8, 1.5, 1.15, 0.85, 2.0],
        Family::Difference => &[0.0, 10.0, 100.0, -10.0, 50.0, 5.0, 20.0, 200.0, -5.0, 500.0, 1.0, 1000.0],
        Family::Level => &[100.0, 1000.0, 500.0, 5000.0, 200.0, 2500.0, 300.0, 50.0, 10000.0, 700.0, 3000.0, 150.0],
    }
}

struct LibraryFormula {
    template: Arc<FormulaTemplate>,
    shape: &'static Shape,
    scaled: bool,
    word: String,
}

fn fmt_const(c: f64) -> String {
    let s = format!("{c}");
    if c < 0.0 {
        format!("({s})")
    } else {
        s
    }
}

fn build_library(profile: &CorpusProfile, words: &mut WordGen, rng: &mut ChaCha8Rng) -> Result<Vec<LibraryFormula>, CorpusError> {
    let label_range = profile.first_year as f64..(profile.first_year as usize + profile.n_attributes) as f64;
    let clashes = |c: f64| label_range.contains(&c) && c.fract() == 0.0;
    let feasible: Vec<&'static Shape> =
        SHAPES.iter().filter(|s| s.n_keys() <= profile.n_keys && s.n_attrs() <= profile.n_attributes).collect();
    if feasible.is_empty() {
        return Err(CorpusError::InvalidProfile("no formula shape fits the key and attribute counts".into()));
    }
    let mut explicit: Vec<(String, &'static Shape, bool)> = feasible.iter().map(|s| (s.expr.to_string(), *s, false)).collect();
    for &c in SCALES.iter().filter(|c| !clashes(**c)) {
        explicit.extend(feasible.iter().map(|s| (format!("({})*{}", s.expr, fmt_const(c)), *s, true)));
    }
    let mut boolean = Vec::new();
    for t in 0..12 {
        for op in [CmpOp::Gt, CmpOp::Lt] {
            for s in &feasible {
                let thr = thresholds(s.family)[t];
                if !clashes(thr) {
                    boolean.push((format!("{} {} {}", s.expr, op.symbol(), fmt_const(thr)), *s, false));
                }
            }
        }
    }
    let share_general = 1.0 - profile.explicit_fraction;
    let (mut ei, mut bi) = (0, 0);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(profile.n_formulas);
    let mut i = 0usize;
    while out.len() < profile.n_formulas {
        let want_bool = ((i + 1) as f64 * share_general).floor() > (i as f64 * share_general).floor();
        i += 1;
        let pick = if (want_bool && bi < boolean.len()) || ei >= explicit.len() {
            bi += 1;
            boolean.get(bi - 1)
        } else {
            ei += 1;
            explicit.get(ei - 1)
        };
        let Some((text, shape, scaled)) = pick else {
            return Err(CorpusError::InvalidProfile(format!("cannot build {} distinct formulas", profile.n_formulas)));
        };
        let template = FormulaTemplate::parse(text).expect("library formulas parse");
        if seen.insert(template.key()) {
            out.push(LibraryFormula { template: Arc::new(template), shape, scaled: *scaled, word: words.word(rng, 3) });
        }
    }
    Ok(out)
}

struct WordGen {
    used: HashSet<String>,
}

impl WordGen {
    fn word(&mut self, rng: &mut ChaCha8Rng, syllables: usize) -> String {
        const C: &[u8] = b"bdfgklmnprstvz";
        const V: &[u8] = b"aeiou";
        loop {
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(C[rng.gen_range(0..C.len())] as char);
                w.push(V[rng.gen_range(0..V.len())] as char);
            }
            if rng.gen_bool(0.5) {
                w.push(C[rng.gen_range(0..C.len())] as char);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn camel(words: &[String]) -> String {
    words
        .iter()
        .map(|w| {
            let mut c = w.chars();
            c.next().map(|f| f.to_ascii_uppercase().to_string() + c.as_str()).unwrap_or_default()
        })
        .collect()
}

/// Weighted draws without replacement from a multiset of value tokens.
struct Pool {
    counts: Vec<usize>,
}

impl Pool {
    fn draw(&mut self, rng: &mut ChaCha8Rng, exclude: &[usize]) -> Option<usize> {
        let total: usize = self.counts.iter().enumerate().filter(|(i, _)| !exclude.contains(i)).map(|(_, c)| c).sum();
        if total == 0 {
            return None;
        }
        let mut x = rng.gen_range(0..total);
        for (i, &c) in self.counts.iter().enumerate() {
            if exclude.contains(&i) {
                continue;
            }
            if x < c {
                self.counts[i] -= 1;
                return Some(i);
            }
            x -= c;
        }
        unreachable!("draw stays below the total")
    }

    fn put_back(&mut self, values: &[usize]) {
        for &v in values {
            self.counts[v] += 1;
        }
    }

    /// `k` distinct values; falls back to uniform values once the pool runs dry.
    fn draw_distinct(&mut self, rng: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let v = match self.draw(rng, &out) {
                Some(v) => v,
                None => loop {
                    let v = rng.gen_range(0..n);
                    if !out.contains(&v) {
                        break v;
                    }
                },
            };
            out.push(v);
        }
        out
    }
}

/// Multiset of value indices with the allocated counts, assigned to random value identities.
fn allocation_tokens(p: &[f64; 5], n: usize, total: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (counts, _) = allocate(p, n, total);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let mut per_value = vec![0; n];
    for (slot, c) in counts.into_iter().enumerate() {
        per_value[ids[slot]] = c;
    }
    per_value
}

/// Formula usage counts, handing the largest counts alternately to explicit and
/// general formulas so that the explicit share of claims tracks the profile.
fn formula_allocation(profile: &CorpusProfile, library: &[LibraryFormula], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (counts, _) = allocate(&profile.percentiles.formula, library.len(), profile.n_claims);
    let mut pools: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, f) in library.iter().enumerate() {
        pools[usize::from(f.template.is_boolean())].push(i);
    }
    pools[0].shuffle(rng);
    pools[1].shuffle(rng);
    let target = [profile.explicit_fraction, 1.0 - profile.explicit_fraction].map(|f| f * profile.n_claims as f64);
    let mut used = [0.0f64; 2];
    let mut out = vec![0; library.len()];
    for &c in counts.iter().rev() {
        let kind = match (pools[0].is_empty(), pools[1].is_empty()) {
            (false, true) => 0,
            (true, false) => 1,
            _ => usize::from(target[1] - used[1] > target[0] - used[0]),
        };
        let f = pools[kind].pop().expect("one formula per count");
        out[f] = c;
        used[kind] += c as f64;
    }
    out
}

const FILLER: &[&str] = &[
    "according", "to", "the", "latest", "estimates", "overall", "meanwhile", "notably", "in", "this", "scenario", "by", "contrast",
    "as", "expected", "over", "period", "across", "regions", "markets", "policy", "settings", "outlook", "analysis", "shows",
    "that", "trend", "continued", "recent", "years", "data", "indicate", "broadly", "similar", "pattern", "reported", "figures",
    "suggest", "current", "conditions", "stated", "policies", "case", "main", "projection", "remains", "uncertain",
];

fn filler(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| FILLER[rng.gen_range(0..FILLER.len())]).collect::<Vec<_>>().join(" ")
}

fn round_sig(v: f64, digits: i32) -> (f64, usize) {
    if v == 0.0 {
        return (0.0, 0);
    }
    let e = v.abs().log10().floor() as i32;
    let shift = digits - 1 - e;
    if shift >= 0 {
        let factor = 10f64.powi(shift);
        ((v * factor).round() / factor, shift as usize)
    } else {
        let factor = 10f64.powi(-shift);
        ((v / factor).round() * factor, 0)
    }
}

fn group_thousands(int_part: &str) -> String {
    let (sign, digits) = int_part.strip_prefix('-').map(|d| ("-", d)).unwrap_or(("", int_part));
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(' ');
        }
        out.push(ch);
    }
    format!("{sign}{out}")
}

/// Three significant figures; percentages for growth-like values.
fn render_value(v: f64, percent: bool) -> String {
    if percent {
        let (x, d) = round_sig(v * 100.0, 3);
        format!("{x:.d$}%")
    } else {
        let (x, d) = round_sig(v, 3);
        let s = format!("{x:.d$}");
        match s.split_once('.') {
            Some((i, f)) => format!("{}.{f}", group_thousands(i)),
            None => group_thousands(&s),
        }
    }
}

struct Skeleton {
    formula: usize,
    relation: usize,
    keys: Vec<usize>,
    section: usize,
}

/// Generates relations, a document, claims and their ground-truth annotations.
pub fn generate_synthetic_corpus(profile: &CorpusProfile, seed: u64) -> Result<Corpus, CorpusError> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = WordGen { used: HashSet::new() };
    let pct = &profile.percentiles;

    let library = build_library(profile, &mut words, &mut rng)?;
    let relation_words: Vec<Vec<String>> = (0..profile.n_relations).map(|_| vec![words.word(&mut rng, 2), words.word(&mut rng, 2)]).collect();
    let key_words: Vec<Vec<String>> = (0..profile.n_keys).map(|_| vec![words.word(&mut rng, 2), words.word(&mut rng, 2)]).collect();
    let relation_names: Vec<String> = relation_words.iter().map(|w| camel(w)).collect();
    let key_names: Vec<String> = key_words.iter().map(|w| camel(w)).collect();
    let attributes: Vec<String> = (0..profile.n_attributes).map(|i| (profile.first_year as usize + i).to_string()).collect();

    let n = profile.n_claims;
    let expand = |per_value: &[usize], rng: &mut ChaCha8Rng| {
        let mut v: Vec<usize> = per_value.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat(i).take(c)).collect();
        v.shuffle(rng);
        v
    };
    let formula_counts = formula_allocation(profile, &library, &mut rng);
    let formulas = expand(&formula_counts, &mut rng);
    let relation_counts = allocation_tokens(&pct.relation, profile.n_relations, n, &mut rng);
    let relations_of_claims = expand(&relation_counts, &mut rng);

    let key_demand: usize = formulas.iter().map(|&f| library[f].shape.n_keys()).sum();
    let mut key_pool = Pool { counts: allocation_tokens(&pct.key, profile.n_keys, key_demand, &mut rng) };
    let attr_demand: usize = formulas.iter().map(|&f| library[f].shape.n_attrs()).sum();
    let mut attr_pool = Pool { counts: allocation_tokens(&pct.attribute, profile.n_attributes, attr_demand, &mut rng) };

    // Topic clusters: contiguous runs of sections share a group of relations.
    let n_clusters = ((profile.n_sections as f64).sqrt().round() as usize).clamp(1, profile.n_sections);
    let cluster_of_section = |s: usize| s * n_clusters / profile.n_sections;
    let mut by_popularity: Vec<usize> = (0..profile.n_relations).collect();
    by_popularity.sort_by_key(|&r| std::cmp::Reverse(relation_counts[r]));
    let mut cluster_of_relation = vec![0; profile.n_relations];
    for (rank, &r) in by_popularity.iter().enumerate() {
        cluster_of_relation[r] = rank % n_clusters;
    }
    let sections_of_cluster: Vec<Vec<usize>> =
        (0..n_clusters).map(|c| (0..profile.n_sections).filter(|&s| cluster_of_section(s) == c).collect()).collect();

    let skeletons: Vec<Skeleton> = (0..n)
        .map(|i| {
            let formula = formulas[i];
            let relation = relations_of_claims[i];
            let keys = key_pool.draw_distinct(&mut rng, library[formula].shape.n_keys(), profile.n_keys);
            let pool = &sections_of_cluster[cluster_of_relation[relation]];
            let section = pool[rng.gen_range(0..pool.len())];
            Skeleton { formula, relation, keys, section }
        })
        .collect();

    // Relation rows: the keys its claims use plus a couple of distractors.
    let mut relation_keys: Vec<Vec<usize>> = vec![Vec::new(); profile.n_relations];
    for s in &skeletons {
        relation_keys[s.relation].extend(&s.keys);
    }
    let mut relations = Vec::with_capacity(profile.n_relations);
    for (r, keys) in relation_keys.iter_mut().enumerate() {
        for _ in 0..2.min(profile.n_keys) {
            keys.push(rng.gen_range(0..profile.n_keys));
        }
        keys.sort_by(|a, b| key_names[*a].cmp(&key_names[*b]));
        keys.dedup();
        let mut rel = Relation::new(relation_names[r].clone(), "Index", attributes.clone())?;
        for &k in keys.iter() {
            let base = 10f64.powf(rng.gen_range(1.0..4.5));
            let growth: f64 = rng.gen_range(-0.04..0.12);
            let cells = (0..profile.n_attributes)
                .map(|t| {
                    let v = base * (1.0 + growth).powi(t as i32) * (1.0 + rng.gen_range(-0.02..0.02));
                    Some((v * 1000.0).round() / 1000.0)
                })
                .collect();
            rel.push_row(key_names[k].clone(), cells)?;
        }
        relations.push(rel);
    }
    relations.sort_by(|a, b| a.name.cmp(&b.name));
    let catalog = Catalog::new(relations);

    let mut drafts: Vec<(usize, Claim, Annotation)> = Vec::with_capacity(n);
    for (i, sk) in skeletons.iter().enumerate() {
        let lf = &library[sk.formula];
        let template = &lf.template;
        let n_attrs = lf.shape.n_attrs();
        let rel_name = &relation_names[sk.relation];
        let mut wants_error = rng.gen_bool(profile.error_rate);
        let mut attrs = attr_pool.draw_distinct(&mut rng, n_attrs, profile.n_attributes);

        let mut chosen = None;
        for attempt in 0..40 {
            if attempt > 0 {
                // Rejected labels go back so the usage totals keep their allocation.
                attr_pool.put_back(&attrs);
                attrs = attr_pool.draw_distinct(&mut rng, n_attrs, profile.n_attributes);
            }
            // Some contexts admit no wrong parameter that stays unambiguous.
            if attempt == 30 {
                wants_error = false;
            }
            if matches!(lf.shape.family, Family::Growth | Family::Difference) {
                attrs.sort_unstable_by(|a, b| b.cmp(a));
            }
            let cells: Vec<CellRef> = lf
                .shape
                .roles
                .iter()
                .map(|&(k, a)| CellRef::new(rel_name.clone(), key_names[sk.keys[k]].clone(), attributes[attrs[a]].clone()))
                .collect();
            let binding = Binding::derive(template, cells).expect("shape roles follow the template variables");
            let Ok(value) = evaluate(template, &binding, &catalog) else { continue };
            match value {
                EvalValue::Number(v) if v.abs() >= 1e-6 => {
                    if let Some(p) = explicit_parameter(v, lf, wants_error, template, &binding, &catalog, &mut rng) {
                        chosen = Some((binding, value, Some(p)));
                        break;
                    }
                }
                EvalValue::Bool(b) if b != wants_error || attempt >= 20 => {
                    chosen = Some((binding, value, None));
                    break;
                }
                _ => {}
            }
        }
        let Some((binding, value, parameter)) = chosen else {
            return Err(CorpusError::InvalidProfile(format!("could not instantiate a valid claim for formula {}", template.key())));
        };

        let claim_keys: Vec<String> = crate::corpus::dedup(binding.cells.iter().map(|c| c.key.clone()));
        let claim_attrs: Vec<String> = crate::corpus::dedup(binding.cells.iter().map(|c| c.attribute.clone()));
        let key_text: Vec<String> = sk.keys.iter().map(|&k| key_words[k].join(" ")).collect();
        let head = format!(
            "{} {} {} in the {} data for {}",
            key_text.join(" and "),
            lf.shape.phrase,
            lf.word,
            relation_words[sk.relation].join(" "),
            claim_attrs.join(" and ")
        );
        let (text, kind, verdict) = match (value, parameter.as_ref()) {
            (EvalValue::Number(v), Some((p, p_text))) => {
                let p = *p;
                let ok = super::relative_error(v, p) < DEFAULT_TOLERANCE;
                (format!("{head} was {p_text}"), ClaimKind::Explicit, ok)
            }
            (EvalValue::Bool(b), _) => {
                let tail = match template.embedded_comparison.map(|c| c.op) {
                    Some(CmpOp::Lt) => "remained subdued",
                    _ => "rose markedly",
                };
                (format!("{head} {tail}"), ClaimKind::General, b)
            }
            _ => unreachable!("numbers always carry a parameter"),
        };
        let prefix = format!("{}, ", capitalize(&filler(&mut rng, 2)));
        let suffix = format!(" {}.", filler(&mut rng, 2));
        let start = prefix.chars().count();
        let span = (start, start + text.chars().count());
        let sentence = format!("{prefix}{text}{suffix}");
        let claim = Claim {
            id: String::new(),
            sentence,
            span,
            section: String::new(),
            kind,
            parameter: parameter.map(|(p, _)| p),
            comparison: (kind == ClaimKind::Explicit).then_some(CmpOp::Eq),
            tolerance: DEFAULT_TOLERANCE,
        };
        let annotation = Annotation {
            claim_id: String::new(),
            relations: vec![rel_name.clone()],
            key_values: claim_keys,
            attributes: claim_attrs,
            check_expression: template.instantiate(&binding).expect("bound template instantiates").to_string(),
            definitions: BTreeMap::new(),
            verdict: if verdict { Verdict::Correct } else { Verdict::Incorrect },
        };
        drafts.push((i, claim, annotation));
    }

    // Document order: by section, then generation order.
    drafts.sort_by_key(|(i, _, _)| (skeletons[*i].section, *i));
    let section_ids: Vec<String> = (0..profile.n_sections).map(|s| format!("s{:03}", s + 1)).collect();
    let cluster_words: Vec<String> = (0..n_clusters).map(|_| words.word(&mut rng, 3)).collect();
    let mut sections: Vec<Section> = (0..profile.n_sections)
        .map(|s| Section {
            id: section_ids[s].clone(),
            title: format!("{} {}", capitalize(&cluster_words[cluster_of_section(s)]), s + 1),
            sentences: vec![format!("{}.", capitalize(&filler(&mut rng, 6)))],
        })
        .collect();
    let width = n.to_string().len().max(4);
    let mut claims = Vec::with_capacity(n);
    let mut annotations = Vec::with_capacity(n);
    for (pos, (i, mut claim, mut annotation)) in drafts.into_iter().enumerate() {
        let id = format!("c{:0width$}", pos + 1);
        let s = skeletons[i].section;
        claim.id = id.clone();
        claim.section = section_ids[s].clone();
        sections[s].sentences.push(claim.sentence.clone());
        annotation.claim_id = id;
        claims.push(claim);
        annotations.push(annotation);
    }
    Ok(Corpus { catalog, document: Document { sections }, claims, annotations })
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default()
}

/// Picks the stated parameter of an explicit claim: the rounded true value, or
/// for an erroneous claim a perturbed value that no arrangement of the exact
/// context matches. Returns the parsed parameter with its text.
fn explicit_parameter(
    v: f64,
    lf: &LibraryFormula,
    wants_error: bool,
    template: &Arc<FormulaTemplate>,
    binding: &Binding,
    catalog: &Catalog,
    rng: &mut ChaCha8Rng,
) -> Option<(f64, String)> {
    let percent = lf.shape.family == Family::Growth && !lf.scaled;
    let parse = |t: &str| super::params::ParameterLexicon::default().extract(t).map(|(x, _)| x);
    if !wants_error {
        let text = render_value(v, percent);
        return parse(&text).map(|p| (p, text));
    }
    let ctx = Context {
        relations: crate::corpus::dedup(binding.cells.iter().map(|c| c.relation.clone())),
        keys: crate::corpus::dedup(binding.cells.iter().map(|c| c.key.clone())),
        attributes: crate::corpus::dedup(binding.cells.iter().map(|c| c.attribute.clone())),
        formulas: vec![Arc::clone(template)],
        parameter: None,
        tolerance: DEFAULT_TOLERANCE,
    };
    for _ in 0..10 {
        let delta = rng.gen_range(0.12..0.45) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let text = render_value(v * (1.0 + delta), percent);
        let Some(p) = parse(&text) else { continue };
        let generation = querygen::generate(&Context { parameter: Some(p), ..ctx.clone() }, catalog, &QueryGenConfig::default());
        if !generation.matched && super::relative_error(v, p) >= 2.0 * DEFAULT_TOLERANCE {
            return Some((p, text));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_rendering() {
        assert_eq!(render_value(0.026_28, true), "2.63%");
        assert_eq!(render_value(22_209.0, false), "22 200");
        assert_eq!(render_value(1234.5, false), "1 230");
        assert_eq!(render_value(-0.5, false), "-0.500");
        assert_eq!(render_value(5.236, false), "5.24");
    }

    #[test]
    fn allocation_sums_and_shape() {
        let (c, _) = allocate(&TABLE1.key, 83, 2000);
        assert_eq!(c.iter().sum::<usize>(), 2000);
        assert!(c.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.iter().all(|&x| x >= 1));
        let (c, _) = allocate(&TABLE1.relation, 10, 4);
        assert_eq!(c.iter().filter(|&&x| x > 0).count(), 4);
    }

    #[test]
    fn quantile_curve_hits_profile_points() {
        for (i, q) in PERCENTILE_POINTS.iter().enumerate() {
            assert!((quantile_curve(&TABLE1.relation, q / 100.0) - TABLE1.relation[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn profiles_validate() {
        for name in ["table1", "table1_div10", "small"] {
            CorpusProfile::by_name(name).unwrap().validate().unwrap();
        }
        let bad = CorpusProfile { n_formulas: 500, n_claims: 100, ..CorpusProfile::small() };
        assert!(bad.validate().unwrap_err().to_string().contains("more formulas"));
        let zero = CorpusProfile { n_keys: 0, ..CorpusProfile::small() };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn library_templates_are_distinct_and_canonical() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut words = WordGen { used: HashSet::new() };
        let lib = build_library(&CorpusProfile::table1(), &mut words, &mut rng).unwrap();
        assert_eq!(lib.len(), 413);
        let keys: HashSet<String> = lib.iter().map(|f| f.template.key()).collect();
        assert_eq!(keys.len(), 413);
        assert!(lib.iter().any(|f| f.template.is_boolean()));
        assert!(lib.iter().any(|f| !f.template.is_boolean()));
    }
}
