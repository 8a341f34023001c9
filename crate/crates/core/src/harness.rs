//! Simulation: checkers that answer from ground truth, the three verification
//! modes, and the cost and accuracy series they produce.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{Example, ModelSet, PropertyKind};
use crate::config::Config;
use crate::corpus::{relative_error, Annotation, Corpus, ResolvedCheck, Verdict};
use crate::engine::{Answer, Audit, Mode, Next, QuerySuggestion, Report, ScreenContent, Screen, Session, Status};
use crate::features::FeatureVector;
use crate::formula::EvalValue;
use crate::{par, Error, Result};

/// Seconds in one work-week of a team of three checkers (8 h days, 5 days).
pub const TEAM_WEEK_SECONDS: f64 = 3.0 * 8.0 * 3600.0 * 5.0;

pub fn weeks(seconds: f64) -> f64 {
    seconds / TEAM_WEEK_SECONDS
}

/// Ground-truth labels of a resolved check, per property kind.
pub fn truth_labels(check: &ResolvedCheck) -> [Vec<String>; 4] {
    [check.relations(), check.keys(), check.attributes(), vec![check.template.key()]]
}

/// A checker that knows the prior check of every claim.
///
/// Property screens: reads options top-down, confirms the ground-truth labels
/// and types in the ones that are missing. Final screen: confirms the first
/// candidate that is the ground-truth query, otherwise types it in. With
/// probability `error_rate` it confirms a wrong candidate instead.
pub struct SimChecker {
    truth: Arc<HashMap<String, (ResolvedCheck, Annotation)>>,
    error_rate: f64,
    rng: ChaCha8Rng,
}

/// Ground truth keyed by claim id; every claim needs an annotation.
pub fn ground_truth_map(corpus: &Corpus) -> Result<HashMap<String, (ResolvedCheck, Annotation)>> {
    let truth = corpus.ground_truth()?;
    corpus
        .claims
        .iter()
        .zip(truth)
        .map(|(c, t)| {
            let t = t.ok_or_else(|| Error::Config(format!("claim `{}` has no annotation", c.id)))?;
            let a = corpus.annotation(&c.id).expect("resolved annotations exist").clone();
            Ok((c.id.clone(), (t, a)))
        })
        .collect()
}

fn same_value(a: Option<EvalValue>, b: EvalValue) -> bool {
    match (a, b) {
        (Some(EvalValue::Number(x)), EvalValue::Number(y)) => x == y || relative_error(x, y) < 1e-9,
        (Some(EvalValue::Bool(x)), EvalValue::Bool(y)) => x == y,
        _ => false,
    }
}

impl SimChecker {
    pub fn new(truth: Arc<HashMap<String, (ResolvedCheck, Annotation)>>, error_rate: f64, seed: u64) -> Self {
        SimChecker { truth, error_rate, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn answer(&mut self, screen: &Screen) -> Answer {
        let (check, annotation) = &self.truth[&screen.claim_id];
        match &screen.content {
            ScreenContent::Property { kind, options } => {
                let truth = &truth_labels(check)[kind.index()];
                let selected: Vec<usize> = options.iter().enumerate().filter(|(_, o)| truth.contains(&o.label)).map(|(i, _)| i).collect();
                let suggested: Vec<String> = truth.iter().filter(|l| !options.iter().any(|o| &o.label == *l)).cloned().collect();
                Answer::Property { selected, suggested }
            }
            ScreenContent::Query { candidates } => {
                let key = check.template.key();
                let hit = candidates.iter().position(|c| c.formula == key && same_value(c.value, check.value));
                if self.error_rate > 0.0 && self.rng.gen::<f64>() < self.error_rate {
                    let wrong: Vec<usize> = (0..candidates.len()).filter(|i| Some(*i) != hit).collect();
                    if !wrong.is_empty() {
                        return Answer::Accept { candidate: wrong[self.rng.gen_range(0..wrong.len())] };
                    }
                }
                match hit {
                    Some(candidate) => Answer::Accept { candidate },
                    None => Answer::Suggest {
                        query: QuerySuggestion {
                            expression: annotation.check_expression.clone(),
                            relations: annotation.relations.clone(),
                            key_values: annotation.key_values.clone(),
                            attributes: annotation.attributes.clone(),
                            definitions: annotation.definitions.clone(),
                        },
                    },
                }
            }
        }
    }
}

/// Top-1 accuracy per property on a claim set after one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub batch: usize,
    /// Claims resolved so far.
    pub verified: usize,
    /// Relation, key value, attribute, formula; absent when no claims remain.
    pub per_kind: Option<[f64; 4]>,
    pub average: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKPoint {
    pub batch: usize,
    /// (k, average top-k accuracy over the four properties).
    pub accuracy: Vec<(usize, f64)>,
}

pub const TOPK_POINTS: [usize; 4] = [1, 5, 10, 15];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimCost {
    pub claim_id: String,
    pub verdict: Option<Verdict>,
    /// Mean checker seconds.
    pub cost: f64,
    /// Largest single-checker seconds on one attempt.
    pub max_checker_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub mode: Mode,
    pub seed: u64,
    pub claims: usize,
    pub total_cost: f64,
    pub verification_cost: f64,
    pub reading_cost: f64,
    pub weeks: f64,
    pub batches: usize,
    /// Share of claims whose verdict equals the ground truth.
    pub verdict_accuracy: f64,
    pub unresolved: usize,
    pub accuracy: Vec<AccuracyPoint>,
    pub topk: Vec<TopKPoint>,
    pub mean_accuracy: Option<f64>,
    pub max_accuracy: Option<f64>,
    pub per_claim: Vec<ClaimCost>,
    pub audit: Option<Audit>,
    pub computation_seconds: f64,
}

impl SimReport {
    /// 1 − total(self) / total(manual).
    pub fn savings_vs(&self, manual: &SimReport) -> f64 {
        1.0 - self.total_cost / manual.total_cost
    }
}

/// Share of claims whose top-k prediction contains a ground-truth label.
pub fn topk_accuracy(models: &ModelSet, features: &[FeatureVector], truth: &[[Vec<String>; 4]], claims: &[usize], k: usize) -> Option<[f64; 4]> {
    if claims.is_empty() {
        return None;
    }
    let hits: Vec<[bool; 4]> = par::map(claims, |&i| {
        let mut h = [false; 4];
        for kind in PropertyKind::ALL {
            let d = models.predict_topk(kind, &features[i], k);
            h[kind.index()] = d.labels().any(|l| truth[i][kind.index()].iter().any(|t| t == l));
        }
        h
    });
    let mut acc = [0.0; 4];
    for h in &hits {
        for j in 0..4 {
            if h[j] {
                acc[j] += 1.0;
            }
        }
    }
    Some(acc.map(|a| a / claims.len() as f64))
}

fn mean4(a: &[f64; 4]) -> f64 {
    a.iter().sum::<f64>() / 4.0
}

/// Manual verification: one full suggestion per claim plus one read of every section.
pub fn manual_report(corpus: &Corpus, config: &Config, seed: u64) -> SimReport {
    let start = Instant::now();
    let s_f = config.cost_model.s_f;
    let mut sections: Vec<&str> = corpus.claims.iter().map(|c| c.section.as_str()).collect();
    sections.sort_unstable();
    sections.dedup();
    let reading: f64 = sections.iter().map(|s| config.batch.reading_cost(s)).sum();
    let verification = s_f * corpus.claims.len() as f64;
    let per_claim = corpus
        .claims
        .iter()
        .map(|c| ClaimCost { claim_id: c.id.clone(), verdict: corpus.annotation(&c.id).map(|a| a.verdict), cost: s_f, max_checker_cost: s_f })
        .collect();
    SimReport {
        mode: Mode::Manual,
        seed,
        claims: corpus.claims.len(),
        total_cost: verification + reading,
        verification_cost: verification,
        reading_cost: reading,
        weeks: weeks(verification + reading),
        batches: 0,
        verdict_accuracy: 1.0,
        unresolved: 0,
        accuracy: Vec::new(),
        topk: Vec::new(),
        mean_accuracy: None,
        max_accuracy: None,
        per_claim,
        audit: None,
        computation_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Drives a session with simulated checkers until every claim is decided.
/// `on_batch` runs after each closed batch.
pub fn drive(session: &mut Session, checkers: &mut [(String, SimChecker)], mut on_batch: impl FnMut(&Session)) -> Result<()> {
    let mut seen = session.batches_closed();
    while !session.is_done() {
        let mut progressed = false;
        for (id, checker) in checkers.iter_mut() {
            while let Next::Screen(screen) = session.next_screen(id) {
                let answer = checker.answer(&screen);
                session.answer(id, &screen.id, answer).map_err(|e| Error::Config(format!("simulated answer rejected: {e}")))?;
                progressed = true;
            }
        }
        if session.batches_closed() != seen {
            seen = session.batches_closed();
            on_batch(session);
        } else if !progressed {
            return Err(Error::Config("simulation stalled: fewer simulated checkers than seats".into()));
        }
    }
    Ok(())
}

/// Runs one mode on a corpus and returns the report and the finished session
/// (absent for manual mode).
pub fn simulate(corpus: Arc<Corpus>, mode: Mode, config: &Config, seed: u64) -> Result<(SimReport, Option<Session>)> {
    if mode == Mode::Manual {
        return Ok((manual_report(&corpus, config, seed), None));
    }
    let start = Instant::now();
    let truth = Arc::new(ground_truth_map(&corpus)?);
    let labels: Vec<[Vec<String>; 4]> = corpus.claims.iter().map(|c| truth_labels(&truth[&c.id].0)).collect();
    let mut config = config.clone();
    config.training.seed ^= seed;
    let mut session = Session::new(corpus.clone(), config.clone(), mode)?;
    let mut checkers: Vec<(String, SimChecker)> = (0..config.checkers.count)
        .map(|i| (format!("sim-{}", i + 1), SimChecker::new(truth.clone(), config.checkers.error_rate, seed.wrapping_mul(31).wrapping_add(i as u64))))
        .collect();
    let mut accuracy = Vec::new();
    let mut topk = Vec::new();
    drive(&mut session, &mut checkers, |s| {
        let remaining: Vec<usize> = s.unverified().collect();
        let batch = s.batches_closed();
        let verified = corpus.claims.len() - remaining.len();
        let top1 = topk_accuracy(s.models(), s.features(), &labels, &remaining, 1);
        accuracy.push(AccuracyPoint { batch, verified, per_kind: top1, average: top1.as_ref().map(mean4) });
        let curve: Vec<(usize, f64)> = TOPK_POINTS
            .iter()
            .filter_map(|&k| topk_accuracy(s.models(), s.features(), &labels, &remaining, k).map(|a| (k, mean4(&a))))
            .collect();
        topk.push(TopKPoint { batch, accuracy: curve });
    })?;

    let report: Report = session.report();
    let mut correct = 0usize;
    let mut per_claim = Vec::with_capacity(report.results.len());
    for r in &report.results {
        let expected = truth[&r.claim_id].1.verdict;
        if r.verdict == Some(expected) {
            correct += 1;
        }
        per_claim.push(ClaimCost {
            claim_id: r.claim_id.clone(),
            verdict: r.verdict,
            cost: r.cost,
            max_checker_cost: r.checkers.iter().map(|c| c.cost).fold(0.0, f64::max),
        });
    }
    let averages: Vec<f64> = accuracy.iter().filter_map(|a| a.average).collect();
    let sim = SimReport {
        mode,
        seed,
        claims: corpus.claims.len(),
        total_cost: report.total_cost,
        verification_cost: report.verification_cost,
        reading_cost: report.reading_cost,
        weeks: weeks(report.total_cost),
        batches: report.batches,
        verdict_accuracy: if corpus.claims.is_empty() { 1.0 } else { correct as f64 / corpus.claims.len() as f64 },
        unresolved: report.results.iter().filter(|r| r.status == Status::Unresolved).count(),
        accuracy,
        topk,
        mean_accuracy: (!averages.is_empty()).then(|| averages.iter().sum::<f64>() / averages.len() as f64),
        max_accuracy: averages.iter().cloned().reduce(f64::max),
        per_claim,
        audit: Some(report.audit),
        computation_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((sim, Some(session)))
}

pub fn run_simulation(corpus: Arc<Corpus>, mode: Mode, config: &Config, seed: u64) -> Result<SimReport> {
    simulate(corpus, mode, config, seed).map(|(r, _)| r)
}

/// Held-out top-1 accuracy (averaged over the four properties) after
/// retraining on each successive slice of `train` claims.
pub fn learning_curve(
    base: &ModelSet,
    features: &[FeatureVector],
    labels: &[[Vec<String>; 4]],
    train: &[usize],
    holdout: &[usize],
    batch_size: usize,
) -> Vec<f64> {
    let mut models = base.clone();
    let mut curve = Vec::new();
    for chunk in train.chunks(batch_size.max(1)) {
        let delta = chunk.iter().map(|&i| Example { claim_id: format!("#{i}"), features: features[i].clone(), labels: labels[i].clone() }).collect();
        models = models.retrain(delta);
        let acc = topk_accuracy(&models, features, labels, holdout, 1).map_or(0.0, |a| mean4(&a));
        curve.push(acc);
    }
    curve
}
