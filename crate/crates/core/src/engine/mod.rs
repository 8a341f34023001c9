//! The verification loop: batch selection, per-claim screens, answer
//! collection, majority voting and retraining.
//!
//! A [`Session`] is a state machine driven by two calls, [`Session::next_screen`]
//! and [`Session::answer`]. The simulator and the HTTP service both drive it
//! the same way, so identical answer sequences give identical reports.

mod types;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

pub use types::*;

use crate::batcher::{build_ilp, BatchClaim};
use crate::classifiers::{Example, ModelSet, PropertyDistribution, PropertyKind};
use crate::config::Config;
use crate::corpus::{Annotation, Corpus, Verdict};
use crate::features::{EmbeddingTable, FeatureVector, Featurizer};
use crate::formula::{self, evaluate, render_sql, Binding, EvalValue, FormulaTemplate};
use crate::planner::{plan_claim, Screen as PlannedScreen};
use crate::querygen::{generate, Context, QueryCandidate, QueryGenConfig};
use crate::{par, Error, Result};

/// A query fixed by a checker: the template, its cells and value.
#[derive(Debug, Clone, PartialEq)]
struct QueryRecord {
    template: Arc<FormulaTemplate>,
    binding: Binding,
    value: Option<EvalValue>,
    sql: String,
}

impl QueryRecord {
    fn view(&self) -> QueryView {
        QueryView { formula: self.template.key(), sql: self.sql.clone(), value: self.value, cells: self.binding.cells.clone() }
    }

    fn labels(&self) -> [Vec<String>; 4] {
        let dedup = |f: fn(&formula::CellRef) -> &String| crate::corpus::dedup(self.binding.cells.iter().map(|c| f(c).clone()));
        [dedup(|c| &c.relation), dedup(|c| &c.key), dedup(|c| &c.attribute), vec![self.template.key()]]
    }
}

/// Planning output for one claim.
#[derive(Debug, Clone)]
pub struct ClaimPlan {
    pub claim: usize,
    pub screens: Vec<PlannedScreen>,
    /// Displayed options per property kind, also for kinds without a screen.
    pub shown: [Vec<(String, f64)>; 4],
    /// Expected verification cost v(c).
    pub expected_cost: f64,
    /// Training utility u(c).
    pub utility: f64,
}

#[derive(Debug, Clone)]
struct Outcome {
    verdict: Verdict,
    query: QueryRecord,
    properties: Vec<PropertyAnswer>,
    cost: f64,
}

#[derive(Debug, Clone)]
struct CheckerState {
    id: String,
    position: usize,
    step: usize,
    answers: Vec<PropertyAnswer>,
    cost: f64,
    candidates: Option<Vec<QueryCandidate>>,
    outcomes: Vec<Outcome>,
    last: Option<(String, Answer, Ack)>,
}

#[derive(Debug, Clone)]
struct Batch {
    number: usize,
    plans: Vec<ClaimPlan>,
    checkers: Vec<CheckerState>,
}

pub struct Session {
    corpus: Arc<Corpus>,
    config: Config,
    mode: Mode,
    budget: (usize, usize),
    features: Arc<Vec<FeatureVector>>,
    models: Arc<ModelSet>,
    templates: BTreeMap<String, Arc<FormulaTemplate>>,
    unverified: BTreeSet<usize>,
    attempts: Vec<usize>,
    spent: Vec<f64>,
    results: Vec<Option<VerificationResult>>,
    batch: Option<Batch>,
    batches: usize,
    verification_cost: f64,
    reading_cost: f64,
    events: Vec<Event>,
}

/// Fits the featurizer on all claim texts and featurizes every claim.
pub fn featurize_corpus(corpus: &Corpus, config: &Config) -> Result<(Arc<Featurizer>, Vec<FeatureVector>)> {
    let embedding = match &config.corpus.embeddings {
        Some(path) => EmbeddingTable::load(path)?,
        None => EmbeddingTable::hashed(config.features.embedding_dim),
    };
    let texts: Vec<String> = corpus.claims.iter().map(|c| c.claim_text()).collect();
    let featurizer = Featurizer::fit(&texts, &config.features, embedding)?;
    let features = par::map(&corpus.claims, |c| featurizer.featurize(&c.sentence, c.span));
    Ok((Arc::new(featurizer), features))
}

impl Session {
    pub fn new(corpus: Arc<Corpus>, config: Config, mode: Mode) -> Result<Session> {
        config.validate()?;
        if mode == Mode::Manual {
            return Err(Error::Config("manual verification has no screens; use the simulator".into()));
        }
        let n = corpus.claims.len();
        let (featurizer, features) = if n == 0 {
            let f = Featurizer::fit(&["".to_string()], &config.features, EmbeddingTable::hashed(config.features.embedding_dim))?;
            (Arc::new(f), Vec::new())
        } else {
            featurize_corpus(&corpus, &config)?
        };
        let models = Arc::new(ModelSet::new(featurizer, config.training));
        Ok(Session {
            budget: config.budget(),
            corpus,
            config,
            mode,
            features: Arc::new(features),
            models,
            templates: BTreeMap::new(),
            unverified: (0..n).collect(),
            attempts: vec![0; n],
            spent: vec![0.0; n],
            results: vec![None; n],
            batch: None,
            batches: 0,
            verification_cost: 0.0,
            reading_cost: 0.0,
            events: Vec::new(),
        })
    }

    /// Rebuilds a session by re-applying the answers of an event log; batches
    /// open where the log opened them.
    /// Fails if a recorded cost differs from the recomputed one.
    pub fn replay(corpus: Arc<Corpus>, config: Config, mode: Mode, events: &[Event]) -> Result<Session> {
        let mut session = Session::new(corpus, config, mode)?;
        for e in events {
            if let Action::BatchStarted { .. } = &e.action {
                session.ensure_batch();
            }
            if let Action::Answered { checker, answer } = &e.action {
                let screen = e.screen.clone().unwrap_or_default();
                let ack = session.answer(checker, &screen, answer.clone()).map_err(|err| Error::Checkpoint(format!("event {}: {err}", e.seq)))?;
                if (ack.cost - e.cost).abs() > 1e-9 {
                    return Err(Error::Checkpoint(format!("event {}: cost {} recorded, {} recomputed", e.seq, e.cost, ack.cost)));
                }
            }
        }
        Ok(session)
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn models(&self) -> &Arc<ModelSet> {
        &self.models
    }

    #[doc(hidden)]
    pub fn set_models_for_test(&mut self, models: ModelSet) {
        if let Some(m) = models.model(PropertyKind::Formula) {
            for l in &m.labels {
                if let Ok(t) = FormulaTemplate::parse(l) {
                    assert_eq!(&t.key(), l, "template keys re-parse to themselves");
                    self.templates.insert(l.clone(), Arc::new(t));
                }
            }
        }
        self.models = Arc::new(models);
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Claim indices still waiting for a verdict, in document order.
    pub fn unverified(&self) -> impl Iterator<Item = usize> + '_ {
        self.unverified.iter().copied()
    }

    pub fn batches_closed(&self) -> usize {
        self.batches
    }

    pub fn is_done(&self) -> bool {
        self.unverified.is_empty() && self.batch.is_none()
    }

    pub fn total_cost(&self) -> f64 {
        self.verification_cost + self.reading_cost
    }

    /// Claims of the open batch.
    pub fn current_batch(&self) -> Vec<String> {
        self.batch.as_ref().map_or_else(Vec::new, |b| b.plans.iter().map(|p| self.corpus.claims[p.claim].id.clone()).collect())
    }

    fn push_event(&mut self, claim_id: Option<String>, screen: Option<String>, cost: f64, action: Action) {
        let seq = self.events.len();
        self.events.push(Event { seq, clock: self.total_cost(), claim_id, screen, cost, action });
    }

    /// Distributions, planning candidates, screens, v(c) and u(c) of a claim.
    pub fn plan(&self, claim: usize) -> ClaimPlan {
        let (nop, _) = self.budget;
        let x = &self.features[claim];
        let dists: Vec<PropertyDistribution> = PropertyKind::ALL.iter().map(|&k| self.models.predict_topk(k, x, nop)).collect();
        let width = self.config.planner.context_width;
        let top = |d: &PropertyDistribution| d.labels().take(width).map(str::to_string).collect::<Vec<_>>();
        let c = &self.corpus.claims[claim];
        let ctx = Context {
            relations: top(&dists[0]),
            keys: top(&dists[1]),
            attributes: top(&dists[2]),
            formulas: dists[3].labels().take(width).filter_map(|k| self.templates.get(k).cloned()).collect(),
            parameter: c.parameter,
            tolerance: c.tolerance,
        };
        let qconfig = QueryGenConfig { render_sql: false, candidate_cap: self.config.planner.candidate_cap, ..self.config.querygen };
        let candidates = generate(&ctx, &self.corpus.catalog, &qconfig).candidates;
        let plan = plan_claim(&dists, &candidates, &self.config.cost_model, self.budget);
        let mut shown: [Vec<(String, f64)>; 4] = Default::default();
        for d in &dists {
            shown[d.kind.index()] = d.entries.clone();
        }
        ClaimPlan { claim, screens: plan.screens, shown, expected_cost: plan.expected_cost, utility: self.models.utility(x) }
    }

    fn select_batch(&self) -> Vec<ClaimPlan> {
        let b_u = self.config.batch.b_u;
        match self.mode {
            Mode::Scrutinizer => {
                let pool: Vec<usize> = self.unverified.iter().copied().collect();
                let plans = par::map(&pool, |&i| self.plan(i));
                let claims: Vec<BatchClaim> = plans
                    .iter()
                    .map(|p| {
                        let c = &self.corpus.claims[p.claim];
                        BatchClaim { id: c.id.clone(), section: c.section.clone(), utility: p.utility, cost: p.expected_cost }
                    })
                    .collect();
                let chosen: BTreeSet<String> = build_ilp(&claims, &self.config.batch).select(self.config.batch.objective, self.config.batch.w_u).into_iter().collect();
                plans.into_iter().filter(|p| chosen.contains(&self.corpus.claims[p.claim].id)).collect()
            }
            _ => {
                let pool: Vec<usize> = self.unverified.iter().copied().take(b_u).collect();
                par::map(&pool, |&i| self.plan(i))
            }
        }
    }

    fn ensure_batch(&mut self) {
        if self.batch.is_some() || self.unverified.is_empty() {
            return;
        }
        let plans = self.select_batch();
        let mut sections: Vec<String> = Vec::new();
        for p in &plans {
            let s = &self.corpus.claims[p.claim].section;
            if !sections.contains(s) {
                sections.push(s.clone());
            }
        }
        let reading: f64 = sections.iter().map(|s| self.config.batch.reading_cost(s)).sum();
        self.reading_cost += reading;
        let number = self.batches;
        let claims = plans.iter().map(|p| self.corpus.claims[p.claim].id.clone()).collect();
        self.batch = Some(Batch { number, plans, checkers: Vec::new() });
        self.push_event(None, None, reading, Action::BatchStarted { batch: number, claims, sections });
    }

    /// Index of the checker in the open batch, registering it if a seat is free.
    fn seat(&mut self, checker: &str) -> Option<usize> {
        let k = self.config.checkers.count;
        let batch = self.batch.as_mut()?;
        if let Some(i) = batch.checkers.iter().position(|c| c.id == checker) {
            return Some(i);
        }
        if batch.checkers.len() >= k {
            return None;
        }
        batch.checkers.push(CheckerState {
            id: checker.to_string(),
            position: 0,
            step: 0,
            answers: Vec::new(),
            cost: 0.0,
            candidates: None,
            outcomes: Vec::new(),
            last: None,
        });
        Some(batch.checkers.len() - 1)
    }

    fn screen_id(batch: usize, position: usize, step: usize) -> String {
        format!("b{batch}-c{position}-s{step}")
    }

    /// Final-screen candidates from the properties this checker confirmed,
    /// falling back to the displayed options for properties without a screen.
    fn final_candidates(&self, plan: &ClaimPlan, answers: &[PropertyAnswer]) -> Vec<QueryCandidate> {
        let labels = |kind: PropertyKind| -> Vec<String> {
            match answers.iter().find(|a| a.kind == kind) {
                Some(a) if !a.labels.is_empty() => a.labels.clone(),
                _ => plan.shown[kind.index()].iter().map(|(l, _)| l.clone()).collect(),
            }
        };
        let c = &self.corpus.claims[plan.claim];
        let ctx = Context {
            relations: labels(PropertyKind::Relation),
            keys: labels(PropertyKind::KeyValue),
            attributes: labels(PropertyKind::Attribute),
            formulas: labels(PropertyKind::Formula).iter().filter_map(|k| self.templates.get(k).cloned()).collect(),
            parameter: c.parameter,
            tolerance: c.tolerance,
        };
        let mut candidates = generate(&ctx, &self.corpus.catalog, &self.config.querygen).candidates;
        candidates.truncate(self.budget.0);
        candidates
    }

    /// The next screen for `checker`.
    pub fn next_screen(&mut self, checker: &str) -> Next {
        self.ensure_batch();
        if self.batch.is_none() {
            return Next::Done;
        }
        let Some(seat) = self.seat(checker) else { return Next::Wait };
        let batch = self.batch.as_ref().expect("batch is open");
        let state = &batch.checkers[seat];
        if state.position >= batch.plans.len() {
            return Next::Wait;
        }
        let plan = &batch.plans[state.position];
        let claim = &self.corpus.claims[plan.claim];
        let steps = plan.screens.len() + 1;
        let content = if state.step < plan.screens.len() {
            let s = &plan.screens[state.step];
            ScreenContent::Property {
                kind: s.kind,
                options: s.options.iter().map(|(l, p)| OptionView { label: l.clone(), probability: *p }).collect(),
            }
        } else {
            let candidates = match &state.candidates {
                Some(c) => c.clone(),
                None => {
                    let c = self.final_candidates(plan, &state.answers);
                    let batch = self.batch.as_mut().expect("batch is open");
                    batch.checkers[seat].candidates = Some(c.clone());
                    c
                }
            };
            ScreenContent::Query { candidates: candidates.iter().map(candidate_view).collect() }
        };
        let batch = self.batch.as_ref().expect("batch is open");
        let state = &batch.checkers[seat];
        Next::Screen(Box::new(Screen {
            id: Self::screen_id(batch.number, state.position, state.step),
            claim_id: claim.id.clone(),
            sentence: claim.sentence.clone(),
            span: claim.span,
            step: state.step,
            steps,
            validated: state.answers.clone(),
            content,
        }))
    }

    fn malformed(message: impl Into<String>, position: Option<usize>) -> AnswerError {
        AnswerError::Malformed { message: message.into(), position }
    }

    fn resolve_suggestion(&self, q: &QuerySuggestion, answers: &[PropertyAnswer], plan: &ClaimPlan) -> Result<QueryRecord, AnswerError> {
        formula::parse(&q.expression).map_err(|e| Self::malformed(e.message.clone(), Some(e.position)))?;
        let or_context = |given: &Vec<String>, kind: PropertyKind| -> Vec<String> {
            if !given.is_empty() {
                return given.clone();
            }
            match answers.iter().find(|a| a.kind == kind) {
                Some(a) if !a.labels.is_empty() => a.labels.clone(),
                _ => plan.shown[kind.index()].iter().take(1).map(|(l, _)| l.clone()).collect(),
            }
        };
        let annotation = Annotation {
            claim_id: self.corpus.claims[plan.claim].id.clone(),
            relations: or_context(&q.relations, PropertyKind::Relation),
            key_values: or_context(&q.key_values, PropertyKind::KeyValue),
            attributes: or_context(&q.attributes, PropertyKind::Attribute),
            check_expression: q.expression.clone(),
            definitions: q.definitions.clone(),
            verdict: Verdict::Correct,
        };
        let resolved = annotation.resolve(&self.corpus.catalog).map_err(|e| Self::malformed(e.to_string(), None))?;
        let template = Arc::new(resolved.template);
        let sql = render_sql(&template, &resolved.binding, &self.corpus.catalog).unwrap_or_default();
        Ok(QueryRecord { template, binding: resolved.binding, value: Some(resolved.value), sql })
    }

    /// Records an answer to the checker's current screen.
    pub fn answer(&mut self, checker: &str, screen_id: &str, answer: Answer) -> Result<Ack, AnswerError> {
        self.ensure_batch();
        let out_of_order = |expected: Option<String>| AnswerError::OutOfOrder { expected, got: screen_id.to_string() };
        if let Some(batch) = &self.batch {
            if let Some(state) = batch.checkers.iter().find(|c| c.id == checker) {
                if let Some((id, prior, ack)) = &state.last {
                    if id == screen_id {
                        return if *prior == answer { Ok(ack.clone()) } else { Err(AnswerError::Conflict(id.clone())) };
                    }
                }
            }
        } else {
            return Err(out_of_order(None));
        }
        let Some(seat) = self.seat(checker) else { return Err(out_of_order(None)) };
        let batch = self.batch.as_ref().expect("batch is open");
        let state = &batch.checkers[seat];
        if state.position >= batch.plans.len() {
            return Err(out_of_order(None));
        }
        let expected = Self::screen_id(batch.number, state.position, state.step);
        if expected != screen_id {
            return Err(out_of_order(Some(expected)));
        }
        let plan = &batch.plans[state.position];
        let claim_idx = plan.claim;
        let cost_model = self.config.cost_model;

        if state.step < plan.screens.len() {
            let screen = &plan.screens[state.step];
            let Answer::Property { selected, suggested } = &answer else {
                return Err(Self::malformed("a property screen takes a property answer", None));
            };
            let n = screen.options.len();
            if let Some(&bad) = selected.iter().find(|&&i| i >= n) {
                return Err(Self::malformed(format!("option {bad} out of range (screen has {n})"), None));
            }
            let mut labels: Vec<String> = Vec::new();
            for &i in selected {
                let l = &screen.options[i].0;
                if !labels.contains(l) {
                    labels.push(l.clone());
                }
            }
            for s in suggested {
                let s = s.trim();
                if s.is_empty() {
                    return Err(Self::malformed("empty suggestion", Some(0)));
                }
                match screen.kind {
                    PropertyKind::Relation if self.corpus.catalog.get(s).is_none() => {
                        return Err(Self::malformed(format!("unknown relation `{s}`"), None));
                    }
                    PropertyKind::Formula => {
                        FormulaTemplate::parse(s).map_err(|e| Self::malformed(e.message.clone(), Some(e.position)))?;
                    }
                    _ => {}
                }
                if !labels.iter().any(|l| l == s) {
                    labels.push(s.to_string());
                }
            }
            let cost = if !suggested.is_empty() {
                n as f64 * cost_model.v_p + cost_model.s_p
            } else {
                selected.iter().max().map_or(n, |m| m + 1) as f64 * cost_model.v_p
            };
            let property = PropertyAnswer { kind: screen.kind, labels };
            return Ok(self.apply_property(seat, screen_id, answer.clone(), property, cost));
        }

        let candidates = match &state.candidates {
            Some(c) => c.clone(),
            None => self.final_candidates(plan, &state.answers),
        };
        let (record, cost) = match &answer {
            Answer::Accept { candidate } => {
                let Some(c) = candidates.get(*candidate) else {
                    return Err(Self::malformed(format!("candidate {candidate} out of range ({} shown)", candidates.len()), None));
                };
                let record = QueryRecord { template: c.template.clone(), binding: c.binding.clone(), value: c.value.as_ref().ok().copied(), sql: c.sql.clone() };
                (record, (*candidate + 1) as f64 * cost_model.v_f)
            }
            Answer::Suggest { query } => {
                let record = self.resolve_suggestion(query, &state.answers, plan)?;
                (record, candidates.len() as f64 * cost_model.v_f + cost_model.s_f)
            }
            Answer::Property { .. } => return Err(Self::malformed("the query screen takes an accept or suggest answer", None)),
        };
        let claim = &self.corpus.claims[claim_idx];
        let verdict = match record.value.and_then(|v| claim.accepts(v)) {
            Some(true) => Verdict::Correct,
            _ => Verdict::Incorrect,
        };
        Ok(self.apply_final(seat, screen_id, answer, record, verdict, cost))
    }

    fn apply_property(&mut self, seat: usize, screen_id: &str, answer: Answer, property: PropertyAnswer, cost: f64) -> Ack {
        if property.kind == PropertyKind::Formula {
            for l in &property.labels {
                if !self.templates.contains_key(l) {
                    if let Ok(t) = FormulaTemplate::parse(l) {
                        self.templates.insert(t.key(), Arc::new(t));
                    }
                }
            }
        }
        let batch = self.batch.as_mut().expect("batch is open");
        let claim_id = self.corpus.claims[batch.plans[batch.checkers[seat].position].claim].id.clone();
        let state = &mut batch.checkers[seat];
        let checker = state.id.clone();
        state.answers.push(property);
        state.cost += cost;
        state.step += 1;
        let ack = Ack { screen_id: screen_id.to_string(), cost, claim_complete: false, batch_closed: false, resolved: Vec::new() };
        state.last = Some((screen_id.to_string(), answer.clone(), ack.clone()));
        self.push_event(Some(claim_id), Some(screen_id.to_string()), cost, Action::Answered { checker, answer });
        ack
    }

    fn apply_final(&mut self, seat: usize, screen_id: &str, answer: Answer, record: QueryRecord, verdict: Verdict, cost: f64) -> Ack {
        let key = record.template.key();
        self.templates.entry(key).or_insert_with(|| record.template.clone());
        let k = self.config.checkers.count;
        let batch = self.batch.as_mut().expect("batch is open");
        let claim_id = self.corpus.claims[batch.plans[batch.checkers[seat].position].claim].id.clone();
        let state = &mut batch.checkers[seat];
        let checker = state.id.clone();
        let total = state.cost + cost;
        state.outcomes.push(Outcome { verdict, query: record, properties: std::mem::take(&mut state.answers), cost: total });
        state.cost = 0.0;
        state.step = 0;
        state.position += 1;
        state.candidates = None;
        let batch_done = batch.checkers.len() == k && batch.checkers.iter().all(|c| c.position >= batch.plans.len());
        self.push_event(Some(claim_id), Some(screen_id.to_string()), cost, Action::Answered { checker, answer: answer.clone() });
        let resolved = if batch_done { self.close_batch() } else { Vec::new() };
        let ack = Ack { screen_id: screen_id.to_string(), cost, claim_complete: true, batch_closed: batch_done, resolved };
        if let Some(batch) = self.batch.as_mut() {
            batch.checkers[seat].last = Some((screen_id.to_string(), answer, ack.clone()));
        }
        ack
    }

    /// Majority votes, re-queues and retraining once every checker has finished.
    fn close_batch(&mut self) -> Vec<String> {
        let batch = self.batch.take().expect("batch is open");
        let k = self.config.checkers.count;
        let mut decided = Vec::new();
        let mut examples = Vec::new();
        for (pos, plan) in batch.plans.iter().enumerate() {
            let i = plan.claim;
            let claim_id = self.corpus.claims[i].id.clone();
            let outcomes: Vec<(&str, &Outcome)> = batch.checkers.iter().map(|c| (c.id.as_str(), &c.outcomes[pos])).collect();
            let mean = outcomes.iter().map(|(_, o)| o.cost).sum::<f64>() / outcomes.len() as f64;
            self.spent[i] += mean;
            self.verification_cost += mean;
            self.attempts[i] += 1;
            let views: Vec<CheckerVerdict> = outcomes
                .iter()
                .map(|(id, o)| CheckerVerdict { checker: id.to_string(), verdict: o.verdict, query: o.query.view(), properties: o.properties.clone(), cost: o.cost })
                .collect();
            let majority = [Verdict::Correct, Verdict::Incorrect].into_iter().find(|v| 2 * outcomes.iter().filter(|(_, o)| o.verdict == *v).count() > k);
            match majority {
                Some(verdict) => {
                    let (_, deciding) = outcomes.iter().find(|(_, o)| o.verdict == verdict).expect("majority has a member");
                    examples.push(Example { claim_id: claim_id.clone(), features: self.features[i].clone(), labels: deciding.query.labels() });
                    let view = deciding.query.view();
                    self.results[i] = Some(VerificationResult {
                        claim_id: claim_id.clone(),
                        status: Status::Resolved,
                        verdict: Some(verdict),
                        witness: (verdict == Verdict::Correct).then(|| view.clone()),
                        suggestion: (verdict == Verdict::Incorrect).then_some(view),
                        properties: deciding.properties.clone(),
                        checkers: views,
                        cost: self.spent[i],
                        attempts: self.attempts[i],
                    });
                    self.unverified.remove(&i);
                    decided.push(claim_id.clone());
                    self.push_event(Some(claim_id), None, 0.0, Action::ClaimResolved { verdict });
                }
                None if self.attempts[i] > self.config.checkers.requeue_limit => {
                    self.results[i] = Some(VerificationResult {
                        claim_id: claim_id.clone(),
                        status: Status::Unresolved,
                        verdict: None,
                        witness: None,
                        suggestion: None,
                        properties: Vec::new(),
                        checkers: views,
                        cost: self.spent[i],
                        attempts: self.attempts[i],
                    });
                    self.unverified.remove(&i);
                    self.push_event(Some(claim_id), None, 0.0, Action::ClaimUnresolved);
                }
                None => {
                    let attempts = self.attempts[i];
                    self.push_event(Some(claim_id), None, 0.0, Action::ClaimRequeued { attempts });
                }
            }
        }
        self.batches += 1;
        if !examples.is_empty() {
            let n = examples.len();
            self.models = Arc::new(self.models.retrain(examples));
            let fingerprint = format!("{:016x}", self.models.fingerprint());
            self.push_event(None, None, 0.0, Action::Retrained { fingerprint, examples: n });
        }
        decided
    }

    /// Re-evaluates every witness of a correct result against the tables.
    pub fn audit(&self) -> Audit {
        let mut checked = 0;
        let mut failed = Vec::new();
        for (i, r) in self.results.iter().enumerate() {
            let Some(r) = r else { continue };
            let Some(w) = &r.witness else { continue };
            checked += 1;
            let ok = self
                .templates
                .get(&w.formula)
                .and_then(|t| Binding::derive(t, w.cells.clone()).ok().map(|b| (t, b)))
                .and_then(|(t, b)| evaluate(t, &b, &self.corpus.catalog).ok())
                .and_then(|v| self.corpus.claims[i].accepts(v))
                .unwrap_or(false);
            if !ok {
                failed.push(r.claim_id.clone());
            }
        }
        Audit { checked, failed }
    }

    pub fn result(&self, claim: usize) -> Option<&VerificationResult> {
        self.results.get(claim).and_then(Option::as_ref)
    }

    pub fn report(&self) -> Report {
        Report {
            mode: self.mode,
            total_cost: self.total_cost(),
            verification_cost: self.verification_cost,
            reading_cost: self.reading_cost,
            batches: self.batches,
            pending: self.unverified.len(),
            results: self.results.iter().flatten().cloned().collect(),
            audit: self.audit(),
        }
    }
}

fn candidate_view(c: &QueryCandidate) -> QueryView {
    QueryView { formula: c.template.key(), sql: c.sql.clone(), value: c.value.as_ref().ok().copied(), cells: c.binding.cells.clone() }
}
