//! Batch selection: pick the next claims to verify by maximizing training
//! utility under a time budget, solved exactly by branch-and-bound.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const EPS: f64 = 1e-9;

/// Which objective batch selection optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchObjective {
    /// Maximize Σu under the budget.
    Utility,
    /// Minimize t(B) − w_u·Σu under the budget.
    CostMinusUtility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub objective: BatchObjective,
    /// Budget in seconds. Unset means `b_u` × median claim cost × 1.5.
    pub t_m: Option<f64>,
    pub b_l: usize,
    pub b_u: usize,
    /// Utility weight of the cost-minimizing variant.
    pub w_u: f64,
    /// Reading cost of a section in seconds.
    pub section_cost: f64,
    /// Per-section overrides of `section_cost`.
    pub section_costs: BTreeMap<String, f64>,
    /// Branch-and-bound node limit; reaching it returns the best batch found.
    pub node_limit: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig { objective: BatchObjective::CostMinusUtility, t_m: None, b_l: 100, b_u: 100, w_u: 1.0, section_cost: 60.0, section_costs: BTreeMap::new(), node_limit: 500_000 }
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b_l > self.b_u {
            return Err(Error::Config("b_l must not exceed b_u".into()));
        }
        if self.b_u == 0 {
            return Err(Error::Config("b_u must be positive".into()));
        }
        if let Some(t) = self.t_m {
            if !(t > 0.0) {
                return Err(Error::Config("t_m must be positive".into()));
            }
        }
        if self.section_cost < 0.0 || self.section_costs.values().any(|r| *r < 0.0) {
            return Err(Error::Config("section reading costs must be non-negative".into()));
        }
        if self.w_u < 0.0 {
            return Err(Error::Config("w_u must be non-negative".into()));
        }
        Ok(())
    }

    pub fn reading_cost(&self, section: &str) -> f64 {
        self.section_costs.get(section).copied().unwrap_or(self.section_cost)
    }
}

/// An unverified claim as seen by the batcher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchClaim {
    pub id: String,
    pub section: String,
    /// Training utility u(c).
    pub utility: f64,
    /// Expected verification cost v(c).
    pub cost: f64,
}

/// Verification plus reading cost of a claim set; each section is read once.
pub fn batch_cost<'a>(claims: impl IntoIterator<Item = &'a BatchClaim>, reading_cost: impl Fn(&str) -> f64) -> f64 {
    let mut sections: Vec<&str> = Vec::new();
    let mut total = 0.0;
    for c in claims {
        total += c.cost;
        if !sections.contains(&c.section.as_str()) {
            sections.push(&c.section);
        }
    }
    total + sections.iter().map(|s| reading_cost(s)).sum::<f64>()
}

/// Binary program over claim variables cs_i and section variables sr_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlpInstance {
    pub claims: Vec<BatchClaim>,
    pub sections: Vec<String>,
    pub section_costs: Vec<f64>,
    /// Section index of each claim.
    pub claim_section: Vec<usize>,
    pub b_l: usize,
    pub b_u: usize,
    pub t_m: f64,
    pub node_limit: usize,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Builds the program for the given unverified claims. With fewer claims than
/// `b_l`, the lower bound drops to the number of claims.
pub fn build_ilp(claims: &[BatchClaim], config: &BatchConfig) -> IlpInstance {
    let mut sections: Vec<String> = Vec::new();
    let mut claim_section = Vec::with_capacity(claims.len());
    for c in claims {
        let j = match sections.iter().position(|s| *s == c.section) {
            Some(j) => j,
            None => {
                sections.push(c.section.clone());
                sections.len() - 1
            }
        };
        claim_section.push(j);
    }
    let section_costs = sections.iter().map(|s| config.reading_cost(s)).collect();
    let b_u = config.b_u.min(claims.len());
    let b_l = config.b_l.min(claims.len());
    let t_m = config.t_m.unwrap_or_else(|| {
        let mut v: Vec<f64> = claims.iter().map(|c| c.cost).collect();
        config.b_u as f64 * median(&mut v) * 1.5
    });
    IlpInstance { claims: claims.to_vec(), sections, section_costs, claim_section, b_l, b_u, t_m, node_limit: config.node_limit }
}

/// Objective in maximization form: Σ claim_weight·cs − Σ section_weight·sr.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Maximize accumulated utility.
    Utility,
    /// Minimize t(B) − w_u·Σu.
    CostMinusUtility { w_u: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Selected claim ids, sorted.
    pub claims: Vec<String>,
    /// Objective value in maximization form.
    pub objective: f64,
    pub utility: f64,
    pub cost: f64,
    /// False when the node limit stopped the search early.
    pub proven_optimal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome {
    Solved(Selection),
    Infeasible,
}

impl SolveOutcome {
    pub fn selection(&self) -> Option<&Selection> {
        match self {
            SolveOutcome::Solved(s) => Some(s),
            SolveOutcome::Infeasible => None,
        }
    }
}

impl IlpInstance {
    pub fn n_variables(&self) -> usize {
        self.claims.len() + self.sections.len()
    }

    /// One sr_j ≥ cs_i constraint per claim.
    pub fn n_linking_constraints(&self) -> usize {
        self.claims.len()
    }

    fn weights(&self, objective: Objective) -> (Vec<f64>, Vec<f64>) {
        match objective {
            Objective::Utility => (self.claims.iter().map(|c| c.utility).collect(), vec![0.0; self.sections.len()]),
            Objective::CostMinusUtility { w_u } => {
                (self.claims.iter().map(|c| w_u * c.utility - c.cost).collect(), self.section_costs.iter().map(|r| -r).collect())
            }
        }
    }

    fn selection(&self, chosen: &[usize], objective: Objective, proven_optimal: bool) -> Selection {
        let (a, c) = self.weights(objective);
        let mut open = vec![false; self.sections.len()];
        let mut value = 0.0;
        for &i in chosen {
            value += a[i];
            open[self.claim_section[i]] = true;
        }
        value += open.iter().zip(&c).filter(|(o, _)| **o).map(|(_, c)| *c).sum::<f64>();
        let mut claims: Vec<String> = chosen.iter().map(|&i| self.claims[i].id.clone()).collect();
        claims.sort();
        Selection {
            claims,
            objective: value,
            utility: chosen.iter().map(|&i| self.claims[i].utility).sum(),
            cost: batch_cost(chosen.iter().map(|&i| &self.claims[i]), |s| self.section_costs[self.sections.iter().position(|x| x == s).unwrap()]),
            proven_optimal,
        }
    }

    /// Exhaustive enumeration; for small instances and as a test oracle.
    pub fn solve_exhaustive(&self, objective: Objective) -> SolveOutcome {
        let n = self.claims.len();
        assert!(n <= 24, "exhaustive search is limited to 24 claims");
        let mut best: Option<Selection> = None;
        for mask in 0u32..(1u32 << n) {
            let chosen: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            if chosen.len() < self.b_l || chosen.len() > self.b_u {
                continue;
            }
            let s = self.selection(&chosen, objective, true);
            if s.cost > self.t_m + EPS {
                continue;
            }
            if best.as_ref().map_or(true, |b| better(&s, b)) {
                best = Some(s);
            }
        }
        best.map_or(SolveOutcome::Infeasible, SolveOutcome::Solved)
    }

    pub fn solve(&self) -> SolveOutcome {
        self.branch_and_bound(Objective::Utility)
    }

    pub fn solve_variant(&self, w_u: f64) -> SolveOutcome {
        self.branch_and_bound(Objective::CostMinusUtility { w_u })
    }

    pub fn branch_and_bound(&self, objective: Objective) -> SolveOutcome {
        let (a, c) = self.weights(objective);
        let n = self.claims.len();
        let mut section_size = vec![0usize; self.sections.len()];
        for &j in &self.claim_section {
            section_size[j] += 1;
        }
        // amortized per-claim profit and weight; the section cost is spread over its claims
        let amortized: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let j = self.claim_section[i];
                let n_j = section_size[j] as f64;
                (a[i] + c[j] / n_j, self.claims[i].cost + self.section_costs[j] / n_j)
            })
            .collect();
        let mu = budget_multiplier(&amortized, self.t_m, self.b_u);
        let relax = Relaxation { inst: self, a: &a, c: &c };
        let (lambda, rel_mu) = relax.multipliers();
        let order = relax.order(lambda, rel_mu);

        let mut search = Search {
            inst: self,
            a: &a,
            c: &c,
            order: &order,
            mu,
            lambda,
            rel_mu,
            opened: vec![0; self.sections.len()],
            free_in_section: section_size,
            chosen: Vec::new(),
            value: 0.0,
            used: 0.0,
            best: None,
            best_value: f64::NEG_INFINITY,
            best_ids: Vec::new(),
            nodes: 0,
            limit_hit: false,
            scratch: Vec::with_capacity(n),
            per_section: vec![0.0; self.sections.len()],
        };
        if let Some(start) = relax.heuristic(rel_mu) {
            search.chosen = start;
            search.value = search.chosen.iter().map(|&i| a[i]).sum::<f64>() + {
                let mut open: Vec<usize> = search.chosen.iter().map(|&i| self.claim_section[i]).collect();
                open.sort_unstable();
                open.dedup();
                open.iter().map(|&j| c[j]).sum::<f64>()
            };
            search.offer();
            search.chosen.clear();
            search.value = 0.0;
        }
        search.dfs(0);
        let limit_hit = search.limit_hit;
        match search.best {
            Some(chosen) => SolveOutcome::Solved(self.selection(&chosen, objective, !limit_hit)),
            None => SolveOutcome::Infeasible,
        }
    }

    /// The `b_l` cheapest claims by v(c), used when the program is infeasible.
    pub fn fallback(&self) -> Vec<String> {
        let mut idx: Vec<usize> = (0..self.claims.len()).collect();
        idx.sort_by(|&x, &y| self.claims[x].cost.total_cmp(&self.claims[y].cost).then_with(|| self.claims[x].id.cmp(&self.claims[y].id)));
        let mut ids: Vec<String> = idx.into_iter().take(self.b_l.max(1)).map(|i| self.claims[i].id.clone()).collect();
        ids.sort();
        ids
    }

    /// Solves and falls back to the cheapest claims when infeasible.
    pub fn select(&self, objective: BatchObjective, w_u: f64) -> Vec<String> {
        let outcome = match objective {
            BatchObjective::Utility => self.solve(),
            BatchObjective::CostMinusUtility => self.solve_variant(w_u),
        };
        match outcome {
            SolveOutcome::Solved(s) => s.claims,
            SolveOutcome::Infeasible => self.fallback(),
        }
    }

    /// The program in CPLEX LP text format.
    pub fn to_lp(&self) -> String {
        let mut s = String::from("Maximize\n obj:");
        for (i, c) in self.claims.iter().enumerate() {
            let _ = write!(s, " + {} cs{}", c.utility, i);
        }
        s.push_str("\nSubject To\n");
        for (i, &j) in self.claim_section.iter().enumerate() {
            let _ = writeln!(s, " link{i}: sr{j} - cs{i} >= 0");
        }
        let card: Vec<String> = (0..self.claims.len()).map(|i| format!("cs{i}")).collect();
        let _ = writeln!(s, " card_lo: {} >= {}", card.join(" + "), self.b_l);
        let _ = writeln!(s, " card_hi: {} <= {}", card.join(" + "), self.b_u);
        let mut budget: Vec<String> = self.claims.iter().enumerate().map(|(i, c)| format!("{} cs{i}", c.cost)).collect();
        budget.extend(self.section_costs.iter().enumerate().map(|(j, r)| format!("{r} sr{j}")));
        let _ = writeln!(s, " budget: {} <= {}", budget.join(" + "), self.t_m);
        s.push_str("Binary\n");
        for i in 0..self.claims.len() {
            let _ = writeln!(s, " cs{i}  \\ {}", self.claims[i].id);
        }
        for (j, name) in self.sections.iter().enumerate() {
            let _ = writeln!(s, " sr{j}  \\ {name}");
        }
        s.push_str("End\n");
        s
    }
}

/// Higher objective wins; near-ties go to the lexicographically smaller id list.
fn better(a: &Selection, b: &Selection) -> bool {
    if a.objective > b.objective + EPS {
        return true;
    }
    a.objective > b.objective - EPS && a.claims < b.claims
}

struct Search<'a> {
    inst: &'a IlpInstance,
    a: &'a [f64],
    c: &'a [f64],
    order: &'a [usize],
    mu: f64,
    lambda: f64,
    rel_mu: f64,
    opened: Vec<usize>,
    free_in_section: Vec<usize>,
    chosen: Vec<usize>,
    value: f64,
    used: f64,
    best: Option<Vec<usize>>,
    best_value: f64,
    best_ids: Vec<String>,
    nodes: usize,
    limit_hit: bool,
    scratch: Vec<f64>,
    per_section: Vec<f64>,
}

impl Search<'_> {
    fn offer(&mut self) {
        if self.chosen.len() < self.inst.b_l {
            return;
        }
        if self.value < self.best_value - EPS {
            return;
        }
        let mut ids: Vec<String> = self.chosen.iter().map(|&i| self.inst.claims[i].id.clone()).collect();
        ids.sort();
        if self.value > self.best_value + EPS || ids < self.best_ids {
            self.best = Some(self.chosen.clone());
            self.best_value = self.value;
            self.best_ids = ids;
        }
    }

    /// Upper bound on the objective gain from the undecided claims.
    ///
    /// Section costs of unopened sections are spread evenly over their
    /// undecided claims, which never overcharges. Both constraints are then
    /// dualized: the budget with the root multiplier (and with zero), the
    /// cardinality with its best multiplier for that choice.
    fn bound(&mut self, depth: usize) -> f64 {
        let inst = self.inst;
        let k = inst.b_u - self.chosen.len();
        let cap = inst.t_m - self.used;
        let mut best = f64::INFINITY;
        for mu in [self.mu, 0.0] {
            self.scratch.clear();
            for &i in &self.order[depth..] {
                let j = inst.claim_section[i];
                let (p, w) = if self.opened[j] > 0 {
                    (self.a[i], inst.claims[i].cost)
                } else {
                    let n_j = self.free_in_section[j] as f64;
                    (self.a[i] + self.c[j] / n_j, inst.claims[i].cost + inst.section_costs[j] / n_j)
                };
                if w <= cap + EPS {
                    let q = p - mu * w;
                    if q > 0.0 {
                        self.scratch.push(q);
                    }
                }
            }
            best = best.min(mu * cap + top_k_bound(&mut self.scratch, k));
            if self.mu == 0.0 {
                break;
            }
        }
        let k_lo = inst.b_l.saturating_sub(self.chosen.len());
        let free = self.order[depth..].iter().copied();
        let sectioned = section_dual(inst, self.a, self.c, free, &self.opened, (k_lo, k), cap, self.lambda, self.rel_mu, &mut self.per_section);
        best.min(sectioned)
    }

    fn dfs(&mut self, depth: usize) {
        self.nodes += 1;
        if self.nodes > self.inst.node_limit {
            self.limit_hit = true;
            return;
        }
        self.offer();
        let remaining = self.order.len() - depth;
        if depth == self.order.len() || self.chosen.len() == self.inst.b_u {
            return;
        }
        if self.chosen.len() + remaining < self.inst.b_l {
            return;
        }
        if self.best.is_some() && self.value + self.bound(depth) <= self.best_value + EPS {
            // near-ties with the incumbent are not explored
            return;
        }
        let i = self.order[depth];
        let j = self.inst.claim_section[i];
        self.free_in_section[j] -= 1;

        let opening = self.opened[j] == 0;
        let extra = self.inst.claims[i].cost + if opening { self.inst.section_costs[j] } else { 0.0 };
        if self.used + extra <= self.inst.t_m + EPS {
            let gain = self.a[i] + if opening { self.c[j] } else { 0.0 };
            self.opened[j] += 1;
            self.chosen.push(i);
            self.used += extra;
            self.value += gain;
            self.dfs(depth + 1);
            self.value -= gain;
            self.used -= extra;
            self.chosen.pop();
            self.opened[j] -= 1;
        }
        if !self.limit_hit {
            self.dfs(depth + 1);
        }
        self.free_in_section[j] += 1;
    }
}

/// Lagrangian bound that keeps the linking constraints: the cardinality limits
/// (multiplier `lambda`, negative when the lower limit is the active one) and
/// the budget (`mu`) are dualized, after which every section is opened or not
/// on its own. `free` are the undecided claims; sections with `opened > 0`
/// already paid their cost.
#[allow(clippy::too_many_arguments)]
fn section_dual(
    inst: &IlpInstance,
    a: &[f64],
    c: &[f64],
    free: impl Iterator<Item = usize>,
    opened: &[usize],
    (k_lo, k_hi): (usize, usize),
    cap: f64,
    lambda: f64,
    mu: f64,
    per_section: &mut [f64],
) -> f64 {
    per_section.fill(0.0);
    for i in free {
        let w = inst.claims[i].cost;
        if w <= cap + EPS {
            let q = a[i] - lambda - mu * w;
            if q > 0.0 {
                per_section[inst.claim_section[i]] += q;
            }
        }
    }
    let sections: f64 = per_section
        .iter()
        .enumerate()
        .map(|(j, &gain)| if opened[j] > 0 { gain } else { (gain + c[j] - mu * inst.section_costs[j]).max(0.0) })
        .sum();
    let card = if lambda >= 0.0 { lambda * k_hi as f64 } else { lambda * k_lo as f64 };
    sections + card + mu * cap
}

fn golden_min(lo: f64, hi: f64, iters: usize, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (lo, hi);
    let mut m1 = hi - g * (hi - lo);
    let mut m2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(m1), f(m2));
    for _ in 0..iters {
        if f1 <= f2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - g * (hi - lo);
            f1 = f(m1);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + g * (hi - lo);
            f2 = f(m2);
        }
    }
    if f1 <= f2 {
        (m1, f1)
    } else {
        (m2, f2)
    }
}

/// Root-level helpers built on the sectioned relaxation.
struct Relaxation<'a> {
    inst: &'a IlpInstance,
    a: &'a [f64],
    c: &'a [f64],
}

impl Relaxation<'_> {
    fn dual(&self, lambda: f64, mu: f64, per_section: &mut [f64]) -> f64 {
        let inst = self.inst;
        let opened = vec![0; inst.sections.len()];
        section_dual(inst, self.a, self.c, 0..inst.claims.len(), &opened, (inst.b_l, inst.b_u), inst.t_m, lambda, mu, per_section)
    }

    /// Multipliers (λ, μ) approximately minimizing the root dual.
    fn multipliers(&self) -> (f64, f64) {
        let inst = self.inst;
        if inst.claims.is_empty() {
            return (0.0, 0.0);
        }
        let a_max = self.a.iter().map(|x| x.abs()).fold(0.0, f64::max) + self.c.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let w_min = inst.claims.iter().map(|c| c.cost).filter(|w| *w > 0.0).fold(f64::INFINITY, f64::min);
        let w_max = inst.claims.iter().map(|c| c.cost).fold(0.0, f64::max);
        let mut per_section = vec![0.0; inst.sections.len()];
        let best_lambda = |mu: f64, per_section: &mut Vec<f64>| {
            let span = a_max + mu * w_max + 1.0;
            golden_min(-span, span, 60, |l| self.dual(l, mu, per_section))
        };
        let (l0, v0) = best_lambda(0.0, &mut per_section);
        if !w_min.is_finite() || inst.t_m <= 0.0 {
            return (l0, 0.0);
        }
        let mu_hi = 2.0 * (a_max + 1.0) / w_min;
        let (mu, v) = golden_min(0.0, mu_hi, 40, |mu| best_lambda(mu, &mut per_section).1);
        if v0 <= v {
            (l0, 0.0)
        } else {
            (best_lambda(mu, &mut per_section).0, mu)
        }
    }

    /// Search order: sections by their relaxed gain, the claims of each
    /// section by reduced profit; claims with no reduced profit go last.
    fn order(&self, lambda: f64, mu: f64) -> Vec<usize> {
        let inst = self.inst;
        let q: Vec<f64> = (0..inst.claims.len()).map(|i| self.a[i] - lambda - mu * inst.claims[i].cost).collect();
        let mut gain = vec![0.0; inst.sections.len()];
        for (i, &j) in inst.claim_section.iter().enumerate() {
            gain[j] += q[i].max(0.0);
        }
        for (j, g) in gain.iter_mut().enumerate() {
            *g += self.c[j] - mu * inst.section_costs[j];
        }
        let mut rank: Vec<usize> = (0..inst.sections.len()).collect();
        rank.sort_by(|&x, &y| gain[y].total_cmp(&gain[x]).then_with(|| inst.sections[x].cmp(&inst.sections[y])));
        let mut pos = vec![0; inst.sections.len()];
        for (r, &j) in rank.iter().enumerate() {
            pos[j] = r;
        }
        let mut order: Vec<usize> = (0..inst.claims.len()).collect();
        order.sort_by(|&x, &y| {
            let px = q[x] > 0.0;
            let py = q[y] > 0.0;
            py.cmp(&px)
                .then_with(|| if px { pos[inst.claim_section[x]].cmp(&pos[inst.claim_section[y]]) } else { std::cmp::Ordering::Equal })
                .then_with(|| q[y].total_cmp(&q[x]))
                .then_with(|| inst.claims[x].id.cmp(&inst.claims[y].id))
        });
        order
    }

    /// Section-aware greedy followed by add, drop and swap moves until no move
    /// improves the objective. Gives the search a strong first incumbent.
    fn heuristic(&self, mu: f64) -> Option<Vec<usize>> {
        let inst = self.inst;
        let n = inst.claims.len();
        let mut open = vec![0usize; inst.sections.len()];
        let mut chosen = vec![false; n];
        let mut count = 0;
        let mut used = 0.0;
        let w = |i: usize| inst.claims[i].cost;
        let sec = |i: usize| inst.claim_section[i];
        while count < inst.b_u {
            let mut pick: Option<(usize, f64)> = None;
            for i in (0..n).filter(|&i| !chosen[i]) {
                let j = sec(i);
                let (gain, extra) = if open[j] > 0 { (self.a[i], w(i)) } else { (self.a[i] + self.c[j], w(i) + inst.section_costs[j]) };
                if used + extra > inst.t_m + EPS || (count >= inst.b_l && gain <= EPS) {
                    continue;
                }
                let score = gain - mu * extra;
                if pick.map_or(true, |(_, s)| score > s + EPS) {
                    pick = Some((i, score));
                }
            }
            let Some((i, _)) = pick else { break };
            chosen[i] = true;
            used += w(i) + if open[sec(i)] == 0 { inst.section_costs[sec(i)] } else { 0.0 };
            open[sec(i)] += 1;
            count += 1;
        }
        if count < inst.b_l {
            return None;
        }

        // marginal value and cost of removing / adding one claim
        let out = |i: usize, open: &[usize]| {
            let j = sec(i);
            let closes = open[j] == 1;
            (-self.a[i] - if closes { self.c[j] } else { 0.0 }, -w(i) - if closes { inst.section_costs[j] } else { 0.0 })
        };
        let inn = |k: usize, open: &[usize], closed: Option<usize>| {
            let j = sec(k);
            let opens = open[j] == 0 || (open[j] == 1 && closed == Some(j));
            (self.a[k] + if opens { self.c[j] } else { 0.0 }, w(k) + if opens { inst.section_costs[j] } else { 0.0 })
        };
        for _ in 0..200 {
            let mut best: Option<(Option<usize>, Option<usize>, f64)> = None;
            let mut consider = |drop: Option<usize>, add: Option<usize>, dv: f64, dc: f64| {
                if dv > EPS && used + dc <= inst.t_m + EPS && best.map_or(true, |(_, _, b)| dv > b + EPS) {
                    best = Some((drop, add, dv));
                }
            };
            let ins: Vec<usize> = (0..n).filter(|&i| chosen[i]).collect();
            let outs: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            if count < inst.b_u {
                for &k in &outs {
                    let (dv, dc) = inn(k, &open, None);
                    consider(None, Some(k), dv, dc);
                }
            }
            for &i in &ins {
                let (ov, oc) = out(i, &open);
                if count > inst.b_l {
                    consider(Some(i), None, ov, oc);
                }
                let closed = (open[sec(i)] == 1).then_some(sec(i));
                for &k in &outs {
                    let (iv, ic) = inn(k, &open, closed);
                    consider(Some(i), Some(k), ov + iv, oc + ic);
                }
            }
            let Some((drop, add, _)) = best else { break };
            if let Some(i) = drop {
                used += out(i, &open).1;
                open[sec(i)] -= 1;
                chosen[i] = false;
                count -= 1;
            }
            if let Some(k) = add {
                used += inn(k, &open, None).1;
                open[sec(k)] += 1;
                chosen[k] = true;
                count += 1;
            }
        }
        Some((0..n).filter(|&i| chosen[i]).collect())
    }
}

/// min over λ ≥ 0 of kλ + Σ (q − λ)⁺ for positive q: λ is the k-th largest value.
fn top_k_bound(q: &mut [f64], k: usize) -> f64 {
    if q.len() <= k {
        return q.iter().sum();
    }
    if k == 0 {
        return 0.0;
    }
    q.select_nth_unstable_by(k - 1, |x, y| y.total_cmp(x));
    q[..k].iter().sum()
}

/// Lagrangian dual of the relaxed program as a function of the budget multiplier.
fn dual_value(items: &[(f64, f64)], cap: f64, k: usize, mu: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(items.iter().map(|(p, w)| p - mu * w).filter(|q| *q > 0.0));
    mu * cap + top_k_bound(scratch, k)
}

/// Golden-section search for the budget multiplier minimizing the (convex) dual.
fn budget_multiplier(items: &[(f64, f64)], cap: f64, k: usize) -> f64 {
    let hi = items.iter().filter(|(_, w)| *w > 0.0).map(|(p, w)| p / w).fold(0.0, f64::max);
    if hi <= 0.0 || cap <= 0.0 {
        return 0.0;
    }
    let mut scratch = Vec::with_capacity(items.len());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..80 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if dual_value(items, cap, k, m1, &mut scratch) <= dual_value(items, cap, k, m2, &mut scratch) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mid = 0.5 * (lo + hi);
    if dual_value(items, cap, k, 0.0, &mut scratch) <= dual_value(items, cap, k, mid, &mut scratch) {
        0.0
    } else {
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn claim(id: &str, section: &str, utility: f64, cost: f64) -> BatchClaim {
        BatchClaim { id: id.into(), section: section.into(), utility, cost }
    }

    fn config(t_m: f64, b_l: usize, b_u: usize) -> BatchConfig {
        BatchConfig { t_m: Some(t_m), b_l, b_u, section_cost: 5.0, ..Default::default() }
    }

    #[test]
    fn batch_cost_counts_sections_once() {
        let r = |_: &str| 5.0;
        assert_eq!(batch_cost(&[], r), 0.0);
        assert_eq!(batch_cost(&[claim("1", "a", 0.0, 10.0), claim("2", "a", 0.0, 10.0)], r), 25.0);
        assert_eq!(batch_cost(&[claim("1", "a", 0.0, 10.0), claim("2", "b", 0.0, 10.0)], r), 30.0);
    }

    #[test]
    fn three_claim_example() {
        let claims = [claim("1", "S1", 5.0, 10.0), claim("2", "S1", 4.0, 10.0), claim("3", "S2", 3.0, 10.0)];
        let inst = build_ilp(&claims, &config(30.0, 1, 3));
        assert_eq!(inst.n_variables(), 5);
        assert_eq!(inst.n_linking_constraints(), 3);
        let s = inst.solve();
        let s = s.selection().unwrap();
        assert_eq!(s.claims, ["1", "2"]);
        assert_eq!(s.cost, 25.0);
        assert_eq!(s.utility, 9.0);
        assert_eq!(inst.solve_exhaustive(Objective::Utility).selection().unwrap().claims, ["1", "2"]);
    }

    #[test]
    fn degenerate_budget_is_infeasible() {
        let claims = [claim("1", "S1", 5.0, 10.0)];
        let mut inst = build_ilp(&claims, &config(30.0, 1, 1));
        inst.t_m = 0.0;
        assert_eq!(inst.solve(), SolveOutcome::Infeasible);
        assert_eq!(inst.select(BatchObjective::Utility, 1.0), ["1"]);
    }

    #[test]
    fn variant_without_utility_weight_picks_cheapest() {
        let claims = [claim("1", "S1", 9.0, 30.0), claim("2", "S1", 0.0, 10.0), claim("3", "S2", 0.0, 12.0)];
        let inst = build_ilp(&claims, &config(100.0, 1, 3));
        assert_eq!(inst.solve_variant(0.0).selection().unwrap().claims, ["2"]);
        assert_eq!(inst.solve_variant(1e6).selection().unwrap().claims, inst.solve().selection().unwrap().claims);
    }

    #[test]
    fn default_budget_from_median_cost() {
        let claims = [claim("1", "a", 0.0, 10.0), claim("2", "a", 0.0, 30.0), claim("3", "a", 0.0, 20.0)];
        let inst = build_ilp(&claims, &BatchConfig { b_l: 5, b_u: 10, ..Default::default() });
        assert_eq!(inst.t_m, 10.0 * 20.0 * 1.5);
        assert_eq!((inst.b_l, inst.b_u), (3, 3));
        assert!(inst.to_lp().contains("budget:"));
    }
}
