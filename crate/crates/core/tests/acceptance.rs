//! End-to-end acceptance checks. Every check prints one PASS/FAIL line to
//! stderr (uncaptured) before asserting.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use claimcheck_core::batcher::{build_ilp, BatchClaim, BatchConfig, IlpInstance, Objective, SolveOutcome};
use claimcheck_core::classifiers::{entropy_of, ModelSet, PropertyKind, TrainingConfig};
use claimcheck_core::config::Config;
use claimcheck_core::corpus::{generate_synthetic_corpus, relative_error, Catalog, CorpusProfile, Relation, Verdict};
use claimcheck_core::engine::Mode;
use claimcheck_core::features::{EmbeddingTable, FeatureVector, Featurizer, FeaturizerConfig};
use claimcheck_core::formula::{
    abstract_expr, evaluate, evaluate_concrete, parse, AttrSlot, BinOp, Binding, CellRef, CmpOp, EvalValue, Expr, FormulaTemplate,
};
use claimcheck_core::harness::{learning_curve, simulate, SimReport};
use claimcheck_core::planner::{budget_screens, expected_cost, order_options, select_properties, PropertyOptions, PruningIndex};
use claimcheck_core::querygen::{generate, Context, QueryGenConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("[{}] criterion {n} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

// ---------------------------------------------------------------- 1

fn ged() -> Catalog {
    let mut r = Relation::new("GED", "Index", vec!["2016".into(), "2017".into(), "2018".into()]).unwrap();
    r.push_row("PGElecDemand", vec![Some(21_563.0), Some(22_209.0), Some(22_793.0)]).unwrap();
    r.push_row("PGINCoal", vec![Some(2_371.0), Some(2_390.0), Some(2_412.0)]).unwrap();
    r.push_row("TFCelec", vec![Some(20_871.0), Some(21_465.0), Some(22_040.0)]).unwrap();
    Catalog::new(vec![r])
}

/// SELECT, FROM and the set of WHERE equalities, whitespace removed.
fn sql_parts(sql: &str) -> (String, String, BTreeSet<String>) {
    let flat: String = sql.replace('`', "'").chars().filter(|c| !c.is_whitespace()).collect();
    let (select, rest) = flat.split_once("FROM").unwrap();
    let (from, predicates) = rest.split_once("WHERE").unwrap();
    let predicates = predicates.split("AND").flat_map(|p| p.split(',')).map(str::to_string).collect();
    (select.to_string(), from.to_string(), predicates)
}

#[test]
fn example_growth_query() {
    let start = Instant::now();
    let ctx = Context {
        relations: vec!["GED".into()],
        keys: vec!["PGElecDemand".into()],
        attributes: vec!["2016".into(), "2017".into()],
        formulas: vec![Arc::new(FormulaTemplate::parse("POWER(a.A1/b.A2,1/(A1-A2))-1").unwrap())],
        parameter: None,
        tolerance: 0.05,
    };
    let g = generate(&ctx, &ged(), &QueryGenConfig::default());
    let expected = sql_parts(
        "SELECT POWER(a.2017/b.2016,1/(2017-2016)) -1\nFROM  GED a, GED b\nWHERE a.Index = `PGElecDemand', b.Index = 'PGElecDemand'",
    );
    let hit = g.candidates.iter().find(|c| sql_parts(&c.sql) == expected);
    let value = hit.and_then(|c| c.number());
    let elapsed = start.elapsed();
    let pass = value.is_some_and(|v| relative_error(v, 0.03) <= 0.05) && elapsed < Duration::from_secs(1);
    report(1, "example growth query", pass, &format!("query found {}, value {value:?}, {elapsed:?}", hit.is_some()));
    assert!(pass);
}

// ---------------------------------------------------------------- 2

/// Expectation by enumerating which option (if any) is the correct one.
fn brute_expected(p: &[f64], v: f64) -> f64 {
    let m = p.len() as f64;
    let none = 1.0 - p.iter().sum::<f64>();
    p.iter().enumerate().map(|(i, pi)| pi * (i + 1) as f64 * v).sum::<f64>() + none * m * v
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn expected_cost_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut ordered_ok = true;
    for _ in 0..500 {
        let m = rng.gen_range(1..=6);
        let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        // sub-stochastic: the correct answer may be missing from the list
        let total = raw.iter().sum::<f64>() / rng.gen_range(0.3..1.0);
        let p: Vec<f64> = raw.iter().map(|x| x / total.max(raw.iter().sum())).collect();
        let v = rng.gen_range(0.5..20.0);
        worst = worst.max((expected_cost(&p, v) - brute_expected(&p, v)).abs());

        let options: Vec<(String, f64)> = p.iter().enumerate().map(|(i, x)| (format!("o{i}"), *x)).collect();
        let ordered: Vec<f64> = order_options(options).iter().map(|(_, x)| *x).collect();
        let cost = brute_expected(&ordered, v);
        let best = permutations(m)
            .iter()
            .map(|perm| brute_expected(&perm.iter().map(|&i| p[i]).collect::<Vec<_>>(), v))
            .fold(f64::INFINITY, f64::min);
        ordered_ok &= cost <= best + 1e-9;
    }
    let pass = worst <= 1e-9 && ordered_ok;
    report(2, "expected cost", pass, &format!("max deviation {worst:.2e}, ordering minimal {ordered_ok}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 3

/// Pruning power from the raw exclusion matrix.
fn power(props: &[PropertyOptions], n_queries: usize, subset: &[usize]) -> f64 {
    (0..n_queries)
        .map(|q| {
            let keep: f64 = subset
                .iter()
                .map(|&s| {
                    let prop = &props[s];
                    prop.probabilities.iter().zip(&prop.excluded).filter(|(_, ex)| !ex[q]).map(|(p, _)| p).sum::<f64>()
                })
                .product();
            1.0 - keep
        })
        .sum()
}

fn subsets(n: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n).map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect()).collect()
}

#[test]
fn greedy_guarantee() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bound = 1.0 - (-1.0f64).exp();
    let mut worst_ratio = f64::INFINITY;
    let mut shape_ok = true;
    for _ in 0..200 {
        let n_props = rng.gen_range(1..=4);
        let n_queries = rng.gen_range(1..=40);
        let props: Vec<PropertyOptions> = (0..n_props)
            .map(|s| {
                let m = rng.gen_range(1..=6);
                let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
                let total: f64 = raw.iter().sum::<f64>() + rng.gen_range(0.0..0.5);
                PropertyOptions {
                    kind: PropertyKind::ALL[s],
                    probabilities: raw.iter().map(|x| x / total).collect(),
                    excluded: (0..m).map(|_| (0..n_queries).map(|_| rng.gen_bool(0.5)).collect()).collect(),
                }
            })
            .collect();
        let index = PruningIndex::new(n_queries, props.clone());
        let all = subsets(n_props);
        let f = |s: &[usize]| power(&props, n_queries, s);
        for a in &all {
            assert!((index.pruning_power(a) - f(a)).abs() < 1e-9);
            for b in all.iter().filter(|b| a.iter().all(|x| b.contains(x))) {
                shape_ok &= f(a) <= f(b) + 1e-9;
                for x in (0..n_props).filter(|x| !b.contains(x)) {
                    let with = |s: &Vec<usize>| {
                        let mut t = s.clone();
                        t.push(x);
                        f(&t) - f(s)
                    };
                    shape_ok &= with(a) + 1e-9 >= with(b);
                }
            }
        }
        let k = rng.gen_range(1..=n_props);
        let greedy = f(&select_properties(&index, k));
        let optimum = all.iter().filter(|s| s.len() <= k).map(|s| f(s)).fold(0.0, f64::max);
        if optimum > 0.0 {
            worst_ratio = worst_ratio.min(greedy / optimum);
        }
    }
    let pass = shape_ok && worst_ratio + 1e-9 >= bound;
    report(3, "greedy guarantee", pass, &format!("worst greedy/optimum {worst_ratio:.4} (bound {bound:.4}), submodular and monotone {shape_ok}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 4

/// Independent enumeration of the batch program.
fn enumerate(inst: &IlpInstance, objective: Objective) -> Option<f64> {
    let n = inst.claims.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..1 << n {
        let chosen: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if chosen.len() < inst.b_l || chosen.len() > inst.b_u {
            continue;
        }
        let mut sections: Vec<usize> = chosen.iter().map(|&i| inst.claim_section[i]).collect();
        sections.sort_unstable();
        sections.dedup();
        let cost = chosen.iter().map(|&i| inst.claims[i].cost).sum::<f64>() + sections.iter().map(|&s| inst.section_costs[s]).sum::<f64>();
        let utility: f64 = chosen.iter().map(|&i| inst.claims[i].utility).sum();
        // the budget binds under both objectives
        if cost > inst.t_m + 1e-9 {
            continue;
        }
        let value = match objective {
            Objective::Utility => utility,
            Objective::CostMinusUtility { w_u } => w_u * utility - cost,
        };
        best = Some(best.map_or(value, |b: f64| b.max(value)));
    }
    best
}

fn knapsack(weights: &[usize], values: &[f64], cap: usize) -> f64 {
    let mut best = vec![0.0f64; cap + 1];
    for (w, v) in weights.iter().zip(values) {
        for c in (*w..=cap).rev() {
            best[c] = best[c].max(best[c - w] + v);
        }
    }
    best[cap]
}

#[test]
fn ilp_exactness() {
    let start = Instant::now();
    let mut mismatches = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(40_000 + seed);
        let n = rng.gen_range(1..=15);
        let sections = rng.gen_range(1..=6);
        let claims: Vec<BatchClaim> = (0..n)
            .map(|i| BatchClaim {
                id: format!("c{i:02}"),
                section: format!("s{}", rng.gen_range(0..sections)),
                utility: rng.gen_range(0.0..4.0),
                cost: rng.gen_range(20.0..400.0),
            })
            .collect();
        let b_l = rng.gen_range(0..=n.min(4));
        let config = BatchConfig {
            t_m: Some(rng.gen_range(100.0..2500.0)),
            b_l,
            b_u: rng.gen_range(b_l.max(1)..=n),
            section_cost: rng.gen_range(0.0..120.0),
            ..Default::default()
        };
        let inst = build_ilp(&claims, &config);
        let solved = |o: SolveOutcome| o.selection().map(|s| s.objective);
        let w_u = rng.gen_range(0.0..200.0);
        for (got, objective) in [(solved(inst.solve()), Objective::Utility), (solved(inst.solve_variant(w_u)), Objective::CostMinusUtility { w_u })] {
            let want = enumerate(&inst, objective);
            let same = match (got, want) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-9,
                (None, None) => true,
                _ => false,
            };
            mismatches += usize::from(!same);
        }
    }
    let mut knap_mismatches = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50_000 + seed);
        let n = rng.gen_range(1..=40);
        let weights: Vec<usize> = (0..n).map(|_| rng.gen_range(2..60)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(1..100) as f64).collect();
        let cap = rng.gen_range(10..400);
        // one claim per section, reading cost 1, so claim weight = cost + 1
        let claims: Vec<BatchClaim> = (0..n)
            .map(|i| BatchClaim { id: format!("k{i:02}"), section: format!("s{i}"), utility: values[i], cost: (weights[i] - 1) as f64 })
            .collect();
        let config = BatchConfig { t_m: Some(cap as f64), b_l: 0, b_u: n, section_cost: 1.0, ..Default::default() };
        let got = build_ilp(&claims, &config).solve().selection().map_or(0.0, |s| s.objective);
        knap_mismatches += usize::from((got - knapsack(&weights, &values, cap)).abs() >= 1e-9);
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && knap_mismatches == 0 && elapsed < Duration::from_secs(60);
    report(4, "ilp exactness", pass, &format!("{mismatches} enumeration and {knap_mismatches} knapsack mismatches, {elapsed:?}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 5, 6, 7

struct Runs {
    manual: SimReport,
    sequential: SimReport,
    scrutinizer: SimReport,
    elapsed: Duration,
}

fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let corpus = Arc::new(generate_synthetic_corpus(&CorpusProfile::table1_div10(), 1).unwrap());
        let config = Config::default();
        let run = |mode| simulate(corpus.clone(), mode, &config, 1).unwrap().0;
        let manual = run(Mode::Manual);
        let sequential = run(Mode::Sequential);
        let scrutinizer = run(Mode::Scrutinizer);
        Runs { manual, sequential, scrutinizer, elapsed: start.elapsed() }
    })
}

#[test]
fn worst_case_claim_cost() {
    let r = runs();
    let cost = Config::default().cost_model;
    let (nop, nsc) = budget_screens(&cost);
    let limit = 3.0 * cost.s_f;
    let worst = r.sequential.per_claim.iter().chain(&r.scrutinizer.per_claim).map(|c| c.max_checker_cost).fold(0.0, f64::max);
    let pass = worst <= limit && cost.worst_case(nop, nsc) <= limit;
    report(5, "worst-case claim cost", pass, &format!("max realized {worst:.0} s, limit {limit:.0} s (nop {nop}, nsc {nsc})"));
    assert!(pass);
}

#[test]
fn end_to_end_directionality() {
    let r = runs();
    let savings = r.scrutinizer.savings_vs(&r.manual);
    let pass = r.scrutinizer.total_cost < r.sequential.total_cost
        && r.sequential.total_cost < r.manual.total_cost
        && savings >= 0.30
        && r.elapsed < Duration::from_secs(600);
    report(
        6,
        "end-to-end directionality",
        pass,
        &format!(
            "{} claims: scrutinizer {:.0} s < sequential {:.0} s < manual {:.0} s, savings {:.1}%, {:.0} s wall",
            r.manual.claims,
            r.scrutinizer.total_cost,
            r.sequential.total_cost,
            r.manual.total_cost,
            100.0 * savings,
            r.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn verdict_soundness() {
    let r = runs();
    let mut pass = true;
    let mut details = Vec::new();
    for s in [&r.sequential, &r.scrutinizer] {
        let audit = s.audit.clone().unwrap();
        pass &= s.verdict_accuracy == 1.0 && s.unresolved == 0 && audit.failed.is_empty() && audit.checked > 0;
        let correct = s.per_claim.iter().filter(|c| c.verdict == Some(Verdict::Correct)).count();
        details.push(format!("{}: accuracy {:.3}, audit {}/{} correct witnesses ok", s.mode, s.verdict_accuracy, audit.checked - audit.failed.len(), audit.checked));
        pass &= audit.checked == correct;
    }
    report(7, "verdict soundness", pass, &details.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- 8

const ALIASES: [&str; 4] = ["a", "b", "c", "d"];
const YEARS: [&str; 4] = ["2015", "2016", "2017", "2018"];
const ROWS: [(&str, &str); 4] = [("GED", "PGElecDemand"), ("GED", "TFCelec"), ("WEO", "CO2"), ("WEO", "PGINCoal")];

fn fixture() -> Catalog {
    let mut ged = Relation::new("GED", "Index", YEARS.iter().map(|s| s.to_string()).collect()).unwrap();
    ged.push_row("PGElecDemand", vec![Some(21_011.0), Some(21_563.0), Some(22_209.0), Some(22_793.0)]).unwrap();
    ged.push_row("TFCelec", vec![Some(20_102.5), Some(20_871.0), Some(21_465.0), Some(22_040.0)]).unwrap();
    let mut weo = Relation::new("WEO", "Index", YEARS.iter().map(|s| s.to_string()).collect()).unwrap();
    weo.push_row("CO2", vec![Some(32.1), Some(32.2), Some(32.5), Some(33.1)]).unwrap();
    weo.push_row("PGINCoal", vec![Some(2_330.0), Some(2_371.0), Some(2_390.0), Some(2_412.0)]).unwrap();
    Catalog::new(vec![ged, weo])
}

fn number(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(0..10) as f64,
        1 => rng.gen_range(0..100_000) as f64 / 1000.0,
        2 => YEARS.choose(rng).unwrap().parse().unwrap(),
        _ => rng.gen_range(0.0..1e6),
    }
}

/// Random expression in the surface syntax. `concrete` leaves out variables
/// and named references so the expression can be evaluated directly.
fn expr(rng: &mut ChaCha8Rng, depth: u32, concrete: bool) -> Expr {
    let leaf = depth == 0 || rng.gen_bool(0.3);
    if leaf {
        let pick = if concrete { rng.gen_range(0..2) } else { rng.gen_range(0..4) };
        return match pick {
            0 => Expr::Number(number(rng)),
            1 => Expr::value(*ALIASES.choose(rng).unwrap(), AttrSlot::Label(YEARS.choose(rng).unwrap().to_string())),
            2 => {
                if rng.gen_bool(0.5) {
                    Expr::AttrVar(rng.gen_range(1..4))
                } else {
                    Expr::value(*ALIASES.choose(rng).unwrap(), AttrSlot::Var(rng.gen_range(1..4)))
                }
            }
            _ => Expr::Named(format!("n{}", rng.gen_range(0..5))),
        };
    }
    match rng.gen_range(0..10) {
        0 => Expr::Neg(Box::new(expr(rng, depth - 1, concrete))),
        1 | 2 => {
            let (name, arity) = *[("POWER", 2), ("ABS", 1), ("SQRT", 1), ("LN", 1), ("EXP", 1), ("ROUND", 2), ("SUM", 3), ("AVG", 2), ("MIN", 2), ("MAX", 3)]
                .choose(rng)
                .unwrap();
            Expr::call(name, (0..arity).map(|_| expr(rng, depth - 1, concrete)).collect())
        }
        _ => {
            let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow].choose(rng).unwrap();
            Expr::binary(op, expr(rng, depth - 1, concrete), expr(rng, depth - 1, concrete))
        }
    }
}

fn with_comparison(rng: &mut ChaCha8Rng, e: Expr, concrete: bool) -> Expr {
    if rng.gen_bool(0.2) {
        let op = *[CmpOp::Gt, CmpOp::Lt, CmpOp::Eq, CmpOp::Ne].choose(rng).unwrap();
        Expr::compare(op, e, expr(rng, 1, concrete))
    } else {
        e
    }
}

fn same_value<E>(a: &Result<EvalValue, E>, b: &Result<EvalValue, E>) -> bool {
    match (a, b) {
        (Ok(EvalValue::Number(x)), Ok(EvalValue::Number(y))) => x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()),
        (Ok(EvalValue::Bool(x)), Ok(EvalValue::Bool(y))) => x == y,
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

#[test]
fn formula_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let catalog = fixture();
    let context: Vec<String> = YEARS[1..].iter().map(|s| s.to_string()).collect();
    let mut render_failures = 0;
    let mut value_failures = 0;
    let mut evaluated = 0;
    for _ in 0..1000 {
        let depth = rng.gen_range(0..5);
        let e = expr(&mut rng, depth, false);
        let e = with_comparison(&mut rng, e, false);
        if parse(&e.to_string()).ok().as_ref() != Some(&e) {
            render_failures += 1;
        }

        let concrete = expr(&mut rng, depth, true);
        let concrete = with_comparison(&mut rng, concrete, true);
        if parse(&concrete.to_string()).ok().as_ref() != Some(&concrete) {
            render_failures += 1;
        }
        let rows: Vec<(String, String)> = ALIASES.iter().map(|_| ROWS.choose(&mut rng).map(|(r, k)| (r.to_string(), k.to_string())).unwrap()).collect();
        let resolve = |alias: &str| ALIASES.iter().position(|a| *a == alias).map(|i| rows[i].clone());
        let direct = evaluate_concrete(&concrete, &resolve, &catalog);

        let abs = abstract_expr(&concrete, &context);
        let template = &abs.template;
        let cells: Vec<CellRef> = abs
            .aliases
            .iter()
            .zip(template.value_slots())
            .map(|(alias, slot)| {
                let (relation, key) = resolve(alias).unwrap();
                let attribute = match slot {
                    AttrSlot::Label(l) => l,
                    AttrSlot::Var(k) => abs.attr_labels[k - 1].clone(),
                };
                CellRef::new(relation, key, attribute)
            })
            .collect();
        let binding = Binding::derive(template, cells.clone());
        let binding = match binding {
            Ok(b) => b,
            // attribute variables that only occur as numbers are not linked to a cell
            Err(_) => Binding { cells, attrs: abs.attr_labels.clone() },
        };
        let via_template = evaluate(template, &binding, &catalog);
        let canonical_rows: Vec<(String, String)> = binding.cells.iter().map(|c| (c.relation.clone(), c.key.clone())).collect();
        let canonical = |alias: &str| template.value_vars.iter().position(|v| v == alias).map(|i| canonical_rows[i].clone());
        let via_instance = template.instantiate(&binding).map(|e| evaluate_concrete(&e, &canonical, &catalog));
        let ok = same_value(&direct, &via_template) && via_instance.as_ref().is_ok_and(|v| same_value(&direct, v));
        value_failures += usize::from(!ok);
        evaluated += usize::from(direct.is_ok());
    }
    let pass = render_failures == 0 && value_failures == 0;
    report(
        8,
        "formula round trip",
        pass,
        &format!("{render_failures} render and {value_failures} value mismatches over 1000 expressions ({evaluated} with a defined value)"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 9

/// Claims whose words name their labels outright, plus shared filler.
fn separable_corpus(rng: &mut ChaCha8Rng, n: usize) -> (Vec<String>, Vec<[Vec<String>; 4]>) {
    let filler = ["the", "in", "grew", "by", "reaching", "share", "global", "rose", "fell", "percent", "demand", "supply"];
    let classes = 6;
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let pick: [usize; 4] = std::array::from_fn(|_| rng.gen_range(0..classes));
        let mut words: Vec<String> = (0..8).map(|_| filler.choose(rng).unwrap().to_string()).collect();
        for (kind, &c) in pick.iter().enumerate() {
            words.push(format!("{}{}", ["table", "region", "period", "shape"][kind], ["alpha", "bravo", "delta", "echo", "kilo", "oscar"][c]));
        }
        words.shuffle(rng);
        texts.push(words.join(" "));
        labels.push(std::array::from_fn(|kind| vec![format!("{}-{}", PropertyKind::ALL[kind], pick[kind])]));
    }
    (texts, labels)
}

#[test]
fn classifier_shape() {
    let mut details = Vec::new();

    // top-k along the document-scale run
    let r = runs();
    let mut topk_ok = !r.scrutinizer.topk.is_empty();
    for point in r.sequential.topk.iter().chain(&r.scrutinizer.topk) {
        topk_ok &= point.accuracy.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1 + 1e-12);
    }
    details.push(format!("top-k monotone over {} curves {topk_ok}", r.sequential.topk.len() + r.scrutinizer.topk.len()));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (texts, labels) = separable_corpus(&mut rng, 600);
    let fz = Arc::new(
        Featurizer::fit(&texts, &FeaturizerConfig::default(), EmbeddingTable::hashed(32)).unwrap(),
    );
    let features: Vec<FeatureVector> = texts.iter().map(|t| fz.featurize(t, (0, t.len()))).collect();
    let base = ModelSet::new(fz, TrainingConfig { epochs: 30, ..Default::default() });
    let train: Vec<usize> = (0..400).collect();
    let holdout: Vec<usize> = (400..600).collect();
    let curve = learning_curve(&base, &features, &labels, &train, &holdout, 20);
    let half = &curve[..curve.len() / 2];
    let rising = half.windows(2).all(|w| w[1] >= w[0]);
    details.push(format!("held-out top-1 over first half {:?}", half.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>()));

    // entropy stays within [0, ln L] for every model and claim
    let models = base.retrain(
        train[..100]
            .iter()
            .map(|&i| claimcheck_core::classifiers::Example { claim_id: format!("#{i}"), features: features[i].clone(), labels: labels[i].clone() })
            .collect(),
    );
    let mut entropy_ok = true;
    for kind in PropertyKind::ALL {
        let model = models.model(kind).unwrap();
        let cap = (model.labels.len() as f64).ln();
        for f in &features {
            let h = model.entropy(f);
            entropy_ok &= (-1e-12..=cap + 1e-9).contains(&h);
            let p: Vec<f64> = model.probabilities(f);
            entropy_ok &= (entropy_of(&p) - h).abs() < 1e-9;
        }
    }
    details.push(format!("entropy within bounds {entropy_ok}"));
    let pass = topk_ok && rising && entropy_ok;
    report(9, "classifier shape", pass, &details.join("; "));
    assert!(pass);
}
