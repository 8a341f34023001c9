//! Rayon against the sequential fallback on the two data-parallel hot spots:
//! featurizing a corpus and planning the screens of a candidate pool.

use std::hint::black_box;
use std::sync::Arc;

use claimcheck_core::config::Config;
use claimcheck_core::corpus::{generate_synthetic_corpus, CorpusProfile};
use claimcheck_core::engine::{featurize_corpus, Mode, Session};
use claimcheck_core::par;
use criterion::{criterion_group, criterion_main, Criterion};

fn paths() -> [(&'static str, bool); 2] {
    [("parallel", false), ("sequential", true)]
}

fn featurize(c: &mut Criterion) {
    let corpus = generate_synthetic_corpus(&CorpusProfile::small(), 1).unwrap();
    let config = Config::default();
    let mut group = c.benchmark_group("featurize_corpus");
    for (name, sequential) in paths() {
        par::set_sequential(sequential);
        group.bench_function(name, |b| b.iter(|| featurize_corpus(black_box(&corpus), &config).unwrap()));
    }
    par::set_sequential(false);
    group.finish();
}

fn plan(c: &mut Criterion) {
    let corpus = Arc::new(generate_synthetic_corpus(&CorpusProfile::small(), 1).unwrap());
    let session = Session::new(corpus, Config::default(), Mode::Scrutinizer).unwrap();
    let pool: Vec<usize> = (0..40).collect();
    let mut group = c.benchmark_group("plan_claims");
    group.sample_size(10);
    for (name, sequential) in paths() {
        par::set_sequential(sequential);
        group.bench_function(name, |b| b.iter(|| par::map(&pool, |&i| session.plan(i))));
    }
    par::set_sequential(false);
    group.finish();
}

criterion_group!(benches, featurize, plan);
criterion_main!(benches);
