use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use claimcheck::api::router;
use claimcheck::store::{open_corpus, Store};
use claimcheck_core::classifiers::{Example, ModelSet};
use claimcheck_core::config::Config;
use claimcheck_core::corpus::{generate_synthetic_corpus, load_corpus, property_frequencies, save_corpus, CorpusProfile, PERCENTILE_POINTS};
use claimcheck_core::engine::{featurize_corpus, Mode};
use claimcheck_core::harness::{ground_truth_map, run_simulation, truth_labels, SimReport};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "claimcheck", version, about = "Verify statistical claims against relational tables")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set batch.b_u=50`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a corpus directory.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Generate a synthetic corpus from a named profile or a profile file.
    Synth {
        #[arg(long, default_value = "table1_div10")]
        profile: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the featurizer and the four classifiers on every annotated claim.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "models.json")]
        out: PathBuf,
    },
    /// Run simulated checkers and print a cost summary.
    Simulate {
        /// manual, sequential or scrutinizer; repeatable. Defaults to all three.
        #[arg(long)]
        mode: Vec<Mode>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "claimcheck-report.json")]
        out: PathBuf,
        /// Directory for per-batch accuracy and per-claim cost CSV files.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory for session logs; sessions are kept in memory when unset.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
    /// Print the summary of a saved simulation report.
    Report {
        #[arg(long, default_value = "claimcheck-report.json")]
        input: PathBuf,
    },
}

/// File written by `simulate` and read by `report`.
#[derive(Serialize, Deserialize)]
struct SimulationFile {
    corpus: String,
    claims: usize,
    sections: usize,
    reports: Vec<SimReport>,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => Config::default(),
    };
    for assignment in &cli.overrides {
        config.set(assignment)?;
    }
    config.validate()?;
    Ok(config)
}

fn corpus_label(config: &Config) -> String {
    match &config.corpus.path {
        Some(p) => p.display().to_string(),
        None => format!("synthetic {} (seed {})", config.corpus.profile, config.corpus.seed),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Ingest { corpus } => {
            let c = load_corpus(&corpus).with_context(|| format!("loading {}", corpus.display()))?;
            let truth = c.ground_truth()?;
            let resolved = truth.iter().filter(|t| t.is_some()).count();
            println!(
                "{}: {} relations, {} sections, {} claims, {} annotations ({} resolved)",
                corpus.display(),
                c.catalog.len(),
                c.document.sections.len(),
                c.claims.len(),
                c.annotations.len(),
                resolved
            );
            if resolved > 0 {
                let (row, distinct) = property_frequencies(&c)?;
                println!("{:<10} {:>8} {}", "property", "distinct", PERCENTILE_POINTS.map(|p| format!("{:>7}", format!("p{p}"))).join(""));
                for ((name, values), n) in row.rows().iter().zip(distinct) {
                    println!("{name:<10} {n:>8} {}", values.map(|v| format!("{v:>7.0}")).join(""));
                }
            }
        }
        Command::Synth { profile, seed, out } => {
            let p = match CorpusProfile::by_name(&profile) {
                Some(p) => p,
                None => {
                    let text = fs::read_to_string(&profile).with_context(|| format!("`{profile}` is neither a profile name nor a readable file"))?;
                    CorpusProfile::from_toml(&text)?
                }
            };
            let corpus = generate_synthetic_corpus(&p, seed)?;
            save_corpus(&corpus, &out)?;
            println!("wrote {} claims in {} sections over {} relations to {}", corpus.claims.len(), corpus.document.sections.len(), corpus.catalog.len(), out.display());
        }
        Command::Train { corpus, out } => {
            if corpus.is_some() {
                config.corpus.path = corpus;
            }
            let c = open_corpus(&config)?;
            let truth = ground_truth_map(&c)?;
            let (featurizer, features) = featurize_corpus(&c, &config)?;
            let examples = c
                .claims
                .iter()
                .zip(features)
                .map(|(claim, f)| Example { claim_id: claim.id.clone(), features: f, labels: truth_labels(&truth[&claim.id].0) })
                .collect();
            let models = ModelSet::new(featurizer, config.training).retrain(examples);
            models.save(&out)?;
            println!("trained on {} claims of {}; wrote {} ({})", c.claims.len(), corpus_label(&config), out.display(), models.fingerprint());
        }
        Command::Simulate { mode, seed, corpus, out, series } => {
            if corpus.is_some() {
                config.corpus.path = corpus;
            }
            let modes = if mode.is_empty() { vec![Mode::Manual, Mode::Sequential, Mode::Scrutinizer] } else { mode };
            let c = Arc::new(open_corpus(&config)?);
            let mut reports = Vec::new();
            if !modes.contains(&Mode::Manual) {
                // the savings column needs the manual baseline
                reports.push(run_simulation(c.clone(), Mode::Manual, &config, seed)?);
            }
            for m in modes {
                eprintln!("simulating {m} on {} claims", c.claims.len());
                reports.push(run_simulation(c.clone(), m, &config, seed)?);
            }
            let file = SimulationFile { corpus: corpus_label(&config), claims: c.claims.len(), sections: c.document.sections.len(), reports };
            fs::write(&out, serde_json::to_string_pretty(&file)?).with_context(|| format!("writing {}", out.display()))?;
            if let Some(dir) = series {
                write_series(&dir, &file.reports)?;
            }
            print_summary(&file);
        }
        Command::Serve { port, host, state } => {
            let store = match &state {
                Some(dir) => Store::open(dir).with_context(|| format!("opening state directory {}", dir.display()))?,
                None => Store::in_memory(),
            };
            let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, router(Arc::new(store)))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
        Command::Config => print!("{}", config.to_toml()),
        Command::Report { input } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let file: SimulationFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
            print_summary(&file);
        }
    }
    Ok(())
}

fn print_summary(file: &SimulationFile) {
    println!("corpus: {} ({} claims, {} sections)", file.corpus, file.claims, file.sections);
    let manual = file.reports.iter().find(|r| r.mode == Mode::Manual);
    let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.1}%", 100.0 * v));
    println!(
        "{:<12} {:>11} {:>7} {:>8} {:>13} {:>9} {:>8} {:>9} {:>8} {:>8} {:>9}",
        "mode", "total s", "weeks", "savings", "verification", "reading", "batches", "verdicts", "avg acc", "max acc", "compute s"
    );
    for r in &file.reports {
        let savings = manual.filter(|m| m.total_cost > 0.0).map(|m| r.savings_vs(m));
        println!(
            "{:<12} {:>11.0} {:>7.2} {:>8} {:>13.0} {:>9.0} {:>8} {:>9} {:>8} {:>8} {:>9.1}",
            r.mode.to_string(),
            r.total_cost,
            r.weeks,
            pct(savings),
            r.verification_cost,
            r.reading_cost,
            r.batches,
            pct(Some(r.verdict_accuracy)),
            pct(r.mean_accuracy),
            pct(r.max_accuracy),
            r.computation_seconds
        );
    }
}

fn write_series(dir: &Path, reports: &[SimReport]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in reports.iter().filter(|r| r.mode != Mode::Manual) {
        let mut w = csv::Writer::from_path(dir.join(format!("{}_accuracy.csv", r.mode)))?;
        w.write_record(["batch", "verified", "relation", "key_value", "attribute", "formula", "average"])?;
        for p in &r.accuracy {
            let kinds = p.per_kind.map(|k| k.map(|v| v.to_string())).unwrap_or_else(|| std::array::from_fn(|_| String::new()));
            let mut row = vec![p.batch.to_string(), p.verified.to_string()];
            row.extend(kinds);
            row.push(p.average.map(|v| v.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join(format!("{}_topk.csv", r.mode)))?;
        w.write_record(["batch", "k", "accuracy"])?;
        for p in &r.topk {
            for (k, a) in &p.accuracy {
                w.write_record([p.batch.to_string(), k.to_string(), a.to_string()])?;
            }
        }
        w.flush()?;
    }
    for r in reports {
        let mut w = csv::Writer::from_path(dir.join(format!("{}_claims.csv", r.mode)))?;
        w.write_record(["claim_id", "verdict", "cost", "max_checker_cost"])?;
        for c in &r.per_claim {
            let verdict = c.verdict.map(|v| serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()).unwrap_or_default();
            w.write_record([c.claim_id.clone(), verdict, c.cost.to_string(), c.max_checker_cost.to_string()])?;
        }
        w.flush()?;
    }
    if reports.is_empty() {
        bail!("no reports to write");
    }
    Ok(())
}
