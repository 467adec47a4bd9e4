use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dmind3_core::harness::{
    bench_latency, corpus_from_jsonl, corpus_to_jsonl, generate_corpus, replay, CorpusSpec, LabeledTransaction,
    ReplayConfig,
};
use dmind3_core::intent::TransactionPayload;
use dmind3_core::objectives::{c3_loss, hps_loss, C3Input, HpsInput};
use dmind3_core::orchestrator::{Orchestrator, OrchestratorConfig};
use dmind3_core::policy::{load_policy, Policy, Profile};
use dmind3_core::router::NetworkState;
use dmind3_core::sanitizer::audit_violations;
use dmind3_core::tiers::{PrivateContext, PublicContext};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dmind3", version, about = "Signing-time transaction firewall and replay harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide one transaction. Exit code 0 allow, 2 block, 3 step-up pending.
    Decide {
        #[arg(long)]
        tx: PathBuf,
        /// Policy file or shipped profile name.
        #[arg(long, default_value = "default")]
        policy: String,
        /// Network file, or `baseline` / `baseline-jitter`.
        #[arg(long, default_value = "baseline")]
        network: String,
        /// Orchestrator configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a labeled corpus as JSON lines.
    GenCorpus {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a corpus and write the metrics report.
    Replay {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "default")]
        policy: String,
        #[arg(long, default_value = "baseline")]
        network: String,
        #[arg(long)]
        out: PathBuf,
        /// Per-path latency table.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Count forbidden fields that survive sanitization.
    AuditPrivacy {
        #[arg(long)]
        corpus: PathBuf,
        /// Profile name or policy file.
        #[arg(long, default_value = "strict")]
        profile: String,
    },
    /// Latency per plan path, measured against the analytic prediction.
    BenchLatency {
        #[arg(long, default_value = "baseline")]
        network: String,
        /// Corpus to bench; a generated one is used otherwise.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate a training objective on a JSON instance.
    EvalLoss {
        #[arg(long, value_enum)]
        kind: LossKind,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LossKind {
    Hps,
    C3,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn policy_arg(arg: &str) -> Result<Policy> {
    if let Ok(p) = arg.parse::<Profile>() {
        return Ok(Policy::profile(p));
    }
    Ok(load_policy(&read(Path::new(arg))?)?)
}

fn network_arg(arg: &str) -> Result<NetworkState> {
    match arg {
        "baseline" => Ok(NetworkState::baseline()),
        "baseline-jitter" => Ok(NetworkState::baseline_jitter()),
        path => Ok(NetworkState::from_json(&read(Path::new(path))?)?),
    }
}

fn config_arg(path: Option<&PathBuf>) -> Result<OrchestratorConfig> {
    match path {
        Some(p) => serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display())),
        None => Ok(OrchestratorConfig::default()),
    }
}

fn corpus_arg(path: &Path) -> Result<Vec<LabeledTransaction>> {
    corpus_from_jsonl(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Decide {
            tx,
            policy,
            network,
            config,
            seed,
        } => {
            let payload = TransactionPayload::from_json(&read(&tx)?).context("parsing transaction")?;
            let policy = policy_arg(&policy)?;
            let network = network_arg(&network)?;
            let config = config_arg(config.as_ref())?;
            let private_ctx = PrivateContext::with_allowlist(policy.allowlist.clone());
            let outcome =
                Orchestrator::new(&policy, &network, &config).process(&payload, &private_ctx, &PublicContext::default(), seed);
            println!("{}", outcome.to_canonical_json());
            Ok(ExitCode::from(outcome.verdict.exit_code() as u8))
        }
        Command::GenCorpus { spec, out } => {
            let spec = CorpusSpec::from_json(&read(&spec)?)?;
            let corpus = generate_corpus(&spec);
            fs::write(&out, corpus_to_jsonl(&corpus))?;
            eprintln!("wrote {} items to {}", corpus.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay {
            corpus,
            policy,
            network,
            out,
            csv,
            config,
            seed,
            workers,
        } => {
            let corpus = corpus_arg(&corpus)?;
            let policy = policy_arg(&policy)?;
            let network = network_arg(&network)?;
            let rc = ReplayConfig {
                orchestrator: config_arg(config.as_ref())?,
                seed,
                workers,
                ..Default::default()
            };
            let report = replay(&corpus, &policy, &network, &rc);
            fs::write(&out, report.to_json())?;
            if let Some(path) = csv {
                write_csv(&path, &["path", "count", "p50", "p95", "p99", "mean", "max"], report.latency_csv_rows())?;
            }
            eprintln!(
                "{} items: unsafe-allow {:.4}, conservative-block {:.4}, step-up {:.4}",
                report.items, report.unsafe_allow_rate, report.conservative_block_rate, report.stepup_rate
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::AuditPrivacy { corpus, profile } => {
            let payloads: Vec<_> = corpus_arg(&corpus)?.into_iter().map(|c| c.payload).collect();
            print_json(&audit_violations(&payloads, &policy_arg(&profile)?))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::BenchLatency {
            network,
            corpus,
            size,
            seed,
            workers,
            csv,
        } => {
            let network = network_arg(&network)?;
            let corpus = match corpus {
                Some(p) => corpus_arg(&p)?,
                None => generate_corpus(&CorpusSpec::new(size, 0.3, seed)),
            };
            if corpus.is_empty() {
                bail!("empty corpus");
            }
            let rows = bench_latency(&corpus, &Policy::profile(Profile::Default), &network, seed, workers);
            if let Some(path) = csv {
                let fmt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
                write_csv(
                    &path,
                    &["path", "predicted_ms", "count", "p50", "p95", "p99"],
                    rows.iter().map(|r| {
                        let m = r.measured.as_ref();
                        [
                            r.path.to_string(),
                            fmt(r.predicted_ms),
                            m.map_or(String::new(), |m| m.count.to_string()),
                            fmt(m.map(|m| m.p50)),
                            fmt(m.map(|m| m.p95)),
                            fmt(m.map(|m| m.p99)),
                        ]
                    }),
                )?;
            }
            print_json(&rows)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::EvalLoss { kind, input } => {
            let doc = read(&input)?;
            let loss = match kind {
                LossKind::Hps => hps_loss(&serde_json::from_str::<HpsInput>(&doc)?)?,
                LossKind::C3 => c3_loss(&serde_json::from_str::<C3Input>(&doc)?)?,
            };
            print_json(&serde_json::json!({ "loss": loss }))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
