use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::{GroundTruth, LabeledTransaction, Pattern};
use super::derive_seed;
use super::percentiles::percentiles;
use crate::orchestrator::{FinalOutcome, FinalReason, FinalVerdict, Orchestrator, OrchestratorConfig};
use crate::policy::Policy;
use crate::router::{NetworkState, PlanPath};
use crate::sanitizer::{audit_violations, AuditReport};
use crate::tiers::{PrivateContext, PublicContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub orchestrator: OrchestratorConfig,
    pub seed: u64,
    pub workers: usize,
    pub public_context: PublicContext,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            orchestrator: OrchestratorConfig::default(),
            seed: 0,
            workers: 1,
            public_context: PublicContext::default(),
        }
    }
}

/// Per-item result kept for aggregation and comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: u64,
    pub pattern: Pattern,
    pub ground_truth: GroundTruth,
    pub verdict: FinalVerdict,
    pub reason: FinalReason,
    pub path: PlanPath,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub allow: u64,
    pub block: u64,
    #[serde(rename = "stepup_pending")]
    pub stepup_pending: u64,
}

impl VerdictCounts {
    pub fn add(&mut self, v: FinalVerdict) {
        match v {
            FinalVerdict::Allow => self.allow += 1,
            FinalVerdict::Block => self.block += 1,
            FinalVerdict::StepUpPending => self.stepup_pending += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.allow + self.block + self.stepup_pending
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub safe: VerdictCounts,
    #[serde(rename = "unsafe")]
    pub unsafe_: VerdictCounts,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.safe.total() + self.unsafe_.total()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub items: u64,
    pub confusion: Confusion,
    pub unsafe_allow_rate: f64,
    pub conservative_block_rate: f64,
    pub stepup_rate: f64,
    pub latency: BTreeMap<PlanPath, LatencySummary>,
    pub per_pattern: BTreeMap<Pattern, VerdictCounts>,
    pub audit: AuditReport,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_results(results: &[ItemResult], audit: AuditReport) -> Self {
        let mut confusion = Confusion::default();
        let mut per_pattern: BTreeMap<Pattern, VerdictCounts> = BTreeMap::new();
        let mut samples: BTreeMap<PlanPath, Vec<f64>> = BTreeMap::new();
        for r in results {
            match r.ground_truth {
                GroundTruth::Safe => confusion.safe.add(r.verdict),
                GroundTruth::Unsafe => confusion.unsafe_.add(r.verdict),
            }
            per_pattern.entry(r.pattern).or_default().add(r.verdict);
            samples.entry(r.path).or_default().push(r.latency_ms);
        }
        let latency = samples
            .into_iter()
            .map(|(path, s)| {
                let p = percentiles(&s, &[0.5, 0.95, 0.99]).expect("group is nonempty");
                let summary = LatencySummary {
                    count: s.len() as u64,
                    p50: p[0],
                    p95: p[1],
                    p99: p[2],
                    mean: s.iter().sum::<f64>() / s.len() as f64,
                    max: s.iter().copied().fold(f64::MIN, f64::max),
                };
                (path, summary)
            })
            .collect();
        let pending = confusion.safe.stepup_pending + confusion.unsafe_.stepup_pending;
        MetricsReport {
            items: results.len() as u64,
            unsafe_allow_rate: ratio(confusion.unsafe_.allow, confusion.unsafe_.total()),
            conservative_block_rate: ratio(confusion.safe.block, confusion.safe.total()),
            stepup_rate: ratio(pending, confusion.total()),
            confusion,
            latency,
            per_pattern,
            audit,
        }
    }

    /// Fraction of `pattern` items that were allowed.
    pub fn allow_rate(&self, pattern: Pattern) -> f64 {
        self.per_pattern
            .get(&pattern)
            .map_or(0.0, |c| ratio(c.allow, c.total()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per path: `path,count,p50,p95,p99,mean,max`.
    pub fn latency_csv_rows(&self) -> Vec<[String; 7]> {
        self.latency
            .iter()
            .map(|(path, s)| {
                [
                    path.to_string(),
                    s.count.to_string(),
                    s.p50.to_string(),
                    s.p95.to_string(),
                    s.p99.to_string(),
                    s.mean.to_string(),
                    s.max.to_string(),
                ]
            })
            .collect()
    }
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool builds")
}

/// Full outcomes of every item, in corpus order.
pub fn replay_outcomes(
    corpus: &[LabeledTransaction],
    policy: &Policy,
    network: &NetworkState,
    config: &ReplayConfig,
) -> Vec<FinalOutcome> {
    let orchestrator = Orchestrator::new(policy, network, &config.orchestrator);
    let private_ctx = PrivateContext::with_allowlist(policy.allowlist.clone());
    pool(config.workers).install(|| {
        corpus
            .par_iter()
            .enumerate()
            .map(|(i, item)| {
                orchestrator.process(
                    &item.payload,
                    &private_ctx,
                    &config.public_context,
                    derive_seed(config.seed, i as u64),
                )
            })
            .collect()
    })
}

pub fn replay_items(
    corpus: &[LabeledTransaction],
    policy: &Policy,
    network: &NetworkState,
    config: &ReplayConfig,
) -> Vec<ItemResult> {
    replay_outcomes(corpus, policy, network, config)
        .into_iter()
        .zip(corpus)
        .map(|(o, item)| ItemResult {
            id: item.id,
            pattern: item.pattern,
            ground_truth: item.ground_truth,
            verdict: o.verdict,
            reason: o.reason,
            path: o.plan_used.path,
            latency_ms: o.total_latency_ms,
        })
        .collect()
}

/// Runs every item through the pipeline with per-item seeds derived from the
/// run seed and aggregates the report. The result does not depend on the
/// number of workers.
pub fn replay(
    corpus: &[LabeledTransaction],
    policy: &Policy,
    network: &NetworkState,
    config: &ReplayConfig,
) -> MetricsReport {
    let results = replay_items(corpus, policy, network, config);
    let payloads: Vec<_> = corpus.iter().map(|c| c.payload.clone()).collect();
    MetricsReport::from_results(&results, audit_violations(&payloads, policy))
}
