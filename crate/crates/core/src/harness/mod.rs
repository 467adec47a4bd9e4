//! Experimental surface: labeled corpus generation, seeded replay with
//! per-path latency percentiles, ablations and the latency bench.

pub mod ablation;
pub mod corpus;
pub mod percentiles;
pub mod replay;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use ablation::{run_ablation, shipped_ablation_configs, AblationReport, AblationRow, NamedConfig, PairDelta};
pub use corpus::{
    corpus_from_jsonl, corpus_to_jsonl, generate_corpus, generate_item, CorpusError, CorpusSpec, GroundTruth,
    LabeledTransaction, Pattern,
};
pub use percentiles::{nearest_rank, percentiles, PercentileError};
pub use replay::{
    replay, replay_items, replay_outcomes, Confusion, ItemResult, LatencySummary, MetricsReport, ReplayConfig,
    VerdictCounts,
};

use crate::orchestrator::OrchestratorConfig;
use crate::policy::Policy;
use crate::router::{predict_latency, NetworkState, PlanPath};

/// SplitMix64 finalizer over `seed + (index + 1)·φ`: a counter-based
/// per-item seed, independent of processing order.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub path: PlanPath,
    pub predicted_ms: Option<f64>,
    pub measured: Option<LatencySummary>,
}

/// Replays `corpus` once per plan path with routing pinned to that path
/// (cloud enabled, budget lifted) and reports the latency of the items that
/// ran it next to the analytic prediction.
pub fn bench_latency(
    corpus: &[LabeledTransaction],
    policy: &Policy,
    network: &NetworkState,
    seed: u64,
    workers: usize,
) -> Vec<BenchRow> {
    let mut bench_policy = policy.clone();
    bench_policy.cloud_enabled = true;
    bench_policy.latency_budget_ms = u64::MAX / 2;
    let mut measured: BTreeMap<PlanPath, Vec<ItemResult>> = BTreeMap::new();
    for path in PlanPath::ALL {
        let config = ReplayConfig {
            orchestrator: OrchestratorConfig {
                plan_override: Some(path),
                ..Default::default()
            },
            seed,
            workers,
            ..Default::default()
        };
        let items = replay_items(corpus, &bench_policy, network, &config);
        measured
            .entry(path)
            .or_default()
            .extend(items.into_iter().filter(|i| i.path == path));
    }
    PlanPath::ALL
        .into_iter()
        .map(|path| {
            let items = measured.remove(&path).unwrap_or_default();
            let summary = MetricsReport::from_results(&items, Default::default())
                .latency
                .remove(&path);
            BenchRow {
                path,
                predicted_ms: predict_latency(path, network).ok(),
                measured: summary,
            }
        })
        .collect()
}
