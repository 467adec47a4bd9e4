use serde::{Deserialize, Serialize};

use super::corpus::{GroundTruth, LabeledTransaction};
use super::replay::{replay_items, MetricsReport, ReplayConfig};
use crate::orchestrator::{OrchestratorConfig, VerifierMode};
use crate::policy::Policy;
use crate::router::NetworkState;
use crate::sanitizer::audit_violations;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedConfig {
    pub name: String,
    pub config: OrchestratorConfig,
}

/// The four escalation variants: default, step-up disabled, standard-only
/// verifier, Reflect on every local call.
pub fn shipped_ablation_configs() -> Vec<NamedConfig> {
    let base = OrchestratorConfig::default();
    vec![
        NamedConfig {
            name: "default".into(),
            config: base.clone(),
        },
        NamedConfig {
            name: "stepup_disabled".into(),
            config: OrchestratorConfig {
                stepup_enabled: false,
                ..base.clone()
            },
        },
        NamedConfig {
            name: "standard_only".into(),
            config: OrchestratorConfig {
                verifier_mode: VerifierMode::StandardOnly,
                ..base.clone()
            },
        },
        NamedConfig {
            name: "reflect_enabled".into(),
            config: OrchestratorConfig {
                verifier_mode: VerifierMode::ReflectAlways,
                ..base
            },
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub metrics: MetricsReport,
}

/// `b − a` for each rate, plus the number of items with different verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub a: String,
    pub b: String,
    pub unsafe_allow_rate: f64,
    pub conservative_block_rate: f64,
    pub stepup_rate: f64,
    pub differing_outcomes: u64,
    pub differing_unsafe_allows: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub deltas: Vec<PairDelta>,
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.name == name).map(|r| &r.metrics)
    }

    /// `b − a`, in either listing order.
    pub fn delta(&self, a: &str, b: &str) -> Option<PairDelta> {
        if let Some(d) = self.deltas.iter().find(|d| d.a == a && d.b == b) {
            return Some(d.clone());
        }
        let d = self.deltas.iter().find(|d| d.a == b && d.b == a)?;
        Some(PairDelta {
            a: a.to_string(),
            b: b.to_string(),
            unsafe_allow_rate: -d.unsafe_allow_rate,
            conservative_block_rate: -d.conservative_block_rate,
            stepup_rate: -d.stepup_rate,
            ..d.clone()
        })
    }
}

/// Replays the corpus once per configuration under the same seed and
/// compares every ordered pair `(a, b)` with `a` listed before `b`.
pub fn run_ablation(
    configs: &[NamedConfig],
    corpus: &[LabeledTransaction],
    policy: &Policy,
    network: &NetworkState,
    seed: u64,
    workers: usize,
) -> AblationReport {
    let payloads: Vec<_> = corpus.iter().map(|c| c.payload.clone()).collect();
    let audit = audit_violations(&payloads, policy);
    let runs: Vec<_> = configs
        .iter()
        .map(|c| {
            let rc = ReplayConfig {
                orchestrator: c.config.clone(),
                seed,
                workers,
                ..Default::default()
            };
            replay_items(corpus, policy, network, &rc)
        })
        .collect();
    let rows: Vec<AblationRow> = configs
        .iter()
        .zip(&runs)
        .map(|(c, r)| AblationRow {
            name: c.name.clone(),
            metrics: MetricsReport::from_results(r, audit),
        })
        .collect();
    let mut deltas = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let (ma, mb) = (&rows[i].metrics, &rows[j].metrics);
            let pairs = runs[i].iter().zip(&runs[j]);
            let differing_outcomes = pairs.clone().filter(|(x, y)| x.verdict != y.verdict).count() as u64;
            let allowed = |v| v == crate::orchestrator::FinalVerdict::Allow;
            let differing_unsafe_allows = pairs
                .filter(|(x, y)| x.ground_truth == GroundTruth::Unsafe && allowed(x.verdict) != allowed(y.verdict))
                .count() as u64;
            deltas.push(PairDelta {
                a: rows[i].name.clone(),
                b: rows[j].name.clone(),
                unsafe_allow_rate: mb.unsafe_allow_rate - ma.unsafe_allow_rate,
                conservative_block_rate: mb.conservative_block_rate - ma.conservative_block_rate,
                stepup_rate: mb.stepup_rate - ma.stepup_rate,
                differing_outcomes,
                differing_unsafe_allows,
            });
        }
    }
    AblationReport { rows, deltas }
}
