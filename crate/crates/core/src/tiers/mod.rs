//! Local verifier and cloud synthesizer behind deterministic stub
//! implementations, plus the edge/local divergence metric.
//!
//! The two entry points take disjoint input types: the local tier sees the
//! raw payload and the private context, the cloud tier only ever sees a
//! `SanitizedPayload` and the public context.

mod cloud;
mod divergence;
mod local;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use primitive_types::U256;
use serde::{Deserialize, Serialize};

pub use cloud::{cloud_synthesize, CallCategory, FEATURE_NAMES, FORESIGHT_FEATURES, STANDARD_FEATURES};
pub use divergence::{amount_bucket, intent_divergence, intent_divergence_with, DivergenceWeights};
pub use local::{local_verify, LocalCheck};

use crate::intent::{Action, Intent, SelectorRegistry};
use crate::primitives::Address;

/// Trigger token selecting a tier's fast path or its audit/strategic path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum TierMode {
    #[default]
    None,
    Reflect,
    Foresight,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TierError {
    #[error("tier did not answer within {deadline_ms} ms")]
    DeadlineExceeded { deadline_ms: f64 },
    #[error("tier unavailable")]
    Unavailable,
    #[error("mode {0:?} is not valid for this tier")]
    InvalidMode(TierMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TierFault {
    Unavailable,
    Timeout,
}

/// Per-call conditions supplied by the caller: the deadline, the simulated
/// time the call takes, and an optional injected fault.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CallContext {
    pub deadline_ms: Option<f64>,
    pub latency_ms: f64,
    pub fault: Option<TierFault>,
}

impl CallContext {
    pub(crate) fn admit(&self, default_deadline_ms: u64) -> Result<(), TierError> {
        let deadline_ms = self.deadline_ms.unwrap_or(default_deadline_ms as f64);
        match self.fault {
            Some(TierFault::Unavailable) => Err(TierError::Unavailable),
            Some(TierFault::Timeout) => Err(TierError::DeadlineExceeded { deadline_ms }),
            None if self.latency_ms > deadline_ms => Err(TierError::DeadlineExceeded { deadline_ms }),
            None => Ok(()),
        }
    }
}

/// Stub configuration. `seed` stands in for the tier parameters; the stubs are
/// rule sets, so it only enters the provenance record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TierConfig {
    pub seed: u64,
    pub rule_battery: Vec<LocalCheck>,
    pub risk_table: BTreeMap<String, f64>,
    pub deadline_default_ms: u64,
    #[serde(skip)]
    pub call: CallContext,
    #[serde(skip, default = "SelectorRegistry::builtin")]
    pub registry: Arc<SelectorRegistry>,
}

impl Default for TierConfig {
    fn default() -> Self {
        TierConfig {
            seed: 0,
            rule_battery: LocalCheck::ALL.to_vec(),
            risk_table: BTreeMap::from([
                ("allowlisted".to_string(), 0.05),
                ("known-protocol".to_string(), 0.35),
                ("unknown".to_string(), 0.85),
            ]),
            deadline_default_ms: 400,
            call: CallContext::default(),
            registry: SelectorRegistry::builtin(),
        }
    }
}

impl TierConfig {
    pub fn from_json(doc: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(doc)
    }

    pub fn with_call(&self, call: CallContext) -> Self {
        TierConfig {
            call,
            ..self.clone()
        }
    }
}

/// Compact record of a past decision kept on the device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub action: Action,
    pub target: Option<Address>,
    pub allowed: bool,
}

/// User-private state. Only the local tier accepts it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrivateContext {
    pub allowlist: BTreeSet<Address>,
    /// Asset contract (zero address for the native coin) to maximum amount.
    pub exposure_limits: BTreeMap<Address, ExposureLimit>,
    pub local_history: Vec<OutcomeSummary>,
    pub preferences: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExposureLimit(#[serde(with = "crate::primitives::u256_dec")] pub U256);

impl PrivateContext {
    pub fn with_allowlist(allowlist: BTreeSet<Address>) -> Self {
        PrivateContext {
            allowlist,
            ..Default::default()
        }
    }

    pub fn previously_allowed(&self, target: Address) -> bool {
        self.local_history
            .iter()
            .any(|h| h.allowed && h.target == Some(target))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub requests: u64,
    pub blocked: u64,
}

impl CategoryCounts {
    pub fn block_rate(&self) -> Option<f64> {
        (self.requests > 0).then(|| self.blocked as f64 / self.requests as f64)
    }
}

/// Coarse ecosystem-level counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregateHistory {
    pub overall: CategoryCounts,
    pub by_category: BTreeMap<String, CategoryCounts>,
}

/// Public signals available to the cloud tier. Keys are category names, never addresses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PublicContext {
    pub ecosystem_risk_table: BTreeMap<String, f64>,
    pub aggregate_history: AggregateHistory,
    pub feed_timestamp: u64,
}

impl Default for PublicContext {
    fn default() -> Self {
        let risk = [
            ("native", 0.2),
            ("transfer", 0.25),
            ("swap", 0.3),
            ("approval", 0.6),
            ("delegate", 0.7),
            ("governance", 0.4),
            ("unknown-call", 0.8),
        ];
        let counts = [
            ("native", 1000, 10),
            ("transfer", 1000, 20),
            ("swap", 1000, 30),
            ("approval", 1000, 250),
            ("delegate", 200, 80),
            ("governance", 200, 10),
            ("unknown-call", 500, 300),
        ];
        let by_category: BTreeMap<String, CategoryCounts> = counts
            .iter()
            .map(|(k, r, b)| {
                (
                    k.to_string(),
                    CategoryCounts {
                        requests: *r,
                        blocked: *b,
                    },
                )
            })
            .collect();
        let overall = by_category.values().fold(CategoryCounts::default(), |acc, c| CategoryCounts {
            requests: acc.requests + c.requests,
            blocked: acc.blocked + c.blocked,
        });
        PublicContext {
            ecosystem_risk_table: risk.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            aggregate_history: AggregateHistory { overall, by_category },
            feed_timestamp: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalVerdict {
    pub refined_intent: Intent,
    pub risk_score: f64,
    pub explanation: String,
    pub mode_used: TierMode,
    pub checks_run: Vec<LocalCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisFeatures {
    pub features: Vec<Feature>,
    pub mode_used: TierMode,
    pub inputs_manifest: Vec<String>,
}

impl SynthesisFeatures {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.features.iter().find(|f| f.name == name).map(|f| f.value)
    }

    pub fn values(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.value).collect()
    }

    /// Largest value among the strategic-mode features, if any were produced.
    pub fn max_foresight(&self) -> Option<f64> {
        self.features
            .iter()
            .filter(|f| FORESIGHT_FEATURES.contains(&f.name.as_str()))
            .map(|f| f.value)
            .reduce(f64::max)
    }
}
