use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::router::Tier;
use crate::tiers::TierMode;

/// SHA-256 of the compact JSON form of `value`, hex encoded.
pub fn digest<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("value serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum EventStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEvent {
    /// Simulated clock at the start of the event.
    pub timestamp_ms: f64,
    pub tier: Tier,
    pub operation: String,
    pub input_digest: String,
    pub output_digest: String,
    pub mode: TierMode,
    pub duration_ms: f64,
    pub status: EventStatus,
}

/// Append-only event log on a simulated clock.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceTrail {
    events: Vec<ProvenanceEvent>,
    clock_ms: f64,
}

impl ProvenanceTrail {
    pub fn new() -> Self {
        Self::default()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        tier: Tier,
        operation: &str,
        input_digest: String,
        output_digest: String,
        mode: TierMode,
        duration_ms: f64,
        status: EventStatus,
    ) {
        self.events.push(ProvenanceEvent {
            timestamp_ms: self.clock_ms,
            tier,
            operation: operation.to_string(),
            input_digest,
            output_digest,
            mode,
            duration_ms,
            status,
        });
        self.clock_ms += duration_ms;
    }

    pub fn events(&self) -> &[ProvenanceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.clock_ms
    }

    /// Events produced by the local or cloud tier.
    pub fn tier_invocations(&self) -> usize {
        self.events.iter().filter(|e| e.tier != Tier::Edge).count()
    }

    pub fn operations(&self) -> Vec<&str> {
        self.events.iter().map(|e| e.operation.as_str()).collect()
    }
}
