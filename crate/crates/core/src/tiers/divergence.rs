use primitive_types::U256;
use serde::{Deserialize, Serialize};

use crate::intent::{Intent, RiskFlag};
use crate::primitives::near_max_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceWeights {
    pub action: f64,
    pub target: f64,
    pub amount_bucket: f64,
    pub approval_flags: f64,
}

impl Default for DivergenceWeights {
    fn default() -> Self {
        DivergenceWeights {
            action: 0.5,
            target: 0.2,
            amount_bucket: 0.15,
            approval_flags: 0.15,
        }
    }
}

impl DivergenceWeights {
    pub fn is_valid(&self) -> bool {
        let w = [self.action, self.target, self.amount_bucket, self.approval_flags];
        w.iter().all(|x| x.is_finite() && *x >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-9
    }
}

/// Order-of-magnitude class of an amount: none, zero, below 1e18, below
/// 1e24, below the near-max threshold, near-max.
pub fn amount_bucket(amount: Option<U256>) -> u8 {
    match amount {
        None => 0,
        Some(a) if a.is_zero() => 1,
        Some(a) if a < U256::exp10(18) => 2,
        Some(a) if a < U256::exp10(24) => 3,
        Some(a) if a < near_max_threshold() => 4,
        Some(_) => 5,
    }
}

fn approval_flags(i: &Intent) -> (bool, bool) {
    (i.unlimited_approval, i.has(RiskFlag::UnlimitedApproval))
}

pub fn intent_divergence(edge: &Intent, local: &Intent) -> f64 {
    intent_divergence_with(edge, local, &DivergenceWeights::default())
}

/// Weighted field mismatch between two readings of the same request.
pub fn intent_divergence_with(edge: &Intent, local: &Intent, w: &DivergenceWeights) -> f64 {
    let mut d = 0.0;
    if edge.action != local.action {
        d += w.action;
    }
    if edge.target != local.target {
        d += w.target;
    }
    if amount_bucket(edge.amount) != amount_bucket(local.amount) {
        d += w.amount_bucket;
    }
    if approval_flags(edge) != approval_flags(local) {
        d += w.approval_flags;
    }
    d.clamp(0.0, 1.0)
}
