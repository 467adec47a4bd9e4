use serde::{Deserialize, Serialize};

use super::{Feature, PublicContext, SynthesisFeatures, TierConfig, TierError, TierMode};
use crate::intent::Action;
use crate::primitives::Selector;
use crate::policy::{default_value_buckets, PayloadField};
use crate::sanitizer::{FieldAction, SanitizedPayload};

pub const STANDARD_FEATURES: [&str; 5] = [
    "destination_risk",
    "value_risk",
    "selector_known",
    "calldata_present",
    "gap_fraction",
];

pub const FORESIGHT_FEATURES: [&str; 3] = ["call_category_risk", "historical_block_rate", "foresight_risk"];

pub const FEATURE_NAMES: [&str; 8] = [
    "destination_risk",
    "value_risk",
    "selector_known",
    "calldata_present",
    "gap_fraction",
    "call_category_risk",
    "historical_block_rate",
    "foresight_risk",
];

/// Risk assumed for an input the sanitized payload does not carry.
const GAP_RISK: f64 = 0.5;

/// Public call category derived from the exported selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CallCategory {
    Native,
    Transfer,
    Swap,
    Approval,
    Delegate,
    Governance,
    UnknownCall,
}

impl CallCategory {
    pub fn key(self) -> &'static str {
        match self {
            CallCategory::Native => "native",
            CallCategory::Transfer => "transfer",
            CallCategory::Swap => "swap",
            CallCategory::Approval => "approval",
            CallCategory::Delegate => "delegate",
            CallCategory::Governance => "governance",
            CallCategory::UnknownCall => "unknown-call",
        }
    }

    fn of_action(action: Action) -> Self {
        match action {
            Action::Transfer => CallCategory::Transfer,
            Action::Approve | Action::Permit => CallCategory::Approval,
            Action::Swap => CallCategory::Swap,
            Action::DelegateAction => CallCategory::Delegate,
            Action::GovernanceAction => CallCategory::Governance,
            Action::Unknown => CallCategory::UnknownCall,
        }
    }
}

fn value_risk(label: &str) -> Option<f64> {
    let buckets = default_value_buckets();
    let idx = buckets.iter().position(|b| b.label == label)?;
    Some(idx as f64 / (buckets.len() - 1).max(1) as f64)
}

/// Advisory feature synthesis from the sanitized payload and public signals
/// only. Standard mode yields the five risk-table features; Foresight appends
/// the category risk, historical block rate and their composite.
pub fn cloud_synthesize(
    sanitized: &SanitizedPayload,
    ctx: &PublicContext,
    mode: TierMode,
    config: &TierConfig,
) -> Result<SynthesisFeatures, TierError> {
    if mode == TierMode::Reflect {
        return Err(TierError::InvalidMode(mode));
    }
    config.call.admit(config.deadline_default_ms)?;

    let f = &sanitized.fields;
    let mut manifest = Vec::new();
    let mut gaps: Vec<&str> = Vec::new();

    let destination_risk = match f.destination_category {
        Some(cat) => {
            let key = serde_json::to_value(cat)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            manifest.push(format!("risk_table:{key}"));
            config.risk_table.get(&key).copied().unwrap_or(GAP_RISK)
        }
        None => {
            gaps.push("destination_category");
            config.risk_table.get("unknown").copied().unwrap_or(GAP_RISK)
        }
    };

    let value_risk = match f.value_bucket.as_deref().and_then(value_risk) {
        Some(v) => {
            manifest.push("value_bucket".into());
            v
        }
        None => {
            gaps.push("value_bucket");
            GAP_RISK
        }
    };

    let calldata_coarsened = sanitized.action_of(PayloadField::Calldata) == Some(FieldAction::Coarsened);
    let selector = f.calldata_selector.or_else(|| {
        f.calldata
            .as_deref()
            .and_then(|c| c.get(..10)?.parse::<Selector>().ok())
    });
    let native = selector.is_none()
        && (f.calldata.as_deref() == Some("0x") || (calldata_coarsened && f.calldata.is_none()));
    let (selector_known, category) = if native {
        manifest.push("selector:native".into());
        (1.0, Some(CallCategory::Native))
    } else if let Some(s) = selector {
        manifest.push(format!("selector:{s}"));
        match config.registry.get(&s) {
            Some(e) => (1.0, Some(CallCategory::of_action(e.action))),
            None => (0.0, Some(CallCategory::UnknownCall)),
        }
    } else {
        gaps.push("calldata_selector");
        (GAP_RISK, None)
    };
    let calldata_present = if native { 0.0 } else { 1.0 };
    let gap_fraction = gaps.len() as f64 / 3.0;

    let mut features = vec![
        ("destination_risk", destination_risk),
        ("value_risk", value_risk),
        ("selector_known", selector_known),
        ("calldata_present", calldata_present),
        ("gap_fraction", gap_fraction),
    ];

    if mode == TierMode::Foresight {
        let cat_key = category.map(CallCategory::key);
        let call_category_risk = match cat_key.and_then(|k| ctx.ecosystem_risk_table.get(k)) {
            Some(r) => *r,
            None => {
                gaps.push("call_category");
                GAP_RISK
            }
        };
        let hist = &ctx.aggregate_history;
        let historical_block_rate = cat_key
            .and_then(|k| hist.by_category.get(k))
            .and_then(|c| c.block_rate())
            .or_else(|| hist.overall.block_rate())
            .unwrap_or(0.0);
        manifest.push("R_risk".into());
        manifest.push("H_hist".into());
        let foresight_risk =
            0.5 * destination_risk + 0.3 * call_category_risk + 0.2 * historical_block_rate;
        features.push(("call_category_risk", call_category_risk));
        features.push(("historical_block_rate", historical_block_rate));
        features.push(("foresight_risk", foresight_risk.clamp(0.0, 1.0)));
    }
    manifest.extend(gaps.iter().map(|g| format!("gap:{g}")));

    Ok(SynthesisFeatures {
        features: features
            .into_iter()
            .map(|(name, value)| Feature {
                name: name.to_string(),
                value,
            })
            .collect(),
        mode_used: mode,
        inputs_manifest: manifest,
    })
}
