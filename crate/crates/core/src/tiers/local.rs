use serde::{Deserialize, Serialize};

use super::{LocalVerdict, PrivateContext, TierConfig, TierError, TierMode};
use crate::intent::{
    claimed_action, decode_calldata, decode_strict, classify_intent, Action, CallKind, RiskFlag,
    TransactionPayload,
};
use crate::primitives::{near_max_threshold, Address};

/// Checks of the local rule battery. The first five form the standard pass;
/// the rest are the negative-hypothesis battery and the critique pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalCheck {
    Reparse,
    Allowlist,
    Exposure,
    UnknownCall,
    ParserFlags,
    NegTargetAttackerControlled,
    NegApprovalEnablesDrain,
    NegUiContradiction,
    CritiqueRederive,
}

impl LocalCheck {
    pub const ALL: [LocalCheck; 9] = [
        LocalCheck::Reparse,
        LocalCheck::Allowlist,
        LocalCheck::Exposure,
        LocalCheck::UnknownCall,
        LocalCheck::ParserFlags,
        LocalCheck::NegTargetAttackerControlled,
        LocalCheck::NegApprovalEnablesDrain,
        LocalCheck::NegUiContradiction,
        LocalCheck::CritiqueRederive,
    ];

    pub fn is_reflective(self) -> bool {
        self >= LocalCheck::NegTargetAttackerControlled
    }
}

const W_UNLISTED_AUTHORITY: f64 = 0.35;
const W_EXPOSURE: f64 = 0.4;
const W_UNKNOWN_CALL: f64 = 0.5;
const W_UNKNOWN_CALL_VALUE: f64 = 0.3;
const W_FLAG_UNLIMITED: f64 = 0.5;
const W_FLAG_AMPLIFICATION: f64 = 0.4;
const W_FLAG_DELEGATE: f64 = 0.3;
const W_NEG_TARGET: f64 = 0.3;
const W_NEG_DRAIN: f64 = 0.3;
const W_NEG_UI: f64 = 0.7;
const W_CRITIQUE: f64 = 0.2;

fn claim_compatible(claimed: Action, actual: Action) -> bool {
    claimed == actual || (claimed.is_approval() && actual.is_approval())
}

/// Deterministic local verification. Standard mode re-parses the payload and
/// runs the allowlist, exposure and flag checks; Reflect mode adds the
/// negative hypotheses and a strict re-derivation of the intent.
pub fn local_verify(
    payload: &TransactionPayload,
    ctx: &PrivateContext,
    mode: TierMode,
    config: &TierConfig,
) -> Result<LocalVerdict, TierError> {
    if mode == TierMode::Foresight {
        return Err(TierError::InvalidMode(mode));
    }
    config.call.admit(config.deadline_default_ms)?;

    let enabled = |c: LocalCheck| {
        (mode == TierMode::Reflect || !c.is_reflective()) && config.rule_battery.contains(&c)
    };
    let registry = &config.registry;
    let decoded = decode_calldata(payload, registry);
    let mut intent = classify_intent(&decoded, payload, registry);
    let mut checks_run = vec![LocalCheck::Reparse];
    let mut findings: Vec<String> = Vec::new();
    let mut r = 0.0;
    let mut add = |w: f64, note: String| {
        r += w;
        findings.push(note);
    };

    let target_listed = intent.target.is_some_and(|t| ctx.allowlist.contains(&t));

    if enabled(LocalCheck::Allowlist) {
        checks_run.push(LocalCheck::Allowlist);
        if intent.action.grants_authority() && !target_listed {
            add(W_UNLISTED_AUTHORITY, format!("{} to a target outside the allowlist", intent.action));
        }
    }
    if enabled(LocalCheck::Exposure) {
        checks_run.push(LocalCheck::Exposure);
        let asset = if decoded.kind == CallKind::NativeTransfer {
            Some(Address::ZERO)
        } else {
            payload.destination
        };
        let limit = asset.and_then(|a| ctx.exposure_limits.get(&a));
        if let (Some(limit), Some(amount)) = (limit, intent.amount) {
            let moves_value = matches!(
                intent.action,
                Action::Transfer | Action::Approve | Action::Permit | Action::Swap
            );
            if moves_value && amount > limit.0 {
                add(W_EXPOSURE, "amount exceeds the exposure limit".into());
            }
        }
    }
    if enabled(LocalCheck::UnknownCall) {
        checks_run.push(LocalCheck::UnknownCall);
        if intent.action == Action::Unknown {
            add(W_UNKNOWN_CALL, "call could not be classified".into());
            if !payload.value.is_zero() {
                add(W_UNKNOWN_CALL_VALUE, "value attached to an unclassified call".into());
            }
        }
    }
    if enabled(LocalCheck::ParserFlags) {
        checks_run.push(LocalCheck::ParserFlags);
        for (flag, w) in [
            (RiskFlag::UnlimitedApproval, W_FLAG_UNLIMITED),
            (RiskFlag::PermissionAmplification, W_FLAG_AMPLIFICATION),
            (RiskFlag::UnusualDelegate, W_FLAG_DELEGATE),
        ] {
            if intent.has(flag) {
                add(w, format!("parser flag {flag:?}"));
            }
        }
    }

    if enabled(LocalCheck::NegTargetAttackerControlled) {
        checks_run.push(LocalCheck::NegTargetAttackerControlled);
        let sends_or_grants = matches!(
            intent.action,
            Action::Transfer | Action::Approve | Action::Permit | Action::DelegateAction
        );
        if let Some(t) = intent.target {
            if sends_or_grants && !target_listed && !ctx.previously_allowed(t) {
                add(W_NEG_TARGET, format!("target {t} is unknown to this wallet"));
            }
        }
    }
    if enabled(LocalCheck::NegApprovalEnablesDrain) {
        checks_run.push(LocalCheck::NegApprovalEnablesDrain);
        let broad = intent.amount.is_some_and(|a| a >= near_max_threshold())
            || intent.has(RiskFlag::PermissionAmplification);
        if intent.action.is_approval() && broad && !target_listed {
            add(W_NEG_DRAIN, "approval lets the spender drain the balance".into());
        }
    }
    if enabled(LocalCheck::NegUiContradiction) {
        checks_run.push(LocalCheck::NegUiContradiction);
        if let Some(claimed) = payload.ui_claim.as_deref().and_then(claimed_action) {
            if intent.action != Action::Unknown && !claim_compatible(claimed, intent.action) {
                intent.risk_flags.insert(RiskFlag::UiMismatchCandidate);
                add(
                    W_NEG_UI,
                    format!("interface claims {claimed} but the call is {}", intent.action),
                );
            }
        }
    }
    if enabled(LocalCheck::CritiqueRederive) {
        checks_run.push(LocalCheck::CritiqueRederive);
        if decoded.kind == CallKind::KnownFunction && decode_strict(payload, registry).is_none() {
            intent.action = Action::Unknown;
            add(W_CRITIQUE, "calldata is not in canonical form".into());
        }
    }

    let explanation = if findings.is_empty() {
        "no findings".to_string()
    } else {
        findings.join("; ")
    };
    Ok(LocalVerdict {
        refined_intent: intent,
        risk_score: r.min(1.0),
        explanation,
        mode_used: mode,
        checks_run,
    })
}
