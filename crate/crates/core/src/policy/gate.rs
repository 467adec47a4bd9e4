use serde::{Deserialize, Serialize};

use super::rules::{first_match, Verdict};
use super::Policy;
use crate::intent::{risk_features, Intent, RiskFeatureVector, RiskFlag};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GateError {
    #[error("risk flag {0:?} has no configured weight")]
    UnknownFlag(RiskFlag),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DecisionReason {
    Clean,
    ConfidenceBelowThreshold,
    RiskAboveThreshold,
    RuleMatch { id: String },
}

/// Edge verdict. `Allow` always carries `Clean`; an allow-rule hit is kept in `matched_rule`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    pub reason: DecisionReason,
    pub gamma: f64,
    pub rho: f64,
    pub matched_rule: Option<String>,
}

/// `min(1, Σ weight · indicator)` over every flag of the vector.
pub fn compute_edge_risk(features: &RiskFeatureVector, policy: &Policy) -> Result<f64, GateError> {
    let mut sum = 0.0;
    for (flag, on) in features.iter() {
        let w = policy
            .flag_weights
            .get(&flag)
            .ok_or(GateError::UnknownFlag(flag))?;
        if on {
            sum += w;
        }
    }
    Ok(sum.min(1.0))
}

/// Deterministic signing-time gate. Rules are evaluated first in list order;
/// otherwise the step-up rule fires on `γ < τ_conf` or `ρ > τ_risk`.
/// An allow-rule cannot release an intent whose confidence is below `τ_conf`.
pub fn evaluate_gate(intent: &Intent, policy: &Policy) -> Decision {
    let gamma = intent.confidence;
    // A weightless flag is scored as maximal risk.
    let rho = compute_edge_risk(&risk_features(intent), policy).unwrap_or(1.0);
    let decision = |verdict, reason, matched_rule| Decision {
        verdict,
        reason,
        gamma,
        rho,
        matched_rule,
    };
    let low_confidence = gamma < policy.tau_conf;

    if let Some(rule) = first_match(intent, policy) {
        let id = Some(rule.id.clone());
        return match rule.verdict {
            Verdict::Allow if low_confidence => {
                decision(Verdict::StepUp, DecisionReason::ConfidenceBelowThreshold, id)
            }
            Verdict::Allow => decision(Verdict::Allow, DecisionReason::Clean, id),
            v => decision(v, DecisionReason::RuleMatch { id: rule.id.clone() }, id),
        };
    }
    if low_confidence {
        decision(Verdict::StepUp, DecisionReason::ConfidenceBelowThreshold, None)
    } else if rho > policy.tau_risk {
        decision(Verdict::StepUp, DecisionReason::RiskAboveThreshold, None)
    } else {
        decision(Verdict::Allow, DecisionReason::Clean, None)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use primitive_types::U256;

    use super::*;
    use crate::intent::Action;
    use crate::policy::{Rule, RuleMatch};
    use crate::primitives::Address;

    fn intent(conf: f64, flags: &[RiskFlag]) -> Intent {
        Intent {
            action: Action::Transfer,
            target: Some(Address([5; 20])),
            amount: Some(U256::from(1)),
            unlimited_approval: false,
            risk_flags: flags.iter().copied().collect(),
            confidence: conf,
        }
    }

    #[test]
    fn edge_risk_cases() {
        let p = Policy::default();
        assert_eq!(compute_edge_risk(&risk_features(&intent(1.0, &[])), &p), Ok(0.0));
        let only = intent(1.0, &[RiskFlag::UnlimitedApproval]);
        assert_eq!(compute_edge_risk(&risk_features(&only), &p), Ok(0.6));
        let all = intent(1.0, &RiskFlag::ALL);
        // Default weights sum past 1.
        assert_eq!(compute_edge_risk(&risk_features(&all), &p), Ok(1.0));
    }

    #[test]
    fn weights_summing_to_1_7_clamp() {
        let mut p = Policy::default();
        p.flag_weights = RiskFlag::ALL
            .iter()
            .zip([0.5, 0.3, 0.3, 0.2, 0.2, 0.2])
            .map(|(f, w)| (*f, w))
            .collect();
        let all = intent(1.0, &RiskFlag::ALL);
        assert_eq!(compute_edge_risk(&risk_features(&all), &p), Ok(1.0));
    }

    #[test]
    fn missing_weight_is_unknown_flag() {
        let mut p = Policy::default();
        p.flag_weights = BTreeMap::new();
        assert_eq!(
            compute_edge_risk(&risk_features(&intent(1.0, &[])), &p),
            Err(GateError::UnknownFlag(RiskFlag::UnlimitedApproval))
        );
        // The gate scores the unweighted vector as maximal risk.
        assert_eq!(evaluate_gate(&intent(0.95, &[]), &p).verdict, Verdict::StepUp);
    }

    #[test]
    fn clean_high_confidence_allows() {
        let mut p = Policy::default();
        p.flag_weights.insert(RiskFlag::UiMismatchCandidate, 0.1);
        let d = evaluate_gate(&intent(0.95, &[RiskFlag::UiMismatchCandidate]), &p);
        assert_eq!(d.verdict, Verdict::Allow);
        assert_eq!(d.reason, DecisionReason::Clean);
        assert!((d.rho - 0.1).abs() < 1e-12);
    }

    #[test]
    fn low_confidence_steps_up() {
        let d = evaluate_gate(&intent(0.4, &[]), &Policy::default());
        assert_eq!(d.verdict, Verdict::StepUp);
        assert_eq!(d.reason, DecisionReason::ConfidenceBelowThreshold);
    }

    #[test]
    fn threshold_equality_does_not_step_up() {
        let mut p = Policy::default();
        p.tau_conf = 0.75;
        assert_eq!(evaluate_gate(&intent(0.75, &[]), &p).verdict, Verdict::Allow);
        p.flag_weights.insert(RiskFlag::UnknownSelector, 0.5);
        let d = evaluate_gate(&intent(0.9, &[RiskFlag::UnknownSelector]), &p);
        assert_eq!(d.rho, p.tau_risk);
        assert_eq!(d.verdict, Verdict::Allow);
    }

    #[test]
    fn high_risk_steps_up() {
        let d = evaluate_gate(&intent(1.0, &[RiskFlag::UnlimitedApproval]), &Policy::default());
        assert_eq!(d.verdict, Verdict::StepUp);
        assert_eq!(d.reason, DecisionReason::RiskAboveThreshold);
    }

    #[test]
    fn block_rule_precedes_thresholds() {
        let mut p = Policy::default();
        p.rules.push(Rule {
            id: "block_unlimited".into(),
            when: RuleMatch {
                actions: vec![Action::Approve, Action::Permit],
                flags_any: BTreeSet::from([RiskFlag::UnlimitedApproval]),
                target_allowlisted: Some(false),
                ..Default::default()
            },
            verdict: Verdict::Block,
        });
        let mut i = intent(1.0, &[RiskFlag::UnlimitedApproval]);
        i.action = Action::Approve;
        i.amount = Some(U256::MAX);
        i.unlimited_approval = true;
        let d = evaluate_gate(&i, &p);
        assert_eq!(d.verdict, Verdict::Block);
        assert_eq!(
            d.reason,
            DecisionReason::RuleMatch {
                id: "block_unlimited".into()
            }
        );
        // Allowlisted spender is not caught by the rule and falls through to risk.
        p.allowlist.insert(Address([5; 20]));
        assert_eq!(evaluate_gate(&i, &p).reason, DecisionReason::RiskAboveThreshold);
    }

    #[test]
    fn allow_rule_cannot_release_low_confidence() {
        let mut p = Policy::default();
        p.rules.push(Rule {
            id: "allow_all".into(),
            when: RuleMatch::default(),
            verdict: Verdict::Allow,
        });
        let d = evaluate_gate(&intent(0.2, &[]), &p);
        assert_eq!(d.verdict, Verdict::StepUp);
        let d = evaluate_gate(&intent(0.9, &[RiskFlag::UnlimitedApproval]), &p);
        assert_eq!(d.verdict, Verdict::Allow);
        assert_eq!(d.reason, DecisionReason::Clean);
        assert_eq!(d.matched_rule.as_deref(), Some("allow_all"));
    }
}
