use std::collections::BTreeSet;

use primitive_types::U256;
use serde::{Deserialize, Serialize};

use super::Policy;
use crate::intent::{Action, Intent, RiskFlag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Allow,
    Block,
    StepUp,
}

/// Conjunctive predicate over an intent. Empty or absent constraints match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleMatch {
    pub actions: Vec<Action>,
    pub flags_all: BTreeSet<RiskFlag>,
    pub flags_any: BTreeSet<RiskFlag>,
    /// `Some(false)` matches targets outside the allowlist, including a missing target.
    pub target_allowlisted: Option<bool>,
    #[serde(with = "crate::primitives::opt_u256_dec", skip_serializing_if = "Option::is_none")]
    pub amount_min: Option<U256>,
    #[serde(with = "crate::primitives::opt_u256_dec", skip_serializing_if = "Option::is_none")]
    pub amount_max: Option<U256>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub id: String,
    #[serde(rename = "match")]
    pub when: RuleMatch,
    pub verdict: Verdict,
}

impl RuleMatch {
    pub fn matches(&self, intent: &Intent, policy: &Policy) -> bool {
        if !self.actions.is_empty() && !self.actions.contains(&intent.action) {
            return false;
        }
        if !self.flags_all.is_subset(&intent.risk_flags) {
            return false;
        }
        if !self.flags_any.is_empty() && self.flags_any.is_disjoint(&intent.risk_flags) {
            return false;
        }
        if let Some(want) = self.target_allowlisted {
            if policy.is_allowlisted(intent.target) != want {
                return false;
            }
        }
        if let Some(min) = self.amount_min {
            if !intent.amount.is_some_and(|a| a >= min) {
                return false;
            }
        }
        if let Some(max) = self.amount_max {
            if !intent.amount.is_some_and(|a| a <= max) {
                return false;
            }
        }
        true
    }
}

impl Rule {
    pub fn matches(&self, intent: &Intent, policy: &Policy) -> bool {
        self.when.matches(intent, policy)
    }
}

/// First rule in list order whose predicate holds.
pub(crate) fn first_match<'a>(intent: &Intent, policy: &'a Policy) -> Option<&'a Rule> {
    policy.rules.iter().find(|r| r.matches(intent, policy))
}
