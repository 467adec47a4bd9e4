//! Signing-time policy: thresholds, ordered rules, sensitivity labels and
//! routing weights, plus the deterministic edge gate.

mod gate;
mod rules;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use primitive_types::U256;
use serde::{Deserialize, Serialize};

use crate::intent::RiskFlag;
use crate::primitives::Address;
use crate::router::PlanPath;

pub use gate::{compute_edge_risk, evaluate_gate, Decision, DecisionReason, GateError};
pub use rules::{Rule, RuleMatch, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("policy document does not match the schema: {0}")]
    Schema(String),
    #[error("`{field}` = {value} is outside [0, 1]")]
    Range { field: String, value: f64 },
    #[error("loss matrix must penalize (unsafe, Allow) more than (safe, Block): {unsafe_allow} <= {safe_block}")]
    LossMatrix { unsafe_allow: f64, safe_block: f64 },
    #[error("invalid policy: {0}")]
    Invalid(String),
}

/// Penalty for one ground-truth label across the three verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossRow {
    #[serde(rename = "Allow")]
    pub allow: f64,
    #[serde(rename = "Block")]
    pub block: f64,
    #[serde(rename = "StepUp")]
    pub step_up: f64,
}

impl LossRow {
    pub fn get(&self, verdict: Verdict) -> f64 {
        match verdict {
            Verdict::Allow => self.allow,
            Verdict::Block => self.block,
            Verdict::StepUp => self.step_up,
        }
    }
}

/// The 2x3 decision loss `ℓ(label, verdict)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossMatrix {
    pub safe: LossRow,
    #[serde(rename = "unsafe")]
    pub unsafe_: LossRow,
}

impl Default for LossMatrix {
    fn default() -> Self {
        LossMatrix {
            safe: LossRow {
                allow: 0.0,
                block: 1.0,
                step_up: 0.5,
            },
            unsafe_: LossRow {
                allow: 10.0,
                block: 0.0,
                step_up: 0.5,
            },
        }
    }
}

/// Payload fields addressable by sensitivity labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadField {
    ChainId,
    #[serde(alias = "from")]
    Sender,
    #[serde(alias = "to")]
    Destination,
    Value,
    #[serde(alias = "data")]
    Calldata,
    GasLimit,
    Nonce,
    UiClaim,
}

impl PayloadField {
    pub const ALL: [PayloadField; 8] = [
        PayloadField::ChainId,
        PayloadField::Sender,
        PayloadField::Destination,
        PayloadField::Value,
        PayloadField::Calldata,
        PayloadField::GasLimit,
        PayloadField::Nonce,
        PayloadField::UiClaim,
    ];

    pub fn key(self) -> &'static str {
        match self {
            PayloadField::ChainId => "chain_id",
            PayloadField::Sender => "sender",
            PayloadField::Destination => "destination",
            PayloadField::Value => "value",
            PayloadField::Calldata => "calldata",
            PayloadField::GasLimit => "gas_limit",
            PayloadField::Nonce => "nonce",
            PayloadField::UiClaim => "ui_claim",
        }
    }
}

impl fmt::Display for PayloadField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// `public` fields are exported verbatim, `coarsen` fields only in bucketed
/// form, `forbid` fields never. `sensitive` is accepted as an alias of `forbid`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityLabel {
    Public,
    Coarsen,
    #[serde(alias = "sensitive")]
    Forbid,
}

/// How the sanitizer treats a field that carries no label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingLabel {
    #[default]
    Public,
    Sensitive,
    /// Refuse to project a payload while any field is unlabeled.
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueBucket {
    pub label: String,
    /// Exclusive upper bound in wei; `None` for the open top bucket.
    #[serde(default, with = "crate::primitives::opt_u256_dec")]
    pub below_wei: Option<U256>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationFactors {
    pub local: f64,
    pub cloud: f64,
    pub cloud_local: f64,
}

impl Default for VerificationFactors {
    fn default() -> Self {
        VerificationFactors {
            local: 0.3,
            cloud: 0.6,
            cloud_local: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Policy {
    pub tau_conf: f64,
    pub tau_risk: f64,
    pub epsilon: f64,
    pub latency_budget_ms: u64,
    pub beta: f64,
    pub loss_matrix: LossMatrix,
    pub rules: Vec<Rule>,
    pub sensitivity_labels: BTreeMap<PayloadField, SensitivityLabel>,
    pub missing_label: MissingLabel,
    pub value_buckets: Vec<ValueBucket>,
    pub cloud_enabled: bool,
    pub allowlist: BTreeSet<Address>,
    pub flag_weights: BTreeMap<RiskFlag, f64>,
    pub plan_costs: BTreeMap<PlanPath, f64>,
    pub verification_factors: VerificationFactors,
}

pub fn default_flag_weights() -> BTreeMap<RiskFlag, f64> {
    BTreeMap::from([
        (RiskFlag::UnlimitedApproval, 0.6),
        (RiskFlag::UnusualDelegate, 0.55),
        (RiskFlag::PermissionAmplification, 0.6),
        (RiskFlag::UnknownSelector, 0.4),
        (RiskFlag::ValueWithUnknownCall, 0.4),
        (RiskFlag::UiMismatchCandidate, 0.55),
    ])
}

pub fn default_plan_costs() -> BTreeMap<PlanPath, f64> {
    BTreeMap::from([
        (PlanPath::EdgeOnly, 1.0),
        (PlanPath::EdgeLocal, 4.0),
        (PlanPath::EdgeCloud, 3.0),
        (PlanPath::EdgeCloudLocal, 7.0),
    ])
}

fn eth(n: u64) -> U256 {
    U256::from(n) * U256::exp10(18)
}

pub fn default_value_buckets() -> Vec<ValueBucket> {
    vec![
        ValueBucket {
            label: "<1 ETH".into(),
            below_wei: Some(eth(1)),
        },
        ValueBucket {
            label: "1-10 ETH".into(),
            below_wei: Some(eth(10)),
        },
        ValueBucket {
            label: ">10 ETH".into(),
            below_wei: None,
        },
    ]
}

impl Default for Policy {
    fn default() -> Self {
        use PayloadField::*;
        use SensitivityLabel::*;
        Policy {
            tau_conf: 0.8,
            tau_risk: 0.5,
            epsilon: 0.25,
            latency_budget_ms: 500,
            beta: 0.02,
            loss_matrix: LossMatrix::default(),
            rules: Vec::new(),
            sensitivity_labels: BTreeMap::from([
                (ChainId, Public),
                (Sender, Forbid),
                (Destination, Coarsen),
                (Value, Coarsen),
                (Calldata, Coarsen),
                (GasLimit, Public),
                (Nonce, Forbid),
            ]),
            missing_label: MissingLabel::Public,
            value_buckets: default_value_buckets(),
            cloud_enabled: false,
            allowlist: BTreeSet::new(),
            flag_weights: default_flag_weights(),
            plan_costs: default_plan_costs(),
            verification_factors: VerificationFactors::default(),
        }
    }
}

/// Shipped privacy profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Default,
    Strict,
    UserOverride,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Default, Profile::Strict, Profile::UserOverride];

    fn document(self) -> &'static str {
        match self {
            Profile::Default => include_str!("../../data/policies/default.json"),
            Profile::Strict => include_str!("../../data/policies/strict.json"),
            Profile::UserOverride => include_str!("../../data/policies/user_override.json"),
        }
    }
}

impl FromStr for Profile {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" => Ok(Profile::Default),
            "strict" => Ok(Profile::Strict),
            "user_override" | "user-override" | "override" => Ok(Profile::UserOverride),
            other => Err(PolicyError::Invalid(format!("unknown profile `{other}`"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Default => "default",
            Profile::Strict => "strict",
            Profile::UserOverride => "user_override",
        })
    }
}

fn check_unit(field: &str, value: f64) -> Result<(), PolicyError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(PolicyError::Range {
            field: field.to_string(),
            value,
        })
    }
}

impl Policy {
    pub fn profile(profile: Profile) -> Policy {
        load_policy(profile.document()).expect("shipped profile is valid")
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        check_unit("tau_conf", self.tau_conf)?;
        check_unit("tau_risk", self.tau_risk)?;
        check_unit("epsilon", self.epsilon)?;
        for (flag, w) in &self.flag_weights {
            check_unit(&format!("flag_weights.{flag:?}"), *w)?;
        }
        let vf = &self.verification_factors;
        check_unit("verification_factors.local", vf.local)?;
        check_unit("verification_factors.cloud", vf.cloud)?;
        check_unit("verification_factors.cloud_local", vf.cloud_local)?;
        if self.latency_budget_ms == 0 {
            return Err(PolicyError::Invalid("latency_budget_ms must be positive".into()));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(PolicyError::Invalid(format!("beta = {} must be >= 0", self.beta)));
        }
        let lm = &self.loss_matrix;
        let entries = [
            lm.safe.allow,
            lm.safe.block,
            lm.safe.step_up,
            lm.unsafe_.allow,
            lm.unsafe_.block,
            lm.unsafe_.step_up,
        ];
        if entries.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(PolicyError::Invalid("loss matrix entries must be finite and >= 0".into()));
        }
        if lm.unsafe_.allow <= lm.safe.block {
            return Err(PolicyError::LossMatrix {
                unsafe_allow: lm.unsafe_.allow,
                safe_block: lm.safe.block,
            });
        }
        if self.plan_costs.values().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(PolicyError::Invalid("plan costs must be finite and >= 0".into()));
        }
        let mut prev: Option<U256> = None;
        for (i, b) in self.value_buckets.iter().enumerate() {
            let last = i + 1 == self.value_buckets.len();
            match (b.below_wei, last) {
                (None, true) => {}
                (None, false) => {
                    return Err(PolicyError::Invalid("only the last value bucket may be open".into()))
                }
                (Some(bound), _) => {
                    if prev.is_some_and(|p| bound <= p) {
                        return Err(PolicyError::Invalid("value bucket bounds must increase".into()));
                    }
                    prev = Some(bound);
                }
            }
        }
        let mut ids = BTreeSet::new();
        for r in &self.rules {
            if !ids.insert(r.id.as_str()) {
                return Err(PolicyError::Invalid(format!("duplicate rule id `{}`", r.id)));
            }
        }
        Ok(())
    }

    pub fn is_allowlisted(&self, addr: Option<Address>) -> bool {
        addr.is_some_and(|a| self.allowlist.contains(&a))
    }

    pub fn plan_cost(&self, path: PlanPath) -> f64 {
        self.plan_costs
            .get(&path)
            .copied()
            .unwrap_or_else(|| default_plan_costs()[&path])
    }

    /// Effective label of a field once the missing-label rule is applied.
    pub fn label_of(&self, field: PayloadField) -> SensitivityLabel {
        match self.sensitivity_labels.get(&field) {
            Some(l) => *l,
            None => match self.missing_label {
                MissingLabel::Public => SensitivityLabel::Public,
                MissingLabel::Sensitive | MissingLabel::Reject => SensitivityLabel::Forbid,
            },
        }
    }

    pub fn unlabeled_fields(&self) -> Vec<PayloadField> {
        PayloadField::ALL
            .into_iter()
            .filter(|f| !self.sensitivity_labels.contains_key(f))
            .collect()
    }

    /// Fields whose effective label forbids export.
    pub fn forbidden_fields(&self) -> BTreeSet<PayloadField> {
        PayloadField::ALL
            .into_iter()
            .filter(|f| self.label_of(*f) == SensitivityLabel::Forbid)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }
}

/// Parses and validates a policy document. Absent keys take their defaults;
/// a partial `flag_weights` map is completed from the default weights.
pub fn load_policy(document: &str) -> Result<Policy, PolicyError> {
    let raw: serde_json::Value =
        serde_json::from_str(document).map_err(|e| PolicyError::Schema(e.to_string()))?;
    let mut policy: Policy =
        serde_json::from_value(raw.clone()).map_err(|e| PolicyError::Schema(e.to_string()))?;
    if raw.get("flag_weights").is_some() {
        for (flag, w) in default_flag_weights() {
            policy.flag_weights.entry(flag).or_insert(w);
        }
    }
    if raw.get("plan_costs").is_some() {
        for (path, c) in default_plan_costs() {
            policy.plan_costs.entry(path).or_insert(c);
        }
    }
    policy.validate()?;
    Ok(policy)
}
