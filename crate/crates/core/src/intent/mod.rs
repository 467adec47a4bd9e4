//! Edge intent extraction: calldata decoding, action classification and the
//! deterministic confidence score.

pub mod abi;
pub mod registry;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use primitive_types::U256;
use serde::{Deserialize, Serialize};

use crate::primitives::{near_max_threshold, Address, Selector};
use abi::{decode_args, encode_args, AbiValue};
pub use registry::{RegistryEntry, RegistryError, RegistryRecord, SelectorRegistry};

/// Raw signing-time transaction. Field names follow the transaction JSON schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionPayload {
    pub chain_id: u64,
    #[serde(rename = "from")]
    pub sender: Address,
    #[serde(rename = "to")]
    pub destination: Option<Address>,
    #[serde(with = "crate::primitives::u256_dec")]
    pub value: U256,
    #[serde(rename = "data", with = "crate::primitives::hex_bytes")]
    pub calldata: Vec<u8>,
    pub gas_limit: u64,
    pub nonce: u64,
    #[serde(default)]
    pub ui_claim: Option<String>,
}

impl TransactionPayload {
    pub fn from_json(doc: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(doc)
    }

    pub fn selector(&self) -> Option<Selector> {
        let head: [u8; 4] = self.calldata.get(..4)?.try_into().ok()?;
        Some(Selector(head))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CallKind {
    NativeTransfer,
    KnownFunction,
    UnknownFunction,
    ContractCreation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedCall {
    pub kind: CallKind,
    pub selector: Option<Selector>,
    pub signature: Option<String>,
    pub args: Vec<AbiValue>,
    /// Fraction of calldata bytes (selector included) consumed by the decode.
    pub decode_completeness: f64,
    pub args_plausible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Transfer,
    Approve,
    Permit,
    Swap,
    DelegateAction,
    GovernanceAction,
    Unknown,
}

impl Action {
    pub fn is_approval(self) -> bool {
        matches!(self, Action::Approve | Action::Permit)
    }

    /// Actions that hand spending or voting authority to another party.
    pub fn grants_authority(self) -> bool {
        matches!(self, Action::Approve | Action::Permit | Action::DelegateAction)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskFlag {
    UnlimitedApproval,
    UnusualDelegate,
    PermissionAmplification,
    UnknownSelector,
    ValueWithUnknownCall,
    UiMismatchCandidate,
}

impl RiskFlag {
    pub const ALL: [RiskFlag; 6] = [
        RiskFlag::UnlimitedApproval,
        RiskFlag::UnusualDelegate,
        RiskFlag::PermissionAmplification,
        RiskFlag::UnknownSelector,
        RiskFlag::ValueWithUnknownCall,
        RiskFlag::UiMismatchCandidate,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub action: Action,
    pub target: Option<Address>,
    #[serde(with = "crate::primitives::opt_u256_dec")]
    pub amount: Option<U256>,
    pub unlimited_approval: bool,
    pub risk_flags: BTreeSet<RiskFlag>,
    pub confidence: f64,
}

impl Intent {
    pub fn has(&self, flag: RiskFlag) -> bool {
        self.risk_flags.contains(&flag)
    }
}

/// Weights of the edge confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceWeights {
    pub decode: f64,
    pub registry: f64,
    pub args: f64,
    pub unknown_cap: f64,
}

impl Default for ConfidenceWeights {
    fn default() -> Self {
        ConfidenceWeights {
            decode: 0.5,
            registry: 0.3,
            args: 0.2,
            unknown_cap: 0.3,
        }
    }
}

/// Function names that hand out account-level control rather than a bounded allowance.
const AUTHORITY_GRANTING: &[&str] = &[
    "setApprovalForAll",
    "transferOwnership",
    "grantRole",
    "upgradeTo",
    "upgradeToAndCall",
    "setOperator",
];

/// Decodes calldata against the registry. Total: malformed input yields an
/// `UnknownFunction` with whatever coverage the best-effort decode reached.
pub fn decode_calldata(payload: &TransactionPayload, registry: &SelectorRegistry) -> DecodedCall {
    let data = &payload.calldata;
    let unknown = |selector, completeness| DecodedCall {
        kind: CallKind::UnknownFunction,
        selector,
        signature: None,
        args: Vec::new(),
        decode_completeness: completeness,
        args_plausible: false,
    };
    if payload.destination.is_none() {
        return DecodedCall {
            kind: CallKind::ContractCreation,
            selector: None,
            signature: None,
            args: Vec::new(),
            decode_completeness: 0.0,
            args_plausible: false,
        };
    }
    if data.is_empty() {
        return DecodedCall {
            kind: CallKind::NativeTransfer,
            selector: None,
            signature: None,
            args: Vec::new(),
            decode_completeness: 1.0,
            args_plausible: true,
        };
    }
    let Some(selector) = payload.selector() else {
        return unknown(None, 0.0);
    };
    let total = data.len() as f64;
    let Some(entry) = registry.get(&selector) else {
        return unknown(Some(selector), 4.0 / total);
    };
    let decoded = decode_args(&entry.params, &data[4..]);
    let completeness = (4 + decoded.covered) as f64 / total;
    match decoded.values {
        Ok(args) => DecodedCall {
            kind: CallKind::KnownFunction,
            selector: Some(selector),
            signature: Some(entry.signature.clone()),
            args,
            decode_completeness: completeness,
            args_plausible: decoded.plausible,
        },
        Err(_) => unknown(Some(selector), completeness),
    }
}

/// Canonical-only decode: every byte consumed, every value in range, and the
/// argument bytes equal to their own re-encoding. Used by the local critique pass.
pub fn decode_strict(payload: &TransactionPayload, registry: &SelectorRegistry) -> Option<DecodedCall> {
    let call = decode_calldata(payload, registry);
    match call.kind {
        CallKind::NativeTransfer => Some(call),
        CallKind::KnownFunction
            if call.args_plausible && encode_args(&call.args) == payload.calldata[4..] =>
        {
            Some(call)
        }
        _ => None,
    }
}

/// Maps free text from the interface to the action it advertises, if any.
pub fn claimed_action(claim: &str) -> Option<Action> {
    claim
        .split(|c: char| !c.is_ascii_alphanumeric())
        .find_map(|word| match word.to_ascii_lowercase().as_str() {
            "transfer" | "send" | "pay" => Some(Action::Transfer),
            "approve" | "approval" | "allow" => Some(Action::Approve),
            "permit" => Some(Action::Permit),
            "swap" | "trade" | "exchange" => Some(Action::Swap),
            "delegate" => Some(Action::DelegateAction),
            "vote" | "propose" | "governance" => Some(Action::GovernanceAction),
            _ => None,
        })
}

fn claim_matches(claimed: Action, actual: Action) -> bool {
    claimed == actual || (claimed.is_approval() && actual.is_approval())
}

/// Target is the last top-level address before the first amount-like
/// argument (uint or bool); with no amount-like argument, the last address.
fn counterparty(args: &[AbiValue]) -> Option<Address> {
    let mut last = None;
    for a in args {
        match a {
            AbiValue::Address(addr) => last = Some(*addr),
            AbiValue::Uint(_) | AbiValue::Bool(_) => return last,
            _ => {}
        }
    }
    last
}

fn first_uint(args: &[AbiValue]) -> Option<U256> {
    args.iter().find_map(|a| match a {
        AbiValue::Uint(v) => Some(*v),
        AbiValue::Tuple(items) => first_uint(items),
        _ => None,
    })
}

fn approval_amount(args: &[AbiValue]) -> Option<U256> {
    args.iter().find_map(|a| match a {
        AbiValue::Uint(v) => Some(*v),
        AbiValue::Bool(true) => Some(U256::MAX),
        AbiValue::Bool(false) => Some(U256::zero()),
        _ => None,
    })
}

pub fn classify_intent(
    decoded: &DecodedCall,
    payload: &TransactionPayload,
    registry: &SelectorRegistry,
) -> Intent {
    classify_intent_with(decoded, payload, registry, &ConfidenceWeights::default())
}

/// Pure classification of a decoded call into intent, flags and confidence.
pub fn classify_intent_with(
    decoded: &DecodedCall,
    payload: &TransactionPayload,
    registry: &SelectorRegistry,
    weights: &ConfidenceWeights,
) -> Intent {
    let mut flags = BTreeSet::new();
    let entry = decoded.selector.as_ref().and_then(|s| registry.get(s));
    let nonzero_value = (!payload.value.is_zero()).then_some(payload.value);

    let (action, target, amount) = match decoded.kind {
        CallKind::NativeTransfer => (Action::Transfer, payload.destination, Some(payload.value)),
        CallKind::ContractCreation => (Action::Unknown, None, nonzero_value),
        CallKind::UnknownFunction => (Action::Unknown, payload.destination, nonzero_value),
        CallKind::KnownFunction => {
            let action = entry.map_or(Action::Unknown, |e| e.action);
            let args = &decoded.args;
            match action {
                Action::Approve | Action::Permit => {
                    (action, counterparty(args), approval_amount(args))
                }
                Action::Transfer | Action::DelegateAction => {
                    (action, counterparty(args), first_uint(args))
                }
                Action::Swap => (
                    action,
                    payload.destination,
                    nonzero_value.or_else(|| first_uint(args)),
                ),
                Action::GovernanceAction => (action, payload.destination, None),
                Action::Unknown => (action, payload.destination, nonzero_value),
            }
        }
    };

    if matches!(decoded.kind, CallKind::UnknownFunction | CallKind::ContractCreation) {
        flags.insert(RiskFlag::UnknownSelector);
        if !payload.value.is_zero() {
            flags.insert(RiskFlag::ValueWithUnknownCall);
        }
    }
    let unlimited_approval = action.is_approval() && amount == Some(U256::MAX);
    if action.is_approval() && amount.is_some_and(|a| a >= near_max_threshold()) {
        flags.insert(RiskFlag::UnlimitedApproval);
    }
    if let Some(e) = entry.filter(|_| decoded.kind == CallKind::KnownFunction) {
        let revoking = decoded.args.iter().any(|a| a.as_bool() == Some(false));
        if AUTHORITY_GRANTING.contains(&e.name.as_str()) && !revoking {
            flags.insert(RiskFlag::PermissionAmplification);
        }
    }
    if action == Action::DelegateAction && target.is_some_and(|t| t != payload.sender && !t.is_zero()) {
        flags.insert(RiskFlag::UnusualDelegate);
    }
    if let Some(claimed) = payload.ui_claim.as_deref().and_then(claimed_action) {
        if action != Action::Unknown && !claim_matches(claimed, action) {
            flags.insert(RiskFlag::UiMismatchCandidate);
        }
    }

    let registry_hit = decoded.kind == CallKind::NativeTransfer || entry.is_some();
    let mut confidence = weights.decode * decoded.decode_completeness
        + weights.registry * f64::from(u8::from(registry_hit))
        + weights.args * f64::from(u8::from(decoded.args_plausible));
    if decoded.kind == CallKind::UnknownFunction || action == Action::Unknown {
        confidence = confidence.min(weights.unknown_cap);
    }

    Intent {
        action,
        target,
        amount,
        unlimited_approval,
        risk_flags: flags,
        confidence: confidence.clamp(0.0, 1.0),
    }
}

/// One indicator per risk flag, in `RiskFlag::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RiskFeatureVector {
    indicators: [bool; RiskFlag::ALL.len()],
}

impl RiskFeatureVector {
    pub fn get(&self, flag: RiskFlag) -> bool {
        self.indicators[flag.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (RiskFlag, bool)> + '_ {
        RiskFlag::ALL.iter().map(|f| (*f, self.indicators[f.index()]))
    }

    pub fn count(&self) -> usize {
        self.indicators.iter().filter(|b| **b).count()
    }
}

impl Serialize for RiskFeatureVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<RiskFlag, u8> = self.iter().map(|(f, b)| (f, u8::from(b))).collect();
        map.serialize(s)
    }
}

pub fn risk_features(intent: &Intent) -> RiskFeatureVector {
    let mut v = RiskFeatureVector::default();
    for f in &intent.risk_flags {
        v.indicators[f.index()] = true;
    }
    v
}

/// Parse and classify in one step.
pub fn extract_intent(payload: &TransactionPayload, registry: &SelectorRegistry) -> (DecodedCall, Intent) {
    let decoded = decode_calldata(payload, registry);
    let intent = classify_intent(&decoded, payload, registry);
    (decoded, intent)
}
