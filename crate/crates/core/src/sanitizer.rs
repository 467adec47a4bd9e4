//! Public projection of a payload for cloud export, and the leak audit over it.

use primitive_types::U256;
use serde::{Deserialize, Serialize};

use crate::intent::{claimed_action, Action, SelectorRegistry, TransactionPayload};
use crate::policy::{MissingLabel, PayloadField, Policy, SensitivityLabel};
use crate::primitives::{encode_0x, Address, Selector};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SanitizeError {
    #[error("field `{0}` has no sensitivity label")]
    MissingLabel(PayloadField),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DestinationCategory {
    Allowlisted,
    KnownProtocol,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldAction {
    Kept,
    Coarsened,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub field: PayloadField,
    pub action: FieldAction,
}

/// Exported data. Fields are declared in key order and `None` is skipped, so
/// the serde form is already sorted-key compact JSON.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanitizedFields {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calldata: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calldata_selector: Option<Selector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub claimed_action: Option<Action>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub destination: Option<Address>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub destination_category: Option<DestinationCategory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gas_bucket: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gas_limit: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonce: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sender: Option<Address>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ui_claim: Option<String>,
    #[serde(
        default,
        with = "crate::primitives::opt_u256_dec",
        skip_serializing_if = "Option::is_none"
    )]
    pub value: Option<U256>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_bucket: Option<String>,
}

/// Output of the projection: the exported fields plus bookkeeping that stays
/// on the device (manifest, size).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanitizedPayload {
    pub fields: SanitizedFields,
    pub manifest: Vec<ManifestEntry>,
    pub size_units: usize,
}

impl SanitizedPayload {
    fn new(fields: SanitizedFields, manifest: Vec<ManifestEntry>) -> Self {
        let size_units = size_units(&canonical_json(&fields));
        SanitizedPayload {
            fields,
            manifest,
            size_units,
        }
    }

    /// The exact byte form that leaves the device.
    pub fn canonical(&self) -> String {
        canonical_json(&self.fields)
    }

    pub fn action_of(&self, field: PayloadField) -> Option<FieldAction> {
        self.manifest.iter().find(|e| e.field == field).map(|e| e.action)
    }
}

fn canonical_json(fields: &SanitizedFields) -> String {
    serde_json::to_string(fields).expect("sanitized fields serialize")
}

/// Token count: maximal runs of characters other than whitespace and JSON
/// punctuation (`{ } [ ] : , "`).
pub fn size_units(serialized: &str) -> usize {
    serialized
        .split(|c: char| c.is_whitespace() || matches!(c, '{' | '}' | '[' | ']' | ':' | ',' | '"'))
        .filter(|t| !t.is_empty())
        .count()
}

pub fn value_bucket(value: U256, policy: &Policy) -> String {
    policy
        .value_buckets
        .iter()
        .find(|b| b.below_wei.is_none_or(|hi| value < hi))
        .map_or_else(|| "unbucketed".to_string(), |b| b.label.clone())
}

pub fn gas_bucket(gas: u64) -> &'static str {
    match gas {
        0..100_000 => "<100k",
        100_000..1_000_000 => "100k-1M",
        _ => ">=1M",
    }
}

pub fn destination_category(payload: &TransactionPayload, policy: &Policy) -> DestinationCategory {
    if policy.is_allowlisted(payload.destination) {
        DestinationCategory::Allowlisted
    } else if payload
        .selector()
        .is_some_and(|s| SelectorRegistry::builtin().contains(&s))
    {
        DestinationCategory::KnownProtocol
    } else {
        DestinationCategory::Unknown
    }
}

fn project(payload: &TransactionPayload, policy: &Policy) -> SanitizedPayload {
    use FieldAction::*;
    use PayloadField as F;
    let mut out = SanitizedFields::default();
    let mut manifest = Vec::with_capacity(PayloadField::ALL.len());
    for field in PayloadField::ALL {
        let action = match policy.label_of(field) {
            SensitivityLabel::Forbid => Dropped,
            SensitivityLabel::Public => {
                match field {
                    F::ChainId => out.chain_id = Some(payload.chain_id),
                    F::Sender => out.sender = Some(payload.sender),
                    F::Destination => out.destination = payload.destination,
                    F::Value => out.value = Some(payload.value),
                    F::Calldata => out.calldata = Some(encode_0x(&payload.calldata)),
                    F::GasLimit => out.gas_limit = Some(payload.gas_limit),
                    F::Nonce => out.nonce = Some(payload.nonce),
                    F::UiClaim => out.ui_claim = payload.ui_claim.clone(),
                }
                Kept
            }
            SensitivityLabel::Coarsen => match field {
                // Identifiers have no meaningful coarse form.
                F::ChainId | F::Sender | F::Nonce => Dropped,
                F::Destination => {
                    out.destination_category = Some(destination_category(payload, policy));
                    Coarsened
                }
                F::Value => {
                    out.value_bucket = Some(value_bucket(payload.value, policy));
                    Coarsened
                }
                F::Calldata => {
                    out.calldata_selector = payload.selector();
                    Coarsened
                }
                F::GasLimit => {
                    out.gas_bucket = Some(gas_bucket(payload.gas_limit).to_string());
                    Coarsened
                }
                F::UiClaim => {
                    out.claimed_action = payload
                        .ui_claim
                        .as_deref()
                        .map(|c| claimed_action(c).unwrap_or(Action::Unknown));
                    Coarsened
                }
            },
        };
        manifest.push(ManifestEntry { field, action });
    }
    SanitizedPayload::new(out, manifest)
}

/// `P_pub`: drops forbidden fields, coarsens `coarsen` fields and keeps public
/// ones verbatim. Fails only when the policy rejects unlabeled fields.
pub fn project_public(payload: &TransactionPayload, policy: &Policy) -> Result<SanitizedPayload, SanitizeError> {
    if policy.missing_label == MissingLabel::Reject {
        if let Some(f) = policy.unlabeled_fields().into_iter().next() {
            return Err(SanitizeError::MissingLabel(f));
        }
    }
    Ok(project(payload, policy))
}

/// Projection that treats unlabeled fields as forbidden instead of failing.
pub fn project_public_lenient(payload: &TransactionPayload, policy: &Policy) -> SanitizedPayload {
    project(payload, policy)
}

/// Re-applies `policy` to an already projected payload. Fields the policy
/// forbids are removed along with their coarse forms; everything else is
/// left as is, so projecting twice under one policy is the identity.
pub fn project_sanitized(sanitized: &SanitizedPayload, policy: &Policy) -> SanitizedPayload {
    use PayloadField as F;
    let mut f = sanitized.fields.clone();
    let mut manifest = sanitized.manifest.clone();
    for field in policy.forbidden_fields() {
        match field {
            F::ChainId => f.chain_id = None,
            F::Sender => f.sender = None,
            F::Destination => {
                f.destination = None;
                f.destination_category = None;
            }
            F::Value => {
                f.value = None;
                f.value_bucket = None;
            }
            F::Calldata => {
                f.calldata = None;
                f.calldata_selector = None;
            }
            F::GasLimit => {
                f.gas_limit = None;
                f.gas_bucket = None;
            }
            F::Nonce => f.nonce = None,
            F::UiClaim => {
                f.ui_claim = None;
                f.claimed_action = None;
            }
        }
        match manifest.iter_mut().find(|e| e.field == field) {
            Some(e) => e.action = FieldAction::Dropped,
            None => manifest.push(ManifestEntry {
                field,
                action: FieldAction::Dropped,
            }),
        }
    }
    SanitizedPayload::new(f, manifest)
}

/// Test fixture: a projector that exports every field verbatim.
pub fn export_unsanitized(payload: &TransactionPayload, _policy: &Policy) -> SanitizedPayload {
    let fields = SanitizedFields {
        calldata: Some(encode_0x(&payload.calldata)),
        chain_id: Some(payload.chain_id),
        destination: payload.destination,
        gas_limit: Some(payload.gas_limit),
        nonce: Some(payload.nonce),
        sender: Some(payload.sender),
        ui_claim: payload.ui_claim.clone(),
        value: Some(payload.value),
        ..Default::default()
    };
    let manifest = PayloadField::ALL
        .into_iter()
        .map(|field| ManifestEntry {
            field,
            action: FieldAction::Kept,
        })
        .collect();
    SanitizedPayload::new(fields, manifest)
}

/// Shorter claims match unrelated JSON by chance, so they only count as
/// leaked under their own key.
const MIN_CLAIM_MATCH: usize = 8;

/// Forbidden fields of `source` that are present in the serialized output,
/// either under their own key or, for addresses, bytes and text, as a
/// substring anywhere in it.
pub fn leaked_fields(source: &TransactionPayload, out: &SanitizedPayload, policy: &Policy) -> Vec<PayloadField> {
    let text = out.canonical().to_ascii_lowercase();
    let keyed = |key: &str| text.contains(&format!("\"{key}\":"));
    policy
        .forbidden_fields()
        .into_iter()
        .filter(|field| {
            if keyed(field.key()) {
                return true;
            }
            match field {
                PayloadField::Sender => text.contains(&source.sender.hex_body()),
                PayloadField::Destination => source
                    .destination
                    .is_some_and(|d| text.contains(&d.hex_body())),
                PayloadField::Calldata => {
                    source.calldata.len() > 4 && text.contains(&hex::encode(&source.calldata))
                }
                PayloadField::UiClaim => source.ui_claim.as_deref().is_some_and(|c| {
                    let escaped = serde_json::to_string(&c.to_ascii_lowercase()).expect("string serializes");
                    let inner = &escaped[1..escaped.len() - 1];
                    inner.trim().len() >= MIN_CLAIM_MATCH && text.contains(inner)
                }),
                _ => false,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub requests: u64,
    pub violations: u64,
    pub violation_rate: f64,
    pub mean_size_units: f64,
}

impl AuditReport {
    fn from_counts(requests: u64, violations: u64, size_total: u64) -> Self {
        let n = requests.max(1) as f64;
        AuditReport {
            requests,
            violations,
            violation_rate: if requests == 0 { 0.0 } else { violations as f64 / n },
            mean_size_units: if requests == 0 { 0.0 } else { size_total as f64 / n },
        }
    }
}

/// Projects every request and counts those whose output carries any forbidden field.
pub fn audit_violations(corpus: &[TransactionPayload], policy: &Policy) -> AuditReport {
    audit_with(corpus, policy, project_public_lenient)
}

pub fn audit_with<F>(corpus: &[TransactionPayload], policy: &Policy, projector: F) -> AuditReport
where
    F: Fn(&TransactionPayload, &Policy) -> SanitizedPayload,
{
    let (mut violations, mut size_total) = (0u64, 0u64);
    for payload in corpus {
        let out = projector(payload, policy);
        if !leaked_fields(payload, &out, policy).is_empty() {
            violations += 1;
        }
        size_total += out.size_units as u64;
    }
    AuditReport::from_counts(corpus.len() as u64, violations, size_total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Profile;

    fn payload() -> TransactionPayload {
        TransactionPayload {
            chain_id: 1,
            sender: Address([0xab; 20]),
            destination: Some(Address([0xcd; 20])),
            value: U256::from(1_200_000_000_000_000_000u64),
            calldata: vec![0xa9, 0x05, 0x9c, 0xbb, 0, 0, 0],
            gas_limit: 60_000,
            nonce: 7,
            ui_claim: Some("Send 1.2 ETH".into()),
        }
    }

    #[test]
    fn forbidden_sender_is_dropped() {
        let p = Policy::profile(Profile::Default);
        let s = project_public(&payload(), &p).unwrap();
        assert_eq!(s.fields.sender, None);
        assert_eq!(s.action_of(PayloadField::Sender), Some(FieldAction::Dropped));
        assert_eq!(s.manifest.len(), PayloadField::ALL.len());
    }

    #[test]
    fn value_lands_in_middle_bucket() {
        let p = Policy::profile(Profile::Default);
        let s = project_public(&payload(), &p).unwrap();
        assert_eq!(s.fields.value_bucket.as_deref(), Some("1-10 ETH"));
        assert_eq!(value_bucket(U256::exp10(18) - 1, &p), "<1 ETH");
        assert_eq!(value_bucket(U256::exp10(19), &p), ">10 ETH");
    }

    #[test]
    fn canonical_form_is_sorted_and_lowercase() {
        let p = Policy::profile(Profile::UserOverride);
        let c = project_public(&payload(), &p).unwrap().canonical();
        let v: serde_json::Value = serde_json::from_str(&c).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(c.contains("0xabababab"));
        assert!(!c.contains(' ') || c.contains("Send 1.2 ETH"));
    }

    #[test]
    fn strict_is_no_larger_than_default() {
        let d = project_public(&payload(), &Policy::profile(Profile::Default)).unwrap();
        let s = project_public(&payload(), &Policy::profile(Profile::Strict)).unwrap();
        assert!(s.size_units <= d.size_units);
    }

    #[test]
    fn token_count() {
        assert_eq!(size_units(r#"{"a":"<1 ETH","b":3}"#), 5);
        assert_eq!(size_units(""), 0);
    }

    #[test]
    fn reject_mode_reports_missing_label() {
        let mut p = Policy::profile(Profile::Default);
        p.missing_label = MissingLabel::Reject;
        assert_eq!(
            project_public(&payload(), &p),
            Err(SanitizeError::MissingLabel(PayloadField::UiClaim))
        );
    }

    #[test]
    fn projection_is_idempotent() {
        for prof in Profile::ALL {
            let p = Policy::profile(prof);
            let once = project_public(&payload(), &p).unwrap();
            assert_eq!(project_sanitized(&once, &p), once);
        }
    }

    #[test]
    fn unsanitized_export_is_caught() {
        let p = Policy::profile(Profile::Strict);
        let corpus = vec![payload(); 5];
        let r = audit_with(&corpus, &p, export_unsanitized);
        assert_eq!(r.violations, 5);
        assert_eq!(audit_violations(&corpus, &p).violations, 0);
    }

    #[test]
    fn empty_audit() {
        let r = audit_violations(&[], &Policy::default());
        assert_eq!((r.requests, r.violations, r.violation_rate), (0, 0, 0.0));
    }

    #[test]
    fn address_in_public_claim_is_a_leak() {
        let p = Policy::profile(Profile::Default);
        let mut tx = payload();
        tx.ui_claim = Some(format!("Send to {}", tx.sender));
        let out = project_public(&tx, &p).unwrap();
        assert_eq!(leaked_fields(&tx, &out, &p), vec![PayloadField::Sender]);
        let strict = Policy::profile(Profile::Strict);
        let out = project_public(&tx, &strict).unwrap();
        assert!(leaked_fields(&tx, &out, &strict).is_empty());
    }
}
