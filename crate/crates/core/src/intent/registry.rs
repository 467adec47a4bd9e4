use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::abi::{parse_signature, AbiType, SignatureError};
use super::Action;
use crate::primitives::Selector;

const BUILTIN_REGISTRY: &str = include_str!("../../data/registry.json");

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("registry document is malformed: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("signature `{signature}`: {source}")]
    Signature {
        signature: String,
        source: SignatureError,
    },
    #[error("selector {stored} does not match keccak of `{signature}` ({computed})")]
    SelectorMismatch {
        signature: String,
        stored: Selector,
        computed: Selector,
    },
    #[error("duplicate selector {0}")]
    Duplicate(Selector),
}

/// One line of a registry file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryRecord {
    pub selector: Selector,
    pub signature: String,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub selector: Selector,
    pub signature: String,
    pub name: String,
    pub params: Vec<AbiType>,
    pub action: Action,
}

/// Read-only map from selector to signature, argument schema and default
/// action. Every stored selector has been re-derived from its signature.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SelectorRegistry {
    entries: BTreeMap<Selector, RegistryEntry>,
}

impl SelectorRegistry {
    pub fn from_records(records: Vec<RegistryRecord>) -> Result<Self, RegistryError> {
        let mut entries = BTreeMap::new();
        for rec in records {
            let entry = Self::check(rec)?;
            if entries.insert(entry.selector, entry.clone()).is_some() {
                return Err(RegistryError::Duplicate(entry.selector));
            }
        }
        Ok(SelectorRegistry { entries })
    }

    fn check(rec: RegistryRecord) -> Result<RegistryEntry, RegistryError> {
        let (name, params) =
            parse_signature(&rec.signature).map_err(|source| RegistryError::Signature {
                signature: rec.signature.clone(),
                source,
            })?;
        let computed = Selector::of_signature(&rec.signature);
        if computed != rec.selector {
            return Err(RegistryError::SelectorMismatch {
                signature: rec.signature,
                stored: rec.selector,
                computed,
            });
        }
        Ok(RegistryEntry {
            selector: rec.selector,
            signature: rec.signature,
            name,
            params,
            action: rec.action,
        })
    }

    pub fn from_json(doc: &str) -> Result<Self, RegistryError> {
        let records: Vec<RegistryRecord> = serde_json::from_str(doc)?;
        Self::from_records(records)
    }

    /// The shipped ERC-20 / ERC-721 / permit / delegation / router set.
    pub fn builtin() -> Arc<SelectorRegistry> {
        static BUILTIN: OnceLock<Arc<SelectorRegistry>> = OnceLock::new();
        BUILTIN
            .get_or_init(|| {
                Arc::new(
                    SelectorRegistry::from_json(BUILTIN_REGISTRY)
                        .expect("shipped registry is valid"),
                )
            })
            .clone()
    }

    /// A new registry holding both sets. Conflicting selectors are an error.
    pub fn merged(&self, extra: &SelectorRegistry) -> Result<Self, RegistryError> {
        let mut entries = self.entries.clone();
        for (sel, e) in &extra.entries {
            if entries.insert(*sel, e.clone()).is_some() {
                return Err(RegistryError::Duplicate(*sel));
            }
        }
        Ok(SelectorRegistry { entries })
    }

    pub fn get(&self, selector: &Selector) -> Option<&RegistryEntry> {
        self.entries.get(selector)
    }

    pub fn by_signature(&self, signature: &str) -> Option<&RegistryEntry> {
        self.get(&Selector::of_signature(signature))
    }

    pub fn contains(&self, selector: &Selector) -> bool {
        self.entries.contains_key(selector)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values()
    }

    pub fn records(&self) -> Vec<RegistryRecord> {
        self.entries
            .values()
            .map(|e| RegistryRecord {
                selector: e.selector,
                signature: e.signature.clone(),
                action: e.action,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_loads_and_covers_named_patterns() {
        let reg = SelectorRegistry::builtin();
        assert!(reg.len() >= 18);
        for sig in [
            "approve(address,uint256)",
            "transfer(address,uint256)",
            "permit(address,address,uint256,uint256,uint8,bytes32,bytes32)",
            "setApprovalForAll(address,bool)",
            "delegate(address)",
        ] {
            assert!(reg.by_signature(sig).is_some(), "{sig}");
        }
    }

    #[test]
    fn mismatched_selector_is_rejected() {
        let doc = r#"[{"selector":"0xdeadbeef","signature":"approve(address,uint256)","action":"Approve"}]"#;
        assert!(matches!(
            SelectorRegistry::from_json(doc),
            Err(RegistryError::SelectorMismatch { .. })
        ));
    }

    #[test]
    fn duplicate_on_merge_is_rejected() {
        let reg = SelectorRegistry::builtin();
        assert!(matches!(reg.merged(&reg), Err(RegistryError::Duplicate(_))));
    }
}
