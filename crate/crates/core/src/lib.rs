//! Edge-local-cloud transaction decision stack: intent extraction, a
//! deterministic signing-time gate, constrained routing across tiers,
//! sanitized cloud export, and a seeded replay harness.

pub mod intent;
pub mod policy;
pub mod primitives;
pub mod router;
pub mod sanitizer;
pub mod tiers;
pub mod objectives;
pub mod orchestrator;
pub mod harness;
