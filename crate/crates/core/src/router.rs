//! Compute-plan enumeration and constrained selection across tiers.
//!
//! A plan is scored by its modeled expected decision loss plus `β · cost`,
//! subject to a zero-leak constraint and the policy latency budget. The set
//! of plans is small (at most four), so selection is a linear scan.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::intent::TransactionPayload;
use crate::policy::{Decision, Policy, Verdict};
use crate::sanitizer::{self, SanitizedPayload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Edge,
    Local,
    Cloud,
}

/// Members of the plan set, declared in tie-break order (shallower first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlanPath {
    EdgeOnly,
    EdgeLocal,
    EdgeCloud,
    EdgeCloudLocal,
}

impl PlanPath {
    pub const ALL: [PlanPath; 4] = [
        PlanPath::EdgeOnly,
        PlanPath::EdgeLocal,
        PlanPath::EdgeCloud,
        PlanPath::EdgeCloudLocal,
    ];

    pub fn hops(self) -> Vec<Tier> {
        match self {
            PlanPath::EdgeOnly => vec![Tier::Edge],
            PlanPath::EdgeLocal => vec![Tier::Edge, Tier::Local],
            PlanPath::EdgeCloud => vec![Tier::Edge, Tier::Cloud],
            PlanPath::EdgeCloudLocal => vec![Tier::Edge, Tier::Cloud, Tier::Local],
        }
    }

    pub fn links(self) -> Vec<Link> {
        let hops = self.hops();
        let mut links = vec![Link::Edge];
        links.extend(hops.windows(2).map(|w| Link::between(w[0], w[1])));
        links
    }

    pub fn has_cloud(self) -> bool {
        matches!(self, PlanPath::EdgeCloud | PlanPath::EdgeCloudLocal)
    }

    pub fn has_local(self) -> bool {
        matches!(self, PlanPath::EdgeLocal | PlanPath::EdgeCloudLocal)
    }
}

impl fmt::Display for PlanPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A latency-bearing segment of a plan. `Edge` is the on-device gate itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Edge,
    EdgeLocal,
    EdgeCloud,
    CloudLocal,
}

impl Link {
    pub fn between(from: Tier, to: Tier) -> Link {
        match (from, to) {
            (Tier::Edge, Tier::Local) => Link::EdgeLocal,
            (Tier::Edge, Tier::Cloud) => Link::EdgeCloud,
            (Tier::Cloud, Tier::Local) | (Tier::Local, Tier::Cloud) => Link::CloudLocal,
            _ => Link::Edge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputePlan {
    pub path: PlanPath,
    pub hops: Vec<Tier>,
    pub predicted_latency_ms: f64,
    pub cost: f64,
    pub leak_count: u32,
    pub expected_loss: f64,
    #[serde(default)]
    pub fallback: bool,
}

impl ComputePlan {
    pub fn objective(&self, beta: f64) -> f64 {
        self.expected_loss + beta * self.cost
    }

    pub fn is_feasible(&self, policy: &Policy) -> bool {
        self.leak_count == 0 && self.predicted_latency_ms <= policy.latency_budget_ms as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModel {
    pub base_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default)]
    pub drop_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    pub latency_ms: f64,
    pub dropped: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RouterError {
    #[error("no link model configured for {0:?}")]
    MissingLinkModel(Link),
    #[error("network scenario does not match the schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid network scenario: {0}")]
    Invalid(String),
}

/// Per-link latency model and a global degradation multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkState {
    pub links: BTreeMap<Link, LinkModel>,
    #[serde(default = "one")]
    pub degradation_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

impl NetworkState {
    pub fn from_json(doc: &str) -> Result<Self, RouterError> {
        let n: NetworkState = serde_json::from_str(doc)?;
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<(), RouterError> {
        if !(self.degradation_multiplier.is_finite() && self.degradation_multiplier >= 1.0) {
            return Err(RouterError::Invalid("degradation_multiplier must be >= 1".into()));
        }
        for (link, m) in &self.links {
            let ok = m.base_ms.is_finite()
                && m.base_ms >= 0.0
                && m.jitter_ms.is_finite()
                && m.jitter_ms >= 0.0
                && (0.0..=1.0).contains(&m.drop_prob);
            if !ok {
                return Err(RouterError::Invalid(format!("bad model for {link:?}")));
            }
        }
        Ok(())
    }

    /// Zero-jitter scenario whose per-path sums are 28 / 210 / 140 / 360 ms.
    pub fn baseline() -> Self {
        Self::from_json(include_str!("../data/scenarios/baseline.json"))
            .expect("shipped scenario is valid")
    }

    /// Same bases with jitter and light loss on the remote links.
    pub fn baseline_jitter() -> Self {
        Self::from_json(include_str!("../data/scenarios/baseline_jitter.json"))
            .expect("shipped scenario is valid")
    }

    pub fn link(&self, link: Link) -> Result<&LinkModel, RouterError> {
        self.links.get(&link).ok_or(RouterError::MissingLinkModel(link))
    }

    /// One seeded draw: `(base + U[0, jitter]) × multiplier`, dropped with `drop_prob`.
    pub fn sample<R: Rng>(&self, link: Link, rng: &mut R) -> Result<LinkSample, RouterError> {
        let m = self.link(link)?;
        let jitter = if m.jitter_ms > 0.0 {
            rng.gen::<f64>() * m.jitter_ms
        } else {
            0.0
        };
        let dropped = m.drop_prob > 0.0 && rng.gen::<f64>() < m.drop_prob;
        Ok(LinkSample {
            latency_ms: (m.base_ms + jitter) * self.degradation_multiplier,
            dropped,
        })
    }

    /// Unreachable remote tiers, for fault-injection scenarios.
    pub fn all_remote_down(&self) -> Self {
        let mut n = self.clone();
        for (link, m) in n.links.iter_mut() {
            if *link != Link::Edge {
                m.drop_prob = 1.0;
            }
        }
        n
    }
}

/// Expected-value latency of a plan: `Σ (base + jitter/2) × multiplier`.
pub fn predict_latency(path: PlanPath, network: &NetworkState) -> Result<f64, RouterError> {
    let mut total = 0.0;
    for link in path.links() {
        let m = network.link(link)?;
        total += m.base_ms + m.jitter_ms / 2.0;
    }
    Ok(total * network.degradation_multiplier)
}

/// `P(unsafe | ρ, γ) = ρ · (1 − γ)`.
pub fn unsafe_probability(decision: &Decision) -> f64 {
    (decision.rho * (1.0 - decision.gamma)).clamp(0.0, 1.0)
}

/// Modeled expected loss of running `path` for this edge decision.
///
/// Terminal edge verdicts keep their verdict. For a step-up, the edge-only
/// plan holds the request pending; plans with a local hop can release it and
/// leave a residual unsafe-allow probability scaled by the verification
/// factor; the cloud-only plan cannot release (its output is advisory) so its
/// residual mass stays pending.
pub fn expected_loss(path: PlanPath, decision: &Decision, policy: &Policy) -> f64 {
    let p = unsafe_probability(decision);
    let lm = &policy.loss_matrix;
    let at = |v: Verdict| p * lm.unsafe_.get(v) + (1.0 - p) * lm.safe.get(v);
    if decision.verdict != Verdict::StepUp || path == PlanPath::EdgeOnly {
        return at(decision.verdict);
    }
    let vf = &policy.verification_factors;
    let (factor, residual, safe_outcome) = match path {
        PlanPath::EdgeLocal => (vf.local, Verdict::Allow, Verdict::Allow),
        PlanPath::EdgeCloudLocal => (vf.cloud_local, Verdict::Allow, Verdict::Allow),
        PlanPath::EdgeCloud => (vf.cloud, Verdict::StepUp, Verdict::StepUp),
        PlanPath::EdgeOnly => unreachable!(),
    };
    p * (factor * lm.unsafe_.get(residual) + (1.0 - factor) * lm.unsafe_.get(Verdict::Block))
        + (1.0 - p) * lm.safe.get(safe_outcome)
}

/// Leak count of a plan under the shipped projector.
pub fn check_leak(plan: &ComputePlan, payload: &TransactionPayload, policy: &Policy) -> u32 {
    check_leak_with(plan.path, payload, policy, sanitizer::project_public_lenient)
}

/// Leak count under an arbitrary projector: 0 without a cloud hop, otherwise
/// the number of forbidden fields that survive into the exported payload.
pub fn check_leak_with<F>(path: PlanPath, payload: &TransactionPayload, policy: &Policy, projector: F) -> u32
where
    F: Fn(&TransactionPayload, &Policy) -> SanitizedPayload,
{
    if !path.has_cloud() {
        return 0;
    }
    let out = projector(payload, policy);
    sanitizer::leaked_fields(payload, &out, policy).len() as u32
}

fn build_plan(
    path: PlanPath,
    decision: &Decision,
    payload: &TransactionPayload,
    policy: &Policy,
    network: &NetworkState,
) -> Option<ComputePlan> {
    let predicted_latency_ms = predict_latency(path, network).ok()?;
    Some(ComputePlan {
        path,
        hops: path.hops(),
        predicted_latency_ms,
        cost: policy.plan_cost(path),
        leak_count: check_leak_with(path, payload, policy, sanitizer::project_public_lenient),
        expected_loss: expected_loss(path, decision, policy),
        fallback: false,
    })
}

/// Plans permitted by policy for this decision. Terminal verdicts get only
/// the edge-only plan; cloud paths require `cloud_enabled`. Plans whose
/// latency cannot be predicted are left out.
pub fn enumerate_plans(
    decision: &Decision,
    payload: &TransactionPayload,
    policy: &Policy,
    network: &NetworkState,
) -> Vec<ComputePlan> {
    let paths: &[PlanPath] = if decision.verdict != Verdict::StepUp {
        &[PlanPath::EdgeOnly]
    } else if policy.cloud_enabled {
        &PlanPath::ALL
    } else {
        &[PlanPath::EdgeOnly, PlanPath::EdgeLocal]
    };
    paths
        .iter()
        .filter_map(|p| build_plan(*p, decision, payload, policy, network))
        .collect()
}

/// Feasible argmin of `expected_loss + β·cost`, shallower path on ties. With
/// no feasible candidate, returns an edge-only plan marked `fallback`.
pub fn select_plan(candidates: &[ComputePlan], policy: &Policy) -> ComputePlan {
    let mut ordered: Vec<&ComputePlan> = candidates.iter().collect();
    ordered.sort_by_key(|c| c.path);
    let mut best: Option<&ComputePlan> = None;
    for c in ordered.into_iter().filter(|c| c.is_feasible(policy)) {
        if best.is_none_or(|b| c.objective(policy.beta) < b.objective(policy.beta)) {
            best = Some(c);
        }
    }
    if let Some(b) = best {
        return b.clone();
    }
    let mut fb = candidates
        .iter()
        .find(|c| c.path == PlanPath::EdgeOnly)
        .cloned()
        .unwrap_or(ComputePlan {
            path: PlanPath::EdgeOnly,
            hops: PlanPath::EdgeOnly.hops(),
            predicted_latency_ms: 0.0,
            cost: policy.plan_cost(PlanPath::EdgeOnly),
            leak_count: 0,
            expected_loss: 0.0,
            fallback: true,
        });
    fb.fallback = true;
    fb
}
