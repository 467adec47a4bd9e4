//! End-to-end decision flow: edge parse and gate, routing, tier execution,
//! consistency escalation and conservative completion, all recorded in a
//! provenance trail on a simulated clock.

mod provenance;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use provenance::{digest, EventStatus, ProvenanceEvent, ProvenanceTrail};

use crate::intent::{extract_intent, Intent, SelectorRegistry, TransactionPayload};
use crate::policy::{evaluate_gate, Decision, DecisionReason, Policy, Verdict};
use crate::router::{enumerate_plans, select_plan, ComputePlan, Link, NetworkState, PlanPath, Tier};
use crate::sanitizer::{leaked_fields, project_public};
use crate::tiers::{
    cloud_synthesize, intent_divergence_with, local_verify, CallContext, DivergenceWeights, LocalVerdict,
    PrivateContext, PublicContext, SynthesisFeatures, TierConfig, TierError, TierFault, TierMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FinalVerdict {
    Allow,
    Block,
    #[serde(rename = "StepUp-pending")]
    StepUpPending,
}

impl FinalVerdict {
    /// CLI exit code: 0 allow, 2 block, 3 pending.
    pub fn exit_code(self) -> i32 {
        match self {
            FinalVerdict::Allow => 0,
            FinalVerdict::Block => 2,
            FinalVerdict::StepUpPending => 3,
        }
    }
}

impl std::fmt::Display for FinalVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FinalVerdict::Allow => "Allow",
            FinalVerdict::Block => "Block",
            FinalVerdict::StepUpPending => "StepUp-pending",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FinalReason {
    EdgeAllow,
    EdgeBlock,
    StepUpDisabled,
    HeldAtEdge,
    NoFeasiblePlan,
    LocalRelease,
    LocalBlock,
    LocalInconclusive,
    ConsistencyFailure,
    CloudBlock,
    CloudAdvisory,
    ExportRefused,
    TierFailure { tier: Tier, error: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VerifierMode {
    /// Reflect on risk-caused escalations or high foresight features.
    #[default]
    Auto,
    StandardOnly,
    ReflectAlways,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultPlan {
    pub local: Option<TierFault>,
    pub cloud: Option<TierFault>,
}

impl FaultPlan {
    pub fn all(fault: TierFault) -> Self {
        FaultPlan {
            local: Some(fault),
            cloud: Some(fault),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrchestratorConfig {
    /// Local risk below this releases a step-up.
    pub release_threshold: f64,
    /// Local risk at or above this blocks.
    pub block_threshold: f64,
    /// Any foresight feature above this forces the local tier into Reflect.
    pub foresight_reflect_threshold: f64,
    pub stepup_enabled: bool,
    pub verifier_mode: VerifierMode,
    pub plan_override: Option<PlanPath>,
    pub faults: FaultPlan,
    pub divergence_weights: DivergenceWeights,
    pub tier: TierConfig,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            release_threshold: 0.3,
            block_threshold: 0.7,
            foresight_reflect_threshold: 0.7,
            stepup_enabled: true,
            verifier_mode: VerifierMode::Auto,
            plan_override: None,
            faults: FaultPlan::default(),
            divergence_weights: DivergenceWeights::default(),
            tier: TierConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalOutcome {
    pub verdict: FinalVerdict,
    pub reason: FinalReason,
    pub plan_used: ComputePlan,
    pub edge_intent: Intent,
    pub edge_decision: Decision,
    pub local_verdict: Option<LocalVerdict>,
    pub features: Option<SynthesisFeatures>,
    pub divergence: Option<f64>,
    pub hops_executed: Vec<Tier>,
    pub provenance: ProvenanceTrail,
    pub total_latency_ms: f64,
}

impl FinalOutcome {
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("outcome serializes")
    }
}

/// Result of comparing edge and local readings of one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EscalationAction {
    Proceed,
    ReverifyReflect,
    BlockConsistencyFailure,
}

/// `Δ ≤ ε` proceeds; otherwise one forced re-verification, after which a
/// persisting divergence blocks.
pub fn resolve_divergence(
    edge: &Intent,
    local: &LocalVerdict,
    policy: &Policy,
    weights: &DivergenceWeights,
    already_reverified: bool,
) -> EscalationAction {
    let delta = intent_divergence_with(edge, &local.refined_intent, weights);
    if delta <= policy.epsilon {
        EscalationAction::Proceed
    } else if already_reverified {
        EscalationAction::BlockConsistencyFailure
    } else {
        EscalationAction::ReverifyReflect
    }
}

/// Shared inputs of a pipeline run.
pub struct Orchestrator<'a> {
    pub policy: &'a Policy,
    pub network: &'a NetworkState,
    pub config: &'a OrchestratorConfig,
    pub registry: &'a SelectorRegistry,
}

struct Run<'r> {
    trail: ProvenanceTrail,
    rng: ChaCha8Rng,
    hops: Vec<Tier>,
    network: &'r NetworkState,
    budget_ms: f64,
}

impl Run<'_> {
    /// Samples the link; returns the simulated duration and a fault if the
    /// link dropped.
    fn traverse(&mut self, link: Link) -> (f64, Option<TierFault>) {
        match self.network.sample(link, &mut self.rng) {
            Ok(s) => (s.latency_ms, s.dropped.then_some(TierFault::Unavailable)),
            Err(_) => (0.0, Some(TierFault::Unavailable)),
        }
    }

    fn remaining_ms(&self) -> f64 {
        (self.budget_ms - self.trail.elapsed_ms()).max(0.0)
    }

    fn call_context(&mut self, link: Link, injected: Option<TierFault>) -> CallContext {
        let (latency_ms, dropped) = self.traverse(link);
        CallContext {
            deadline_ms: Some(self.remaining_ms()),
            latency_ms,
            fault: injected.or(dropped),
        }
    }
}

fn failed_duration(call: &CallContext, err: &TierError) -> f64 {
    match err {
        TierError::DeadlineExceeded { deadline_ms } => *deadline_ms,
        _ => call.latency_ms,
    }
}

impl<'a> Orchestrator<'a> {
    pub fn new(policy: &'a Policy, network: &'a NetworkState, config: &'a OrchestratorConfig) -> Self {
        Orchestrator {
            policy,
            network,
            config,
            registry: &config.tier.registry,
        }
    }

    fn local_mode(&self, decision: &Decision, features: Option<&SynthesisFeatures>) -> TierMode {
        match self.config.verifier_mode {
            VerifierMode::StandardOnly => TierMode::None,
            VerifierMode::ReflectAlways => TierMode::Reflect,
            VerifierMode::Auto => {
                let risk_cause = matches!(
                    decision.reason,
                    DecisionReason::RiskAboveThreshold | DecisionReason::RuleMatch { .. }
                ) || decision.rho > self.policy.tau_risk;
                let foresight = features
                    .and_then(SynthesisFeatures::max_foresight)
                    .is_some_and(|m| m > self.config.foresight_reflect_threshold);
                if risk_cause || foresight {
                    TierMode::Reflect
                } else {
                    TierMode::None
                }
            }
        }
    }

    fn plan_for(&self, decision: &Decision, payload: &TransactionPayload) -> ComputePlan {
        let plans = enumerate_plans(decision, payload, self.policy, self.network);
        if let Some(path) = self.config.plan_override {
            if let Some(p) = plans.iter().find(|p| p.path == path) {
                return p.clone();
            }
        }
        select_plan(&plans, self.policy)
    }

    /// Runs one request end to end. Faults never surface: they fold into a
    /// conservative verdict recorded in the trail.
    pub fn process(
        &self,
        payload: &TransactionPayload,
        private_ctx: &PrivateContext,
        public_ctx: &PublicContext,
        seed: u64,
    ) -> FinalOutcome {
        let policy = self.policy;
        let mut run = Run {
            trail: ProvenanceTrail::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            hops: vec![Tier::Edge],
            network: self.network,
            budget_ms: policy.latency_budget_ms as f64,
        };

        let (_, intent) = extract_intent(payload, self.registry);
        run.trail.record(
            Tier::Edge,
            "parse",
            digest(payload),
            digest(&intent),
            TierMode::None,
            0.0,
            EventStatus::Ok,
        );
        let decision = evaluate_gate(&intent, policy);
        let (gate_ms, _) = run.traverse(Link::Edge);
        run.trail.record(
            Tier::Edge,
            "gate",
            digest(&intent),
            digest(&decision),
            TierMode::None,
            gate_ms,
            EventStatus::Ok,
        );

        let mut out = Partial {
            plan: None,
            local: None,
            features: None,
            divergence: None,
        };
        let (verdict, reason) = match decision.verdict {
            Verdict::Allow => (FinalVerdict::Allow, FinalReason::EdgeAllow),
            Verdict::Block => (FinalVerdict::Block, FinalReason::EdgeBlock),
            Verdict::StepUp if !self.config.stepup_enabled => (FinalVerdict::Allow, FinalReason::StepUpDisabled),
            Verdict::StepUp => self.escalate(payload, &intent, &decision, private_ctx, public_ctx, &mut run, &mut out),
        };

        let plan_used = out.plan.unwrap_or_else(|| {
            enumerate_plans(&decision, payload, policy, self.network)
                .into_iter()
                .find(|p| p.path == PlanPath::EdgeOnly)
                .unwrap_or_else(|| select_plan(&[], policy))
        });
        let total_latency_ms = run.trail.events().iter().map(|e| e.duration_ms).sum();
        FinalOutcome {
            verdict,
            reason,
            plan_used,
            edge_intent: intent,
            edge_decision: decision,
            local_verdict: out.local,
            features: out.features,
            divergence: out.divergence,
            hops_executed: run.hops,
            provenance: run.trail,
            total_latency_ms,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn escalate(
        &self,
        payload: &TransactionPayload,
        intent: &Intent,
        decision: &Decision,
        private_ctx: &PrivateContext,
        public_ctx: &PublicContext,
        run: &mut Run<'_>,
        out: &mut Partial,
    ) -> (FinalVerdict, FinalReason) {
        let pending = FinalVerdict::StepUpPending;
        let plan = self.plan_for(decision, payload);
        run.trail.record(
            Tier::Edge,
            "route",
            digest(decision),
            digest(&plan),
            TierMode::None,
            0.0,
            EventStatus::Ok,
        );
        let path = plan.path;
        let fallback = plan.fallback;
        out.plan = Some(plan);
        if fallback {
            return (pending, FinalReason::NoFeasiblePlan);
        }
        if path == PlanPath::EdgeOnly {
            return (pending, FinalReason::HeldAtEdge);
        }

        if path.has_cloud() {
            let sanitized = match project_public(payload, self.policy) {
                Ok(s) if leaked_fields(payload, &s, self.policy).is_empty() => s,
                _ => return (pending, FinalReason::ExportRefused),
            };
            let mode = if decision.rho > 0.0 {
                TierMode::Foresight
            } else {
                TierMode::None
            };
            let call = run.call_context(Link::EdgeCloud, self.config.faults.cloud);
            let result = cloud_synthesize(&sanitized, public_ctx, mode, &self.config.tier.with_call(call));
            run.hops.push(Tier::Cloud);
            let input = digest(&sanitized.canonical());
            match result {
                Ok(features) => {
                    run.trail.record(
                        Tier::Cloud,
                        "synthesize",
                        input,
                        digest(&features),
                        mode,
                        call.latency_ms,
                        EventStatus::Ok,
                    );
                    out.features = Some(features);
                }
                Err(e) => {
                    run.trail.record(
                        Tier::Cloud,
                        "synthesize",
                        input,
                        digest(&()),
                        mode,
                        failed_duration(&call, &e),
                        EventStatus::Failed(e.to_string()),
                    );
                    return (
                        pending,
                        FinalReason::TierFailure {
                            tier: Tier::Cloud,
                            error: e.to_string(),
                        },
                    );
                }
            }
        }

        if !path.has_local() {
            let composite = out.features.as_ref().and_then(|f| f.get("foresight_risk"));
            return match composite {
                Some(c) if c >= self.config.block_threshold => (FinalVerdict::Block, FinalReason::CloudBlock),
                _ => (pending, FinalReason::CloudAdvisory),
            };
        }

        let link = if path.has_cloud() {
            Link::CloudLocal
        } else {
            Link::EdgeLocal
        };
        let mut mode = self.local_mode(decision, out.features.as_ref());
        let mut reverified = false;
        loop {
            let call = run.call_context(link, self.config.faults.local);
            let result = local_verify(payload, private_ctx, mode, &self.config.tier.with_call(call));
            run.hops.push(Tier::Local);
            let verdict = match result {
                Ok(v) => {
                    run.trail.record(
                        Tier::Local,
                        if reverified { "reverify" } else { "verify" },
                        digest(payload),
                        digest(&v),
                        mode,
                        call.latency_ms,
                        EventStatus::Ok,
                    );
                    v
                }
                Err(e) => {
                    run.trail.record(
                        Tier::Local,
                        if reverified { "reverify" } else { "verify" },
                        digest(payload),
                        digest(&()),
                        mode,
                        failed_duration(&call, &e),
                        EventStatus::Failed(e.to_string()),
                    );
                    return (
                        pending,
                        FinalReason::TierFailure {
                            tier: Tier::Local,
                            error: e.to_string(),
                        },
                    );
                }
            };
            let w = &self.config.divergence_weights;
            out.divergence = Some(intent_divergence_with(intent, &verdict.refined_intent, w));
            let action = resolve_divergence(intent, &verdict, self.policy, w, reverified);
            let r = verdict.risk_score;
            out.local = Some(verdict);
            match action {
                EscalationAction::Proceed => {
                    return if r < self.config.release_threshold {
                        (FinalVerdict::Allow, FinalReason::LocalRelease)
                    } else if r >= self.config.block_threshold {
                        (FinalVerdict::Block, FinalReason::LocalBlock)
                    } else {
                        (pending, FinalReason::LocalInconclusive)
                    };
                }
                EscalationAction::BlockConsistencyFailure => {
                    return (FinalVerdict::Block, FinalReason::ConsistencyFailure)
                }
                EscalationAction::ReverifyReflect => {
                    reverified = true;
                    if self.config.verifier_mode != VerifierMode::StandardOnly {
                        mode = TierMode::Reflect;
                    }
                }
            }
        }
    }
}

struct Partial {
    plan: Option<ComputePlan>,
    local: Option<LocalVerdict>,
    features: Option<SynthesisFeatures>,
    divergence: Option<f64>,
}

/// One request through the full pipeline under the default orchestrator configuration.
pub fn process_transaction(
    payload: &TransactionPayload,
    private_ctx: &PrivateContext,
    public_ctx: &PublicContext,
    policy: &Policy,
    network: &NetworkState,
    seed: u64,
) -> FinalOutcome {
    let config = OrchestratorConfig::default();
    Orchestrator::new(policy, network, &config).process(payload, private_ctx, public_ctx, seed)
}
