use dmind3_core::harness::{
    derive_seed, generate_corpus, replay, replay_outcomes, CorpusSpec, GroundTruth, LabeledTransaction, ReplayConfig,
};
use dmind3_core::orchestrator::{
    digest, EventStatus, FaultPlan, FinalReason, FinalVerdict, Orchestrator, OrchestratorConfig,
};
use dmind3_core::policy::{evaluate_gate, Policy, Profile, Verdict};
use dmind3_core::intent::{extract_intent, SelectorRegistry};
use dmind3_core::router::{Link, NetworkState, PlanPath, Tier};
use dmind3_core::sanitizer::project_public;
use dmind3_core::tiers::{cloud_synthesize, PrivateContext, PublicContext, TierConfig, TierFault, TierMode};

fn corpus(n: usize, seed: u64) -> Vec<LabeledTransaction> {
    generate_corpus(&CorpusSpec::new(n, 0.3, seed))
}

fn cloud_policy() -> Policy {
    let mut p = Policy::profile(Profile::Default);
    p.cloud_enabled = true;
    p
}

#[test]
fn replay_is_deterministic_across_runs_and_workers() {
    let c = corpus(400, 3);
    let p = Policy::profile(Profile::Default);
    let n = NetworkState::baseline_jitter();
    let base = |workers| ReplayConfig {
        seed: 99,
        workers,
        ..Default::default()
    };
    let reference: Vec<String> = replay_outcomes(&c, &p, &n, &base(1))
        .iter()
        .map(|o| o.to_canonical_json())
        .collect();
    for workers in [4, 8] {
        let got: Vec<String> = replay_outcomes(&c, &p, &n, &base(workers))
            .iter()
            .map(|o| o.to_canonical_json())
            .collect();
        assert_eq!(got, reference, "workers={workers}");
    }
    // repeated single-item runs under the jittered network
    let config = OrchestratorConfig::default();
    let o = Orchestrator::new(&p, &n, &config);
    let ctx = PrivateContext::with_allowlist(p.allowlist.clone());
    let public = PublicContext::default();
    for (i, item) in c.iter().enumerate().take(10) {
        let seed = derive_seed(99, i as u64);
        let first = o.process(&item.payload, &ctx, &public, seed).to_canonical_json();
        for _ in 0..100 {
            assert_eq!(o.process(&item.payload, &ctx, &public, seed).to_canonical_json(), first);
        }
    }
}

#[test]
fn corpus_generation_is_seeded() {
    assert_eq!(corpus(300, 8), corpus(300, 8));
    assert_ne!(corpus(300, 8), corpus(300, 9));
}

#[test]
fn unreachable_tiers_fail_closed() {
    let c = corpus(1000, 4);
    for policy in [Policy::profile(Profile::Default), cloud_policy()] {
        for fault in [TierFault::Unavailable, TierFault::Timeout] {
            let config = ReplayConfig {
                orchestrator: OrchestratorConfig {
                    faults: FaultPlan::all(fault),
                    ..Default::default()
                },
                workers: 4,
                ..Default::default()
            };
            let outcomes = replay_outcomes(&c, &policy, &NetworkState::baseline(), &config);
            for (o, item) in outcomes.iter().zip(&c) {
                match o.edge_decision.verdict {
                    Verdict::StepUp => {
                        // nothing escalated is ever released
                        assert_ne!(o.verdict, FinalVerdict::Allow, "{}", item.id);
                        if o.plan_used.path != PlanPath::EdgeOnly {
                            assert!(o
                                .provenance
                                .events()
                                .iter()
                                .any(|e| matches!(e.status, EventStatus::Failed(_))));
                        }
                    }
                    Verdict::Allow => assert_eq!(o.verdict, FinalVerdict::Allow),
                    Verdict::Block => assert_eq!(o.verdict, FinalVerdict::Block),
                }
                if item.ground_truth == GroundTruth::Unsafe {
                    assert_ne!(o.verdict, FinalVerdict::Allow);
                }
            }
        }
    }
}

#[test]
fn edge_gate_is_independent_of_tier_availability() {
    let c = corpus(500, 5);
    let p = cloud_policy();
    let n = NetworkState::baseline();
    let reg = SelectorRegistry::builtin();
    let up = replay_outcomes(&c, &p, &n, &ReplayConfig::default());
    let down = replay_outcomes(&c, &p, &n.all_remote_down(), &ReplayConfig {
        orchestrator: OrchestratorConfig {
            faults: FaultPlan::all(TierFault::Unavailable),
            ..Default::default()
        },
        ..Default::default()
    });
    for ((a, b), item) in up.iter().zip(&down).zip(&c) {
        let (_, intent) = extract_intent(&item.payload, &reg);
        let direct = evaluate_gate(&intent, &p);
        assert_eq!(a.edge_decision, direct);
        assert_eq!(b.edge_decision, direct);
    }
}

#[test]
fn provenance_covers_every_hop() {
    let c = corpus(600, 6);
    let p = cloud_policy();
    let n = NetworkState::baseline();
    for path in PlanPath::ALL {
        let config = ReplayConfig {
            orchestrator: OrchestratorConfig {
                plan_override: Some(path),
                ..Default::default()
            },
            ..Default::default()
        };
        for o in replay_outcomes(&c, &p, &n, &config) {
            let ops = o.provenance.operations();
            assert_eq!(&ops[..2], &["parse", "gate"]);
            assert_eq!(o.hops_executed[0], Tier::Edge);
            // one event per remote hop, plus the routing record when escalated
            let remote: Vec<Tier> = o.provenance.events().iter().map(|e| e.tier).filter(|t| *t != Tier::Edge).collect();
            assert_eq!(remote, o.hops_executed[1..].to_vec());
            if o.edge_decision.verdict == Verdict::StepUp {
                assert_eq!(ops[2], "route");
                assert_eq!(o.plan_used.path, path);
                assert_eq!(o.hops_executed.len(), o.plan_used.hops.len() + (ops.contains(&"reverify") as usize));
            } else {
                assert_eq!(ops.len(), 2);
            }
            for e in o.provenance.events() {
                assert_eq!(e.input_digest.len(), 64);
                assert_eq!(e.output_digest.len(), 64);
                if e.tier == Tier::Cloud {
                    assert_eq!(e.mode == TierMode::Foresight, o.edge_decision.rho > 0.0);
                }
            }
        }
    }
}

#[test]
fn latency_is_the_sum_of_traversed_links() {
    let c = corpus(600, 7);
    let p = cloud_policy();
    let n = NetworkState::baseline();
    let base = |l: Link| n.links[&l].base_ms;
    for path in PlanPath::ALL {
        let config = ReplayConfig {
            orchestrator: OrchestratorConfig {
                plan_override: Some(path),
                ..Default::default()
            },
            ..Default::default()
        };
        for o in replay_outcomes(&c, &p, &n, &config) {
            let mut expect = base(Link::Edge);
            let mut last = Link::Edge;
            for w in o.hops_executed.windows(2) {
                // a re-verification repeats the previous round trip
                if w[0] != w[1] {
                    last = Link::between(w[0], w[1]);
                }
                expect += base(last);
            }
            let timed_out = o.provenance.events().iter().any(|e| matches!(e.status, EventStatus::Failed(_)));
            if timed_out {
                // a call past the budget is charged up to the deadline only
                assert!(expect > p.latency_budget_ms as f64);
                assert_eq!(o.total_latency_ms, p.latency_budget_ms as f64);
                assert_ne!(o.verdict, FinalVerdict::Allow);
            } else {
                assert_eq!(o.total_latency_ms, expect);
            }
            assert_eq!(o.provenance.elapsed_ms(), o.total_latency_ms);
        }
    }
}

#[test]
fn cloud_sees_only_the_sanitized_projection() {
    let p = cloud_policy();
    let n = NetworkState::baseline();
    let config = OrchestratorConfig {
        plan_override: Some(PlanPath::EdgeCloud),
        ..Default::default()
    };
    let orch = Orchestrator::new(&p, &n, &config);
    let ctx = PrivateContext::with_allowlist(p.allowlist.clone());
    let public = PublicContext::default();
    let mut seen = 0;
    for item in corpus(400, 8) {
        let o = orch.process(&item.payload, &ctx, &public, 1);
        let Some(ev) = o.provenance.events().iter().find(|e| e.tier == Tier::Cloud) else {
            continue;
        };
        seen += 1;
        let sanitized = project_public(&item.payload, &p).unwrap();
        assert_eq!(ev.input_digest, digest(&sanitized.canonical()));

        // private-only fields cannot influence cloud output
        let mut twin = item.payload.clone();
        twin.sender.0[0] ^= 0xff;
        twin.nonce = twin.nonce.wrapping_add(1);
        twin.chain_id = twin.chain_id.wrapping_add(1);
        let twin_sanitized = project_public(&twin, &p).unwrap();
        let tc = TierConfig::default();
        let mode = if o.edge_decision.rho > 0.0 { TierMode::Foresight } else { TierMode::None };
        assert_eq!(
            cloud_synthesize(&sanitized, &public, mode, &tc),
            cloud_synthesize(&twin_sanitized, &public, mode, &tc)
        );
        let o2 = orch.process(&twin, &ctx, &public, 1);
        assert_eq!(o.features, o2.features);
    }
    assert!(seen > 100);
}

#[test]
fn escalation_reasons_are_consistent() {
    let c = corpus(2000, 9);
    let p = Policy::profile(Profile::Default);
    let n = NetworkState::baseline();
    let r = replay(&c, &p, &n, &ReplayConfig::default());
    assert_eq!(r.items, 2000);
    assert_eq!(r.confusion.total(), 2000);
    let outs = replay_outcomes(&c, &p, &n, &ReplayConfig::default());
    for o in outs {
        match o.reason {
            FinalReason::EdgeAllow => assert_eq!(o.verdict, FinalVerdict::Allow),
            FinalReason::EdgeBlock | FinalReason::LocalBlock | FinalReason::ConsistencyFailure => {
                assert_eq!(o.verdict, FinalVerdict::Block)
            }
            FinalReason::LocalRelease => {
                assert_eq!(o.verdict, FinalVerdict::Allow);
                assert!(o.local_verdict.unwrap().risk_score < 0.3);
            }
            _ => {}
        }
    }
}
