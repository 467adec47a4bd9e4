//! Reference implementations shared by the integration targets.
#![allow(dead_code)]

use std::collections::BTreeMap;

use dmind3_core::harness::{generate_item, Pattern};
use dmind3_core::intent::TransactionPayload;
use dmind3_core::policy::{Decision, DecisionReason, Policy, Profile, Verdict};
use dmind3_core::router::{ComputePlan, Link, LinkModel, NetworkState, PlanPath};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn path_index(p: PlanPath) -> usize {
    PlanPath::ALL.iter().position(|x| *x == p).unwrap()
}

pub fn oracle_links(p: PlanPath) -> &'static [Link] {
    match p {
        PlanPath::EdgeOnly => &[Link::Edge],
        PlanPath::EdgeLocal => &[Link::Edge, Link::EdgeLocal],
        PlanPath::EdgeCloud => &[Link::Edge, Link::EdgeCloud],
        PlanPath::EdgeCloudLocal => &[Link::Edge, Link::EdgeCloud, Link::CloudLocal],
    }
}

pub fn oracle_latency(p: PlanPath, n: &NetworkState) -> f64 {
    oracle_links(p)
        .iter()
        .map(|l| n.links[l].base_ms + n.links[l].jitter_ms / 2.0)
        .sum::<f64>()
        * n.degradation_multiplier
}

pub fn oracle_loss(p: PlanPath, d: &Decision, policy: &Policy) -> f64 {
    let pu = d.rho * (1.0 - d.gamma);
    let lm = &policy.loss_matrix;
    let row = |v: Verdict| pu * lm.unsafe_.get(v) + (1.0 - pu) * lm.safe.get(v);
    if d.verdict != Verdict::StepUp {
        return row(d.verdict);
    }
    let vf = &policy.verification_factors;
    let released = |f: f64| pu * (f * lm.unsafe_.allow + (1.0 - f) * lm.unsafe_.block) + (1.0 - pu) * lm.safe.allow;
    match p {
        PlanPath::EdgeOnly => row(Verdict::StepUp),
        PlanPath::EdgeLocal => released(vf.local),
        PlanPath::EdgeCloudLocal => released(vf.cloud_local),
        PlanPath::EdgeCloud => {
            pu * (vf.cloud * lm.unsafe_.step_up + (1.0 - vf.cloud) * lm.unsafe_.block) + (1.0 - pu) * lm.safe.step_up
        }
    }
}

pub struct RouterCase {
    pub policy: Policy,
    pub network: NetworkState,
    pub decision: Decision,
    pub payload: TransactionPayload,
}

pub fn random_case(rng: &mut ChaCha8Rng) -> RouterCase {
    let mut policy = Policy::profile(Profile::ALL[rng.gen_range(0..3)]);
    policy.cloud_enabled = rng.gen_bool(0.7);
    policy.beta = [0.0, 0.02, 0.1, 1.0][rng.gen_range(0..4)];
    policy.latency_budget_ms = rng.gen_range(20..1500);
    // coarse grids so ties actually happen
    for p in PlanPath::ALL {
        policy.plan_costs.insert(p, rng.gen_range(0..4) as f64);
    }
    policy.verification_factors.local = rng.gen_range(0..=4) as f64 / 4.0;
    policy.verification_factors.cloud = rng.gen_range(0..=4) as f64 / 4.0;
    policy.verification_factors.cloud_local = rng.gen_range(0..=4) as f64 / 4.0;
    let mut links = BTreeMap::new();
    for l in [Link::Edge, Link::EdgeLocal, Link::EdgeCloud, Link::CloudLocal] {
        links.insert(
            l,
            LinkModel {
                base_ms: rng.gen_range(1..300) as f64,
                jitter_ms: rng.gen_range(0..40) as f64,
                drop_prob: 0.0,
            },
        );
    }
    let network = NetworkState {
        links,
        degradation_multiplier: [1.0, 1.0, 1.5, 2.0, 4.0][rng.gen_range(0..5)],
    };
    let verdict = [Verdict::StepUp, Verdict::StepUp, Verdict::StepUp, Verdict::Allow, Verdict::Block][rng.gen_range(0..5)];
    let decision = Decision {
        verdict,
        reason: DecisionReason::Clean,
        gamma: rng.gen_range(0..=10) as f64 / 10.0,
        rho: rng.gen_range(0..=10) as f64 / 10.0,
        matched_rule: None,
    };
    let payload = generate_item(Pattern::ALL[rng.gen_range(0..Pattern::ALL.len())], rng.gen(), 0.5);
    RouterCase {
        policy,
        network,
        decision,
        payload,
    }
}

/// Exhaustive selection over the admissible paths. Leak counts are taken
/// from `plans` since the sanitizer has its own checks. Returns `None` when
/// nothing is feasible, or an error naming the first mismatching field.
pub fn brute_force(case: &RouterCase, plans: &[ComputePlan]) -> Result<Option<PlanPath>, String> {
    let RouterCase {
        policy,
        network,
        decision,
        ..
    } = case;
    let admissible: Vec<PlanPath> = if decision.verdict != Verdict::StepUp {
        vec![PlanPath::EdgeOnly]
    } else if policy.cloud_enabled {
        PlanPath::ALL.to_vec()
    } else {
        vec![PlanPath::EdgeOnly, PlanPath::EdgeLocal]
    };
    if plans.len() != admissible.len() {
        return Err(format!("{} plans for {} admissible paths", plans.len(), admissible.len()));
    }
    let mut best: Option<(f64, usize)> = None;
    for p in admissible {
        let plan = plans.iter().find(|c| c.path == p).ok_or(format!("{p} missing"))?;
        let lat = oracle_latency(p, network);
        if (plan.predicted_latency_ms - lat).abs() > 1e-9 {
            return Err(format!("{p} latency {} vs {lat}", plan.predicted_latency_ms));
        }
        let loss = oracle_loss(p, decision, policy);
        if (plan.expected_loss - loss).abs() > 1e-12 {
            return Err(format!("{p} loss {} vs {loss}", plan.expected_loss));
        }
        if !p.has_cloud() && plan.leak_count != 0 {
            return Err(format!("{p} leaks without a cloud hop"));
        }
        if plan.leak_count != 0 || lat > policy.latency_budget_ms as f64 {
            continue;
        }
        let obj = loss + policy.beta * policy.plan_cost(p);
        let i = path_index(p);
        if best.is_none_or(|(bo, bi)| obj < bo || (obj == bo && i < bi)) {
            best = Some((obj, i));
        }
    }
    Ok(best.map(|(_, i)| PlanPath::ALL[i]))
}
