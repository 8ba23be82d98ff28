//! The two fixed-strategy comparison schemes, evaluated under the same
//! energy and feasibility accounting as the optimized policies.

use alloc::vec::Vec;

use crate::config::SystemConfig;
use crate::energy::{exec_cost, total_energy, EnergyForm, Executor};
use crate::policy::{CachingVector, Policy, StateDecision};
use crate::state::{StateSpace, SystemState};

/// How the popularity-ranked cache is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheFillRule {
    /// Keep going down the ranking, skipping items that no longer fit.
    GreedySkip,
    /// Stop at the first item that does not fit.
    StrictPrefix,
}

/// Comparison scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineScheme {
    /// Execute every task locally; split the multicast budget equally over
    /// the requested services.
    LocalEqualMulticast,
    /// Offload every task; split the transmission budget equally over the
    /// `2K` upload/download slots.
    OffloadEqualSplit,
}

/// A fully specified baseline: the scheme determines every decision given
/// the configuration, the state and the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineSpec {
    pub scheme: BaselineScheme,
    pub cache_rule: CacheFillRule,
}

impl BaselineSpec {
    pub fn new(scheme: BaselineScheme) -> Self {
        BaselineSpec { scheme, cache_rule: CacheFillRule::GreedySkip }
    }
}

/// Most-popular caching: fill the cache in descending demand probability
/// (ties to the smaller index), greedily skipping items that do not fit.
pub fn most_popular_cache(cfg: &SystemConfig) -> CachingVector {
    most_popular_cache_with(cfg, CacheFillRule::GreedySkip)
}

pub fn most_popular_cache_with(cfg: &SystemConfig, rule: CacheFillRule) -> CachingVector {
    let mut order: Vec<usize> = (0..cfg.num_services).collect();
    // Stable sort keeps the smaller index first on ties.
    order.sort_by(|&a, &b| {
        cfg.service_probs[b].partial_cmp(&cfg.service_probs[a]).expect("probabilities are finite")
    });
    let mut cache = alloc::vec![0.0; cfg.num_services];
    let mut used = 0.0;
    for &n in &order {
        if used + cfg.software_bits[n] <= cfg.cache_size {
            cache[n] = 1.0;
            used += cfg.software_bits[n];
        } else if rule == CacheFillRule::StrictPrefix {
            break;
        }
    }
    CachingVector(cache)
}

/// The requested services `X'` of a state.
fn requested(cfg: &SystemConfig, state: &SystemState) -> Vec<usize> {
    state.demanded_services(cfg.num_services)
}

fn fetch_total(cfg: &SystemConfig, state: &SystemState, cache: &[f64]) -> f64 {
    requested(cfg, state).iter().map(|&n| (1.0 - cache[n]) * cfg.fetch_time(n)).sum()
}

/// All tasks local, equal multicast time over the requested services:
/// `t_sfw = (D - fetch - max_k L_e,k/F_k) / |X'|`. A negative budget yields
/// the zero-time decision, to be flagged by the caller.
pub fn baseline_local(state: &SystemState, cache: &CachingVector, cfg: &SystemConfig) -> StateDecision {
    let services = requested(cfg, state);
    let max_exec = (0..cfg.num_users)
        .map(|k| exec_cost(Executor::User(k), state.load_cycles[k], cfg).0)
        .fold(0.0, f64::max);
    let budget = cfg.deadline - fetch_total(cfg, state, cache.as_slice()) - max_exec;
    let share = if services.is_empty() { 0.0 } else { (budget / services.len() as f64).max(0.0) };
    let mut decision = StateDecision::all_local(cfg.num_users, cfg.num_services, cache.as_slice());
    for &n in &services {
        decision.multicast_gate[n] = 1.0;
        decision.multicast_time[n] = share;
    }
    decision
}

/// All tasks offloaded, equal upload/download times:
/// `t_u = t_d = (D - fetch - sum_k L_e,k/F_sn) / (2K)`, no multicast.
pub fn baseline_offload(state: &SystemState, cache: &CachingVector, cfg: &SystemConfig) -> StateDecision {
    let exec_sum: f64 =
        (0..cfg.num_users).map(|k| exec_cost(Executor::ServingNode, state.load_cycles[k], cfg).0).sum();
    let budget = cfg.deadline - fetch_total(cfg, state, cache.as_slice()) - exec_sum;
    let share = (budget / (2.0 * cfg.num_users as f64)).max(0.0);
    StateDecision {
        offload: alloc::vec![1.0; cfg.num_users],
        multicast_gate: alloc::vec![0.0; cfg.num_services],
        upload_time: alloc::vec![share; cfg.num_users],
        download_time: alloc::vec![share; cfg.num_users],
        multicast_time: alloc::vec![0.0; cfg.num_services],
        local_cache: cache.as_slice().to_vec(),
        local_slack: None,
    }
}

/// A baseline evaluated over the whole space. Infeasible states contribute
/// the `+inf` sentinel to the objective and their probability mass to the
/// infeasibility rate; they are never silently repaired.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub policy: Policy,
    /// Probability mass of states the scheme cannot serve within `D`.
    pub infeasible_rate: f64,
}

pub fn evaluate_baseline(spec: &BaselineSpec, cfg: &SystemConfig, space: &StateSpace) -> BaselineOutcome {
    let cache = most_popular_cache_with(cfg, spec.cache_rule);
    let mut decisions = Vec::with_capacity(space.len());
    let mut objective = 0.0;
    let mut infeasible_rate = 0.0;
    let mut infeasible_states = Vec::new();
    for (q, state) in space.states.iter().enumerate() {
        let decision = match spec.scheme {
            BaselineScheme::LocalEqualMulticast => baseline_local(state, &cache, cfg),
            BaselineScheme::OffloadEqualSplit => baseline_offload(state, &cache, cfg),
        };
        let energy = total_energy(state, &cache, &decision, cfg, EnergyForm::Perspective)
            .expect("baseline decisions are dimensionally consistent")
            .total_j;
        if !energy.is_finite() {
            infeasible_rate += state.prob;
            infeasible_states.push(q);
        }
        objective += state.prob * energy;
        decisions.push(decision);
    }
    BaselineOutcome {
        policy: Policy {
            cache,
            decisions,
            objective,
            feasible: infeasible_states.is_empty(),
            infeasible_states,
        },
        infeasible_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Pmf;

    #[test]
    fn popularity_cache_table_case() {
        // C = 1e6, sizes 4n*1e5: service 1 fits, service 2 no longer does,
        // and under greedy-skip nothing smaller exists to add.
        let cfg = SystemConfig::defaults(2, 4);
        let cache = most_popular_cache(&cfg);
        assert_eq!(cache.0, alloc::vec![1.0, 0.0, 0.0, 0.0]);
        let mut cfg0 = cfg.clone();
        cfg0.cache_size = 0.0;
        assert_eq!(most_popular_cache(&cfg0).0, alloc::vec![0.0; 4]);
        let mut cfg_all = cfg;
        cfg_all.cache_size = cfg_all.total_software_bits();
        assert_eq!(most_popular_cache(&cfg_all).0, alloc::vec![1.0; 4]);
    }

    #[test]
    fn greedy_skip_differs_from_strict_prefix() {
        // Sizes 4e5, 8e5, 1.2e6, 1.6e6 with C = 1.7e6: greedy puts service 1
        // (4e5) then skips 2 (8e5 fits! 1.2e6 total) — adjust to make a skip:
        // C = 1.0e6 + 4e5 = 1.4e6: 1 (4e5) + 2 (8e5) = 1.2e6, 3 no, 4 no.
        let mut cfg = SystemConfig::defaults(2, 4);
        cfg.cache_size = 1.3e6;
        // popularity order 1,2,3,4; greedy: 4e5 + 8e5 = 1.2e6; 1.2e6+1.2e6 > C skip; +1.6e6 skip.
        let greedy = most_popular_cache_with(&cfg, CacheFillRule::GreedySkip);
        assert_eq!(greedy.0, alloc::vec![1.0, 1.0, 0.0, 0.0]);
        // Make the second item too big so strict stops and greedy continues.
        cfg.software_bits = alloc::vec![4e5, 1.6e6, 4e5, 4e5];
        let strict = most_popular_cache_with(&cfg, CacheFillRule::StrictPrefix);
        assert_eq!(strict.0, alloc::vec![1.0, 0.0, 0.0, 0.0]);
        let greedy = most_popular_cache_with(&cfg, CacheFillRule::GreedySkip);
        assert_eq!(greedy.0, alloc::vec![1.0, 0.0, 1.0, 1.0]);
    }

    fn state2() -> SystemState {
        SystemState {
            services: alloc::vec![0, 0],
            input_bits: alloc::vec![9e5; 2],
            load_cycles: alloc::vec![1e6; 2],
            result_bits: alloc::vec![1e4; 2],
            gains: alloc::vec![1e-7; 2],
            prob: 1.0,
        }
    }

    #[test]
    fn local_baseline_matches_hand_arithmetic() {
        // D = 0.05, one requested uncached service with fetch 4e-3, max local
        // exec 1.4286e-3: t_sfw = 0.05 - 0.004 - 0.0014286 = 0.0445714.
        let mut cfg = SystemConfig::defaults(2, 4);
        cfg.deadline = 0.05;
        cfg.cache_size = 0.0;
        let state = state2();
        let cache = most_popular_cache(&cfg);
        let dec = baseline_local(&state, &cache, &cfg);
        assert_eq!(dec.offload, alloc::vec![0.0, 0.0]);
        assert!((dec.multicast_time[0] - 0.0445714).abs() < 1e-6);
        assert_eq!(dec.multicast_time[1], 0.0);
        assert_eq!(dec.upload_time, alloc::vec![0.0, 0.0]);
    }

    #[test]
    fn offload_baseline_matches_hand_arithmetic() {
        // K = 2, D = 0.1, all software cached, server exec sum 3.333e-4:
        // t_u = t_d = (0.1 - 3.333e-4)/4 = 0.0249167.
        let mut cfg = SystemConfig::defaults(2, 4);
        cfg.deadline = 0.1;
        cfg.cache_size = cfg.total_software_bits();
        let state = state2();
        let cache = most_popular_cache(&cfg);
        let dec = baseline_offload(&state, &cache, &cfg);
        assert!((dec.upload_time[0] - 0.0249167).abs() < 1e-6);
        assert_eq!(dec.upload_time, dec.download_time);
        assert_eq!(dec.multicast_gate, alloc::vec![0.0; 4]);
        assert_eq!(dec.multicast_time, alloc::vec![0.0; 4]);
    }

    #[test]
    fn negative_budget_is_flagged_with_infinite_energy() {
        let mut cfg = SystemConfig::defaults(2, 4);
        cfg.deadline = 1e-3; // below one fetch time
        cfg.cache_size = 0.0;
        cfg.input_bits = Pmf::singleton(9e5);
        cfg.load_cycles = Pmf::singleton(1e6);
        cfg.result_bits = Pmf::singleton(1e4);
        cfg.gain = Pmf::singleton(1e-7);
        let space = crate::state::enumerate_states(&cfg, 100).unwrap();
        let out = evaluate_baseline(&BaselineSpec::new(BaselineScheme::LocalEqualMulticast), &cfg, &space);
        assert!(!out.policy.feasible);
        assert!(out.infeasible_rate > 0.0);
        assert!(out.policy.objective.is_infinite());
    }
}
