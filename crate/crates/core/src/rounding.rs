//! Binary recovery from the relaxed solution: score-ranked cache filling,
//! threshold offload rounding, gate recomputation, optimal time
//! reallocation, and the sufficient feasibility certificate.

use alloc::vec::Vec;

use crate::config::SystemConfig;
use crate::energy::{exec_cost, multicast_gate_from_offload, Executor};
use crate::policy::{CachingVector, Policy, StateDecision};
use crate::solver::{solve_time_allocation, SolverOptions, SubproblemError};
use crate::state::{StateSpace, SystemState};

/// The cache scores `z_n = Pr[K_n >= 1] * T_fetch,n / l_sfw,n`, their
/// descending order, and the length of the prefix that fits the cache.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheRanking {
    pub scores: Vec<f64>,
    /// Service indices sorted by descending score, ties to the smaller index.
    pub order: Vec<usize>,
    /// Number of leading entries of `order` that were cached.
    pub prefix_len: usize,
}

/// How the ranked cache is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixRule {
    /// Stop at the first ranked item that no longer fits. The literal rule;
    /// the default.
    StrictPrefix,
    /// Keep walking the ranking and take whatever still fits.
    GreedyFill,
}

/// Rank services by fetch-time saving per cached bit and cache the top
/// prefix that fits. An empty cache is possible when even the top item
/// exceeds the capacity.
pub fn round_cache(cfg: &SystemConfig, space: &StateSpace) -> (CachingVector, CacheRanking) {
    round_cache_with(cfg, space, PrefixRule::StrictPrefix)
}

pub fn round_cache_with(
    cfg: &SystemConfig,
    space: &StateSpace,
    rule: PrefixRule,
) -> (CachingVector, CacheRanking) {
    let n = cfg.num_services;
    let scores: Vec<f64> = (0..n)
        .map(|sv| space.demand_prob(sv) * cfg.fetch_time(sv) / cfg.software_bits[sv])
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("scores are finite"));

    let mut cache = alloc::vec![0.0; n];
    let mut used = 0.0;
    let mut prefix_len = 0;
    for (rank, &sv) in order.iter().enumerate() {
        if used + cfg.software_bits[sv] <= cfg.cache_size {
            cache[sv] = 1.0;
            used += cfg.software_bits[sv];
            if rank == prefix_len {
                prefix_len += 1;
            }
        } else if rule == PrefixRule::StrictPrefix {
            break;
        }
    }
    (CachingVector(cache), CacheRanking { scores, order, prefix_len })
}

/// Threshold rounding of the relaxed offloads: user `k` on service `n`
/// offloads iff its relaxed offload is at least the service's relaxed gate;
/// the binary gates then follow from the max rule.
pub fn round_offload(
    state: &SystemState,
    relaxed: &StateDecision,
    num_services: usize,
) -> (Vec<f64>, Vec<f64>) {
    let offload: Vec<f64> = (0..state.num_users())
        .map(|k| {
            let n = state.services[k];
            if relaxed.offload[k] >= relaxed.multicast_gate[n] {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let gate = multicast_gate_from_offload(state, &offload, num_services);
    (offload, gate)
}

/// Optimal times for one state with the binaries frozen; thin wrapper over
/// the convex time-allocation subproblem.
pub fn reallocate_times(
    cfg: &SystemConfig,
    state: &SystemState,
    cache: &CachingVector,
    offload: &[f64],
    gate: &[f64],
    opts: &SolverOptions,
) -> Result<(StateDecision, f64), SubproblemError> {
    let sol = solve_time_allocation(cfg, state, cache.as_slice(), offload, gate, opts)?;
    Ok((sol.decision, sol.energy))
}

/// Per-state residuals of the sufficient feasibility conditions: fetch plus
/// server-execution load, and fetch plus each local execution, within the
/// deadline. Non-positive residuals certify that the zero-time allocation is
/// feasible, hence that time reallocation succeeds.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub holds: bool,
    /// Per state: (offload-path residual, worst local-path residual),
    /// positive = violated.
    pub residuals: Vec<(f64, f64)>,
}

pub fn lemma4_certificate(
    cfg: &SystemConfig,
    space: &StateSpace,
    cache: &CachingVector,
    offloads: &[Vec<f64>],
) -> Certificate {
    let mut holds = true;
    let mut residuals = Vec::with_capacity(space.len());
    for (state, offload) in space.states.iter().zip(offloads) {
        let fetch: f64 = (0..cfg.num_services)
            .filter(|&n| state.demanded(n))
            .map(|n| (1.0 - cache.as_slice()[n]) * cfg.fetch_time(n))
            .sum();
        let server: f64 = (0..cfg.num_users)
            .map(|k| offload[k] * exec_cost(Executor::ServingNode, state.load_cycles[k], cfg).0)
            .sum();
        let offload_residual = fetch + server - cfg.deadline;
        let local_residual = (0..cfg.num_users)
            .map(|k| {
                fetch + (1.0 - offload[k]) * exec_cost(Executor::User(k), state.load_cycles[k], cfg).0
                    - cfg.deadline
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if offload_residual > 0.0 || local_residual > 0.0 {
            holds = false;
        }
        residuals.push((offload_residual, local_residual));
    }
    Certificate { holds, residuals }
}

/// A recovered binary policy plus the artifacts of the recovery.
#[derive(Debug, Clone)]
pub struct RecoveredPolicy {
    pub policy: Policy,
    pub ranking: CacheRanking,
    pub certificate: Certificate,
}

/// Full recovery: rank-and-fill the cache, threshold-round the offloads,
/// recompute the gates, and re-solve the time allocation per state. States
/// whose reallocation is infeasible are reported, never repaired; they keep
/// the zero-time decision and push the objective to `+inf`.
pub fn recover_policy(
    cfg: &SystemConfig,
    space: &StateSpace,
    relaxed_decisions: &[StateDecision],
    opts: &SolverOptions,
) -> Result<RecoveredPolicy, SubproblemError> {
    let (cache, ranking) = round_cache(cfg, space);
    let mut offloads = Vec::with_capacity(space.len());
    let mut gates = Vec::with_capacity(space.len());
    for (state, relaxed) in space.states.iter().zip(relaxed_decisions) {
        let (o, y) = round_offload(state, relaxed, cfg.num_services);
        offloads.push(o);
        gates.push(y);
    }
    let certificate = lemma4_certificate(cfg, space, &cache, &offloads);

    let mut decisions = Vec::with_capacity(space.len());
    let mut objective = 0.0;
    let mut infeasible_states = Vec::new();
    for (q, state) in space.states.iter().enumerate() {
        match reallocate_times(cfg, state, &cache, &offloads[q], &gates[q], opts) {
            Ok((decision, energy)) => {
                objective += state.prob * energy;
                decisions.push(decision);
            }
            Err(SubproblemError::Infeasible { .. }) => {
                infeasible_states.push(q);
                objective = f64::INFINITY;
                let mut dec =
                    StateDecision::all_local(cfg.num_users, cfg.num_services, cache.as_slice());
                dec.offload.copy_from_slice(&offloads[q]);
                dec.multicast_gate.copy_from_slice(&gates[q]);
                decisions.push(dec);
            }
            Err(other) => return Err(other),
        }
    }
    Ok(RecoveredPolicy {
        policy: Policy {
            cache,
            decisions,
            objective,
            feasible: infeasible_states.is_empty(),
            infeasible_states,
        },
        ranking,
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::enumerate_states;

    #[test]
    fn cache_rule_table_case() {
        // N=4, gamma=0.8, K=2, sizes 4n*1e5, C=1e6: z-order equals the
        // popularity order, and only service 1 fits the prefix.
        let cfg = SystemConfig::defaults(2, 4);
        let space = enumerate_states(&cfg, 10_000).unwrap();
        let (cache, ranking) = round_cache(&cfg, &space);
        assert!((space.demand_prob(0) - 0.67639).abs() < 1e-4);
        assert_eq!(ranking.order, alloc::vec![0, 1, 2, 3]);
        assert_eq!(cache.0, alloc::vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(ranking.prefix_len, 1);
    }

    #[test]
    fn cache_extremes() {
        let mut cfg = SystemConfig::defaults(2, 4);
        cfg.cache_size = cfg.total_software_bits();
        let space = enumerate_states(&cfg, 10_000).unwrap();
        let (cache, _) = round_cache(&cfg, &space);
        assert_eq!(cache.0, alloc::vec![1.0; 4]);
        cfg.cache_size = 0.0;
        let (cache, ranking) = round_cache(&cfg, &space);
        assert_eq!(cache.0, alloc::vec![0.0; 4]);
        assert_eq!(ranking.prefix_len, 0);
    }

    #[test]
    fn prefix_rule_is_monotone_in_capacity() {
        let cfg = SystemConfig::defaults(2, 4);
        let space = enumerate_states(&cfg, 10_000).unwrap();
        let mut previous: Option<Vec<f64>> = None;
        for c in [0.0, 4e5, 1.2e6, 2.4e6, 4.0e6] {
            let mut cfg_c = cfg.clone();
            cfg_c.cache_size = c;
            let (cache, _) = round_cache(&cfg_c, &space);
            if let Some(prev) = &previous {
                for (now, before) in cache.0.iter().zip(prev) {
                    assert!(now >= before, "enlarging C evicted an entry");
                }
            }
            previous = Some(cache.0);
        }
    }

    #[test]
    fn threshold_rounding_examples() {
        let cfg = SystemConfig::defaults(2, 4);
        let state = crate::state::SystemState {
            services: alloc::vec![1, 1],
            input_bits: alloc::vec![1e5; 2],
            load_cycles: alloc::vec![1e6; 2],
            result_bits: alloc::vec![1e4; 2],
            gains: alloc::vec![1e-7; 2],
            prob: 1.0,
        };
        let mut relaxed = StateDecision::all_local(2, 4, &[0.0; 4]);
        relaxed.offload = alloc::vec![0.9, 0.1];
        relaxed.multicast_gate[1] = 0.5;
        let (o, y) = round_offload(&state, &relaxed, cfg.num_services);
        assert_eq!(o, alloc::vec![1.0, 0.0]);
        assert_eq!(y[1], 1.0);
        // 0.3 < 0.7 keeps the task local.
        relaxed.offload = alloc::vec![0.3, 0.3];
        relaxed.multicast_gate[1] = 0.7;
        let (o, y) = round_offload(&state, &relaxed, cfg.num_services);
        assert_eq!(o, alloc::vec![0.0, 0.0]);
        assert_eq!(y[1], 1.0);
    }

    #[test]
    fn certificate_examples() {
        let mut cfg = SystemConfig::defaults(2, 4);
        cfg.deadline = 10.0;
        let space = enumerate_states(&cfg, 10_000).unwrap();
        let cache = CachingVector(alloc::vec![0.0; 4]);
        let offloads = alloc::vec![alloc::vec![1.0, 0.0]; space.len()];
        assert!(lemma4_certificate(&cfg, &space, &cache, &offloads).holds);
        // Deadline below a single uncached fetch of a demanded software.
        cfg.deadline = 1e-3;
        let cert = lemma4_certificate(&cfg, &space, &cache, &offloads);
        assert!(!cert.holds);
        assert!(cert.residuals.iter().any(|&(a, b)| a > 0.0 || b > 0.0));
    }
}
