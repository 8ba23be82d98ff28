//! Exact brute force for tiny instances: enumerate every capacity-feasible
//! binary caching vector and, per state, every binary offload vector, with
//! the convex time allocation solved for each combination. Ground truth the
//! relaxation, rounding and penalty methods are sandwiched against.

use alloc::vec::Vec;

use crate::config::SystemConfig;
use crate::energy::multicast_gate_from_offload;
use crate::policy::CachingVector;
use crate::solver::{solve_time_allocation, SolverOptions, SubproblemError};
use crate::state::{StateSpace, SystemState};

/// Enumeration budget.
#[derive(Debug, Clone, Copy)]
pub struct OracleCaps {
    /// Upper bound on `2^N * |space| * 2^K` time-allocation solves.
    pub max_combinations: u64,
}

impl Default for OracleCaps {
    fn default() -> Self {
        OracleCaps { max_combinations: 1 << 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    CapExceeded { required: u128, cap: u64 },
    Solver(SubproblemError),
}

impl core::fmt::Display for OracleError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            OracleError::CapExceeded { required, cap } => {
                write!(f, "oracle needs {required} combination solves, above the cap of {cap}")
            }
            OracleError::Solver(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for OracleError {}

/// One enumerated combination, for debugging dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub cache_mask: u32,
    pub state_index: usize,
    pub offload_mask: u32,
    /// Optimal energy, `+inf` when the combination is deadline-infeasible.
    pub energy: f64,
}

/// The exact optimum and how much work it took.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub cache: CachingVector,
    /// Per-state optimal binary offloads, canonical state order.
    pub offloads: Vec<Vec<f64>>,
    pub objective: f64,
    pub cache_candidates: usize,
    pub combinations_solved: u64,
    pub table: Option<Vec<OracleRow>>,
}

/// Binary vector of length `len` from a mask, index 0 most significant, so
/// ascending masks enumerate vectors in lexicographic order.
fn mask_to_vec(mask: u32, len: usize) -> Vec<f64> {
    (0..len).map(|j| f64::from((mask >> (len - 1 - j)) & 1)).collect()
}

/// Exhaustive solve. Tie-breaks between equal-valued combinations go to the
/// lexicographically smallest vectors, which the ascending enumeration plus
/// strict improvement yields for free.
pub fn brute_force(
    cfg: &SystemConfig,
    space: &StateSpace,
    caps: OracleCaps,
    opts: &SolverOptions,
    keep_table: bool,
) -> Result<OracleResult, OracleError> {
    let n = cfg.num_services;
    let k = cfg.num_users;
    let required = (1u128 << n) * space.len() as u128 * (1u128 << k);
    if required > u128::from(caps.max_combinations) {
        return Err(OracleError::CapExceeded { required, cap: caps.max_combinations });
    }

    let mut best_cache: Option<Vec<f64>> = None;
    let mut best_offloads: Vec<Vec<f64>> = Vec::new();
    let mut best_value = f64::INFINITY;
    let mut cache_candidates = 0;
    let mut combinations = 0u64;
    let mut table = if keep_table { Some(Vec::new()) } else { None };

    for cache_mask in 0..(1u32 << n) {
        let cache = mask_to_vec(cache_mask, n);
        let used: f64 = cache.iter().zip(&cfg.software_bits).map(|(c, l)| c * l).sum();
        if used > cfg.cache_size * (1.0 + 1e-12) {
            continue;
        }
        cache_candidates += 1;

        let mut total = 0.0;
        let mut offloads = Vec::with_capacity(space.len());
        for (q, state) in space.states.iter().enumerate() {
            let (value, offload) = best_offload_for(
                cfg,
                state,
                &cache,
                opts,
                &mut combinations,
                table.as_mut().map(|t| (q, cache_mask, t)),
            )?;
            total += state.prob * value;
            offloads.push(offload);
        }
        if total < best_value {
            best_value = total;
            best_cache = Some(cache);
            best_offloads = offloads;
        }
    }

    match best_cache {
        Some(cache) => Ok(OracleResult {
            cache: CachingVector(cache),
            offloads: best_offloads,
            objective: best_value,
            cache_candidates,
            combinations_solved: combinations,
            table,
        }),
        None => Ok(OracleResult {
            // No capacity-feasible cache at all only happens for C < 0;
            // C = 0 always admits the empty cache.
            cache: CachingVector(alloc::vec![0.0; n]),
            offloads: alloc::vec![alloc::vec![0.0; k]; space.len()],
            objective: f64::INFINITY,
            cache_candidates,
            combinations_solved: combinations,
            table,
        }),
    }
}

/// Minimum over binary offload vectors of the optimal time-allocation value
/// for one state under a fixed cache.
fn best_offload_for(
    cfg: &SystemConfig,
    state: &SystemState,
    cache: &[f64],
    opts: &SolverOptions,
    combinations: &mut u64,
    mut table: Option<(usize, u32, &mut Vec<OracleRow>)>,
) -> Result<(f64, Vec<f64>), OracleError> {
    let k = cfg.num_users;
    let mut best = f64::INFINITY;
    let mut best_offload = mask_to_vec(0, k);
    for offload_mask in 0..(1u32 << k) {
        let offload = mask_to_vec(offload_mask, k);
        let gate = multicast_gate_from_offload(state, &offload, cfg.num_services);
        *combinations += 1;
        let value = match solve_time_allocation(cfg, state, cache, &offload, &gate, opts) {
            Ok(sol) => sol.energy,
            Err(SubproblemError::Infeasible { .. }) => f64::INFINITY,
            Err(other) => return Err(OracleError::Solver(other)),
        };
        if let Some((q, cache_mask, rows)) = table.as_mut() {
            rows.push(OracleRow {
                cache_mask: *cache_mask,
                state_index: *q,
                offload_mask,
                energy: value,
            });
        }
        if value < best {
            best = value;
            best_offload = offload;
        }
    }
    Ok((best, best_offload))
}

/// Same optimum computed with the enumeration order swapped (states outer,
/// caches inner); used to audit the decomposition.
pub fn brute_force_swapped(
    cfg: &SystemConfig,
    space: &StateSpace,
    caps: OracleCaps,
    opts: &SolverOptions,
) -> Result<f64, OracleError> {
    let n = cfg.num_services;
    let required = (1u128 << n) * space.len() as u128 * (1u128 << cfg.num_users);
    if required > u128::from(caps.max_combinations) {
        return Err(OracleError::CapExceeded { required, cap: caps.max_combinations });
    }
    let masks: Vec<u32> = (0..(1u32 << n))
        .filter(|&m| {
            let cache = mask_to_vec(m, n);
            let used: f64 = cache.iter().zip(&cfg.software_bits).map(|(c, l)| c * l).sum();
            used <= cfg.cache_size * (1.0 + 1e-12)
        })
        .collect();
    let mut totals = alloc::vec![0.0f64; masks.len()];
    let mut combinations = 0u64;
    for state in &space.states {
        for (i, &mask) in masks.iter().enumerate() {
            let cache = mask_to_vec(mask, n);
            let (value, _) = best_offload_for(cfg, state, &cache, opts, &mut combinations, None)?;
            totals[i] += state.prob * value;
        }
    }
    Ok(totals.into_iter().fold(f64::INFINITY, f64::min))
}
