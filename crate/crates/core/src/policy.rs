//! Decision variables: the slow-timescale caching vector, the per-state
//! offloading and time allocation, and the assembled policy.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::state::StateSpace;

/// Distance below which an entry counts as binary.
pub const BINARY_TOL: f64 = 1e-9;

/// The slow-timescale caching decision `c` in `[0,1]^N`; binary after
/// recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachingVector(pub Vec<f64>);

impl CachingVector {
    pub fn zeros(num_services: usize) -> Self {
        CachingVector(alloc::vec![0.0; num_services])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Cache occupancy in bits.
    pub fn used_bits(&self, cfg: &SystemConfig) -> f64 {
        self.0.iter().zip(&cfg.software_bits).map(|(c, l)| c * l).sum()
    }

    pub fn fits_cache(&self, cfg: &SystemConfig) -> bool {
        self.used_bits(cfg) <= cfg.cache_size + 1e-9 * cfg.cache_size.max(1.0)
    }

    pub fn is_binary(&self, tol: f64) -> bool {
        self.0.iter().all(|&c| c.abs() <= tol || (c - 1.0).abs() <= tol)
    }
}

/// The fast-timescale decision for one system state, in the gated
/// (perspective) variables: `t` entries are the hatted times, zero whenever
/// the corresponding gate is zero. `local_cache` is the per-state ADMM copy
/// of the caching vector and coincides with the consensus cache outside ADMM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDecision {
    /// Offload indicator per user, `[0,1]` relaxed.
    pub offload: Vec<f64>,
    /// Multicast gate per service, `[0,1]` relaxed.
    pub multicast_gate: Vec<f64>,
    /// Upload time per user, s.
    pub upload_time: Vec<f64>,
    /// Download time per user, s.
    pub download_time: Vec<f64>,
    /// Multicast time per service, s.
    pub multicast_time: Vec<f64>,
    /// ADMM-local copy of the caching vector.
    pub local_cache: Vec<f64>,
    /// Consensus copy of the penalty slack, present only inside the CCP
    /// inner solver.
    pub local_slack: Option<f64>,
}

impl StateDecision {
    /// All-zero decision (everything local, no transmissions) against the
    /// given cache copy.
    pub fn all_local(num_users: usize, num_services: usize, cache: &[f64]) -> Self {
        StateDecision {
            offload: alloc::vec![0.0; num_users],
            multicast_gate: alloc::vec![0.0; num_services],
            upload_time: alloc::vec![0.0; num_users],
            download_time: alloc::vec![0.0; num_users],
            multicast_time: alloc::vec![0.0; num_services],
            local_cache: cache.to_vec(),
            local_slack: None,
        }
    }

    pub fn is_binary(&self, tol: f64) -> bool {
        self.offload.iter().chain(&self.multicast_gate).all(|&v| v.abs() <= tol || (v - 1.0).abs() <= tol)
    }
}

/// A complete joint policy: one caching vector plus a decision for every
/// state of the space, in canonical state order, with its evaluated expected
/// weighted energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub cache: CachingVector,
    /// One decision per state, indexed like `StateSpace::states`.
    pub decisions: Vec<StateDecision>,
    /// Expected weighted sum energy, J. `+inf` when some state admits no
    /// finite-energy decision.
    pub objective: f64,
    pub feasible: bool,
    /// Human-readable notes for infeasible or degenerate states.
    pub infeasible_states: Vec<usize>,
}

impl Policy {
    pub fn covers(&self, space: &StateSpace) -> bool {
        self.decisions.len() == space.len()
    }
}
