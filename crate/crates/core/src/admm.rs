//! Consensus ADMM for the relaxed problem: per-state local minimization
//! with a copy of the caching vector, global averaging of the copies, dual
//! ascent, and residual-based stopping.

use alloc::vec::Vec;

use crate::baselines::most_popular_cache;
use crate::config::SystemConfig;
use crate::math::{clamp01, diff_norm2, sqrt};
use crate::policy::{CachingVector, Policy, StateDecision};
use crate::solver::{
    solve_state_subproblem, CachePenalty, SolverOptions, SubproblemError, SubproblemMode,
    SubproblemSpec,
};
use crate::state::StateSpace;

/// How per-state primal residuals are aggregated into the stopping test.
/// The update rule fixes the dual residual to the global cache change; the
/// aggregation of the per-state consensus gaps is a solver choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimalAggregation {
    /// Worst state: `max_q ||chat(q) - c||`.
    Max,
    /// Stacked norm: `sqrt(sum_q ||chat(q) - c||^2)`.
    Sum,
}

#[derive(Debug, Clone)]
pub struct AdmmOptions {
    /// Augmented-Lagrangian penalty `rho`.
    pub rho: f64,
    /// Residual tolerance `eps` for both stopping tests.
    pub eps: f64,
    pub max_iters: usize,
    pub primal_aggregation: PrimalAggregation,
    /// Initial consensus cache `c_0`; `None` picks the most-popular-fit
    /// caching vector, a feasible warm start.
    pub init_cache: Option<Vec<f64>>,
    /// Initial dual value (every entry of every state's multiplier).
    pub init_dual: f64,
    pub solver: SolverOptions,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            rho: 0.1,
            eps: 1e-3,
            max_iters: 400,
            primal_aggregation: PrimalAggregation::Max,
            init_cache: None,
            init_dual: 1e-3,
            solver: SolverOptions::default(),
        }
    }
}

/// One trace row per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmIterRow {
    pub iter: usize,
    /// Expected weighted sum energy at the current local decisions.
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Total amount the averaged cache was clamped back into `[0,1]`.
    pub clamp_magnitude: f64,
}

/// Internal iterate of the consensus loop.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub iteration: usize,
    pub consensus: Vec<f64>,
    /// Per-state cache copies, canonical state order.
    pub local_caches: Vec<Vec<f64>>,
    /// Per-state multipliers.
    pub duals: Vec<Vec<f64>>,
    pub decisions: Vec<StateDecision>,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Result of the relaxed consensus solve.
#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// Relaxed policy with every decision re-solved once against the final
    /// consensus cache, so the reported objective is exactly attainable.
    pub policy: Policy,
    pub state: AdmmState,
    pub trace: Vec<AdmmIterRow>,
    pub converged: bool,
    /// Newton iterations spent across all subproblem solves.
    pub newton_iters: usize,
}

/// Residuals of one consensus step: primal from the copy/consensus gaps,
/// dual as `rho * ||c_{t+1} - c_t||`.
pub fn residuals(
    local_caches: &[Vec<f64>],
    consensus: &[f64],
    previous_consensus: &[f64],
    rho: f64,
    aggregation: PrimalAggregation,
) -> (f64, f64) {
    let primal = match aggregation {
        PrimalAggregation::Max => local_caches
            .iter()
            .map(|chat| diff_norm2(chat, consensus))
            .fold(0.0, f64::max),
        PrimalAggregation::Sum => sqrt(
            local_caches
                .iter()
                .map(|chat| {
                    let d = diff_norm2(chat, consensus);
                    d * d
                })
                .sum(),
        ),
    };
    let dual = rho * diff_norm2(consensus, previous_consensus);
    (primal, dual)
}

/// Solve the relaxed problem by consensus ADMM. Any state subproblem that
/// turns out infeasible aborts with the offending state index.
pub fn admm_solve_relaxed(
    cfg: &SystemConfig,
    space: &StateSpace,
    opts: &AdmmOptions,
) -> Result<AdmmOutcome, AdmmError> {
    let n = cfg.num_services;
    let num_states = space.len();
    let mut consensus = match &opts.init_cache {
        Some(c) => c.clone(),
        None => most_popular_cache(cfg).0,
    };
    let mut duals: Vec<Vec<f64>> = alloc::vec![alloc::vec![opts.init_dual; n]; num_states];
    let mut warm: Vec<Option<Vec<f64>>> = alloc::vec![None; num_states];
    let mut local_caches: Vec<Vec<f64>> = alloc::vec![alloc::vec![0.0; n]; num_states];
    let mut decisions: Vec<StateDecision> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iteration = 0;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut newton_iters = 0;

    for t in 0..opts.max_iters {
        iteration = t;
        // Local step: one subproblem per state against the current anchors.
        let mut objective = 0.0;
        decisions = Vec::with_capacity(num_states);
        for (q, state) in space.states.iter().enumerate() {
            let spec = SubproblemSpec {
                cfg,
                state,
                mode: SubproblemMode::Relaxed,
                energy_weight: state.prob,
                fixed_cache: None,
                cache_penalty: Some(CachePenalty {
                    dual: duals[q].clone(),
                    anchor: consensus.clone(),
                    rho: opts.rho,
                }),
                offload_penalty: None,
                slack_penalty: None,
            };
            let sol = solve_state_subproblem(&spec, &opts.solver, warm[q].as_deref())
                .map_err(|source| AdmmError { state_index: q, source })?;
            objective += state.prob * sol.energy;
            newton_iters += sol.newton_iters;
            local_caches[q].copy_from_slice(&sol.decision.local_cache);
            warm[q] = Some(sol.x.clone());
            decisions.push(sol.decision);
        }

        // Global step: average the copies (with scaled duals), then clamp
        // back into the box; the averaging alone is the unconstrained
        // minimizer and can step outside.
        let prev = consensus.clone();
        let mut clamp_magnitude = 0.0;
        for j in 0..n {
            let mean: f64 = (0..num_states)
                .map(|q| local_caches[q][j] + duals[q][j] / opts.rho)
                .sum::<f64>()
                / num_states as f64;
            let clamped = clamp01(mean);
            clamp_magnitude += (mean - clamped).abs();
            consensus[j] = clamped;
        }

        // Dual ascent.
        for q in 0..num_states {
            for j in 0..n {
                duals[q][j] += opts.rho * (local_caches[q][j] - consensus[j]);
            }
        }

        let (p, d) = residuals(&local_caches, &consensus, &prev, opts.rho, opts.primal_aggregation);
        primal = p;
        dual = d;
        trace.push(AdmmIterRow {
            iter: t,
            objective,
            primal_residual: p,
            dual_residual: d,
            clamp_magnitude,
        });
        if p <= opts.eps && d <= opts.eps {
            converged = true;
            break;
        }
    }

    // Consistency re-solve: freeze every copy to the consensus cache so the
    // reported policy is exactly feasible (consensus only holds within eps).
    let mut objective = 0.0;
    let mut final_decisions = Vec::with_capacity(num_states);
    for (q, state) in space.states.iter().enumerate() {
        let spec = SubproblemSpec {
            cfg,
            state,
            mode: SubproblemMode::Relaxed,
            energy_weight: 1.0,
            fixed_cache: Some(consensus.clone()),
            cache_penalty: None,
            offload_penalty: None,
            slack_penalty: None,
        };
        let sol = solve_state_subproblem(&spec, &opts.solver, None)
            .map_err(|source| AdmmError { state_index: q, source })?;
        objective += state.prob * sol.energy;
        newton_iters += sol.newton_iters;
        final_decisions.push(sol.decision);
    }

    let policy = Policy {
        cache: CachingVector(consensus.clone()),
        decisions: final_decisions,
        objective,
        feasible: true,
        infeasible_states: Vec::new(),
    };
    Ok(AdmmOutcome {
        policy,
        state: AdmmState {
            iteration,
            consensus,
            local_caches,
            duals,
            decisions,
            primal_residual: primal,
            dual_residual: dual,
        },
        trace,
        converged,
        newton_iters,
    })
}

/// A state subproblem failed during the consensus loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmError {
    pub state_index: usize,
    pub source: SubproblemError,
}

impl core::fmt::Display for AdmmError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "state {}: {}", self.state_index, self.source)
    }
}

impl core::error::Error for AdmmError {}

/// Mean squared consensus gap, used by convergence diagnostics.
pub fn consensus_gap(local_caches: &[Vec<f64>], consensus: &[f64]) -> f64 {
    if local_caches.is_empty() {
        return 0.0;
    }
    let total: f64 = local_caches
        .iter()
        .map(|chat| {
            let d = diff_norm2(chat, consensus);
            d * d
        })
        .sum();
    sqrt(total / local_caches.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn global_step_is_the_scaled_mean() {
        // Two states, chat = (0.2) and (0.6), duals zero: c = 0.4.
        let caches = alloc::vec![alloc::vec![0.2], alloc::vec![0.6]];
        let mean: f64 = caches.iter().map(|c| c[0]).sum::<f64>() / 2.0;
        assert!((mean - 0.4).abs() < 1e-15);
    }

    #[test]
    fn residual_examples() {
        let caches = alloc::vec![alloc::vec![0.3, 0.4]];
        let (p, d) = residuals(&caches, &[0.0, 0.0], &[0.0, 0.0], 0.1, PrimalAggregation::Max);
        assert!((p - 0.5).abs() < 1e-15);
        assert_eq!(d, 0.0);
        let consensus = alloc::vec![0.3, 0.4];
        let (p, _) = residuals(&caches, &consensus, &consensus, 0.1, PrimalAggregation::Max);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn dual_update_identity_holds_exactly() {
        // theta' - theta == rho * (chat - c) by construction.
        let rho = 0.25;
        let chat = [0.7, 0.1];
        let c = [0.4, 0.2];
        let mut theta = [1e-3, 1e-3];
        let before = theta;
        for j in 0..2 {
            theta[j] += rho * (chat[j] - c[j]);
        }
        for j in 0..2 {
            assert_eq!(theta[j] - before[j], rho * (chat[j] - c[j]));
        }
    }

    #[test]
    fn norm_helper_is_euclidean() {
        assert!((crate::math::norm2(&[3.0, 4.0]) - 5.0).abs() < 1e-15);
    }
}
