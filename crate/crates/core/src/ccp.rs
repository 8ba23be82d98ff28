//! Penalty convex-concave procedure: the binary constraints become the
//! concave gap `F(c, o) = sum o(1-o) + sum c(1-c) <= 0`, linearized at the
//! previous iterate and relaxed by a slack that an increasing penalty weight
//! drives to zero. Each outer iteration solves its convex approximation with
//! an inner consensus ADMM over the shared cache and slack.

use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::admm::AdmmError;
use crate::config::SystemConfig;
use crate::energy::multicast_gate_from_offload;
use crate::math::{clamp01, sqrt};
use crate::policy::{CachingVector, Policy, StateDecision};
use crate::rounding::reallocate_times;
use crate::solver::{
    solve_state_subproblem, CachePenalty, OffloadPenalty, SlackPenalty, SolverOptions,
    SubproblemError, SubproblemMode, SubproblemSpec,
};
use crate::state::StateSpace;

/// Binary gap `F(c, o) = sum_k o_k (1 - o_k) + sum_n c_n (1 - c_n)`; zero
/// exactly on binary points, positive elsewhere in the box.
pub fn binary_gap(cache: &[f64], offload: &[f64]) -> f64 {
    cache.iter().chain(offload).map(|&x| x * (1.0 - x)).sum()
}

/// Linearization of the gap at an anchor:
/// `Fhat = sum ((x0)^2 + x (1 - 2 x0))` over both blocks. Majorizes `F`
/// with exact excess `||x - x0||^2`, so `Fhat <= s` implies `F <= s`.
pub fn linearized_gap(cache: &[f64], offload: &[f64], anchor_cache: &[f64], anchor_offload: &[f64]) -> f64 {
    let part = |xs: &[f64], anchors: &[f64]| -> f64 {
        xs.iter().zip(anchors).map(|(&x, &a)| a * a + x * (1.0 - 2.0 * a)).sum()
    };
    part(cache, anchor_cache) + part(offload, anchor_offload)
}

#[derive(Debug, Clone)]
pub struct CcpOptions {
    /// Initial penalty weight, its growth factor, and its cap.
    pub tau0: f64,
    pub nu: f64,
    pub tau_max: f64,
    /// Tolerance for both the inner residuals and the outer iterate change.
    pub eps: f64,
    /// Inner ADMM penalty.
    pub rho: f64,
    pub inner_max_iters: usize,
    pub outer_max_iters: usize,
    /// Entries this close to the nearest binary get snapped at the end.
    pub snap_tol: f64,
    /// Slack at or below this counts as zero penalty.
    pub zero_penalty_tol: f64,
    pub solver: SolverOptions,
}

impl Default for CcpOptions {
    fn default() -> Self {
        CcpOptions {
            tau0: 1e-3,
            nu: 2.0,
            tau_max: 1.0,
            eps: 1e-3,
            rho: 0.1,
            inner_max_iters: 200,
            outer_max_iters: 60,
            snap_tol: 1e-3,
            zero_penalty_tol: 1e-6,
            solver: SolverOptions::default(),
        }
    }
}

/// Linearization anchor: the caching vector plus the per-state offloads.
#[derive(Debug, Clone)]
pub struct CcpAnchor {
    pub cache: Vec<f64>,
    pub offloads: Vec<Vec<f64>>,
}

impl CcpAnchor {
    /// Anchor from a (typically binary) policy.
    pub fn from_policy(policy: &Policy) -> Self {
        CcpAnchor {
            cache: policy.cache.0.clone(),
            offloads: policy.decisions.iter().map(|d| d.offload.clone()).collect(),
        }
    }
}

/// One inner consensus solve of the convex approximation.
#[derive(Debug, Clone)]
pub struct InnerResult {
    pub cache: Vec<f64>,
    pub slack: f64,
    pub decisions: Vec<StateDecision>,
    /// Expected weighted energy at the per-state decisions.
    pub energy: f64,
    pub iters: usize,
    pub converged: bool,
    pub cache_duals: Vec<Vec<f64>>,
    pub slack_duals: Vec<f64>,
}

/// Warm-start data threaded between consecutive inner solves.
#[derive(Debug, Clone, Default)]
pub struct InnerWarm {
    pub cache: Option<Vec<f64>>,
    pub slack: Option<f64>,
    pub cache_duals: Option<Vec<Vec<f64>>>,
    pub slack_duals: Option<Vec<f64>>,
    pub points: Option<Vec<Vec<f64>>>,
}

/// Solve the penalized convex approximation at a fixed anchor and penalty
/// weight by consensus ADMM over `(c, s)`. Every state's subproblem carries
/// the full `tau * shat(Q)` term, so at consensus the solved objective is
/// `energy + tau * |Q| * s`: the per-state penalty weight is what keeps the
/// slack consensus moving at a size-independent rate.
pub fn ccp_inner_admm(
    cfg: &SystemConfig,
    space: &StateSpace,
    anchor: &CcpAnchor,
    tau: f64,
    opts: &CcpOptions,
    warm: &InnerWarm,
) -> Result<InnerResult, AdmmError> {
    let n = cfg.num_services;
    let num_states = space.len();

    let mut consensus = warm.cache.clone().unwrap_or_else(|| anchor.cache.clone());
    // Default slack init: just above the anchor's own binary gap.
    let default_slack = 0.1
        + (0..num_states)
            .map(|q| binary_gap(&anchor.cache, &anchor.offloads[q]))
            .fold(0.0, f64::max);
    let mut slack = warm.slack.unwrap_or(default_slack);
    let mut cache_duals: Vec<Vec<f64>> =
        warm.cache_duals.clone().unwrap_or_else(|| alloc::vec![alloc::vec![1e-3; n]; num_states]);
    let mut slack_duals: Vec<f64> =
        warm.slack_duals.clone().unwrap_or_else(|| alloc::vec![1e-3; num_states]);
    let mut points: Vec<Option<Vec<f64>>> = match &warm.points {
        Some(ps) => ps.iter().map(|p| Some(p.clone())).collect(),
        None => alloc::vec![None; num_states],
    };

    let mut decisions: Vec<StateDecision> = Vec::new();
    let mut energy = 0.0;
    let mut converged = false;
    let mut iters = 0;

    for t in 0..opts.inner_max_iters {
        iters = t + 1;
        energy = 0.0;
        decisions = Vec::with_capacity(num_states);
        let mut local_caches: Vec<&[f64]> = Vec::with_capacity(num_states);
        for (q, state) in space.states.iter().enumerate() {
            let spec = SubproblemSpec {
                cfg,
                state,
                mode: SubproblemMode::Penalized {
                    anchor_cache: anchor.cache.clone(),
                    anchor_offload: anchor.offloads[q].clone(),
                },
                energy_weight: state.prob,
                fixed_cache: None,
                cache_penalty: Some(CachePenalty {
                    dual: cache_duals[q].clone(),
                    anchor: consensus.clone(),
                    rho: opts.rho,
                }),
                offload_penalty: None,
                slack_penalty: Some(SlackPenalty {
                    dual: slack_duals[q],
                    anchor: slack,
                    rho: opts.rho,
                    tau,
                }),
            };
            let sol = solve_state_subproblem(&spec, &opts.solver, points[q].as_deref())
                .map_err(|source| AdmmError { state_index: q, source })?;
            energy += state.prob * sol.energy;
            points[q] = Some(sol.x.clone());
            decisions.push(sol.decision);
        }
        for d in &decisions {
            local_caches.push(&d.local_cache);
        }

        // Global averages with scaled duals; cache clamped into the box,
        // slack clamped non-negative.
        let prev_c = consensus.clone();
        let prev_s = slack;
        for j in 0..n {
            let mean: f64 = (0..num_states)
                .map(|q| local_caches[q][j] + cache_duals[q][j] / opts.rho)
                .sum::<f64>()
                / num_states as f64;
            consensus[j] = clamp01(mean);
        }
        slack = ((0..num_states)
            .map(|q| decisions[q].local_slack.expect("penalized solve sets the slack") + slack_duals[q] / opts.rho)
            .sum::<f64>()
            / num_states as f64)
            .max(0.0);

        // Dual ascent on both consensus constraints.
        for q in 0..num_states {
            for j in 0..n {
                cache_duals[q][j] += opts.rho * (local_caches[q][j] - consensus[j]);
            }
            slack_duals[q] +=
                opts.rho * (decisions[q].local_slack.expect("slack present") - slack);
        }

        // Residuals over the joint (cache, slack) copies.
        let primal = (0..num_states)
            .map(|q| {
                let mut acc = 0.0;
                for j in 0..n {
                    let d = decisions[q].local_cache[j] - consensus[j];
                    acc += d * d;
                }
                let ds = decisions[q].local_slack.expect("slack present") - slack;
                sqrt(acc + ds * ds)
            })
            .fold(0.0, f64::max);
        let mut dual_acc = 0.0;
        for j in 0..n {
            let d = consensus[j] - prev_c[j];
            dual_acc += d * d;
        }
        let ds = slack - prev_s;
        let dual = opts.rho * sqrt(dual_acc + ds * ds);
        if primal <= opts.eps && dual <= opts.eps {
            converged = true;
            break;
        }
    }

    Ok(InnerResult {
        cache: consensus,
        slack,
        decisions,
        energy,
        iters,
        converged,
        cache_duals,
        slack_duals,
    })
}

/// One outer-iteration trace row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcpOuterRow {
    pub iteration: usize,
    pub tau: f64,
    pub slack: f64,
    pub energy: f64,
    /// The solved penalized objective `energy + tau * |Q| * slack` (the
    /// penalty weight applies per state).
    pub penalized: f64,
}

/// Result of one penalty-CCP run.
#[derive(Debug, Clone)]
pub struct CcpResult {
    /// Final policy, snapped to exact binaries and re-timed when the limit
    /// is near-binary.
    pub policy: Policy,
    /// Whether the limit counts as binary: all `(c, o)` within the snap
    /// tolerance of `{0,1}` and slack at most the zero-penalty tolerance.
    pub binary: bool,
    pub slack: f64,
    pub trace: Vec<CcpOuterRow>,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub converged: bool,
    /// Euclidean distance between the last two outer iterates.
    pub final_change: f64,
}

fn stack_iterate(slack: f64, cache: &[f64], decisions: &[StateDecision]) -> Vec<f64> {
    let mut v = Vec::with_capacity(1 + cache.len() + decisions.len() * 8);
    v.push(slack);
    v.extend_from_slice(cache);
    for d in decisions {
        v.extend_from_slice(&d.offload);
        v.extend_from_slice(&d.multicast_gate);
        v.extend_from_slice(&d.upload_time);
        v.extend_from_slice(&d.download_time);
        v.extend_from_slice(&d.multicast_time);
    }
    v
}

fn max_binary_distance(cache: &[f64], decisions: &[StateDecision]) -> f64 {
    let dist = |x: f64| x.abs().min((x - 1.0).abs());
    let mut worst = cache.iter().map(|&c| dist(c)).fold(0.0, f64::max);
    for d in decisions {
        worst = d.offload.iter().map(|&o| dist(o)).fold(worst, f64::max);
    }
    worst
}

/// Run the outer penalty loop from one initial anchor until the iterate
/// change drops below the tolerance. A non-binary limit is returned with
/// `binary = false`, not an error.
pub fn ccp_solve(
    cfg: &SystemConfig,
    space: &StateSpace,
    opts: &CcpOptions,
    init: &CcpAnchor,
) -> Result<CcpResult, AdmmError> {
    let mut anchor = init.clone();
    let mut tau = opts.tau0;
    let mut warm = InnerWarm::default();
    let mut trace = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut final_change = f64::INFINITY;
    let mut inner_total = 0;
    let mut last: Option<InnerResult> = None;

    for j in 0..opts.outer_max_iters {
        let inner = ccp_inner_admm(cfg, space, &anchor, tau, opts, &warm)?;
        inner_total += inner.iters;
        trace.push(CcpOuterRow {
            iteration: j,
            tau,
            slack: inner.slack,
            energy: inner.energy,
            penalized: inner.energy + tau * space.len() as f64 * inner.slack,
        });

        let iterate = stack_iterate(inner.slack, &inner.cache, &inner.decisions);
        if let Some(prev) = &previous {
            final_change = crate::math::diff_norm2(&iterate, prev);
            if final_change <= opts.eps {
                converged = true;
            }
        }
        previous = Some(iterate);

        anchor = CcpAnchor {
            cache: inner.cache.clone(),
            offloads: inner.decisions.iter().map(|d| d.offload.clone()).collect(),
        };
        warm = InnerWarm {
            cache: Some(inner.cache.clone()),
            slack: Some(inner.slack),
            cache_duals: Some(inner.cache_duals.clone()),
            slack_duals: Some(inner.slack_duals.clone()),
            points: None, // constraint sets change with the anchor
        };
        last = Some(inner);
        if converged {
            break;
        }
        tau = (opts.nu * tau).min(opts.tau_max);
    }

    let inner = last.expect("at least one outer iteration runs");
    let slack = inner.slack;
    let distance = max_binary_distance(&inner.cache, &inner.decisions);
    let binary = distance <= opts.snap_tol && slack <= opts.zero_penalty_tol;

    // Snap and re-time. Entries beyond the snap tolerance are rounded too;
    // the policy is then reported non-binary but still honestly evaluated.
    let snapped_cache: Vec<f64> =
        inner.cache.iter().map(|&c| if c >= 0.5 { 1.0 } else { 0.0 }).collect();
    let cache = CachingVector(snapped_cache);
    let mut decisions = Vec::with_capacity(space.len());
    let mut objective = 0.0;
    let mut infeasible_states = Vec::new();
    for (q, state) in space.states.iter().enumerate() {
        let offload: Vec<f64> =
            inner.decisions[q].offload.iter().map(|&o| if o >= 0.5 { 1.0 } else { 0.0 }).collect();
        let gate = multicast_gate_from_offload(state, &offload, cfg.num_services);
        match reallocate_times(cfg, state, &cache, &offload, &gate, &opts.solver) {
            Ok((decision, energy)) => {
                objective += state.prob * energy;
                decisions.push(decision);
            }
            Err(SubproblemError::Infeasible { .. }) => {
                infeasible_states.push(q);
                objective = f64::INFINITY;
                let mut dec = StateDecision::all_local(cfg.num_users, cfg.num_services, cache.as_slice());
                dec.offload.copy_from_slice(&offload);
                dec.multicast_gate.copy_from_slice(&gate);
                decisions.push(dec);
            }
            Err(other) => return Err(AdmmError { state_index: q, source: other }),
        }
    }
    let outer_iters = trace.len();
    Ok(CcpResult {
        policy: Policy {
            cache,
            decisions,
            objective,
            feasible: infeasible_states.is_empty(),
            infeasible_states,
        },
        binary,
        slack,
        trace,
        outer_iters,
        inner_iters_total: inner_total,
        converged,
        final_change,
    })
}

/// The outcome of a multi-start run.
#[derive(Debug, Clone)]
pub struct MultistartResult {
    pub best: Policy,
    /// Index into `runs` of the selected start; `None` when the fallback
    /// policy was used.
    pub selected: Option<usize>,
    pub runs: Vec<CcpResult>,
}

/// Run the penalty loop from `n_starts` anchors (the warm policy first when
/// given, then random feasible draws) and keep the best zero-penalty binary
/// result. The warm policy also stands as the fallback candidate, so the
/// selection never returns something worse than it.
pub fn ccp_multistart(
    cfg: &SystemConfig,
    space: &StateSpace,
    opts: &CcpOptions,
    n_starts: usize,
    seed: u64,
    warm_policy: Option<&Policy>,
) -> Result<MultistartResult, AdmmError> {
    assert!(n_starts >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runs = Vec::with_capacity(n_starts);
    let mut anchors = Vec::with_capacity(n_starts);
    if let Some(p) = warm_policy {
        anchors.push(CcpAnchor::from_policy(p));
    }
    while anchors.len() < n_starts {
        anchors.push(random_anchor(cfg, space, opts, &mut rng)?);
    }

    for anchor in &anchors {
        runs.push(ccp_solve(cfg, space, opts, anchor)?);
    }

    let mut best: Option<(usize, f64)> = None;
    for (i, run) in runs.iter().enumerate() {
        if run.binary && run.policy.feasible {
            match best {
                Some((_, obj)) if run.policy.objective >= obj => {}
                _ => best = Some((i, run.policy.objective)),
            }
        }
    }
    // The warm policy competes as the fallback and as a floor.
    match (best, warm_policy) {
        (Some((_, obj)), Some(p)) if p.feasible && p.objective < obj => Ok(MultistartResult {
            best: p.clone(),
            selected: None,
            runs,
        }),
        (Some((i, _)), _) => Ok(MultistartResult { best: runs[i].policy.clone(), selected: Some(i), runs }),
        (None, Some(p)) => Ok(MultistartResult { best: p.clone(), selected: None, runs }),
        (None, None) => {
            // No zero-penalty run and nothing to fall back to: return the
            // best-effort run with the smallest objective.
            let i = runs
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    a.policy.objective.partial_cmp(&b.policy.objective).expect("objectives comparable")
                })
                .map(|(i, _)| i)
                .expect("at least one start");
            Ok(MultistartResult { best: runs[i].policy.clone(), selected: Some(i), runs })
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Random anchor: the cache drawn uniformly on the capacity polytope by
/// rejection (with a scaling fallback after too many misses), the offloads
/// uniform per state, both projected into the per-state feasible sets by
/// one quadratic solve each.
fn random_anchor(
    cfg: &SystemConfig,
    space: &StateSpace,
    opts: &CcpOptions,
    rng: &mut ChaCha8Rng,
) -> Result<CcpAnchor, AdmmError> {
    let n = cfg.num_services;
    let mut cache_draw = alloc::vec![0.0; n];
    let mut accepted = false;
    for _ in 0..200 {
        for c in cache_draw.iter_mut() {
            *c = uniform(rng);
        }
        if cache_draw.iter().zip(&cfg.software_bits).map(|(c, l)| c * l).sum::<f64>() <= cfg.cache_size {
            accepted = true;
            break;
        }
    }
    if !accepted {
        let used: f64 = cache_draw.iter().zip(&cfg.software_bits).map(|(c, l)| c * l).sum();
        let shrink = 0.9 * cfg.cache_size / used;
        for c in cache_draw.iter_mut() {
            *c *= shrink;
        }
    }

    let mut cache_sum = alloc::vec![0.0; n];
    let mut offloads = Vec::with_capacity(space.len());
    for (q, state) in space.states.iter().enumerate() {
        let offload_draw: Vec<f64> = (0..cfg.num_users).map(|_| uniform(rng)).collect();
        let spec = SubproblemSpec {
            cfg,
            state,
            mode: SubproblemMode::Relaxed,
            energy_weight: 0.0,
            fixed_cache: None,
            cache_penalty: Some(CachePenalty {
                dual: alloc::vec![0.0; n],
                anchor: cache_draw.clone(),
                rho: 2.0,
            }),
            offload_penalty: Some(OffloadPenalty { anchor: offload_draw, rho: 2.0 }),
            slack_penalty: None,
        };
        let sol = solve_state_subproblem(&spec, &opts.solver, None)
            .map_err(|source| AdmmError { state_index: q, source })?;
        for j in 0..n {
            cache_sum[j] += sol.decision.local_cache[j];
        }
        offloads.push(sol.decision.offload);
    }
    // Mean of per-state projections stays in the capacity polytope.
    let cache: Vec<f64> = cache_sum.iter().map(|s| s / space.len() as f64).collect();
    Ok(CcpAnchor { cache, offloads })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_reference_points() {
        assert_eq!(binary_gap(&[0.0, 1.0], &[1.0, 0.0]), 0.0);
        assert!((binary_gap(&[0.5], &[]) - 0.25).abs() < 1e-15);
        assert!((binary_gap(&[0.2], &[0.9]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn linearized_gap_majorizes_with_exact_excess() {
        let c = [0.6, 0.3];
        let o = [0.8];
        let c0 = [0.2, 0.3];
        let o0 = [0.5];
        let fhat = linearized_gap(&c, &o, &c0, &o0);
        let f = binary_gap(&c, &o);
        let dist2 = (0.6f64 - 0.2).powi(2) + (0.3f64 - 0.3).powi(2) + (0.8f64 - 0.5).powi(2);
        assert!((fhat - f - dist2).abs() < 1e-12);
    }

    #[test]
    fn tangency_at_the_anchor() {
        let c = [0.37, 0.91];
        let o = [0.12, 0.5];
        assert!((linearized_gap(&c, &o, &c, &o) - binary_gap(&c, &o)).abs() < 1e-15);
    }

    #[test]
    fn tau_schedule_doubles_to_the_cap() {
        let opts = CcpOptions::default();
        let mut tau = opts.tau0;
        let mut seq = alloc::vec![tau];
        for _ in 0..12 {
            tau = (opts.nu * tau).min(opts.tau_max);
            seq.push(tau);
        }
        assert!((seq[0] - 1e-3).abs() < 1e-18);
        assert!((seq[1] - 2e-3).abs() < 1e-18);
        assert_eq!(*seq.last().unwrap(), 1.0);
        assert!(seq.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn slack_update_is_the_mean() {
        // Two states with shat = 0.1 and 0.3, duals zero: s = 0.2.
        let shat = [0.1, 0.3];
        let s: f64 = shat.iter().sum::<f64>() / 2.0;
        assert!((s - 0.2).abs() < 1e-15);
    }
}
