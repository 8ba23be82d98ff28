//! Smooth convex solves for the per-state subproblems and the full relaxed
//! problem.
//!
//! Internally everything is rescaled for conditioning: times are divided by
//! the deadline `D` (so every time variable lives in `[0, 1]`) and the
//! objective by its magnitude at the start point. Both rescalings are
//! invisible at the interface.

pub mod linalg;
pub mod nlp;
pub mod reference;

use alloc::vec::Vec;

use crate::config::SystemConfig;
use crate::energy::{exec_cost, total_energy, EnergyForm, Executor};
use crate::policy::{CachingVector, StateDecision};
use crate::state::SystemState;

pub use nlp::{BarrierOptions, Gate, LinCon, LinTerm, NlpError, Objective, PerspTerm, QuadTerm};

/// Solver knobs; see [`BarrierOptions`] for the fields.
pub type SolverOptions = BarrierOptions;

/// Per-state subproblem failures.
#[derive(Debug, Clone, PartialEq)]
pub enum SubproblemError {
    /// The constraint set has no (usable) strictly feasible point; carries
    /// the Phase-I residual.
    Infeasible { residual: f64 },
    Solver(NlpError),
}

impl From<NlpError> for SubproblemError {
    fn from(e: NlpError) -> Self {
        match e {
            NlpError::Infeasible { phase1_residual } => {
                SubproblemError::Infeasible { residual: phase1_residual }
            }
            other => SubproblemError::Solver(other),
        }
    }
}

impl core::fmt::Display for SubproblemError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SubproblemError::Infeasible { residual } => {
                write!(f, "subproblem infeasible (phase-1 residual {residual:.3e})")
            }
            SubproblemError::Solver(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SubproblemError {}

/// Dual/penalty terms on the cache copy:
/// `sum_n theta_n (chat_n - anchor_n) + (rho/2) sum_n (chat_n - anchor_n)^2`.
#[derive(Debug, Clone)]
pub struct CachePenalty {
    pub dual: Vec<f64>,
    pub anchor: Vec<f64>,
    pub rho: f64,
}

/// Quadratic pull on the offload block (used to project arbitrary points
/// into the feasible set): `(rho/2) sum_k (o_k - anchor_k)^2`.
#[derive(Debug, Clone)]
pub struct OffloadPenalty {
    pub anchor: Vec<f64>,
    pub rho: f64,
}

/// Dual/penalty/penalty-weight terms on the slack copy:
/// `xi (shat - anchor) + (rho/2)(shat - anchor)^2 + tau * shat`.
#[derive(Debug, Clone, Copy)]
pub struct SlackPenalty {
    pub dual: f64,
    pub anchor: f64,
    pub rho: f64,
    pub tau: f64,
}

/// Which constraint set and variable blocks the subproblem uses.
#[derive(Debug, Clone)]
pub enum SubproblemMode {
    /// All blocks variable over the relaxed per-state set.
    Relaxed,
    /// Relaxed set plus a slack variable bounding the linearized binary gap
    /// at the given anchor.
    Penalized { anchor_cache: Vec<f64>, anchor_offload: Vec<f64> },
}

/// One per-state convex subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemSpec<'a> {
    pub cfg: &'a SystemConfig,
    pub state: &'a SystemState,
    pub mode: SubproblemMode,
    /// Weight on the energy part of the objective (the state probability in
    /// consensus subproblems, 1 for plain per-state solves, 0 to disable).
    pub energy_weight: f64,
    /// Freeze the cache copy to these values instead of optimizing it.
    pub fixed_cache: Option<Vec<f64>>,
    pub cache_penalty: Option<CachePenalty>,
    pub offload_penalty: Option<OffloadPenalty>,
    pub slack_penalty: Option<SlackPenalty>,
}

impl<'a> SubproblemSpec<'a> {
    pub fn relaxed(cfg: &'a SystemConfig, state: &'a SystemState) -> Self {
        SubproblemSpec {
            cfg,
            state,
            mode: SubproblemMode::Relaxed,
            energy_weight: 1.0,
            fixed_cache: None,
            cache_penalty: None,
            offload_penalty: None,
            slack_penalty: None,
        }
    }
}

/// A solved subproblem: the decision in model units, the subproblem
/// objective (energy plus penalty terms), the plain perspective energy of
/// the decision, and the raw solver point for warm starting.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub decision: StateDecision,
    pub objective: f64,
    pub energy: f64,
    pub x: Vec<f64>,
    pub newton_iters: usize,
}

/// Index map from model quantities to solver variables. `None` entries are
/// fixed at a known constant (zero unless stated otherwise).
#[derive(Debug, Clone)]
pub(crate) struct StateVars {
    pub offload: Option<usize>,
    pub gate: Vec<Option<usize>>,
    pub upload: Vec<Option<usize>>,
    pub download: Vec<Option<usize>>,
    pub multicast: Vec<Option<usize>>,
}

/// How the state's rows refer to the caching vector.
#[derive(Debug, Clone, Copy)]
pub(crate) enum CacheRef<'a> {
    /// Cache variables live at `base..base+N` of this problem.
    Vars { base: usize },
    /// Cache frozen to the given values.
    Fixed(&'a [f64]),
}

pub(crate) struct StateAssembly {
    pub vars: StateVars,
    pub var_count: usize,
    pub objective: Objective,
    pub cons: Vec<LinCon>,
}

/// Emit the energy objective and the relaxed per-state constraint rows of
/// one state, with local variables starting at `local_base`. Times are in
/// deadline-scaled units. Gates and times of unrequested services, and time
/// variables with zero payload, are eliminated as constants.
pub(crate) fn assemble_relaxed_state(
    cfg: &SystemConfig,
    state: &SystemState,
    energy_weight: f64,
    cache: CacheRef<'_>,
    local_base: usize,
) -> StateAssembly {
    let k_users = cfg.num_users;
    let n_services = cfg.num_services;
    let d = cfg.deadline;
    let mut next = local_base;
    let mut alloc_var = || {
        let i = next;
        next += 1;
        i
    };

    let offload_base = alloc_var();
    for _ in 1..k_users {
        alloc_var();
    }
    let offload = Some(offload_base);
    let gate: Vec<Option<usize>> = (0..n_services)
        .map(|n| if state.demanded(n) { Some(alloc_var()) } else { None })
        .collect();
    let upload: Vec<Option<usize>> =
        (0..k_users).map(|k| if state.input_bits[k] > 0.0 { Some(alloc_var()) } else { None }).collect();
    let download: Vec<Option<usize>> =
        (0..k_users).map(|k| if state.result_bits[k] > 0.0 { Some(alloc_var()) } else { None }).collect();
    let multicast: Vec<Option<usize>> = (0..n_services)
        .map(|n| if state.demanded(n) && cfg.software_bits[n] > 0.0 { Some(alloc_var()) } else { None })
        .collect();

    let mut obj = Objective::default();
    let mut cons: Vec<LinCon> = Vec::new();

    // Energy terms. Perspective coefficients fold the time rescaling:
    // phi(a, u) = w*(n0*D/H) * u * (2^{(L/(B*D)) * a/u} - 1) equals
    // w*(t/H) g(a L / t) at t = u*D.
    for n in 0..n_services {
        let (Some(y), Some(ts)) = (gate[n], multicast[n]) else { continue };
        let h = state.multicast_gain(n);
        obj.persp.push(PerspTerm {
            coef: energy_weight * cfg.noise_power * d / h,
            exp_coef: cfg.software_bits[n] / (cfg.bandwidth * d),
            gate: Gate::Var(y),
            time: ts,
        });
    }
    for k in 0..k_users {
        let o = offload_base + k;
        if let Some(tu) = upload[k] {
            obj.persp.push(PerspTerm {
                coef: energy_weight * cfg.weight[k] * cfg.noise_power * d / state.gains[k],
                exp_coef: state.input_bits[k] / (cfg.bandwidth * d),
                gate: Gate::Var(o),
                time: tu,
            });
        }
        if let Some(td) = download[k] {
            obj.persp.push(PerspTerm {
                coef: energy_weight * cfg.noise_power * d / state.gains[k],
                exp_coef: state.result_bits[k] / (cfg.bandwidth * d),
                gate: Gate::Var(o),
                time: td,
            });
        }
        let (_, server_j) = exec_cost(Executor::ServingNode, state.load_cycles[k], cfg);
        let (_, local_j) = exec_cost(Executor::User(k), state.load_cycles[k], cfg);
        let local_j = cfg.weight[k] * local_j;
        obj.linear.push(LinTerm { var: o, coef: energy_weight * (server_j - local_j) });
        obj.constant += energy_weight * local_j;
    }

    // Gate rows: 1 - o_i <= y_n <= 1 per requester of a demanded service.
    for n in 0..n_services {
        let Some(y) = gate[n] else { continue };
        for i in state.requesters(n) {
            cons.push(LinCon {
                terms: alloc::vec![(offload_base + i, -1.0), (y, -1.0)],
                rhs: -1.0,
            });
        }
        cons.push(LinCon { terms: alloc::vec![(y, 1.0)], rhs: 1.0 });
    }
    // Offload box.
    for k in 0..k_users {
        cons.push(LinCon { terms: alloc::vec![(offload_base + k, -1.0)], rhs: 0.0 });
        cons.push(LinCon { terms: alloc::vec![(offload_base + k, 1.0)], rhs: 1.0 });
    }
    // Time bounds, scaled: 0 <= u <= gate.
    for k in 0..k_users {
        for t in [upload[k], download[k]].into_iter().flatten() {
            cons.push(LinCon { terms: alloc::vec![(t, -1.0)], rhs: 0.0 });
            cons.push(LinCon { terms: alloc::vec![(t, 1.0), (offload_base + k, -1.0)], rhs: 0.0 });
        }
    }
    for n in 0..n_services {
        let (Some(y), Some(ts)) = (gate[n], multicast[n]) else { continue };
        cons.push(LinCon { terms: alloc::vec![(ts, -1.0)], rhs: 0.0 });
        cons.push(LinCon { terms: alloc::vec![(ts, 1.0), (y, -1.0)], rhs: 0.0 });
    }

    // The shared fetch head of both deadline rows.
    let fetch_head = |row: &mut Vec<(usize, f64)>, rhs: &mut f64| {
        for n in 0..n_services {
            if !state.demanded(n) {
                continue;
            }
            let ft = cfg.fetch_time(n) / d;
            match cache {
                CacheRef::Vars { base } => {
                    *rhs -= ft;
                    row.push((base + n, -ft));
                }
                CacheRef::Fixed(c) => *rhs -= (1.0 - c[n]) * ft,
            }
            if let Some(ts) = multicast[n] {
                row.push((ts, 1.0));
            }
        }
    };

    // Offload-path deadline.
    {
        let mut terms = Vec::new();
        let mut rhs = 1.0;
        fetch_head(&mut terms, &mut rhs);
        for k in 0..k_users {
            let (server_t, _) = exec_cost(Executor::ServingNode, state.load_cycles[k], cfg);
            terms.push((offload_base + k, server_t / d));
            if let Some(tu) = upload[k] {
                terms.push((tu, 1.0));
            }
            if let Some(td) = download[k] {
                terms.push((td, 1.0));
            }
        }
        cons.push(LinCon { terms, rhs });
    }
    // Local-path deadline, one per user.
    for k in 0..k_users {
        let mut terms = Vec::new();
        let mut rhs = 1.0;
        fetch_head(&mut terms, &mut rhs);
        let (local_t, _) = exec_cost(Executor::User(k), state.load_cycles[k], cfg);
        terms.push((offload_base + k, -local_t / d));
        rhs -= local_t / d;
        cons.push(LinCon { terms, rhs });
    }

    StateAssembly {
        vars: StateVars { offload, gate, upload, download, multicast },
        var_count: next - local_base,
        objective: obj,
        cons,
    }
}

/// Cache box and capacity rows over `base..base+N`, capacity scaled by the
/// largest software size.
pub(crate) fn cache_rows(cfg: &SystemConfig, base: usize) -> Vec<LinCon> {
    let mut cons = Vec::new();
    for n in 0..cfg.num_services {
        cons.push(LinCon { terms: alloc::vec![(base + n, -1.0)], rhs: 0.0 });
        cons.push(LinCon { terms: alloc::vec![(base + n, 1.0)], rhs: 1.0 });
    }
    let scale = cfg.software_bits.iter().cloned().fold(1.0, f64::max);
    cons.push(LinCon {
        terms: (0..cfg.num_services).map(|n| (base + n, cfg.software_bits[n] / scale)).collect(),
        rhs: cfg.cache_size / scale,
    });
    cons
}

/// Interior cache seed: uniform fill using at most half the capacity.
pub(crate) fn cache_seed(cfg: &SystemConfig) -> f64 {
    let total = cfg.total_software_bits();
    (0.45 * cfg.cache_size / total).min(0.45)
}

/// Gate margin of the interior seed postures.
const SEED_MARGIN: f64 = 0.1;
/// Target rate exponent (`payload / (B * slot)`, in powers of two) the seed
/// time shares aim for. Bounded exponents keep the seed objective a sane
/// magnitude, off the exponential cliff where damped Newton crawls.
const SEED_EXPONENT: f64 = 25.0;

/// Write an interior seed for one state's local block into `x`.
///
/// Because `y_n >= 1 - o_k` ties the gates together, one of the upload and
/// multicast channels always carries at least half its payload; the seed
/// therefore picks, per state, whichever corner posture (offload-leaning or
/// local-leaning) admits the smaller worst rate exponent under the deadline
/// budgets, and sizes each time share for a bounded exponent.
pub(crate) fn seed_state_vars(
    cfg: &SystemConfig,
    state: &SystemState,
    vars: &StateVars,
    cache_fill: &[f64],
    x: &mut [f64],
) {
    let d = cfg.deadline;
    let offload_base = vars.offload.expect("relaxed block has offload variables");
    let fetch: f64 = (0..cfg.num_services)
        .filter(|&n| state.demanded(n))
        .map(|n| (1.0 - cache_fill[n]) * cfg.fetch_time(n) / d)
        .sum();

    // Evaluate one posture: gates fixed, wanted shares per slot, shrink to
    // the deadline budgets, report the worst exponent.
    struct Posture {
        offload: f64,
        gate: f64,
        shares: alloc::vec::Vec<(usize, f64)>,
        worst_exponent: f64,
    }
    let build = |offload: f64, gate: f64| -> Posture {
        let mut shares: alloc::vec::Vec<(usize, f64, f64)> = alloc::vec::Vec::new(); // (var, want, payload)
        for k in 0..cfg.num_users {
            for (slot, bits) in
                [(vars.upload[k], state.input_bits[k]), (vars.download[k], state.result_bits[k])]
            {
                if let Some(i) = slot {
                    let payload = offload * bits / (cfg.bandwidth * d);
                    let want = (payload / SEED_EXPONENT).min(0.5 * offload).max(1e-9);
                    shares.push((i, want, payload));
                }
            }
        }
        for n in 0..cfg.num_services {
            if let Some(i) = vars.multicast[n] {
                let payload = gate * cfg.software_bits[n] / (cfg.bandwidth * d);
                let want = (payload / SEED_EXPONENT).min(0.5 * gate).max(1e-9);
                shares.push((i, want, payload));
            }
        }
        // Shrink to fit every deadline row at half its budget.
        let total: f64 = shares.iter().map(|&(_, w, _)| w).sum();
        let offload_budget = 1.0
            - fetch
            - (0..cfg.num_users)
                .map(|k| offload * exec_cost(Executor::ServingNode, state.load_cycles[k], cfg).0 / d)
                .sum::<f64>();
        let mut shrink = if total > 0.0 { (0.5 * offload_budget / total).min(1.0) } else { 1.0 };
        let mult_total: f64 = shares
            .iter()
            .filter(|&&(i, _, _)| vars.multicast.iter().flatten().any(|&m| m == i))
            .map(|&(_, w, _)| w)
            .sum();
        for k in 0..cfg.num_users {
            let local_budget = 1.0
                - fetch
                - (1.0 - offload) * exec_cost(Executor::User(k), state.load_cycles[k], cfg).0 / d;
            if mult_total > 0.0 {
                shrink = shrink.min((0.5 * local_budget / mult_total).max(0.0));
            }
        }
        if !(shrink > 0.0) || offload_budget <= 0.0 {
            // Infeasible-looking posture; leave tiny shares for Phase I.
            return Posture {
                offload,
                gate,
                shares: shares.iter().map(|&(i, _, _)| (i, 1e-9)).collect(),
                worst_exponent: f64::INFINITY,
            };
        }
        let worst = shares
            .iter()
            .map(|&(_, w, p)| p / (w * shrink))
            .fold(0.0, f64::max);
        Posture {
            offload,
            gate,
            shares: shares.iter().map(|&(i, w, _)| (i, w * shrink)).collect(),
            worst_exponent: worst,
        }
    };

    let offloading = build(1.0 - SEED_MARGIN, 1.5 * SEED_MARGIN);
    let local = build(SEED_MARGIN, 1.0 - 0.5 * SEED_MARGIN);
    let posture = if offloading.worst_exponent <= local.worst_exponent { offloading } else { local };

    for k in 0..cfg.num_users {
        x[offload_base + k] = posture.offload;
    }
    for y in vars.gate.iter().flatten() {
        x[*y] = posture.gate;
    }
    for &(i, share) in &posture.shares {
        x[i] = share;
    }
}

/// Magnitude yardstick for objective rescaling: the all-local execution
/// energy of the state (weights applied) plus the anchored penalty parts.
/// Deliberately independent of the seed point, whose transmission terms can
/// be many orders above the optimum.
pub(crate) fn energy_yardstick(cfg: &SystemConfig, state: &SystemState, energy_weight: f64) -> f64 {
    energy_weight
        * (0..cfg.num_users)
            .map(|k| cfg.weight[k] * exec_cost(Executor::User(k), state.load_cycles[k], cfg).1)
            .sum::<f64>()
}

/// Pull the model-unit decision out of a solver point.
pub(crate) fn extract_decision(
    cfg: &SystemConfig,
    vars: &StateVars,
    cache: &CacheRef<'_>,
    cache_base_values: Option<&[f64]>,
    x: &[f64],
    fixed: Option<&FixedBinaries>,
) -> StateDecision {
    let d = cfg.deadline;
    let k_users = cfg.num_users;
    let n_services = cfg.num_services;
    let offload: Vec<f64> = match vars.offload {
        Some(base) => (0..k_users).map(|k| x[base + k]).collect(),
        None => fixed.expect("frozen mode").offload.clone(),
    };
    let gate: Vec<f64> = (0..n_services)
        .map(|n| match vars.gate[n] {
            Some(i) => x[i],
            None => fixed.map_or(0.0, |f| f.gate[n]),
        })
        .collect();
    let take = |slots: &[Option<usize>]| -> Vec<f64> {
        slots.iter().map(|s| s.map_or(0.0, |i| x[i] * d)).collect()
    };
    let local_cache: Vec<f64> = match cache {
        CacheRef::Vars { base } => match cache_base_values {
            Some(vals) => vals.to_vec(),
            None => (0..n_services).map(|n| x[base + n]).collect(),
        },
        CacheRef::Fixed(c) => c.to_vec(),
    };
    StateDecision {
        offload,
        multicast_gate: gate,
        upload_time: take(&vars.upload),
        download_time: take(&vars.download),
        multicast_time: take(&vars.multicast),
        local_cache,
        local_slack: None,
    }
}

/// Frozen binaries for the time-only mode.
#[derive(Debug, Clone)]
pub struct FixedBinaries {
    pub offload: Vec<f64>,
    pub gate: Vec<f64>,
}

/// Solve one per-state subproblem to the configured duality gap. `warm`
/// may carry the raw point of a previous solve of the same constraint set.
pub fn solve_state_subproblem(
    spec: &SubproblemSpec<'_>,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
) -> Result<SubproblemSolution, SubproblemError> {
    let cfg = spec.cfg;
    let n_services = cfg.num_services;
    let cache_enabled = spec.fixed_cache.is_none() && cfg.cache_size > 0.0;

    let cache_base = 0usize;
    let local_base = if cache_enabled { n_services } else { 0 };
    let zero_cache = alloc::vec![0.0; n_services];
    let frozen: &[f64] = spec.fixed_cache.as_deref().unwrap_or(&zero_cache);
    let cache_ref = if cache_enabled {
        CacheRef::Vars { base: cache_base }
    } else {
        CacheRef::Fixed(frozen)
    };

    let mut asm = assemble_relaxed_state(cfg, spec.state, spec.energy_weight, cache_ref, local_base);
    let mut n = local_base + asm.var_count;
    let mut cons = if cache_enabled { cache_rows(cfg, cache_base) } else { Vec::new() };
    cons.append(&mut asm.cons);
    let mut obj = asm.objective;

    // Anchored penalties.
    if let Some(p) = &spec.cache_penalty {
        for svc in 0..n_services {
            if cache_enabled {
                let var = cache_base + svc;
                obj.linear.push(LinTerm { var, coef: p.dual[svc] });
                obj.constant -= p.dual[svc] * p.anchor[svc];
                if p.rho != 0.0 {
                    obj.quad.push(QuadTerm { var, half_coef: 0.5 * p.rho, center: p.anchor[svc] });
                }
            } else {
                let diff = frozen[svc] - p.anchor[svc];
                obj.constant += p.dual[svc] * diff + 0.5 * p.rho * diff * diff;
            }
        }
    }
    if let Some(p) = &spec.offload_penalty {
        let base = asm.vars.offload.expect("offload block present");
        for k in 0..cfg.num_users {
            obj.quad.push(QuadTerm { var: base + k, half_coef: 0.5 * p.rho, center: p.anchor[k] });
        }
    }

    // Penalized mode: slack variable plus the linearized-gap row.
    let mut slack_var = None;
    if let SubproblemMode::Penalized { anchor_cache, anchor_offload } = &spec.mode {
        let s = n;
        n += 1;
        slack_var = Some(s);
        let mut terms: Vec<(usize, f64)> = Vec::new();
        let mut rhs = 0.0;
        for (svc, &a) in anchor_cache.iter().enumerate() {
            rhs -= a * a;
            if cache_enabled {
                terms.push((cache_base + svc, 1.0 - 2.0 * a));
            } else {
                rhs -= (1.0 - 2.0 * a) * frozen[svc];
            }
        }
        let offload_base = asm.vars.offload.unwrap();
        for (k, &a) in anchor_offload.iter().enumerate() {
            rhs -= a * a;
            terms.push((offload_base + k, 1.0 - 2.0 * a));
        }
        terms.push((s, -1.0));
        cons.push(LinCon { terms, rhs });
        let p = spec.slack_penalty.as_ref().expect("penalized mode needs slack terms");
        obj.linear.push(LinTerm { var: s, coef: p.dual + p.tau });
        obj.constant -= p.dual * p.anchor;
        obj.quad.push(QuadTerm { var: s, half_coef: 0.5 * p.rho, center: p.anchor });
    }

    // Seed, or reuse the warm point when it is still usable.
    let x0 = match warm {
        Some(w) if w.len() == n && nlp::min_slack(&cons, w) > 0.0 && obj.value(w).is_finite() => {
            w.to_vec()
        }
        _ => {
            let mut seed = alloc::vec![0.0; n];
            let fill_vec: Vec<f64> = if cache_enabled {
                let fill = cache_seed(cfg);
                for svc in 0..n_services {
                    seed[cache_base + svc] = fill;
                }
                alloc::vec![fill; n_services]
            } else {
                frozen.to_vec()
            };
            seed_state_vars(cfg, spec.state, &asm.vars, &fill_vec, &mut seed);
            if let Some(s) = slack_var {
                // Strictly above the linearized gap at the seed.
                let gap_row = cons.last().unwrap();
                let lhs: f64 = gap_row
                    .terms
                    .iter()
                    .filter(|&&(j, _)| j != s)
                    .map(|&(j, c)| c * seed[j])
                    .sum();
                seed[s] = lhs - gap_row.rhs + 1.0;
            }
            let finite = |x: &[f64]| obj.value(x).is_finite();
            nlp::find_interior_with(&cons, &seed, opts, &finite)?
        }
    };

    let mut scale = energy_yardstick(cfg, spec.state, spec.energy_weight);
    if let Some(p) = &spec.cache_penalty {
        scale += p.dual.iter().map(|d| d.abs()).sum::<f64>() + 0.125 * p.rho * n_services as f64;
    }
    if let Some(p) = &spec.slack_penalty {
        scale += p.dual.abs() + p.tau + 0.125 * p.rho;
    }
    if let Some(p) = &spec.offload_penalty {
        scale += 0.125 * p.rho * cfg.num_users as f64;
    }
    let scale = scale.max(1e-12);
    let mut scaled = obj.clone();
    scaled.scale(1.0 / scale);
    let mut run_opts = *opts;
    if warm.is_some() {
        // A usable warm point sits near the central path's end; restart the
        // barrier two stages below its final parameter instead of at the
        // bottom of the path.
        let t_final = cons.len().max(1) as f64 / opts.duality_gap_tol;
        run_opts.t_init = (t_final / (opts.barrier_mu * opts.barrier_mu)).max(opts.t_init);
    }
    let sol = nlp::solve_barrier(&scaled, &cons, &x0, &run_opts)?;

    let mut decision = extract_decision(cfg, &asm.vars, &cache_ref, None, &sol.x, None);
    if let Some(s) = slack_var {
        decision.local_slack = Some(sol.x[s]);
    }
    let energy = total_energy(
        spec.state,
        &CachingVector(decision.local_cache.clone()),
        &decision,
        cfg,
        EnergyForm::Perspective,
    )
    .expect("solver decision is dimensionally consistent")
    .total_j;
    Ok(SubproblemSolution {
        decision,
        objective: sol.objective * scale,
        energy,
        x: sol.x,
        newton_iters: sol.newton_iters,
    })
}

/// Optimal time allocation with binaries frozen (the recovery subproblem).
/// Falls back to the all-zero allocation whenever it is feasible but leaves
/// no interior room; the returned energy is then possibly `+inf`.
pub fn solve_time_allocation(
    cfg: &SystemConfig,
    state: &SystemState,
    cache: &[f64],
    offload: &[f64],
    gate: &[f64],
    opts: &SolverOptions,
) -> Result<SubproblemSolution, SubproblemError> {
    let d = cfg.deadline;
    let k_users = cfg.num_users;
    let n_services = cfg.num_services;

    let mut next = 0usize;
    let mut alloc_var = || {
        let i = next;
        next += 1;
        i
    };
    let upload: Vec<Option<usize>> = (0..k_users)
        .map(|k| (offload[k] > 0.5 && state.input_bits[k] > 0.0).then(|| alloc_var()))
        .collect();
    let download: Vec<Option<usize>> = (0..k_users)
        .map(|k| (offload[k] > 0.5 && state.result_bits[k] > 0.0).then(|| alloc_var()))
        .collect();
    let multicast: Vec<Option<usize>> = (0..n_services)
        .map(|n| (gate[n] > 0.5 && state.demanded(n) && cfg.software_bits[n] > 0.0).then(|| alloc_var()))
        .collect();
    let n = next;
    let vars = StateVars { offload: None, gate: alloc::vec![None; n_services], upload, download, multicast };

    let fixed = FixedBinaries { offload: offload.to_vec(), gate: gate.to_vec() };
    let zero_decision = |energy_flag: &mut f64| -> StateDecision {
        let dec = StateDecision {
            offload: offload.to_vec(),
            multicast_gate: gate.to_vec(),
            upload_time: alloc::vec![0.0; k_users],
            download_time: alloc::vec![0.0; k_users],
            multicast_time: alloc::vec![0.0; n_services],
            local_cache: cache.to_vec(),
            local_slack: None,
        };
        *energy_flag = total_energy(
            state,
            &CachingVector(cache.to_vec()),
            &dec,
            cfg,
            EnergyForm::Perspective,
        )
        .expect("dimensions fixed")
        .total_j;
        dec
    };

    // Constant parts of the deadline rows.
    let fetch: f64 = (0..n_services)
        .filter(|&sv| state.demanded(sv))
        .map(|sv| (1.0 - cache[sv]) * cfg.fetch_time(sv) / d)
        .sum();
    let offload_head: f64 = fetch
        + (0..k_users)
            .map(|k| offload[k] * exec_cost(Executor::ServingNode, state.load_cycles[k], cfg).0 / d)
            .sum::<f64>();
    let offload_budget = 1.0 - offload_head;
    let local_budget = (0..k_users)
        .map(|k| {
            1.0 - fetch
                - (1.0 - offload[k]) * exec_cost(Executor::User(k), state.load_cycles[k], cfg).0 / d
        })
        .fold(f64::INFINITY, f64::min);
    let time_tol = 1e-9;

    if offload_budget < -time_tol || local_budget < -time_tol {
        return Err(SubproblemError::Infeasible {
            residual: (-offload_budget).max(-local_budget),
        });
    }
    let mut zero_energy = 0.0;
    if n == 0 {
        let dec = zero_decision(&mut zero_energy);
        return Ok(SubproblemSolution {
            decision: dec,
            objective: zero_energy,
            energy: zero_energy,
            x: Vec::new(),
            newton_iters: 0,
        });
    }

    let mut cons: Vec<LinCon> = Vec::new();
    for t in 0..n {
        cons.push(LinCon { terms: alloc::vec![(t, -1.0)], rhs: 0.0 });
        cons.push(LinCon { terms: alloc::vec![(t, 1.0)], rhs: 1.0 });
    }
    {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for t in vars.upload.iter().chain(&vars.download).chain(&vars.multicast).flatten() {
            terms.push((*t, 1.0));
        }
        cons.push(LinCon { terms, rhs: offload_budget });
    }
    for k in 0..k_users {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for t in vars.multicast.iter().flatten() {
            terms.push((*t, 1.0));
        }
        if terms.is_empty() {
            continue;
        }
        let rhs = 1.0
            - fetch
            - (1.0 - offload[k]) * exec_cost(Executor::User(k), state.load_cycles[k], cfg).0 / d;
        cons.push(LinCon { terms, rhs });
    }

    let mut obj = Objective::default();
    for sv in 0..n_services {
        if let Some(ts) = vars.multicast[sv] {
            obj.persp.push(PerspTerm {
                coef: cfg.noise_power * d / state.multicast_gain(sv),
                exp_coef: cfg.software_bits[sv] / (cfg.bandwidth * d),
                gate: Gate::Fixed(1.0),
                time: ts,
            });
        }
    }
    for k in 0..k_users {
        if let Some(tu) = vars.upload[k] {
            obj.persp.push(PerspTerm {
                coef: cfg.weight[k] * cfg.noise_power * d / state.gains[k],
                exp_coef: state.input_bits[k] / (cfg.bandwidth * d),
                gate: Gate::Fixed(1.0),
                time: tu,
            });
        }
        let (_, server_j) = exec_cost(Executor::ServingNode, state.load_cycles[k], cfg);
        let (_, local_j) = exec_cost(Executor::User(k), state.load_cycles[k], cfg);
        obj.constant += offload[k] * server_j + (1.0 - offload[k]) * cfg.weight[k] * local_j;
        if let Some(td) = vars.download[k] {
            obj.persp.push(PerspTerm {
                coef: cfg.noise_power * d / state.gains[k],
                exp_coef: state.result_bits[k] / (cfg.bandwidth * d),
                gate: Gate::Fixed(1.0),
                time: td,
            });
        }
    }

    // Seed shares sized for bounded rate exponents, shrunk to the budgets.
    let mut want = alloc::vec![0.0; n];
    let mut mult_want = 0.0;
    for k in 0..k_users {
        if let Some(i) = vars.upload[k] {
            want[i] = (state.input_bits[k] / (cfg.bandwidth * d) / SEED_EXPONENT).clamp(1e-9, 0.45);
        }
        if let Some(i) = vars.download[k] {
            want[i] = (state.result_bits[k] / (cfg.bandwidth * d) / SEED_EXPONENT).clamp(1e-9, 0.45);
        }
    }
    for sv in 0..n_services {
        if let Some(i) = vars.multicast[sv] {
            want[i] =
                (cfg.software_bits[sv] / (cfg.bandwidth * d) / SEED_EXPONENT).clamp(1e-9, 0.45);
            mult_want += want[i];
        }
    }
    let total: f64 = want.iter().sum();
    let mut shrink: f64 = if total > 0.0 { (0.5 * offload_budget / total).min(1.0) } else { 1.0 };
    if mult_want > 0.0 && local_budget.is_finite() {
        shrink = shrink.min((0.5 * local_budget / mult_want).max(1e-12));
    }
    let seed: alloc::vec::Vec<f64> = want.iter().map(|w| (w * shrink).max(1e-12)).collect();
    let finite = |x: &[f64]| obj.value(x).is_finite();
    let x0 = match nlp::find_interior_with(&cons, &seed, opts, &finite) {
        Ok(x0) => x0,
        Err(_) => {
            // No interior (budget exhausted); the zero allocation is still
            // feasible here because the budgets are non-negative.
            let mut e = 0.0;
            let dec = zero_decision(&mut e);
            return Ok(SubproblemSolution {
                decision: dec,
                objective: e,
                energy: e,
                x: Vec::new(),
                newton_iters: 0,
            });
        }
    };

    let scale = obj.constant.abs().max(energy_yardstick(cfg, state, 1.0)).max(1e-12);
    let mut scaled = obj.clone();
    scaled.scale(1.0 / scale);
    let sol = nlp::solve_barrier(&scaled, &cons, &x0, opts)?;
    let cache_ref = CacheRef::Fixed(cache);
    let decision = extract_decision(cfg, &vars, &cache_ref, None, &sol.x, Some(&fixed));
    let energy = total_energy(state, &CachingVector(cache.to_vec()), &decision, cfg, EnergyForm::Perspective)
        .expect("dimensions fixed")
        .total_j;
    Ok(SubproblemSolution {
        decision,
        objective: sol.objective * scale,
        energy,
        x: sol.x,
        newton_iters: sol.newton_iters,
    })
}

/// Maximum relative error between analytic and central-difference first and
/// second derivatives of `f + (1/t) * barrier` at a strictly interior point.
pub fn gradient_check(obj: &Objective, cons: &[LinCon], x: &[f64], barrier_t: f64) -> f64 {
    use crate::solver::linalg::SymMat;
    let n = x.len();
    let inv_t = 1.0 / barrier_t;
    let h_of = |p: &[f64]| -> f64 {
        let mut h = obj.value(p);
        for c in cons {
            h -= inv_t * crate::math::ln(c.slack(p));
        }
        h
    };
    let grad_of = |p: &[f64]| -> Vec<f64> {
        let mut g = alloc::vec![0.0; n];
        let mut hm = SymMat::zeros(n);
        obj.value_grad_hess(p, &mut g, &mut hm);
        for c in cons {
            let s = c.slack(p);
            for &(j, cj) in &c.terms {
                g[j] += inv_t * cj / s;
            }
        }
        g
    };

    let mut worst: f64 = 0.0;
    let gradient = grad_of(x);
    let mut xp = x.to_vec();
    for j in 0..n {
        let step = 1e-6 * x[j].abs().max(1.0);
        xp[j] = x[j] + step;
        let fp = h_of(&xp);
        xp[j] = x[j] - step;
        let fm = h_of(&xp);
        xp[j] = x[j];
        let fd = (fp - fm) / (2.0 * step);
        let denom = gradient[j].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((gradient[j] - fd).abs() / denom);
    }

    // Hessian-vector product along a fixed direction.
    let mut g = alloc::vec![0.0; n];
    let mut hm = SymMat::zeros(n);
    obj.value_grad_hess(x, &mut g, &mut hm);
    for c in cons {
        let s = c.slack(x);
        let w = inv_t / (s * s);
        for (idx, &(j, cj)) in c.terms.iter().enumerate() {
            for &(l, cl) in &c.terms[idx..] {
                hm.add_sym(j, l, w * cj * cl);
            }
        }
    }
    let dir: Vec<f64> = (0..n).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mut hv = alloc::vec![0.0; n];
    hm.mul_vec(&dir, &mut hv);
    let step = 1e-6;
    let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
    let xm: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a - step * d).collect();
    let gp = grad_of(&xp);
    let gm = grad_of(&xm);
    for j in 0..n {
        let fd = (gp[j] - gm[j]) / (2.0 * step);
        let denom = hv[j].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((hv[j] - fd).abs() / denom);
    }
    worst
}
