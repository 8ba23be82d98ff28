//! Joint barrier solve of the full relaxed problem: the caching vector is
//! shared across all states, everything else is per-state. The Newton system
//! has a block-arrow shape (small global head, one independent dense block
//! per state), so each step eliminates the state blocks and solves a Schur
//! system in the caching variables only. This is the reference objective the
//! consensus solver is audited against.

use alloc::vec::Vec;

use crate::config::SystemConfig;
use crate::energy::{total_energy, EnergyForm};
use crate::math::ln;
use crate::policy::{CachingVector, Policy, StateDecision};
use crate::solver::linalg::{Cholesky, SymMat};
use crate::solver::nlp::{min_slack, BarrierOptions, LinCon, LinTerm, Objective};
use crate::solver::{
    assemble_relaxed_state, cache_rows, cache_seed, extract_decision, seed_state_vars, CacheRef,
    StateVars, SubproblemError, SubproblemMode, SubproblemSpec,
};
use crate::state::StateSpace;

/// Outcome of the joint relaxed solve.
#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    pub cache: Vec<f64>,
    pub decisions: Vec<StateDecision>,
    /// Expected weighted sum energy at the solution.
    pub objective: f64,
    pub newton_iters: usize,
}

impl RelaxedSolution {
    pub fn into_policy(self) -> Policy {
        Policy {
            cache: CachingVector(self.cache),
            decisions: self.decisions,
            objective: self.objective,
            feasible: true,
            infeasible_states: Vec::new(),
        }
    }
}

struct Block {
    start: usize,
    count: usize,
    vars: StateVars,
    obj: Objective,
    rows: Vec<LinCon>,
}

struct Stacked {
    n_global: usize,
    n_total: usize,
    global_obj: Objective,
    global_rows: Vec<LinCon>,
    blocks: Vec<Block>,
}

impl Stacked {
    fn row_count(&self) -> usize {
        self.global_rows.len() + self.blocks.iter().map(|b| b.rows.len()).sum::<usize>()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut f = self.global_obj.value(x);
        for b in &self.blocks {
            f += b.obj.value(x);
            if !f.is_finite() {
                return f64::INFINITY;
            }
        }
        f
    }

    fn composite(&self, x: &[f64], inv_t: f64) -> f64 {
        let mut h = self.value(x);
        if !h.is_finite() {
            return f64::INFINITY;
        }
        for c in self.global_rows.iter().chain(self.blocks.iter().flat_map(|b| b.rows.iter())) {
            let s = c.slack(x);
            if s <= 0.0 {
                return f64::INFINITY;
            }
            h -= inv_t * ln(s);
        }
        h
    }

    fn min_slack(&self, x: &[f64]) -> f64 {
        let mut worst = min_slack(&self.global_rows, x);
        for b in &self.blocks {
            worst = worst.min(min_slack(&b.rows, x));
        }
        worst
    }
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const BOUNDARY_FRACTION: f64 = 0.99;

/// One damped Newton centering pass of `f + (1/t) * barrier` via block
/// elimination. Returns Newton iterations; `early` can stop a Phase-I run.
#[allow(clippy::too_many_lines)]
fn center_stacked(
    st: &Stacked,
    x: &mut [f64],
    inv_t: f64,
    opts: &BarrierOptions,
    early: Option<&dyn Fn(&[f64]) -> bool>,
) -> Result<usize, SubproblemError> {
    let ng = st.n_global;
    let nt = st.n_total;
    let mut grad = alloc::vec![0.0; nt];
    let mut step = alloc::vec![0.0; nt];
    let mut trial = alloc::vec![0.0; nt];
    let mut h_cc = SymMat::zeros(ng);
    let mut schur = SymMat::zeros(ng);
    let mut rhs_c = alloc::vec![0.0; ng];

    // Scratch reused across blocks, sized for the biggest one.
    let max_count = st.blocks.iter().map(|b| b.count).max().unwrap_or(0);
    let mut bg = alloc::vec![0.0; max_count];
    let mut bq = alloc::vec![0.0; max_count * ng];
    let mut h_qq = SymMat::zeros(max_count);
    let mut solved: Vec<Vec<f64>> = st.blocks.iter().map(|b| alloc::vec![0.0; b.count * (ng + 1)]).collect();

    for iter in 0..opts.max_newton_iters {
        grad.iter_mut().for_each(|v| *v = 0.0);
        h_cc.reset();
        let mut h = 0.0;

        // Global objective and rows act on the head only.
        {
            let mut g_head = alloc::vec![0.0; ng];
            let mut hm = SymMat::zeros(ng);
            h += st.global_obj.value_grad_hess(&x[..ng], &mut g_head, &mut hm);
            for j in 0..ng {
                grad[j] += g_head[j];
                for l in 0..ng {
                    h_cc.a[j * ng + l] += hm.a[j * ng + l];
                }
            }
            for c in &st.global_rows {
                let s = c.slack(x);
                h -= inv_t * ln(s);
                let inv_s = inv_t / s;
                for &(j, cj) in &c.terms {
                    grad[j] += inv_s * cj;
                }
                let w = inv_s / s;
                for (idx, &(j, cj)) in c.terms.iter().enumerate() {
                    for &(l, cl) in &c.terms[idx..] {
                        h_cc.add_sym(j, l, w * cj * cl);
                    }
                }
            }
        }

        // Per-block contributions and elimination.
        schur.a.copy_from_slice(&h_cc.a);
        rhs_c.iter_mut().for_each(|v| *v = 0.0);
        let mut block_fail = false;
        for (bi, b) in st.blocks.iter().enumerate() {
            let nb = b.count;
            h_qq.n = nb;
            h_qq.a.resize(nb * nb, 0.0);
            h_qq.reset();
            bg[..nb].iter_mut().for_each(|v| *v = 0.0);
            bq[..nb * ng].iter_mut().for_each(|v| *v = 0.0);

            // Objective of the block: local variables only.
            {
                // value_grad_hess needs a dense map; do it manually on the
                // full x with sparse writes.
                h += eval_block_obj(&b.obj, x, b.start, nb, &mut bg, &mut h_qq);
            }
            for c in &b.rows {
                let s = c.slack(x);
                h -= inv_t * ln(s);
                let inv_s = inv_t / s;
                let w = inv_s / s;
                for &(j, cj) in &c.terms {
                    if j < ng {
                        grad[j] += inv_s * cj;
                    } else {
                        bg[j - b.start] += inv_s * cj;
                    }
                }
                for (idx, &(j, cj)) in c.terms.iter().enumerate() {
                    for &(l, cl) in &c.terms[idx..] {
                        let v = w * cj * cl;
                        match (j < ng, l < ng) {
                            (true, true) => schur.add_sym(j, l, v),
                            (false, false) => h_qq.add_sym(j - b.start, l - b.start, v),
                            (true, false) => {
                                bq[(l - b.start) * ng + j] += v;
                            }
                            (false, true) => {
                                bq[(j - b.start) * ng + l] += v;
                            }
                        }
                    }
                }
            }
            for j in 0..nb {
                grad[b.start + j] += bg[j];
            }

            let Some(f) = Cholesky::factor_robust(&h_qq) else {
                block_fail = true;
                break;
            };
            // Solve for [B_q | g_q] columns.
            let sv = &mut solved[bi];
            for col in 0..ng {
                let mut rhs: Vec<f64> = (0..nb).map(|r| bq[r * ng + col]).collect();
                f.solve_in_place(&mut rhs);
                for r in 0..nb {
                    sv[r * (ng + 1) + col] = rhs[r];
                }
            }
            let mut rhs: Vec<f64> = bg[..nb].to_vec();
            f.solve_in_place(&mut rhs);
            for r in 0..nb {
                sv[r * (ng + 1) + ng] = rhs[r];
            }
            // Schur update: S -= B^T Hqq^{-1} B; rhs_c += B^T Hqq^{-1} g_q.
            for j in 0..ng {
                for l in j..ng {
                    let mut acc = 0.0;
                    for r in 0..nb {
                        acc += bq[r * ng + j] * sv[r * (ng + 1) + l];
                    }
                    schur.add_sym(j, l, -acc);
                }
                let mut acc = 0.0;
                for r in 0..nb {
                    acc += bq[r * ng + j] * sv[r * (ng + 1) + ng];
                }
                rhs_c[j] += acc;
            }
        }
        if block_fail {
            return Err(SubproblemError::Solver(crate::solver::NlpError::Factorization));
        }

        // Head solve: S dc = -(g_c - sum B^T Hqq^{-1} g_q).
        let mut dc = alloc::vec![0.0; ng];
        if ng > 0 {
            for j in 0..ng {
                dc[j] = -(grad[j] - rhs_c[j]);
            }
            let Some(f) = Cholesky::factor_robust(&schur) else {
                return Err(SubproblemError::Solver(crate::solver::NlpError::Factorization));
            };
            f.solve_in_place(&mut dc);
        }
        step[..ng].copy_from_slice(&dc);
        // Back-substitute blocks: dq = -(Hqq^{-1} g_q + Hqq^{-1} B dc).
        for (bi, b) in st.blocks.iter().enumerate() {
            let sv = &solved[bi];
            for r in 0..b.count {
                let mut v = sv[r * (ng + 1) + ng];
                for j in 0..ng {
                    v += sv[r * (ng + 1) + j] * dc[j];
                }
                step[b.start + r] = -v;
            }
        }

        let slope: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
        let decrement_sq = (-slope).max(0.0);
        if 0.5 * decrement_sq <= opts.newton_tol {
            return Ok(iter);
        }

        let mut alpha = 1.0f64;
        for c in st.global_rows.iter().chain(st.blocks.iter().flat_map(|b| b.rows.iter())) {
            let d = c.dot_dir(&step);
            if d > 0.0 {
                alpha = alpha.min(BOUNDARY_FRACTION * c.slack(x) / d);
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..nt {
                trial[j] = x[j] + alpha * step[j];
            }
            let ht = st.composite(&trial, inv_t);
            if ht.is_finite() && ht <= h + ARMIJO_C1 * alpha * slope {
                x.copy_from_slice(&trial);
                accepted = true;
                break;
            }
            alpha *= BACKTRACK;
        }
        if !accepted {
            return Err(SubproblemError::Solver(crate::solver::NlpError::NewtonStall {
                grad_norm: crate::math::norm2(&grad),
            }));
        }
        if let Some(stop) = early {
            if stop(x) {
                return Ok(iter + 1);
            }
        }
    }
    Ok(opts.max_newton_iters)
}

/// Block objective evaluation with local gradient/Hessian scatter; indices in
/// the objective are global, locals start at `start`.
fn eval_block_obj(
    obj: &Objective,
    x: &[f64],
    start: usize,
    count: usize,
    grad: &mut [f64],
    hess: &mut SymMat,
) -> f64 {
    use crate::math::{exp2, LN_2};
    use crate::solver::nlp::Gate;
    let mut f = obj.constant;
    for term in &obj.persp {
        let t = x[term.time];
        let a = match term.gate {
            Gate::Fixed(a) => a,
            Gate::Var(i) => x[i],
        };
        let w = term.exp_coef * a / t;
        let e = exp2(w);
        f += term.coef * t * (e - 1.0);
        let ti = term.time - start;
        debug_assert!(ti < count);
        grad[ti] += term.coef * (e * (1.0 - w * LN_2) - 1.0);
        let curv = term.coef * term.exp_coef * term.exp_coef * LN_2 * LN_2 * e / t;
        hess.add_sym(ti, ti, curv * (a / t) * (a / t));
        if let Gate::Var(i) = term.gate {
            let gi = i - start;
            grad[gi] += term.coef * term.exp_coef * LN_2 * e;
            hess.add_sym(gi, gi, curv);
            hess.add_sym(gi, ti, -curv * a / t);
        }
    }
    for term in &obj.linear {
        f += term.coef * x[term.var];
        grad[term.var - start] += term.coef;
    }
    for term in &obj.quad {
        let d = x[term.var] - term.center;
        f += term.half_coef * d * d;
        grad[term.var - start] += 2.0 * term.half_coef * d;
        hess.add_sym(term.var - start, term.var - start, 2.0 * term.half_coef);
    }
    f
}

fn stacked_barrier(
    st: &Stacked,
    x0: &[f64],
    opts: &BarrierOptions,
) -> Result<(Vec<f64>, usize), SubproblemError> {
    let m = st.row_count().max(1) as f64;
    let mut x = x0.to_vec();
    let mut t = opts.t_init;
    let mut iters = 0;
    loop {
        iters += center_stacked(st, &mut x, 1.0 / t, opts, None)?;
        if m / t <= opts.duality_gap_tol {
            return Ok((x, iters));
        }
        t *= opts.barrier_mu;
    }
}

/// Phase I on the stacked constraint set: one extra global variable bounds
/// every violation from above and is minimized.
fn stacked_phase1(
    st: &Stacked,
    seed: &[f64],
    opts: &BarrierOptions,
    usable: &dyn Fn(&[f64]) -> bool,
) -> Result<Vec<f64>, SubproblemError> {
    let ng = st.n_global;
    let w_idx = ng; // new global var right after the head
    let shift = |rows: &[LinCon], add_w: bool| -> Vec<LinCon> {
        rows.iter()
            .map(|c| {
                let mut terms: Vec<(usize, f64)> = c
                    .terms
                    .iter()
                    .map(|&(j, v)| (if j < ng { j } else { j + 1 }, v))
                    .collect();
                if add_w {
                    terms.push((w_idx, -1.0));
                }
                LinCon { terms, rhs: c.rhs }
            })
            .collect()
    };
    let shift_obj = |obj: &Objective| -> Objective {
        let mut o = obj.clone();
        for t in &mut o.persp {
            if t.time >= ng {
                t.time += 1;
            }
            if let crate::solver::nlp::Gate::Var(i) = &mut t.gate {
                if *i >= ng {
                    *i += 1;
                }
            }
        }
        for t in &mut o.linear {
            if t.var >= ng {
                t.var += 1;
            }
        }
        for t in &mut o.quad {
            if t.var >= ng {
                t.var += 1;
            }
        }
        o
    };
    let aug = Stacked {
        n_global: ng + 1,
        n_total: st.n_total + 1,
        global_obj: Objective {
            linear: alloc::vec![LinTerm { var: w_idx, coef: 1.0 }],
            ..Objective::default()
        },
        global_rows: shift(&st.global_rows, true),
        blocks: st
            .blocks
            .iter()
            .map(|b| Block {
                start: b.start + 1,
                count: b.count,
                vars: b.vars.clone(),
                obj: shift_obj(&b.obj),
                rows: shift(&b.rows, true),
            })
            .collect(),
    };
    // Drop the (meaningless) block objectives for Phase I: only feasibility matters.
    let aug = Stacked {
        blocks: aug
            .blocks
            .into_iter()
            .map(|mut b| {
                b.obj = Objective::default();
                b
            })
            .collect(),
        ..aug
    };

    let mut x = alloc::vec![0.0; st.n_total + 1];
    x[..ng].copy_from_slice(&seed[..ng]);
    for (j, &v) in seed[ng..].iter().enumerate() {
        x[ng + 1 + j] = v;
    }
    let worst = (-st.min_slack(seed)).max(0.0);
    x[w_idx] = worst + worst.abs().max(1.0);

    let strip = |x: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(st.n_total);
        out.extend_from_slice(&x[..ng]);
        out.extend_from_slice(&x[ng + 1..]);
        out
    };
    let margin = 10.0 * opts.feasibility_slack;
    let early = |x: &[f64]| x[w_idx] <= -margin && usable(&strip(x));

    let m = aug.row_count().max(1) as f64;
    let mut t = opts.t_init;
    loop {
        center_stacked(&aug, &mut x, 1.0 / t, opts, Some(&early))?;
        if early(&x) {
            return Ok(strip(&x));
        }
        if m / t <= opts.duality_gap_tol {
            if x[w_idx] <= -opts.feasibility_slack && usable(&strip(&x)) {
                return Ok(strip(&x));
            }
            return Err(SubproblemError::Infeasible { residual: x[w_idx] });
        }
        t *= opts.barrier_mu;
    }
}

/// Jointly solve the continuous relaxation over the whole state space with
/// the shared caching vector, by the same barrier-Newton machinery on the
/// stacked system. Ground truth for the consensus solver.
pub fn solve_reference_relaxed(
    cfg: &SystemConfig,
    space: &StateSpace,
    opts: &BarrierOptions,
) -> Result<RelaxedSolution, SubproblemError> {
    if cfg.cache_size <= 0.0 {
        // No caching head: the problem separates per state.
        let mut decisions = Vec::with_capacity(space.len());
        let mut objective = 0.0;
        let mut iters = 0;
        for state in &space.states {
            let spec = SubproblemSpec {
                cfg,
                state,
                mode: SubproblemMode::Relaxed,
                energy_weight: 1.0,
                fixed_cache: None,
                cache_penalty: None,
                offload_penalty: None,
                slack_penalty: None,
            };
            let sol = crate::solver::solve_state_subproblem(&spec, opts, None)?;
            objective += state.prob * sol.energy;
            iters += sol.newton_iters;
            decisions.push(sol.decision);
        }
        return Ok(RelaxedSolution {
            cache: alloc::vec![0.0; cfg.num_services],
            decisions,
            objective,
            newton_iters: iters,
        });
    }

    let ng = cfg.num_services;
    let mut blocks = Vec::with_capacity(space.len());
    let mut next = ng;
    for state in &space.states {
        let asm = assemble_relaxed_state(cfg, state, state.prob, CacheRef::Vars { base: 0 }, next);
        blocks.push(Block {
            start: next,
            count: asm.var_count,
            vars: asm.vars,
            obj: asm.objective,
            rows: asm.cons,
        });
        next += blocks.last().unwrap().count;
    }
    let st = Stacked {
        n_global: ng,
        n_total: next,
        global_obj: Objective::default(),
        global_rows: cache_rows(cfg, 0),
        blocks,
    };

    // Seed.
    let fill = cache_seed(cfg);
    let fill_vec = alloc::vec![fill; ng];
    let mut seed = alloc::vec![0.0; st.n_total];
    seed[..ng].iter_mut().for_each(|v| *v = fill);
    for (b, state) in st.blocks.iter().zip(&space.states) {
        seed_state_vars(cfg, state, &b.vars, &fill_vec, &mut seed);
    }
    let usable = |x: &[f64]| st.value(x).is_finite();
    let x0 = if st.min_slack(&seed) >= opts.feasibility_slack && usable(&seed) {
        seed
    } else {
        stacked_phase1(&st, &seed, opts, &usable)?
    };

    // Rescale the objective by the expected all-local execution energy, a
    // seed-independent magnitude of the right order.
    let scale = space
        .states
        .iter()
        .map(|s| crate::solver::energy_yardstick(cfg, s, s.prob))
        .sum::<f64>()
        .max(1e-12);
    let mut scaled = Stacked {
        n_global: st.n_global,
        n_total: st.n_total,
        global_obj: st.global_obj.clone(),
        global_rows: st.global_rows.clone(),
        blocks: st
            .blocks
            .iter()
            .map(|b| Block {
                start: b.start,
                count: b.count,
                vars: b.vars.clone(),
                obj: b.obj.clone(),
                rows: b.rows.clone(),
            })
            .collect(),
    };
    for b in &mut scaled.blocks {
        b.obj.scale(1.0 / scale);
    }

    let (x, iters) = stacked_barrier(&scaled, &x0, opts)?;

    let cache: Vec<f64> = x[..ng].to_vec();
    let cache_ref = CacheRef::Vars { base: 0 };
    let mut decisions = Vec::with_capacity(space.len());
    let mut objective = 0.0;
    for (b, state) in scaled.blocks.iter().zip(&space.states) {
        let dec = extract_decision(cfg, &b.vars, &cache_ref, Some(&cache), &x, None);
        objective += state.prob
            * total_energy(state, &CachingVector(cache.clone()), &dec, cfg, EnergyForm::Perspective)
                .expect("solver decision is dimensionally consistent")
                .total_j;
        decisions.push(dec);
    }
    Ok(RelaxedSolution { cache, decisions, objective, newton_iters: iters })
}
