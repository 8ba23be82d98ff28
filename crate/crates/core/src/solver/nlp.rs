//! Log-barrier damped-Newton solver for smooth convex objectives over
//! linear inequality constraints.
//!
//! The objective is a sum of perspective transmission terms
//! `phi(a, t) = coef * t * (2^{ec*a/t} - 1)`, linear terms and centered
//! quadratics; every constraint is `sum coef_j x_j <= rhs`. Centering
//! minimizes `f(x) + (1/t) * sum -ln(slack_i)` along the usual barrier path,
//! with `t` scaled up by `barrier_mu` per stage until the duality gap bound
//! `m/t` drops below tolerance. A Phase-I pass on the maximum constraint
//! violation produces a strictly interior start when the caller's seed is
//! not one.

use alloc::vec::Vec;

use crate::math::{exp2, norm2, LN_2};
use crate::solver::linalg::{Cholesky, SymMat};

/// The gate coordinate of a perspective term: a fixed scalar or a variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Fixed(f64),
    Var(usize),
}

/// `phi(a, t) = coef * t * (2^{ec * a / t} - 1)` for `t > 0`.
///
/// The Hessian in `(a, t)` is the positive semidefinite rank-one matrix
/// `coef * ec^2 * ln2^2 * 2^w / t * [1, -a/t; -a/t, a^2/t^2]` with
/// `w = ec*a/t`, which keeps the assembled Newton systems convex.
#[derive(Debug, Clone, Copy)]
pub struct PerspTerm {
    pub coef: f64,
    pub exp_coef: f64,
    pub gate: Gate,
    pub time: usize,
}

/// `coef * x_var`.
#[derive(Debug, Clone, Copy)]
pub struct LinTerm {
    pub var: usize,
    pub coef: f64,
}

/// `half_coef * (x_var - center)^2`.
#[derive(Debug, Clone, Copy)]
pub struct QuadTerm {
    pub var: usize,
    pub half_coef: f64,
    pub center: f64,
}

/// Smooth convex objective over `n` variables.
#[derive(Debug, Clone, Default)]
pub struct Objective {
    pub persp: Vec<PerspTerm>,
    pub linear: Vec<LinTerm>,
    pub quad: Vec<QuadTerm>,
    pub constant: f64,
}

impl Objective {
    /// Multiply every coefficient (and the constant) by `s`.
    pub fn scale(&mut self, s: f64) {
        for t in &mut self.persp {
            t.coef *= s;
        }
        for t in &mut self.linear {
            t.coef *= s;
        }
        for t in &mut self.quad {
            t.half_coef *= s;
        }
        self.constant *= s;
    }

    /// Objective value; `+inf` outside the domain of the perspective terms.
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut f = self.constant;
        for term in &self.persp {
            let t = x[term.time];
            let a = match term.gate {
                Gate::Fixed(a) => a,
                Gate::Var(i) => x[i],
            };
            if t <= 0.0 {
                if term.coef * a != 0.0 {
                    return f64::INFINITY;
                }
                continue;
            }
            f += term.coef * t * (exp2(term.exp_coef * a / t) - 1.0);
        }
        for term in &self.linear {
            f += term.coef * x[term.var];
        }
        for term in &self.quad {
            let d = x[term.var] - term.center;
            f += term.half_coef * d * d;
        }
        f
    }

    /// Value plus gradient and Hessian accumulated into the given buffers
    /// (which are reset first). Requires `t > 0` on every perspective term.
    pub fn value_grad_hess(&self, x: &[f64], grad: &mut [f64], hess: &mut SymMat) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        hess.reset();
        let mut f = self.constant;
        for term in &self.persp {
            let t = x[term.time];
            debug_assert!(t > 0.0, "perspective term evaluated at t <= 0");
            let a = match term.gate {
                Gate::Fixed(a) => a,
                Gate::Var(i) => x[i],
            };
            let w = term.exp_coef * a / t;
            let e = exp2(w);
            f += term.coef * t * (e - 1.0);
            let dt = term.coef * (e * (1.0 - w * LN_2) - 1.0);
            grad[term.time] += dt;
            let curv = term.coef * term.exp_coef * term.exp_coef * LN_2 * LN_2 * e / t;
            hess.add_sym(term.time, term.time, curv * (a / t) * (a / t));
            if let Gate::Var(i) = term.gate {
                grad[i] += term.coef * term.exp_coef * LN_2 * e;
                hess.add_sym(i, i, curv);
                hess.add_sym(i, term.time, -curv * a / t);
            }
        }
        for term in &self.linear {
            f += term.coef * x[term.var];
            grad[term.var] += term.coef;
        }
        for term in &self.quad {
            let d = x[term.var] - term.center;
            f += term.half_coef * d * d;
            grad[term.var] += 2.0 * term.half_coef * d;
            hess.add_sym(term.var, term.var, 2.0 * term.half_coef);
        }
        f
    }
}

/// One linear inequality `sum coef_j x_j <= rhs`, sparse.
#[derive(Debug, Clone)]
pub struct LinCon {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinCon {
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.rhs - self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }

    pub fn dot_dir(&self, d: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * d[j]).sum()
    }
}

/// Smallest slack over all constraints; `+inf` when there are none.
pub fn min_slack(cons: &[LinCon], x: &[f64]) -> f64 {
    cons.iter().map(|c| c.slack(x)).fold(f64::INFINITY, f64::min)
}

/// Barrier solver knobs.
#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    /// Barrier parameter multiplier per outer stage.
    pub barrier_mu: f64,
    /// Centering stops when half the squared Newton decrement drops below this.
    pub newton_tol: f64,
    /// Newton iteration cap per centering stage.
    pub max_newton_iters: usize,
    /// Interior margin: Phase I must bring the worst violation below
    /// `-feasibility_slack`, and a caller seed counts as interior only with
    /// at least this slack.
    pub feasibility_slack: f64,
    /// Stop once the duality-gap bound `m/t` falls below this (in units of
    /// the rescaled objective).
    pub duality_gap_tol: f64,
    /// Initial barrier parameter; warm starts may begin higher.
    pub t_init: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            barrier_mu: 10.0,
            newton_tol: 1e-10,
            max_newton_iters: 120,
            feasibility_slack: 1e-9,
            duality_gap_tol: 1e-8,
            t_init: 1.0,
        }
    }
}

/// Solver failures. Constraint-set emptiness is reported with the Phase-I
/// residual; everything else is a numerical diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub enum NlpError {
    /// No strictly feasible point: best achievable max-violation.
    Infeasible { phase1_residual: f64 },
    /// Newton failed to make progress; final gradient norm attached.
    NewtonStall { grad_norm: f64 },
    /// The Newton system could not be factored even with a ridge.
    Factorization,
}

impl core::fmt::Display for NlpError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NlpError::Infeasible { phase1_residual } => {
                write!(f, "no strictly feasible point (phase-1 residual {phase1_residual:.3e})")
            }
            NlpError::NewtonStall { grad_norm } => {
                write!(f, "Newton stalled (gradient norm {grad_norm:.3e})")
            }
            NlpError::Factorization => write!(f, "Newton system factorization failed"),
        }
    }
}

impl core::error::Error for NlpError {}

/// A barrier solve outcome.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub newton_iters: usize,
    pub gap_bound: f64,
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const BOUNDARY_FRACTION: f64 = 0.99;

struct Workspace {
    grad: Vec<f64>,
    hess: SymMat,
    step: Vec<f64>,
    trial: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            grad: alloc::vec![0.0; n],
            hess: SymMat::zeros(n),
            step: alloc::vec![0.0; n],
            trial: alloc::vec![0.0; n],
        }
    }
}

/// Composite `f(x) + (1/t) sum -ln(slack_i)`; `+inf` off the interior.
fn composite(obj: &Objective, cons: &[LinCon], x: &[f64], inv_t: f64) -> f64 {
    let mut h = obj.value(x);
    if !h.is_finite() {
        return f64::INFINITY;
    }
    for c in cons {
        let s = c.slack(x);
        if s <= 0.0 {
            return f64::INFINITY;
        }
        h -= inv_t * crate::math::ln(s);
    }
    h
}

/// Center `f + (1/t) phi` from the strictly interior `x`, in place.
/// Returns Newton iterations used, or an error on stall.
fn center(
    obj: &Objective,
    cons: &[LinCon],
    x: &mut [f64],
    inv_t: f64,
    opts: &BarrierOptions,
    ws: &mut Workspace,
    early_exit: Option<&dyn Fn(&[f64]) -> bool>,
) -> Result<usize, NlpError> {
    let n = x.len();
    for iter in 0..opts.max_newton_iters {
        let mut h = obj.value_grad_hess(x, &mut ws.grad, &mut ws.hess);
        for c in cons {
            let s = c.slack(x);
            let inv_s = inv_t / s;
            for &(j, cj) in &c.terms {
                ws.grad[j] += inv_s * cj;
            }
            let w = inv_s / s;
            for (idx, &(j, cj)) in c.terms.iter().enumerate() {
                for &(l, cl) in &c.terms[idx..] {
                    ws.hess.add_sym(j, l, w * cj * cl);
                }
            }
            h -= inv_t * crate::math::ln(s);
        }

        let chol = Cholesky::factor_robust(&ws.hess).ok_or(NlpError::Factorization)?;
        ws.step.copy_from_slice(&ws.grad);
        chol.solve_in_place(&mut ws.step);
        for v in ws.step.iter_mut() {
            *v = -*v;
        }
        let slope: f64 = ws.grad.iter().zip(&ws.step).map(|(g, d)| g * d).sum();
        let decrement_sq = (-slope).max(0.0);
        if 0.5 * decrement_sq <= opts.newton_tol {
            return Ok(iter);
        }

        // Step length: stay strictly inside the polytope, then Armijo.
        let mut alpha = 1.0f64;
        for c in cons {
            let d = c.dot_dir(&ws.step);
            if d > 0.0 {
                alpha = alpha.min(BOUNDARY_FRACTION * c.slack(x) / d);
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..n {
                ws.trial[j] = x[j] + alpha * ws.step[j];
            }
            let ht = composite(obj, cons, &ws.trial, inv_t);
            if ht.is_finite() && ht <= h + ARMIJO_C1 * alpha * slope {
                x.copy_from_slice(&ws.trial);
                accepted = true;
                break;
            }
            alpha *= BACKTRACK;
        }
        if !accepted {
            return Err(NlpError::NewtonStall { grad_norm: norm2(&ws.grad) });
        }
        if let Some(stop) = early_exit {
            if stop(x) {
                return Ok(iter + 1);
            }
        }
    }
    // Ran out of iterations without hitting the decrement tolerance; the
    // point is still interior and usable, so report it as a stall only if
    // the caller's gap demands more stages.
    Ok(opts.max_newton_iters)
}

/// Minimize `obj` over `cons` starting from the strictly interior `x0`.
pub fn solve_barrier(
    obj: &Objective,
    cons: &[LinCon],
    x0: &[f64],
    opts: &BarrierOptions,
) -> Result<Solution, NlpError> {
    let n = x0.len();
    if n == 0 {
        return Ok(Solution { x: Vec::new(), objective: obj.constant, newton_iters: 0, gap_bound: 0.0 });
    }
    debug_assert!(min_slack(cons, x0) > 0.0, "barrier start must be strictly interior");
    let m = cons.len().max(1) as f64;
    let mut ws = Workspace::new(n);
    let mut x = x0.to_vec();
    let mut t = opts.t_init;
    let mut iters = 0;
    loop {
        iters += center(obj, cons, &mut x, 1.0 / t, opts, &mut ws, None)?;
        let gap = m / t;
        if gap <= opts.duality_gap_tol {
            let objective = obj.value(&x);
            return Ok(Solution { x, objective, newton_iters: iters, gap_bound: gap });
        }
        t *= opts.barrier_mu;
    }
}

/// Find a strictly interior point of `cons`: try the seed, else run Phase I
/// (minimize the maximum violation with the same machinery).
pub fn find_interior(
    cons: &[LinCon],
    seed: &[f64],
    opts: &BarrierOptions,
) -> Result<Vec<f64>, NlpError> {
    find_interior_with(cons, seed, opts, &|_| true)
}

/// [`find_interior`] with an extra acceptance predicate: a point only counts
/// as usable when `usable(x)` holds (the subproblem builders pass a check
/// that the objective is finite there, guarding the perspective terms
/// against overflow at near-boundary points).
pub fn find_interior_with(
    cons: &[LinCon],
    seed: &[f64],
    opts: &BarrierOptions,
    usable: &dyn Fn(&[f64]) -> bool,
) -> Result<Vec<f64>, NlpError> {
    if min_slack(cons, seed) >= opts.feasibility_slack && usable(seed) {
        return Ok(seed.to_vec());
    }
    phase1(cons, seed, opts, usable)
}

/// Phase I: minimize `w` subject to `a_i x - w <= b_i`. Exits early once the
/// iterate is comfortably interior and `usable`. The returned point
/// satisfies every constraint with slack at least `feasibility_slack`.
pub fn phase1(
    cons: &[LinCon],
    seed: &[f64],
    opts: &BarrierOptions,
    usable: &dyn Fn(&[f64]) -> bool,
) -> Result<Vec<f64>, NlpError> {
    let n = seed.len();
    let w_idx = n;
    let aug: Vec<LinCon> = cons
        .iter()
        .map(|c| {
            let mut terms = c.terms.clone();
            terms.push((w_idx, -1.0));
            LinCon { terms, rhs: c.rhs }
        })
        .collect();
    let worst = cons.iter().map(|c| -c.slack(seed)).fold(f64::NEG_INFINITY, f64::max);
    let mut x = seed.to_vec();
    x.push(worst + worst.abs().max(1.0));

    let obj = Objective {
        linear: alloc::vec![LinTerm { var: w_idx, coef: 1.0 }],
        ..Objective::default()
    };
    let margin = 10.0 * opts.feasibility_slack;
    let early = move |x: &[f64]| x[w_idx] <= -margin && usable(&x[..w_idx]);

    let m = aug.len().max(1) as f64;
    let mut ws = Workspace::new(n + 1);
    let mut t = opts.t_init;
    loop {
        center(&obj, &aug, &mut x, 1.0 / t, opts, &mut ws, Some(&early))?;
        if early(&x) {
            x.truncate(n);
            return Ok(x);
        }
        if m / t <= opts.duality_gap_tol {
            // Converged without finding usable interior room.
            if x[w_idx] <= -opts.feasibility_slack && usable(&x[..w_idx]) {
                x.truncate(n);
                return Ok(x);
            }
            return Err(NlpError::Infeasible { phase1_residual: x[w_idx] });
        }
        t *= opts.barrier_mu;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box01(n: usize) -> Vec<LinCon> {
        let mut cons = Vec::new();
        for j in 0..n {
            cons.push(LinCon { terms: alloc::vec![(j, -1.0)], rhs: 0.0 });
            cons.push(LinCon { terms: alloc::vec![(j, 1.0)], rhs: 1.0 });
        }
        cons
    }

    #[test]
    fn quadratic_over_box_hits_interior_minimum() {
        // min (x-0.3)^2 + (y-0.9)^2 over [0,1]^2. The guarantee is on the
        // objective (duality gap), which for a unit quadratic puts the point
        // within sqrt(gap) of the minimizer.
        let obj = Objective {
            quad: alloc::vec![
                QuadTerm { var: 0, half_coef: 1.0, center: 0.3 },
                QuadTerm { var: 1, half_coef: 1.0, center: 0.9 },
            ],
            ..Objective::default()
        };
        let cons = box01(2);
        let sol = solve_barrier(&obj, &cons, &[0.5, 0.5], &BarrierOptions::default()).unwrap();
        assert!(sol.objective <= 1e-8, "objective {}", sol.objective);
        assert!((sol.x[0] - 0.3).abs() < 1e-4);
        assert!((sol.x[1] - 0.9).abs() < 1e-4);
    }

    #[test]
    fn active_bound_is_found() {
        // min x + y st x,y in [0,1], x + y >= 0.5  -> optimum on the face x+y=0.5.
        let obj = Objective {
            linear: alloc::vec![LinTerm { var: 0, coef: 1.0 }, LinTerm { var: 1, coef: 1.0 }],
            ..Objective::default()
        };
        let mut cons = box01(2);
        cons.push(LinCon { terms: alloc::vec![(0, -1.0), (1, -1.0)], rhs: -0.5 });
        let sol = solve_barrier(&obj, &cons, &[0.6, 0.6], &BarrierOptions::default()).unwrap();
        assert!((sol.x[0] + sol.x[1] - 0.5).abs() < 1e-7);
        assert!((sol.objective - 0.5).abs() < 1e-7);
    }

    #[test]
    fn perspective_term_matches_hand_optimum() {
        // min over t in (0, 1] of coef * t * (2^{ec/t} - 1): decreasing in t,
        // so the optimum sits at the upper bound.
        let obj = Objective {
            persp: alloc::vec![PerspTerm { coef: 1.0, exp_coef: 1.5, gate: Gate::Fixed(1.0), time: 0 }],
            ..Objective::default()
        };
        let cons = alloc::vec![
            LinCon { terms: alloc::vec![(0, -1.0)], rhs: 0.0 },
            LinCon { terms: alloc::vec![(0, 1.0)], rhs: 1.0 },
        ];
        let sol = solve_barrier(&obj, &cons, &[0.5], &BarrierOptions::default()).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-5, "x = {}", sol.x[0]);
    }

    #[test]
    fn phase1_finds_interior_or_reports_infeasible() {
        // x in [0,1], x >= 0.4, x <= 0.6: interior exists.
        let mut cons = box01(1);
        cons.push(LinCon { terms: alloc::vec![(0, -1.0)], rhs: -0.4 });
        cons.push(LinCon { terms: alloc::vec![(0, 1.0)], rhs: 0.6 });
        let x = find_interior(&cons, &[0.0_f64], &BarrierOptions::default()).unwrap();
        assert!(min_slack(&cons, &x) > 0.0);

        // x >= 0.7 and x <= 0.3: empty.
        let mut cons = box01(1);
        cons.push(LinCon { terms: alloc::vec![(0, -1.0)], rhs: -0.7 });
        cons.push(LinCon { terms: alloc::vec![(0, 1.0)], rhs: 0.3 });
        match find_interior(&cons, &[0.5], &BarrierOptions::default()) {
            Err(NlpError::Infeasible { phase1_residual }) => assert!(phase1_residual > 0.1),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }
}
