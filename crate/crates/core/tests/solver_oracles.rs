//! Independent oracles for the convex kernel: closed forms, grid searches
//! and finite differences, never the solver's own code path.

use cachemec::config::{Pmf, SystemConfig};
use cachemec::energy::{exec_cost, Executor};
use cachemec::feasibility::{check_feasibility, ProblemForm};
use cachemec::policy::CachingVector;
use cachemec::solver::{
    gradient_check, solve_state_subproblem, solve_time_allocation, CachePenalty, Gate, LinCon,
    Objective, PerspTerm, SolverOptions, SubproblemMode, SubproblemSpec,
};
use cachemec::state::{enumerate_states, SystemState};

fn singleton_cfg(num_users: usize, num_services: usize) -> SystemConfig {
    let mut cfg = SystemConfig::defaults(num_users, num_services);
    cfg.input_bits = Pmf::singleton(9e5);
    cfg.load_cycles = Pmf::singleton(1e6);
    cfg.result_bits = Pmf::singleton(1e4);
    cfg.gain = Pmf::singleton(1e-7);
    cfg
}

/// Link energy closed form, written out independently of the library.
fn link_j(t: f64, bits: f64, gain: f64, cfg: &SystemConfig) -> f64 {
    if t <= 0.0 {
        return if bits <= 0.0 { 0.0 } else { f64::INFINITY };
    }
    t / gain * cfg.noise_power * (2f64.powf(bits / t / cfg.bandwidth) - 1.0)
}

/// Best offloaded-branch energy for one user by brute grid over the
/// upload/download split, at the stated resolution.
fn offload_branch_grid(cfg: &SystemConfig, state: &SystemState, budget: f64, steps: usize) -> f64 {
    let (_, server_j) = exec_cost(Executor::ServingNode, state.load_cycles[0], cfg);
    let mut best = f64::INFINITY;
    for i in 1..steps {
        let tu = budget * i as f64 / steps as f64;
        let td = budget - tu;
        let e = cfg.weight[0] * link_j(tu, state.input_bits[0], state.gains[0], cfg)
            + link_j(td, state.result_bits[0], state.gains[0], cfg)
            + server_j;
        if e < best {
            best = e;
        }
    }
    best
}

#[test]
fn relaxed_single_user_matches_branch_oracle() {
    // K=1, degenerate supports, generous deadline, cache covers everything:
    // the relaxed optimum approaches the cheaper of full-local (with the
    // multicast filling the frame) and full-offload (optimal time split).
    let mut cfg = singleton_cfg(1, 1);
    cfg.deadline = 0.5;
    cfg.cache_size = cfg.total_software_bits();
    let space = enumerate_states(&cfg, 4).unwrap();
    let state = &space.states[0];

    let spec = SubproblemSpec::relaxed(&cfg, state);
    let sol = solve_state_subproblem(&spec, &SolverOptions::default(), None).unwrap();

    // Local branch: o = 0, y = 1, multicast fills the budget D - L_e/F_k.
    let (local_t, local_j) = exec_cost(Executor::User(0), state.load_cycles[0], &cfg);
    let ts = cfg.deadline - local_t;
    let local_branch = cfg.weight[0] * local_j + link_j(ts, cfg.software_bits[0], state.gains[0], &cfg);
    // Offload branch: o = 1, y = 0, split D - L_e/F_sn.
    let (server_t, _) = exec_cost(Executor::ServingNode, state.load_cycles[0], &cfg);
    let offload_branch = offload_branch_grid(&cfg, state, cfg.deadline - server_t, 10_000);

    let oracle = local_branch.min(offload_branch);
    assert!(
        sol.energy <= oracle + 1e-4 * oracle,
        "solver {} vs branch oracle {}",
        sol.energy,
        oracle
    );
    // The relaxed optimum can only improve on the binary branches.
    assert!(sol.energy >= 0.0);
}

#[test]
fn time_only_split_matches_grid_search() {
    // K=1 offloaded, single state: optimal split of the transmission budget
    // between upload and download. One-sided checks against a fine grid:
    // the solver must not lose to any grid point, and must not beat the
    // grid by more than the grid's own resolution error.
    let mut cfg = singleton_cfg(1, 1);
    cfg.deadline = 0.03;
    cfg.cache_size = cfg.total_software_bits();
    let space = enumerate_states(&cfg, 4).unwrap();
    let state = &space.states[0];

    let sol = solve_time_allocation(
        &cfg,
        state,
        &[1.0],
        &[1.0],
        &[0.0],
        &SolverOptions::default(),
    )
    .unwrap();

    let (server_t, _) = exec_cost(Executor::ServingNode, state.load_cycles[0], &cfg);
    let budget = cfg.deadline - server_t;
    let grid = offload_branch_grid(&cfg, state, budget, 300_000);
    assert!(sol.energy <= grid + 1e-9, "solver {} vs grid {}", sol.energy, grid);
    assert!(grid <= sol.energy + 1e-6 * grid, "grid {} vs solver {}", grid, sol.energy);
    // The deadline is exhausted: transmission energy decreases in time.
    let used = sol.decision.upload_time[0] + sol.decision.download_time[0];
    assert!((used - budget).abs() < 1e-6 * cfg.deadline);
}

#[test]
fn all_local_times_fill_the_frame_with_multicast() {
    // All-local with everything cached: no fetch, but the software still
    // has to be multicast, so the optimal multicast time fills the frame
    // rather than collapsing to zero.
    let mut cfg = singleton_cfg(2, 2);
    cfg.deadline = 0.05;
    cfg.cache_size = cfg.total_software_bits();
    let space = enumerate_states(&cfg, 16).unwrap();
    let state = space
        .states
        .iter()
        .find(|s| s.services == vec![0, 1])
        .expect("both services demanded somewhere");

    let sol = solve_time_allocation(
        &cfg,
        state,
        &[1.0, 1.0],
        &[0.0, 0.0],
        &[1.0, 1.0],
        &SolverOptions::default(),
    )
    .unwrap();
    let (local_t, _) = exec_cost(Executor::User(0), state.load_cycles[0], &cfg);
    let budget = cfg.deadline - local_t;
    let used: f64 = sol.decision.multicast_time.iter().sum();
    assert!((used - budget).abs() < 1e-6 * cfg.deadline, "used {used} vs budget {budget}");
    assert!(sol.energy.is_finite());
    // And the energy strictly exceeds the pure execution cost.
    let exec_only: f64 = (0..2)
        .map(|k| cfg.weight[k] * exec_cost(Executor::User(k), state.load_cycles[k], &cfg).1)
        .sum();
    assert!(sol.energy > exec_only);
}

#[test]
fn quadratic_only_solve_is_capacity_box_projection() {
    // Energies disabled, rho > 0: the cache block must land on the
    // projection of (anchor - dual/rho) onto the box-and-capacity polytope.
    // Oracle: bisection on the capacity multiplier.
    let mut cfg = singleton_cfg(2, 4);
    cfg.deadline = 0.5; // generous so the deadline rows stay slack
    let space = enumerate_states(&cfg, 4096).unwrap();
    let state = &space.states[0];

    let target = [0.9, 0.7, 0.2, 0.05];
    let dual = [0.02, -0.01, 0.0, 0.03];
    let rho = 1.6;
    let spec = SubproblemSpec {
        cfg: &cfg,
        state,
        mode: SubproblemMode::Relaxed,
        energy_weight: 0.0,
        fixed_cache: None,
        cache_penalty: Some(CachePenalty { dual: dual.to_vec(), anchor: target.to_vec(), rho }),
        offload_penalty: None,
        slack_penalty: None,
    };
    let sol = solve_state_subproblem(&spec, &SolverOptions::default(), None).unwrap();

    // Projection oracle: minimize ||c - v||^2 with v = target - dual/rho,
    // subject to the box and sum c_n l_n <= C, by bisection on lambda >= 0
    // with c(lambda) = clip(v - lambda*l, 0, 1).
    let v: Vec<f64> = (0..4).map(|n| target[n] - dual[n] / rho).collect();
    let l = &cfg.software_bits;
    let project = |lambda: f64| -> Vec<f64> {
        (0..4).map(|n| (v[n] - lambda * l[n]).clamp(0.0, 1.0)).collect()
    };
    let used = |c: &[f64]| -> f64 { c.iter().zip(l).map(|(c, l)| c * l).sum() };
    let mut c_star = project(0.0);
    if used(&c_star) > cfg.cache_size {
        let (mut lo, mut hi) = (0.0, 1.0 / l.iter().cloned().fold(f64::INFINITY, f64::min));
        while used(&project(hi)) > cfg.cache_size {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if used(&project(mid)) > cfg.cache_size {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        c_star = project(hi);
    }

    for n in 0..4 {
        assert!(
            (sol.decision.local_cache[n] - c_star[n]).abs() < 1e-4,
            "c[{n}] = {} vs projection {}",
            sol.decision.local_cache[n],
            c_star[n]
        );
    }
}

#[test]
fn perspective_gradient_formula() {
    // dphi/dt = (n0/H)(2^{aL/(Bt)}(1 - aL ln2/(B t)) - 1) at a=1, L=9e5,
    // t=0.01, H=1e-7 against central differences.
    let cfg = singleton_cfg(1, 1);
    let (n0, h, b, l, t) = (cfg.noise_power, 1e-7, cfg.bandwidth, 9e5, 0.01f64);
    let analytic = n0 / h * (2f64.powf(l / (b * t)) * (1.0 - l * std::f64::consts::LN_2 / (b * t)) - 1.0);
    let phi = |t: f64| t / h * n0 * (2f64.powf(l / t / b) - 1.0);
    let step = 1e-9;
    let fd = (phi(t + step) - phi(t - step)) / (2.0 * step);
    assert!(((analytic - fd) / fd.abs()).abs() < 1e-6, "{analytic} vs {fd}");
}

#[test]
fn barrier_derivatives_audit() {
    // Analytic gradient and Hessian-vector products of a representative
    // barrier objective (perspective + linear + quadratic terms over box
    // rows) against central differences, at interior points.
    let obj = Objective {
        persp: vec![
            PerspTerm { coef: 0.8, exp_coef: 1.3, gate: Gate::Var(0), time: 1 },
            PerspTerm { coef: 0.2, exp_coef: 2.1, gate: Gate::Fixed(0.7), time: 2 },
        ],
        linear: vec![cachemec::solver::LinTerm { var: 0, coef: 0.3 }],
        quad: vec![cachemec::solver::QuadTerm { var: 2, half_coef: 0.45, center: 0.3 }],
        constant: 0.1,
    };
    let mut cons = Vec::new();
    for j in 0..3 {
        cons.push(LinCon { terms: vec![(j, -1.0)], rhs: 0.0 });
        cons.push(LinCon { terms: vec![(j, 1.0)], rhs: 1.0 });
    }
    cons.push(LinCon { terms: vec![(0, 1.0), (1, 1.0), (2, 1.0)], rhs: 2.2 });

    let points = [[0.5, 0.4, 0.6], [0.2, 0.7, 0.3], [0.9, 0.15, 0.5], [0.35, 0.55, 0.75]];
    for p in points {
        let err = gradient_check(&obj, &cons, &p, 100.0);
        assert!(err < 1e-6, "derivative mismatch {err} at {p:?}");
    }
}

#[test]
fn solutions_pass_the_feasibility_audit() {
    let mut cfg = singleton_cfg(2, 3);
    cfg.deadline = 0.03;
    let space = enumerate_states(&cfg, 64).unwrap();
    let opts = SolverOptions::default();
    for state in space.states.iter().take(4) {
        let spec = SubproblemSpec::relaxed(&cfg, state);
        let sol = solve_state_subproblem(&spec, &opts, None).unwrap();
        let cache = CachingVector(sol.decision.local_cache.clone());
        let violations = check_feasibility(state, &cache, &sol.decision, &cfg, ProblemForm::P2);
        assert!(violations.is_empty(), "{violations:?}");
    }
}

#[test]
fn time_only_value_is_monotone_in_deadline() {
    let mut base = singleton_cfg(1, 1);
    base.cache_size = 0.0;
    let mut previous = f64::INFINITY;
    for d in [0.015, 0.02, 0.03, 0.05, 0.08] {
        let mut cfg = base.clone();
        cfg.deadline = d;
        let space = enumerate_states(&cfg, 4).unwrap();
        let sol = solve_time_allocation(
            &cfg,
            &space.states[0],
            &[0.0],
            &[1.0],
            &[0.0],
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(
            sol.energy <= previous + 1e-9,
            "optimal value rose from {previous} to {} at D={d}",
            sol.energy
        );
        previous = sol.energy;
    }
}

#[test]
fn objective_scaling_scales_the_optimum() {
    // Doubling the energy weight doubles the optimal value and leaves the
    // minimizer unchanged (the solver's internal rescaling is invisible).
    let mut cfg = singleton_cfg(1, 2);
    cfg.deadline = 0.04;
    let space = enumerate_states(&cfg, 8).unwrap();
    let state = &space.states[0];
    let mut spec = SubproblemSpec::relaxed(&cfg, state);
    let a = solve_state_subproblem(&spec, &SolverOptions::default(), None).unwrap();
    spec.energy_weight = 2.0;
    let b = solve_state_subproblem(&spec, &SolverOptions::default(), None).unwrap();
    assert!((b.objective - 2.0 * a.objective).abs() <= 1e-8 * b.objective.abs().max(1.0));
    for (x, y) in a.x.iter().zip(&b.x) {
        assert!((x - y).abs() < 1e-5, "{x} vs {y}");
    }
}

#[test]
fn identical_inputs_give_bitwise_identical_solves() {
    let mut cfg = singleton_cfg(2, 2);
    cfg.deadline = 0.03;
    let space = enumerate_states(&cfg, 16).unwrap();
    let state = &space.states[1];
    let spec = SubproblemSpec::relaxed(&cfg, state);
    let a = solve_state_subproblem(&spec, &SolverOptions::default(), None).unwrap();
    let b = solve_state_subproblem(&spec, &SolverOptions::default(), None).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
}

#[test]
fn infeasible_deadline_is_reported_with_residual() {
    let mut cfg = singleton_cfg(1, 1);
    cfg.deadline = 1e-4; // below the uncached fetch time of 4e-3
    cfg.cache_size = 0.0;
    let space = enumerate_states(&cfg, 4).unwrap();
    let spec = SubproblemSpec::relaxed(&cfg, &space.states[0]);
    match solve_state_subproblem(&spec, &SolverOptions::default(), None) {
        Err(cachemec::solver::SubproblemError::Infeasible { residual }) => {
            assert!(residual > 0.0);
        }
        other => panic!("expected infeasibility, got {other:?}"),
    }
}
