//! End-to-end behavior of the solver stack on tiny instances, cross-checked
//! between routes: joint reference solve, consensus ADMM, binary recovery,
//! penalty CCP, and the exhaustive oracle.

use cachemec::admm::{admm_solve_relaxed, AdmmOptions};
use cachemec::baselines::{evaluate_baseline, BaselineScheme, BaselineSpec};
use cachemec::ccp::{ccp_solve, CcpAnchor, CcpOptions};
use cachemec::config::{Pmf, SystemConfig};
use cachemec::energy::{average_energy, EnergyForm};
use cachemec::feasibility::{check_feasibility, ProblemForm};
use cachemec::oracle::{brute_force, brute_force_swapped, OracleCaps};
use cachemec::rounding::recover_policy;
use cachemec::solver::reference::solve_reference_relaxed;
use cachemec::solver::SolverOptions;
use cachemec::state::enumerate_states;

fn tiny_cfg() -> SystemConfig {
    let mut cfg = SystemConfig::defaults(2, 2);
    cfg.deadline = 0.05;
    cfg.input_bits = Pmf::singleton(9e5);
    cfg.load_cycles = Pmf::singleton(1e6);
    cfg.result_bits = Pmf::singleton(1e4);
    cfg.gain = Pmf::singleton(1e-7);
    cfg
}

#[test]
fn single_state_admm_matches_reference() {
    let mut cfg = tiny_cfg();
    cfg.num_services = 1;
    cfg.service_probs = vec![1.0];
    cfg.software_bits = vec![4e5];
    cfg.num_users = 1;
    cfg.user_freq = vec![7e8];
    cfg.user_kappa = vec![5e-27];
    cfg.weight = vec![1.0];
    let space = enumerate_states(&cfg, 4).unwrap();
    assert_eq!(space.len(), 1);

    let reference = solve_reference_relaxed(&cfg, &space, &SolverOptions::default()).unwrap();
    let admm = admm_solve_relaxed(&cfg, &space, &AdmmOptions::default()).unwrap();
    assert!(admm.converged);
    let rel = (admm.policy.objective - reference.objective).abs() / reference.objective;
    assert!(rel < 1e-6, "admm {} vs reference {}", admm.policy.objective, reference.objective);
}

#[test]
fn sandwich_on_tiny_instance() {
    let cfg = tiny_cfg();
    let space = enumerate_states(&cfg, 16).unwrap();
    assert_eq!(space.len(), 4);
    let opts = SolverOptions::default();

    let reference = solve_reference_relaxed(&cfg, &space, &opts).unwrap();
    let mut admm_opts = AdmmOptions::default();
    admm_opts.eps = 1e-6;
    admm_opts.max_iters = 4000;
    let admm = admm_solve_relaxed(&cfg, &space, &admm_opts).unwrap();
    assert!(admm.converged);

    let oracle = brute_force(&cfg, &space, OracleCaps::default(), &opts, false).unwrap();
    let recovered = recover_policy(&cfg, &space, &admm.state.decisions, &opts).unwrap();

    // Relaxation bound from both routes.
    assert!(reference.objective <= oracle.objective + 1e-6);
    assert!(admm.policy.objective <= oracle.objective + 1e-6);
    // Recovery can only lose energy relative to the exact binary optimum.
    assert!(oracle.objective <= recovered.policy.objective + 1e-6);
    // And the two relaxed routes agree.
    let rel = (admm.policy.objective - reference.objective).abs() / reference.objective;
    assert!(rel < 1e-4, "admm {} vs reference {}", admm.policy.objective, reference.objective);
}

#[test]
fn oracle_enumeration_order_is_irrelevant() {
    let cfg = tiny_cfg();
    let space = enumerate_states(&cfg, 16).unwrap();
    let opts = SolverOptions::default();
    let a = brute_force(&cfg, &space, OracleCaps::default(), &opts, false).unwrap();
    let b = brute_force_swapped(&cfg, &space, OracleCaps::default(), &opts).unwrap();
    assert!((a.objective - b).abs() <= 1e-12 * a.objective.max(1.0));
}

#[test]
fn oracle_respects_capacity_and_monotonicity() {
    let opts = SolverOptions::default();
    let mut previous = f64::INFINITY;
    for c in [0.0, 4e5, 1.2e6] {
        let mut cfg = tiny_cfg();
        cfg.cache_size = c;
        let space = enumerate_states(&cfg, 16).unwrap();
        let res = brute_force(&cfg, &space, OracleCaps::default(), &opts, false).unwrap();
        let used: f64 =
            res.cache.as_slice().iter().zip(&cfg.software_bits).map(|(c, l)| c * l).sum();
        assert!(used <= c + 1e-9);
        assert!(res.objective <= previous + 1e-12, "optimum rose when C grew to {c}");
        previous = res.objective;
    }
    let mut previous = f64::INFINITY;
    for d in [0.02, 0.03, 0.05] {
        let mut cfg = tiny_cfg();
        cfg.deadline = d;
        let space = enumerate_states(&cfg, 16).unwrap();
        let res = brute_force(&cfg, &space, OracleCaps::default(), &opts, false).unwrap();
        assert!(res.objective <= previous + 1e-12, "optimum rose when D grew to {d}");
        previous = res.objective;
    }
}

#[test]
fn oracle_caps_are_enforced() {
    let cfg = tiny_cfg();
    let space = enumerate_states(&cfg, 16).unwrap();
    let caps = OracleCaps { max_combinations: 8 };
    match brute_force(&cfg, &space, caps, &SolverOptions::default(), false) {
        Err(cachemec::oracle::OracleError::CapExceeded { required, cap }) => {
            assert_eq!(required, 4 * 4 * 4);
            assert_eq!(cap, 8);
        }
        other => panic!("expected cap refusal, got {other:?}"),
    }
}

#[test]
fn recovery_is_binary_feasible_and_certified() {
    let cfg = tiny_cfg();
    let space = enumerate_states(&cfg, 16).unwrap();
    let opts = SolverOptions::default();
    let admm = admm_solve_relaxed(&cfg, &space, &AdmmOptions::default()).unwrap();
    let recovered = recover_policy(&cfg, &space, &admm.state.decisions, &opts).unwrap();
    assert!(recovered.policy.feasible);
    assert!(recovered.certificate.holds);
    // Gate consistency and the P2 audit on every state.
    for (state, dec) in space.states.iter().zip(&recovered.policy.decisions) {
        let gates = cachemec::energy::multicast_gate_from_offload(state, &dec.offload, 2);
        assert_eq!(&gates, &dec.multicast_gate);
        let v = check_feasibility(state, &recovered.policy.cache, dec, &cfg, ProblemForm::P2);
        assert!(v.is_empty(), "{v:?}");
    }
    // The reported objective is re-derivable from the parts.
    let again = average_energy(&recovered.policy, &space, &cfg, EnergyForm::Perspective).unwrap();
    assert!((again - recovered.policy.objective).abs() <= 1e-9 * again.max(1.0));
}

#[test]
fn ccp_from_rounding_start_stays_binary_and_does_not_regress() {
    let cfg = tiny_cfg();
    let space = enumerate_states(&cfg, 16).unwrap();
    let opts = SolverOptions::default();
    let admm = admm_solve_relaxed(&cfg, &space, &AdmmOptions::default()).unwrap();
    let recovered = recover_policy(&cfg, &space, &admm.state.decisions, &opts).unwrap();

    let ccp = ccp_solve(&cfg, &space, &CcpOptions::default(), &CcpAnchor::from_policy(&recovered.policy))
        .unwrap();
    assert!(ccp.converged, "outer loop did not settle");
    assert!(ccp.binary, "slack {} change {}", ccp.slack, ccp.final_change);
    assert!(ccp.slack <= 1e-6);
    assert!(
        ccp.policy.objective <= recovered.policy.objective * (1.0 + 1e-6) + 1e-12,
        "ccp {} regressed past rounding {}",
        ccp.policy.objective,
        recovered.policy.objective
    );

    let oracle = brute_force(&cfg, &space, OracleCaps::default(), &opts, false).unwrap();
    assert!(oracle.objective <= ccp.policy.objective + 1e-6);
}

#[test]
fn baselines_dominate_the_oracle() {
    let cfg = tiny_cfg();
    let space = enumerate_states(&cfg, 16).unwrap();
    let opts = SolverOptions::default();
    let oracle = brute_force(&cfg, &space, OracleCaps::default(), &opts, false).unwrap();
    for scheme in [BaselineScheme::LocalEqualMulticast, BaselineScheme::OffloadEqualSplit] {
        let out = evaluate_baseline(&BaselineSpec::new(scheme), &cfg, &space);
        assert!(
            out.policy.objective >= oracle.objective - 1e-9,
            "{scheme:?} beat the oracle: {} < {}",
            out.policy.objective,
            oracle.objective
        );
        // Baseline decisions satisfy the feasibility audit when flagged so.
        if out.policy.feasible {
            for (state, dec) in space.states.iter().zip(&out.policy.decisions) {
                let v = check_feasibility(state, &out.policy.cache, dec, &cfg, ProblemForm::P1);
                assert!(v.is_empty(), "{scheme:?}: {v:?}");
            }
        }
    }
}
