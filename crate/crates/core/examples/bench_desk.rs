//! Scratch timing runs for the desk-scale instance.
use cachemec::admm::{admm_solve_relaxed, AdmmOptions};
use cachemec::config::SystemConfig;
use cachemec::solver::reference::solve_reference_relaxed;
use cachemec::solver::SolverOptions;
use cachemec::state::enumerate_states;
use std::time::Instant;

fn main() {
    let mut cfg = SystemConfig::defaults(2, 4);
    cfg.deadline = 0.03;
    let space = enumerate_states(&cfg, 100_000).unwrap();

    let t0 = Instant::now();
    let reference = solve_reference_relaxed(&cfg, &space, &SolverOptions::default()).unwrap();
    println!("reference: {:.6e} J in {:?}, c = {:?}", reference.objective, t0.elapsed(), reference.cache);

    let mut opts = AdmmOptions::default();
    opts.max_iters = 250;
    let t0 = Instant::now();
    let admm = admm_solve_relaxed(&cfg, &space, &opts).unwrap();
    println!(
        "admm rho=0.1: final {:.6e} J, {} iters, converged={}, {:?}, c = {:?}",
        admm.policy.objective, admm.trace.len(), admm.converged, t0.elapsed(), admm.state.consensus
    );
    for row in admm.trace.iter().step_by(10) {
        println!("  iter {:3}: obj {:.6e} primal {:.3e} dual {:.3e}", row.iter, row.objective, row.primal_residual, row.dual_residual);
    }
    println!("rel gap to reference: {:.3e}", (admm.policy.objective - reference.objective).abs() / reference.objective);
}
