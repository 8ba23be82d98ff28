//! Criterion-2 instance validation: 64 states, three rho values, tight eps.
use cachemec::admm::{admm_solve_relaxed, AdmmOptions, PrimalAggregation};
use cachemec::config::{Pmf, SystemConfig};
use cachemec::solver::reference::solve_reference_relaxed;
use cachemec::solver::SolverOptions;
use cachemec::state::enumerate_states;
use std::time::Instant;

fn main() {
    let mut cfg = SystemConfig::defaults(2, 4);
    cfg.deadline = 0.03;
    cfg.input_bits = Pmf::singleton(9e5);
    cfg.load_cycles = Pmf::singleton(1e6);
    cfg.result_bits = Pmf::singleton(1e4);
    let space = enumerate_states(&cfg, 100_000).unwrap();
    println!("states: {}", space.len());
    let t0 = Instant::now();
    let reference = solve_reference_relaxed(&cfg, &space, &SolverOptions::default()).unwrap();
    println!("ref {:.6e} in {:?}", reference.objective, t0.elapsed());

    let total = Instant::now();
    for rho in [0.05, 0.1, 0.5] {
        let mut opts = AdmmOptions::default();
        opts.rho = rho;
        opts.max_iters = 20_000;
        opts.eps = 1e-5;
        opts.primal_aggregation = PrimalAggregation::Sum;
        let t0 = Instant::now();
        let admm = admm_solve_relaxed(&cfg, &space, &opts).unwrap();
        println!(
            "rho {rho}: obj {:.6e}, {} iters, conv {}, rel {:.3e}, {:?}",
            admm.policy.objective, admm.trace.len(), admm.converged,
            (admm.policy.objective - reference.objective).abs() / reference.objective,
            t0.elapsed()
        );
    }
    println!("total {:?}", total.elapsed());
}
