use cachemec::config::SystemConfig;
use cachemec::solver::{solve_state_subproblem, CachePenalty, SolverOptions, SubproblemMode, SubproblemSpec};
use cachemec::state::enumerate_states;
use std::time::Instant;

fn main() {
    let mut cfg = SystemConfig::defaults(2, 4);
    cfg.deadline = 0.03;
    let space = enumerate_states(&cfg, 100_000).unwrap();
    let state = &space.states[1000];
    let spec = SubproblemSpec {
        cfg: &cfg,
        state,
        mode: SubproblemMode::Relaxed,
        energy_weight: state.prob,
        fixed_cache: None,
        cache_penalty: Some(CachePenalty { dual: vec![1e-3; 4], anchor: vec![0.4; 4], rho: 0.1 }),
        offload_penalty: None,
        slack_penalty: None,
    };
    let opts = SolverOptions::default();
    let cold = solve_state_subproblem(&spec, &opts, None).unwrap();
    println!("cold: {} newton iters", cold.newton_iters);
    let t0 = Instant::now();
    let reps = 2000;
    let mut iters = 0;
    let mut warm = cold.x.clone();
    for _ in 0..reps {
        let sol = solve_state_subproblem(&spec, &opts, Some(&warm)).unwrap();
        iters += sol.newton_iters;
        warm = sol.x;
    }
    let dt = t0.elapsed();
    println!("warm: {:?} per solve, {} newton iters avg", dt / reps, iters as f64 / reps as f64);
}
