//! Constraint audits for the original and the transformed problem. A
//! violation is data, not an error: each one names the constraint and
//! carries the signed residual (positive = violated by that much).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::SystemConfig;
use crate::energy::{exec_cost, Executor};
use crate::policy::{CachingVector, StateDecision};
use crate::state::SystemState;

/// Which constraint system to audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemForm {
    /// Original formulation: binary `(c, o)`, raw times gated by `o`/`y`
    /// with `y` recomputed from the offloads.
    P1,
    /// Transformed formulation in the hatted variables; also covers its
    /// continuous relaxation (binariness is checked separately, by the
    /// binary-mode assertions on the decision types).
    P2,
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: String,
    pub residual: f64,
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} violated by {:.3e}", self.constraint, self.residual)
    }
}

fn push_if(violations: &mut Vec<Violation>, residual: f64, tol: f64, name: impl FnOnce() -> String) {
    if residual > tol {
        violations.push(Violation { constraint: name(), residual });
    }
}

/// Total fetch-plus-multicast time of the state: the shared first term of
/// both deadline constraints.
pub fn fetch_multicast_time(
    state: &SystemState,
    cache: &[f64],
    multicast_time: &[f64],
    gates: Option<&[f64]>,
    cfg: &SystemConfig,
) -> f64 {
    let mut total = 0.0;
    for n in 0..cfg.num_services {
        if state.demanded(n) {
            total += (1.0 - cache[n]) * cfg.fetch_time(n);
            total += match gates {
                Some(y) => y[n] * multicast_time[n],
                None => multicast_time[n],
            };
        }
    }
    total
}

/// Audit one state's decision against the chosen constraint system.
/// Empty result means every constraint holds within `1e-9 * D` (times) and
/// `1e-9 * C` (capacity).
pub fn check_feasibility(
    state: &SystemState,
    cache: &CachingVector,
    decision: &StateDecision,
    cfg: &SystemConfig,
    form: ProblemForm,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let d = cfg.deadline;
    let time_tol = 1e-9 * d;
    let cap_tol = 1e-9 * cfg.cache_size;
    let c = cache.as_slice();

    push_if(&mut out, cache.used_bits(cfg) - cfg.cache_size, cap_tol, || {
        String::from("cache capacity")
    });

    match form {
        ProblemForm::P1 => {
            for (n, &cn) in c.iter().enumerate() {
                let dist = cn.abs().min((cn - 1.0).abs());
                push_if(&mut out, dist, 1e-9, || format!("c[{n}] binary"));
            }
            for (k, &ok) in decision.offload.iter().enumerate() {
                let dist = ok.abs().min((ok - 1.0).abs());
                push_if(&mut out, dist, 1e-9, || format!("o[{k}] binary"));
            }
            // Gates implied by the offloads.
            let gates: Vec<f64> = (0..cfg.num_services)
                .map(|n| state.requesters(n).map(|k| 1.0 - decision.offload[k]).fold(0.0, f64::max))
                .collect();
            for k in 0..cfg.num_users {
                let bound = decision.offload[k] * d;
                push_if(&mut out, -decision.upload_time[k], time_tol, || format!("t_u bound (k={k})"));
                push_if(&mut out, decision.upload_time[k] - bound, time_tol, || {
                    format!("t_u bound (k={k})")
                });
                push_if(&mut out, -decision.download_time[k], time_tol, || format!("t_d bound (k={k})"));
                push_if(&mut out, decision.download_time[k] - bound, time_tol, || {
                    format!("t_d bound (k={k})")
                });
            }
            for n in 0..cfg.num_services {
                let bound = gates[n] * d;
                push_if(&mut out, -decision.multicast_time[n], time_tol, || {
                    format!("t_sfw bound (n={n})")
                });
                push_if(&mut out, decision.multicast_time[n] - bound, time_tol, || {
                    format!("t_sfw bound (n={n})")
                });
            }
            let head = fetch_multicast_time(state, c, &decision.multicast_time, Some(&gates), cfg);
            let mut offload_path = head;
            for k in 0..cfg.num_users {
                let (exec_t, _) = exec_cost(Executor::ServingNode, state.load_cycles[k], cfg);
                offload_path += decision.offload[k]
                    * (decision.upload_time[k] + exec_t + decision.download_time[k]);
            }
            push_if(&mut out, offload_path - d, time_tol, || String::from("offload deadline"));
            for k in 0..cfg.num_users {
                let (exec_t, _) = exec_cost(Executor::User(k), state.load_cycles[k], cfg);
                let local_path = head + (1.0 - decision.offload[k]) * exec_t;
                push_if(&mut out, local_path - d, time_tol, || format!("local deadline (k={k})"));
            }
        }
        ProblemForm::P2 => {
            for (n, &cn) in c.iter().enumerate() {
                push_if(&mut out, -cn, 1e-9, || format!("c[{n}] box"));
                push_if(&mut out, cn - 1.0, 1e-9, || format!("c[{n}] box"));
            }
            for (k, &ok) in decision.offload.iter().enumerate() {
                push_if(&mut out, -ok, 1e-9, || format!("o[{k}] box"));
                push_if(&mut out, ok - 1.0, 1e-9, || format!("o[{k}] box"));
            }
            for n in 0..cfg.num_services {
                let y = decision.multicast_gate[n];
                if state.demanded(n) {
                    push_if(&mut out, y - 1.0, 1e-9, || format!("y[{n}] gate upper"));
                    for i in state.requesters(n) {
                        push_if(&mut out, (1.0 - decision.offload[i]) - y, 1e-9, || {
                            format!("y[{n}] gate lower (k={i})")
                        });
                    }
                } else {
                    push_if(&mut out, y.abs(), 1e-9, || format!("y[{n}] unrequested"));
                }
            }
            for k in 0..cfg.num_users {
                let bound = decision.offload[k] * d;
                push_if(&mut out, -decision.upload_time[k], time_tol, || format!("t_u bound (k={k})"));
                push_if(&mut out, decision.upload_time[k] - bound, time_tol, || {
                    format!("t_u bound (k={k})")
                });
                push_if(&mut out, -decision.download_time[k], time_tol, || format!("t_d bound (k={k})"));
                push_if(&mut out, decision.download_time[k] - bound, time_tol, || {
                    format!("t_d bound (k={k})")
                });
            }
            for n in 0..cfg.num_services {
                let bound = decision.multicast_gate[n] * d;
                push_if(&mut out, -decision.multicast_time[n], time_tol, || {
                    format!("t_sfw bound (n={n})")
                });
                push_if(&mut out, decision.multicast_time[n] - bound, time_tol, || {
                    format!("t_sfw bound (n={n})")
                });
            }
            let head = fetch_multicast_time(state, c, &decision.multicast_time, None, cfg);
            let mut offload_path = head;
            for k in 0..cfg.num_users {
                let (exec_t, _) = exec_cost(Executor::ServingNode, state.load_cycles[k], cfg);
                offload_path += decision.upload_time[k]
                    + decision.offload[k] * exec_t
                    + decision.download_time[k];
            }
            push_if(&mut out, offload_path - d, time_tol, || String::from("offload deadline"));
            for k in 0..cfg.num_users {
                let (exec_t, _) = exec_cost(Executor::User(k), state.load_cycles[k], cfg);
                let local_path = head + (1.0 - decision.offload[k]) * exec_t;
                push_if(&mut out, local_path - d, time_tol, || format!("local deadline (k={k})"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (SystemConfig, SystemState) {
        let cfg = SystemConfig::defaults(2, 4);
        let state = SystemState {
            services: alloc::vec![0, 1],
            input_bits: alloc::vec![1e5, 9e5],
            load_cycles: alloc::vec![1e6, 1e6],
            result_bits: alloc::vec![1e4, 1e4],
            gains: alloc::vec![1e-7, 1e-7],
            prob: 1.0,
        };
        (cfg, state)
    }

    #[test]
    fn zero_activity_with_full_cache_is_feasible() {
        let (cfg, state) = setup();
        let mut cfg = cfg;
        cfg.cache_size = cfg.total_software_bits();
        let cache = CachingVector(alloc::vec![1.0; 4]);
        let dec = StateDecision::all_local(2, 4, cache.as_slice());
        assert!(check_feasibility(&state, &cache, &dec, &cfg, ProblemForm::P1).is_empty());
    }

    #[test]
    fn upload_time_above_deadline_names_the_bound() {
        let (cfg, state) = setup();
        let cache = CachingVector(alloc::vec![1.0, 0.0, 0.0, 0.0]);
        let mut dec = StateDecision::all_local(2, 4, cache.as_slice());
        dec.offload = alloc::vec![1.0, 1.0];
        dec.upload_time[0] = cfg.deadline + 1.0;
        let v = check_feasibility(&state, &cache, &dec, &cfg, ProblemForm::P1);
        assert!(v.iter().any(|v| v.constraint.contains("t_u bound")), "{v:?}");
    }

    #[test]
    fn capacity_overflow_is_reported() {
        let (cfg, state) = setup();
        let cache = CachingVector(alloc::vec![1.0; 4]); // 4e6 bits > 1e6
        let dec = StateDecision::all_local(2, 4, cache.as_slice());
        let v = check_feasibility(&state, &cache, &dec, &cfg, ProblemForm::P2);
        assert!(v.iter().any(|v| v.constraint == "cache capacity"));
    }

    #[test]
    fn p2_gate_constraints_are_enforced() {
        let (cfg, state) = setup();
        let cache = CachingVector(alloc::vec![1.0, 1.0, 0.0, 0.0]);
        let mut cfg = cfg;
        cfg.cache_size = 1.2e6;
        let mut dec = StateDecision::all_local(2, 4, cache.as_slice());
        // User 1 local but gate for its service down: lower gate violated.
        dec.offload = alloc::vec![0.0, 1.0];
        dec.multicast_gate = alloc::vec![0.0, 0.0, 0.0, 0.0];
        let v = check_feasibility(&state, &cache, &dec, &cfg, ProblemForm::P2);
        assert!(v.iter().any(|v| v.constraint.contains("gate lower")), "{v:?}");
        // Gate up for an unrequested service.
        dec.multicast_gate = alloc::vec![1.0, 1.0, 1.0, 0.0];
        let v = check_feasibility(&state, &cache, &dec, &cfg, ProblemForm::P2);
        assert!(v.iter().any(|v| v.constraint.contains("unrequested")), "{v:?}");
    }
}
