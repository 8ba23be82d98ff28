//! Transmission and computation energy, in the original gated form and in
//! the perspective form that makes the per-state objective jointly convex.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::math::exp2;
use crate::policy::{CachingVector, Policy, StateDecision};
use crate::state::{StateSpace, SystemState};

/// Domain errors of the energy model. Infeasible transmissions are not
/// errors: they surface as `+inf` energies.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyError {
    NegativeRate(f64),
    NonPositiveGain(f64),
    GateOutOfRange(f64),
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
}

impl core::fmt::Display for EnergyError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EnergyError::NegativeRate(r) => write!(f, "transmission rate {r} is negative"),
            EnergyError::NonPositiveGain(h) => write!(f, "channel gain {h} is not positive"),
            EnergyError::GateOutOfRange(g) => write!(f, "gate {g} outside [0, 1]"),
            EnergyError::DimensionMismatch { what, expected, got } => {
                write!(f, "{what}: expected length {expected}, got {got}")
            }
        }
    }
}

impl core::error::Error for EnergyError {}

/// Transmit power needed to sustain `rate` over the configured channel:
/// `g(x) = n0 (2^{x/B} - 1)`. Strictly convex and increasing.
pub fn rate_power(rate: f64, cfg: &SystemConfig) -> Result<f64, EnergyError> {
    if rate < 0.0 {
        return Err(EnergyError::NegativeRate(rate));
    }
    Ok(cfg.noise_power * (exp2(rate / cfg.bandwidth) - 1.0))
}

/// Energy to push `bits` through a gain-`gain` link in `t` seconds:
/// `(t/H) g(bits/t)`. Zero time with a positive payload is the infeasible
/// transmission and yields the `+inf` sentinel rather than an error, so
/// solvers can treat the objective as extended-valued. `gain = +inf` yields 0.
pub fn link_energy(t: f64, bits: f64, gain: f64, cfg: &SystemConfig) -> Result<f64, EnergyError> {
    if !(gain > 0.0) {
        return Err(EnergyError::NonPositiveGain(gain));
    }
    if t <= 0.0 {
        return Ok(if bits <= 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(t / gain * rate_power(bits / t, cfg)?)
}

/// Perspective form `(t/H) g(gate*bits/t)`: jointly convex in `(gate, t)`,
/// and equal to [`link_energy`] at `gate = 1`.
pub fn perspective_energy(
    gate: f64,
    t: f64,
    bits: f64,
    gain: f64,
    cfg: &SystemConfig,
) -> Result<f64, EnergyError> {
    if !(0.0..=1.0).contains(&gate) {
        return Err(EnergyError::GateOutOfRange(gate));
    }
    if !(gain > 0.0) {
        return Err(EnergyError::NonPositiveGain(gain));
    }
    if t <= 0.0 {
        return Ok(if gate * bits <= 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(t / gain * rate_power(gate * bits / t, cfg)?)
}

/// Where a task runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Executor {
    ServingNode,
    User(usize),
}

/// Execution time and energy of `load` cycles on the chosen CPU:
/// `(load/F, mu * load * F^2)`.
pub fn exec_cost(executor: Executor, load: f64, cfg: &SystemConfig) -> (f64, f64) {
    let (freq, kappa) = match executor {
        Executor::ServingNode => (cfg.server_freq, cfg.server_kappa),
        Executor::User(k) => (cfg.user_freq[k], cfg.user_kappa[k]),
    };
    (load / freq, kappa * load * freq * freq)
}

/// Multicast gate implied by an offload vector: `y_n = max_{k in K_n}(1 - o_k)`,
/// zero for services nobody requests. Works on relaxed `o` as well.
pub fn multicast_gate_from_offload(state: &SystemState, offload: &[f64], num_services: usize) -> Vec<f64> {
    (0..num_services)
        .map(|n| state.requesters(n).map(|k| 1.0 - offload[k]).fold(0.0, f64::max))
        .collect()
}

/// Which algebraic form of the weighted sum energy to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyForm {
    /// Gates multiply whole transmission terms; times are the raw durations.
    Original,
    /// Gates sit inside the rate argument; times are the hatted durations.
    Perspective,
}

/// The five energy terms of one state (or their expectation), J. User-side
/// terms (upload, local execution) carry the per-user weights; serving-node
/// terms do not.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub multicast_j: f64,
    pub upload_j: f64,
    pub server_exec_j: f64,
    pub download_j: f64,
    pub local_exec_j: f64,
    pub total_j: f64,
}

impl EnergyBreakdown {
    pub fn accumulate(&mut self, other: &EnergyBreakdown, weight: f64) {
        self.multicast_j += weight * other.multicast_j;
        self.upload_j += weight * other.upload_j;
        self.server_exec_j += weight * other.server_exec_j;
        self.download_j += weight * other.download_j;
        self.local_exec_j += weight * other.local_exec_j;
        self.total_j += weight * other.total_j;
    }
}

/// Weighted sum energy of one state under a decision, broken into its five
/// terms. A gate of exactly zero suppresses its transmission term even when
/// the stored time is zero against a positive payload.
pub fn total_energy(
    state: &SystemState,
    cache: &CachingVector,
    decision: &StateDecision,
    cfg: &SystemConfig,
    form: EnergyForm,
) -> Result<EnergyBreakdown, EnergyError> {
    let k_users = cfg.num_users;
    let n_services = cfg.num_services;
    check_len("offload", &decision.offload, k_users)?;
    check_len("multicast_gate", &decision.multicast_gate, n_services)?;
    check_len("upload_time", &decision.upload_time, k_users)?;
    check_len("download_time", &decision.download_time, k_users)?;
    check_len("multicast_time", &decision.multicast_time, n_services)?;
    check_len("cache", cache.as_slice(), n_services)?;
    check_len("state.services", &state.services, k_users)?;

    let mut out = EnergyBreakdown::default();

    for n in 0..n_services {
        let gain = state.multicast_gain(n);
        if gain.is_infinite() {
            continue; // nobody requests n, the term vanishes
        }
        let bits = cfg.software_bits[n];
        let t = decision.multicast_time[n];
        match form {
            EnergyForm::Original => {
                let gate = state.requesters(n).map(|k| 1.0 - decision.offload[k]).fold(0.0, f64::max);
                if gate > 0.0 {
                    out.multicast_j += gate * link_energy(t, bits, gain, cfg)?;
                }
            }
            EnergyForm::Perspective => {
                out.multicast_j += perspective_energy(decision.multicast_gate[n], t, bits, gain, cfg)?;
            }
        }
    }

    for k in 0..k_users {
        let o = decision.offload[k];
        let h = state.gains[k];
        let (_, server_j) = exec_cost(Executor::ServingNode, state.load_cycles[k], cfg);
        let (_, local_j) = exec_cost(Executor::User(k), state.load_cycles[k], cfg);
        match form {
            EnergyForm::Original => {
                if o > 0.0 {
                    out.upload_j += o
                        * cfg.weight[k]
                        * link_energy(decision.upload_time[k], state.input_bits[k], h, cfg)?;
                    out.server_exec_j += o * server_j;
                    out.download_j +=
                        o * link_energy(decision.download_time[k], state.result_bits[k], h, cfg)?;
                }
            }
            EnergyForm::Perspective => {
                out.upload_j += cfg.weight[k]
                    * perspective_energy(o, decision.upload_time[k], state.input_bits[k], h, cfg)?;
                out.server_exec_j += o * server_j;
                out.download_j +=
                    perspective_energy(o, decision.download_time[k], state.result_bits[k], h, cfg)?;
            }
        }
        out.local_exec_j += (1.0 - o) * cfg.weight[k] * local_j;
    }

    out.total_j =
        out.multicast_j + out.upload_j + out.server_exec_j + out.download_j + out.local_exec_j;
    Ok(out)
}

fn check_len<T>(what: &'static str, xs: &[T], expected: usize) -> Result<(), EnergyError> {
    if xs.len() != expected {
        Err(EnergyError::DimensionMismatch { what, expected, got: xs.len() })
    } else {
        Ok(())
    }
}

/// Expected weighted sum energy of a policy over the whole state space.
pub fn average_energy(
    policy: &Policy,
    space: &StateSpace,
    cfg: &SystemConfig,
    form: EnergyForm,
) -> Result<f64, EnergyError> {
    if !policy.covers(space) {
        return Err(EnergyError::DimensionMismatch {
            what: "policy.decisions",
            expected: space.len(),
            got: policy.decisions.len(),
        });
    }
    let mut total = 0.0;
    for (state, decision) in space.states.iter().zip(&policy.decisions) {
        total += state.prob * total_energy(state, &policy.cache, decision, cfg, form)?.total_j;
    }
    Ok(total)
}

/// Expectation of the full breakdown, for reporting.
pub fn average_breakdown(
    policy: &Policy,
    space: &StateSpace,
    cfg: &SystemConfig,
    form: EnergyForm,
) -> Result<EnergyBreakdown, EnergyError> {
    let mut out = EnergyBreakdown::default();
    for (state, decision) in space.states.iter().zip(&policy.decisions) {
        let one = total_energy(state, &policy.cache, decision, cfg, form)?;
        out.accumulate(&one, state.prob);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Pmf;

    fn cfg1() -> SystemConfig {
        SystemConfig::defaults(1, 4)
    }

    #[test]
    fn rate_power_reference_points() {
        let cfg = cfg1();
        assert_eq!(rate_power(0.0, &cfg).unwrap(), 0.0);
        // rate = B: 2^1 - 1 = 1.
        assert!((rate_power(2e7, &cfg).unwrap() - 1e-9).abs() < 1e-24);
        // rate = 2B: 2^2 - 1 = 3.
        assert!((rate_power(4e7, &cfg).unwrap() - 3e-9).abs() < 1e-24);
        assert!(rate_power(-1.0, &cfg).is_err());
    }

    #[test]
    fn link_energy_reference_points() {
        let cfg = cfg1();
        assert_eq!(link_energy(0.01, 0.0, 1e-7, &cfg).unwrap(), 0.0);
        // (0.01/1e-7) * 1e-9 * (2^{4.5} - 1), 2^4.5 = 22.62741699796952.
        let e = link_energy(0.01, 9e5, 1e-7, &cfg).unwrap();
        let expected = 1e5 * 1e-9 * (exp2(4.5) - 1.0);
        assert!((e - expected).abs() <= 1e-18);
        assert!((e - 2.1627e-3).abs() < 1e-7);
        assert_eq!(link_energy(0.0, 5.0, 1e-7, &cfg).unwrap(), f64::INFINITY);
        assert_eq!(link_energy(0.02, 9e5, f64::INFINITY, &cfg).unwrap(), 0.0);
        assert!(link_energy(0.01, 1.0, 0.0, &cfg).is_err());
    }

    #[test]
    fn perspective_energy_reference_points() {
        let cfg = cfg1();
        assert_eq!(perspective_energy(0.0, 0.02, 9e5, 1e-7, &cfg).unwrap(), 0.0);
        // gate = 1 reproduces link_energy exactly.
        let a = perspective_energy(1.0, 0.01, 9e5, 1e-7, &cfg).unwrap();
        let b = link_energy(0.01, 9e5, 1e-7, &cfg).unwrap();
        assert_eq!(a, b);
        // gate = 0.5: rate 4.5e7, 2^2.25 = 4.7568284600108845.
        let e = perspective_energy(0.5, 0.01, 9e5, 1e-7, &cfg).unwrap();
        let expected = 1e5 * 1e-9 * (exp2(2.25) - 1.0);
        assert!((e - expected).abs() <= 1e-18);
        assert!((e - 3.7568e-4).abs() < 1e-7);
        assert!(perspective_energy(1.5, 0.01, 1.0, 1e-7, &cfg).is_err());
        assert_eq!(perspective_energy(0.5, 0.0, 9e5, 1e-7, &cfg).unwrap(), f64::INFINITY);
    }

    #[test]
    fn exec_cost_reference_points() {
        let cfg = cfg1();
        let (t, e) = exec_cost(Executor::ServingNode, 1e6, &cfg);
        assert!((t - 1.6667e-4).abs() < 1e-8);
        assert!((e - 3.6e-4).abs() < 1e-12);
        let (t, e) = exec_cost(Executor::User(0), 1e6, &cfg);
        assert!((t - 1.4286e-3).abs() < 1e-7);
        assert!((e - 2.45e-3).abs() < 1e-12);
        assert_eq!(exec_cost(Executor::ServingNode, 0.0, &cfg), (0.0, 0.0));
    }

    #[test]
    fn gates_follow_the_max_rule() {
        let state = SystemState {
            services: alloc::vec![1, 1],
            input_bits: alloc::vec![1e5; 2],
            load_cycles: alloc::vec![1e6; 2],
            result_bits: alloc::vec![1e4; 2],
            gains: alloc::vec![1e-7; 2],
            prob: 1.0,
        };
        assert_eq!(multicast_gate_from_offload(&state, &[1.0, 1.0], 4), alloc::vec![0.0; 4]);
        let y = multicast_gate_from_offload(&state, &[1.0, 0.0], 4);
        assert_eq!(y, alloc::vec![0.0, 1.0, 0.0, 0.0]);
        // Unrequested services stay gated off regardless of offloads.
        assert_eq!(y[0], 0.0);
        // Relaxed offloads: max over 1 - o_k.
        let y = multicast_gate_from_offload(&state, &[0.3, 0.8], 4);
        assert!((y[1] - 0.7).abs() < 1e-15);
    }

    fn single_user_state() -> SystemState {
        SystemState {
            services: alloc::vec![0],
            input_bits: alloc::vec![9e5],
            load_cycles: alloc::vec![1e6],
            result_bits: alloc::vec![1e4],
            gains: alloc::vec![1e-7],
            prob: 1.0,
        }
    }

    #[test]
    fn all_local_zero_gate_zero_times_is_pure_local_energy() {
        // Gates forced to zero (an infeasible but evaluable point): only the
        // local-execution term survives.
        let cfg = cfg1();
        let state = single_user_state();
        let cache = CachingVector(alloc::vec![1.0, 0.0, 0.0, 0.0]);
        let dec = StateDecision::all_local(1, 4, cache.as_slice());
        let expected = 5e-27 * 1e6 * 7e8 * 7e8;
        let bp = total_energy(&state, &cache, &dec, &cfg, EnergyForm::Perspective).unwrap();
        assert!((bp.total_j - expected).abs() < 1e-15);
        assert_eq!(bp.local_exec_j, bp.total_j);
    }

    #[test]
    fn undelivered_multicast_is_the_infinity_sentinel() {
        // In the original form the gate follows from the offloads, so a
        // local task with zero multicast time cannot receive its software:
        // the total carries the sentinel.
        let cfg = cfg1();
        let state = single_user_state();
        let cache = CachingVector(alloc::vec![1.0, 0.0, 0.0, 0.0]);
        let dec = StateDecision::all_local(1, 4, cache.as_slice());
        let b = total_energy(&state, &cache, &dec, &cfg, EnergyForm::Original).unwrap();
        assert!(b.total_j.is_infinite());
        assert!(b.multicast_j.is_infinite());
        let expected = 5e-27 * 1e6 * 7e8 * 7e8;
        assert!((b.local_exec_j - expected).abs() < 1e-15);
    }

    #[test]
    fn offloaded_breakdown_matches_closed_forms() {
        let cfg = cfg1();
        let state = single_user_state();
        let cache = CachingVector(alloc::vec![1.0, 0.0, 0.0, 0.0]);
        let dec = StateDecision {
            offload: alloc::vec![1.0],
            multicast_gate: alloc::vec![0.0; 4],
            upload_time: alloc::vec![0.01],
            download_time: alloc::vec![0.01],
            multicast_time: alloc::vec![0.0; 4],
            local_cache: cache.0.clone(),
            local_slack: None,
        };
        let b = total_energy(&state, &cache, &dec, &cfg, EnergyForm::Original).unwrap();
        let upload = 1e5 * 1e-9 * (exp2(4.5) - 1.0);
        let download = 1e5 * 1e-9 * (exp2(0.05) - 1.0);
        assert!((b.upload_j - upload).abs() < 1e-18);
        assert!((b.server_exec_j - 3.6e-4).abs() < 1e-18);
        assert!((b.download_j - download).abs() < 1e-18);
        assert_eq!(b.local_exec_j, 0.0);
        assert!((b.total_j - 2.5262e-3).abs() < 1e-6);
        let sum = b.multicast_j + b.upload_j + b.server_exec_j + b.download_j + b.local_exec_j;
        assert!((b.total_j - sum).abs() <= 1e-12 * b.total_j.max(1.0));
    }

    #[test]
    fn average_energy_is_the_probability_mean() {
        let mut cfg = SystemConfig::defaults(1, 1);
        cfg.service_probs = alloc::vec![1.0];
        cfg.input_bits = Pmf::singleton(1e5);
        cfg.load_cycles = Pmf::new(alloc::vec![1e6, 2e6], alloc::vec![0.5, 0.5]);
        cfg.result_bits = Pmf::singleton(1e4);
        cfg.gain = Pmf::singleton(1e-7);
        let space = crate::state::enumerate_states(&cfg, 16).unwrap();
        assert_eq!(space.len(), 2);
        let cache = CachingVector(alloc::vec![1.0]);
        let policy = Policy {
            cache: cache.clone(),
            decisions: space
                .states
                .iter()
                .map(|_| StateDecision::all_local(1, 1, cache.as_slice()))
                .collect(),
            objective: 0.0,
            feasible: true,
            infeasible_states: alloc::vec![],
        };
        let avg = average_energy(&policy, &space, &cfg, EnergyForm::Perspective).unwrap();
        let e1 = 5e-27 * 1e6 * 7e8 * 7e8;
        let e2 = 5e-27 * 2e6 * 7e8 * 7e8;
        assert!((avg - 0.5 * (e1 + e2)).abs() < 1e-12);
    }
}
