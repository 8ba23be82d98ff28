//! Realizations of the random system state and exhaustive enumeration of the
//! product state space.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;

/// One realization `q = (x, l_u, l_e, l_d, h)` of the random system state,
/// together with its probability mass. Service indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Requested service per user.
    pub services: Vec<usize>,
    /// Task input size per user, bits.
    pub input_bits: Vec<f64>,
    /// Task computation load per user, cycles.
    pub load_cycles: Vec<f64>,
    /// Computation result size per user, bits.
    pub result_bits: Vec<f64>,
    /// Channel power gain per user.
    pub gains: Vec<f64>,
    /// Probability mass of this realization.
    pub prob: f64,
}

impl SystemState {
    pub fn num_users(&self) -> usize {
        self.services.len()
    }

    /// Users requesting service `n`.
    pub fn requesters(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.services.iter().enumerate().filter(move |(_, &s)| s == n).map(|(k, _)| k)
    }

    /// `K_n`, the number of users requesting service `n`.
    pub fn requester_count(&self, n: usize) -> usize {
        self.requesters(n).count()
    }

    /// Whether service `n` is demanded by at least one user.
    pub fn demanded(&self, n: usize) -> bool {
        self.services.contains(&n)
    }

    /// The demanded services, ascending.
    pub fn demanded_services(&self, num_services: usize) -> Vec<usize> {
        (0..num_services).filter(|&n| self.demanded(n)).collect()
    }

    /// Multicast channel gain of service `n`: the smallest gain among its
    /// requesters, `+inf` when nobody requests it (the multicast term then
    /// vanishes).
    pub fn multicast_gain(&self, n: usize) -> f64 {
        self.requesters(n).map(|k| self.gains[k]).fold(f64::INFINITY, f64::min)
    }
}

/// The full product state space in canonical order, lexicographic by user and
/// then by (service, input, load, result, gain) support index. The ordering
/// is part of the contract so traces and result files reproduce exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub states: Vec<SystemState>,
}

/// Errors from state-space construction.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpaceError {
    /// The product space would exceed the configured cap.
    TooLarge { size: u128, cap: usize },
}

impl core::fmt::Display for StateSpaceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StateSpaceError::TooLarge { size, cap } => {
                write!(f, "state space has {size} states, above the cap of {cap}")
            }
        }
    }
}

impl core::error::Error for StateSpaceError {}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn total_prob(&self) -> f64 {
        self.states.iter().map(|s| s.prob).sum()
    }

    /// `Pr[K_n >= 1]` computed exactly from the enumerated measure.
    pub fn demand_prob(&self, n: usize) -> f64 {
        self.states.iter().filter(|s| s.demanded(n)).map(|s| s.prob).sum()
    }
}

/// Number of per-user combinations, then states, without building anything.
pub fn state_space_size(cfg: &SystemConfig) -> u128 {
    let per_user = cfg.num_services as u128
        * cfg.input_bits.len() as u128
        * cfg.load_cycles.len() as u128
        * cfg.result_bits.len() as u128
        * cfg.gain.len() as u128;
    per_user.pow(cfg.num_users as u32)
}

/// Enumerate the full Cartesian product over users and variables. All random
/// variables are independent, so each state's mass is the product of the
/// marginals. Refuses (with the would-be size) above `cap`.
pub fn enumerate_states(cfg: &SystemConfig, cap: usize) -> Result<StateSpace, StateSpaceError> {
    let size = state_space_size(cfg);
    if size > cap as u128 {
        return Err(StateSpaceError::TooLarge { size, cap });
    }
    let size = size as usize;
    let k = cfg.num_users;

    // Per-user combinations in lexicographic order of
    // (service, input, load, result, gain) support indices.
    struct UserCombo {
        service: usize,
        input: f64,
        load: f64,
        result: f64,
        gain: f64,
        prob: f64,
    }
    let mut combos = Vec::new();
    for n in 0..cfg.num_services {
        for (iu, &lu) in cfg.input_bits.values.iter().enumerate() {
            for (ie, &le) in cfg.load_cycles.values.iter().enumerate() {
                for (id, &ld) in cfg.result_bits.values.iter().enumerate() {
                    for (ih, &h) in cfg.gain.values.iter().enumerate() {
                        combos.push(UserCombo {
                            service: n,
                            input: lu,
                            load: le,
                            result: ld,
                            gain: h,
                            prob: cfg.service_probs[n]
                                * cfg.input_bits.probs[iu]
                                * cfg.load_cycles.probs[ie]
                                * cfg.result_bits.probs[id]
                                * cfg.gain.probs[ih],
                        });
                    }
                }
            }
        }
    }

    let m = combos.len();
    let mut states = Vec::with_capacity(size);
    let mut index = alloc::vec![0usize; k];
    loop {
        let mut state = SystemState {
            services: Vec::with_capacity(k),
            input_bits: Vec::with_capacity(k),
            load_cycles: Vec::with_capacity(k),
            result_bits: Vec::with_capacity(k),
            gains: Vec::with_capacity(k),
            prob: 1.0,
        };
        for &i in index.iter() {
            let c = &combos[i];
            state.services.push(c.service);
            state.input_bits.push(c.input);
            state.load_cycles.push(c.load);
            state.result_bits.push(c.result);
            state.gains.push(c.gain);
            state.prob *= c.prob;
        }
        states.push(state);

        // Odometer increment, last user fastest: user 1 is most significant.
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(StateSpace { states });
            }
            pos -= 1;
            index[pos] += 1;
            if index[pos] < m {
                break;
            }
            index[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Pmf;

    #[test]
    fn table_instance_has_4096_states() {
        let cfg = SystemConfig::defaults(2, 4);
        assert_eq!(state_space_size(&cfg), 4096);
        let space = enumerate_states(&cfg, 10_000).unwrap();
        assert_eq!(space.len(), 4096);
        assert!((space.total_prob() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn singleton_supports_single_state() {
        let mut cfg = SystemConfig::defaults(1, 1);
        cfg.input_bits = Pmf::singleton(9e5);
        cfg.load_cycles = Pmf::singleton(1e6);
        cfg.result_bits = Pmf::singleton(1e4);
        cfg.gain = Pmf::singleton(1e-7);
        let space = enumerate_states(&cfg, 10).unwrap();
        assert_eq!(space.len(), 1);
        assert!((space.states[0].prob - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cap_is_enforced_with_size_report() {
        let cfg = SystemConfig::defaults(2, 4);
        match enumerate_states(&cfg, 100) {
            Err(StateSpaceError::TooLarge { size, cap }) => {
                assert_eq!(size, 4096);
                assert_eq!(cap, 100);
            }
            other => panic!("expected cap refusal, got {other:?}"),
        }
    }

    #[test]
    fn marginals_recover_configured_pmfs() {
        let cfg = SystemConfig::defaults(2, 3);
        let space = enumerate_states(&cfg, 10_000).unwrap();
        // Marginal of user 1's service.
        for n in 0..3 {
            let p: f64 = space.states.iter().filter(|s| s.services[1] == n).map(|s| s.prob).sum();
            assert!((p - cfg.service_probs[n]).abs() < 1e-9);
        }
        // Marginal of user 0's input size.
        for (i, &v) in cfg.input_bits.values.iter().enumerate() {
            let p: f64 =
                space.states.iter().filter(|s| s.input_bits[0] == v).map(|s| s.prob).sum();
            assert!((p - cfg.input_bits.probs[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn multicast_gain_is_min_over_requesters() {
        let state = SystemState {
            services: alloc::vec![1, 0, 1],
            input_bits: alloc::vec![1e5; 3],
            load_cycles: alloc::vec![1e6; 3],
            result_bits: alloc::vec![1e4; 3],
            gains: alloc::vec![1e-7, 1e-8, 5e-8],
            prob: 1.0,
        };
        assert_eq!(state.multicast_gain(1), 5e-8);
        assert_eq!(state.multicast_gain(0), 1e-8);
        assert_eq!(state.multicast_gain(2), f64::INFINITY);
        assert_eq!(state.requester_count(1), 2);
    }

    #[test]
    fn canonical_order_is_deterministic() {
        let cfg = SystemConfig::defaults(2, 2);
        let a = enumerate_states(&cfg, 10_000).unwrap();
        let b = enumerate_states(&cfg, 10_000).unwrap();
        assert_eq!(a, b);
        // First state: both users on the first per-user combination.
        assert_eq!(a.states[0].services, alloc::vec![0, 0]);
        assert_eq!(a.states[0].input_bits[0], cfg.input_bits.values[0]);
        // Second state differs in the last-varying coordinate of user 2.
        assert_eq!(a.states[1].services, alloc::vec![0, 0]);
        assert_eq!(a.states[1].gains[1], cfg.gain.values[1]);
    }
}
