//! System parameters and the probability model of the random system state.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math::powf;

/// Probability mass function over a finite support of scalar values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Pmf {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Self {
        Pmf { values, probs }
    }

    /// Degenerate distribution concentrated on one value.
    pub fn singleton(value: f64) -> Self {
        Pmf { values: alloc::vec![value], probs: alloc::vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check(&self, name: &str, errors: &mut Vec<ConfigError>) {
        if self.values.is_empty() {
            errors.push(ConfigError::new(name, "support must be non-empty"));
            return;
        }
        if self.values.len() != self.probs.len() {
            errors.push(ConfigError::new(name, "values and probs differ in length"));
            return;
        }
        if self.probs.iter().any(|&p| !(p > 0.0) || p > 1.0) {
            errors.push(ConfigError::new(name, "every probability must lie in (0, 1]"));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            errors.push(ConfigError::new(
                name,
                format!("probabilities sum to {total:.12}, expected 1 within 1e-12"),
            ));
        }
    }
}

/// Zipf popularity: `p_n = n^-gamma / sum_i i^-gamma`, `n = 1..=len`.
pub fn zipf_pmf(len: usize, gamma: f64) -> Vec<f64> {
    assert!(len >= 1, "zipf_pmf needs at least one service");
    assert!(gamma >= 0.0, "zipf exponent must be non-negative");
    let mut weights: Vec<f64> = (1..=len).map(|n| powf(n as f64, -gamma)).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

const PMF_SUM_TOL: f64 = 1e-12;

/// One invalid field, with the offending path and what was expected there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        ConfigError { field: String::from(field), message: message.into() }
    }
}

impl core::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl core::error::Error for ConfigError {}

/// All scalars of one experiment plus the marginal distributions of the
/// random system state. SI units throughout: bits, CPU cycles, seconds,
/// Hz, Watt, Joule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of users `K`.
    pub num_users: usize,
    /// Number of services `N`.
    pub num_services: usize,
    /// System bandwidth `B` in Hz.
    pub bandwidth: f64,
    /// Noise power `n0` over the entire bandwidth, in W.
    pub noise_power: f64,
    /// Frame deadline `D` in s; every task completes within it.
    pub deadline: f64,
    /// Cache size `C` at the serving node, in bits.
    pub cache_size: f64,
    /// Backhaul rate `R` in bit/s.
    pub backhaul_rate: f64,
    /// Server CPU frequency, cycles/s.
    pub server_freq: f64,
    /// Server energy factor, J*s^2/cycle.
    pub server_kappa: f64,
    /// Per-user CPU frequency, cycles/s (length `K`).
    pub user_freq: Vec<f64>,
    /// Per-user energy factor (length `K`).
    pub user_kappa: Vec<f64>,
    /// Per-user energy weight `omega_k` (length `K`).
    pub weight: Vec<f64>,
    /// Software size per service, bits (length `N`).
    pub software_bits: Vec<f64>,
    /// Service demand pmf, one probability per service (length `N`).
    pub service_probs: Vec<f64>,
    /// Task input size `L_u` marginal, bits.
    pub input_bits: Pmf,
    /// Task computation load `L_e` marginal, cycles.
    pub load_cycles: Pmf,
    /// Computation result size `L_d` marginal, bits.
    pub result_bits: Pmf,
    /// Channel power gain `H` marginal, dimensionless.
    pub gain: Pmf,
}

impl SystemConfig {
    /// The simulation defaults the experiments are built around: 20 MHz
    /// bandwidth, 100 Mbit/s backhaul, 6 GHz server, 0.7 GHz handsets, unit
    /// weights, software sizes `4n * 1e5` bits and Zipf(0.8) demand, with
    /// two-point task and channel marginals.
    pub fn defaults(num_users: usize, num_services: usize) -> Self {
        SystemConfig {
            num_users,
            num_services,
            bandwidth: 2e7,
            noise_power: 1e-9,
            deadline: 0.03,
            cache_size: 1e6,
            backhaul_rate: 1e8,
            server_freq: 6e9,
            server_kappa: 1e-29,
            user_freq: alloc::vec![7e8; num_users],
            user_kappa: alloc::vec![5e-27; num_users],
            weight: alloc::vec![1.0; num_users],
            software_bits: (1..=num_services).map(|n| 4e5 * n as f64).collect(),
            service_probs: zipf_pmf(num_services, 0.8),
            input_bits: Pmf::new(alloc::vec![1e5, 9e5], alloc::vec![0.4, 0.6]),
            load_cycles: Pmf::new(alloc::vec![1e6, 2e6], alloc::vec![0.9, 0.1]),
            result_bits: Pmf::new(alloc::vec![1e4, 3e4], alloc::vec![0.9, 0.1]),
            gain: Pmf::new(alloc::vec![1e-7, 1e-8], alloc::vec![0.65, 0.35]),
        }
    }

    /// Replace the service demand distribution by Zipf with the given exponent.
    pub fn with_zipf(mut self, gamma: f64) -> Self {
        self.service_probs = zipf_pmf(self.num_services, gamma);
        self
    }

    /// Backhaul fetch time of software `n` (0-based): `l_sfw_n / R`.
    pub fn fetch_time(&self, n: usize) -> f64 {
        self.software_bits[n] / self.backhaul_rate
    }

    /// Total software volume, the cache size that makes everything cacheable.
    pub fn total_software_bits(&self) -> f64 {
        self.software_bits.iter().sum()
    }

    /// Validate every invariant; returns all violations, not just the first.
    pub fn validate(&self) -> Result<(), Vec<ConfigError>> {
        let mut errors = Vec::new();
        if self.num_users == 0 {
            errors.push(ConfigError::new("num_users", "must be at least 1"));
        }
        if self.num_services == 0 {
            errors.push(ConfigError::new("num_services", "must be at least 1"));
        }
        for (field, value) in [
            ("bandwidth", self.bandwidth),
            ("noise_power", self.noise_power),
            ("deadline", self.deadline),
            ("backhaul_rate", self.backhaul_rate),
            ("server_freq", self.server_freq),
            ("server_kappa", self.server_kappa),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                errors.push(ConfigError::new(field, "must be positive and finite"));
            }
        }
        if !(self.cache_size >= 0.0) || !self.cache_size.is_finite() {
            errors.push(ConfigError::new("cache_size", "must be non-negative and finite"));
        }
        for (field, xs, len) in [
            ("user_freq", &self.user_freq, self.num_users),
            ("user_kappa", &self.user_kappa, self.num_users),
            ("weight", &self.weight, self.num_users),
            ("software_bits", &self.software_bits, self.num_services),
        ] {
            if xs.len() != len {
                errors.push(ConfigError::new(field, format!("expected length {len}, got {}", xs.len())));
            }
            if xs.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                errors.push(ConfigError::new(field, "every entry must be positive and finite"));
            }
        }
        if self.service_probs.len() != self.num_services {
            errors.push(ConfigError::new(
                "service_probs",
                format!("expected length {}, got {}", self.num_services, self.service_probs.len()),
            ));
        } else {
            let svc = Pmf::new(
                (1..=self.num_services).map(|n| n as f64).collect(),
                self.service_probs.clone(),
            );
            svc.check("service_probs", &mut errors);
        }
        self.input_bits.check("input_bits", &mut errors);
        self.load_cycles.check("load_cycles", &mut errors);
        self.result_bits.check("result_bits", &mut errors);
        self.gain.check("gain", &mut errors);
        if self.gain.values.iter().any(|&h| !(h > 0.0)) {
            errors.push(ConfigError::new("gain", "channel power gains must be positive"));
        }
        for (field, pmf) in [
            ("input_bits", &self.input_bits),
            ("load_cycles", &self.load_cycles),
            ("result_bits", &self.result_bits),
        ] {
            if pmf.values.iter().any(|&v| v < 0.0) {
                errors.push(ConfigError::new(field, "support values must be non-negative"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zipf_gamma_zero_is_uniform() {
        let p = zipf_pmf(4, 0.0);
        for &x in &p {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn zipf_single_service() {
        assert_eq!(zipf_pmf(1, 0.8), alloc::vec![1.0]);
    }

    #[test]
    fn zipf_table_values() {
        // n^-0.8 for n=1..4: 1, 0.574349, 0.415244, 0.329877; total 2.319470.
        let p = zipf_pmf(4, 0.8);
        let expected = [0.431133, 0.247621, 0.179026, 0.142221];
        for (got, want) in p.iter().zip(expected) {
            assert!((got - want).abs() < 5e-6, "{got} vs {want}");
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn defaults_validate() {
        let cfg = SystemConfig::defaults(2, 4);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.software_bits, alloc::vec![4e5, 8e5, 1.2e6, 1.6e6]);
    }

    #[test]
    fn fetch_time_from_table_values() {
        let cfg = SystemConfig::defaults(1, 4);
        assert!((cfg.fetch_time(0) - 4e-3).abs() < 1e-18);
        assert!((cfg.fetch_time(2) - 1.2e-2).abs() < 1e-17);
    }

    #[test]
    fn validation_reports_all_errors() {
        let mut cfg = SystemConfig::defaults(2, 2);
        cfg.bandwidth = -1.0;
        cfg.input_bits.probs = alloc::vec![0.4, 0.5]; // sums to 0.9
        let errors = cfg.validate().unwrap_err();
        assert!(errors.iter().any(|e| e.field == "bandwidth"));
        assert!(errors.iter().any(|e| e.field == "input_bits"));
    }
}
