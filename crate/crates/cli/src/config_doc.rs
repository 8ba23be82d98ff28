//! JSON configuration document: mirrors the solver's system configuration
//! field-for-field, fills documented defaults for omitted entries, and
//! validates everything with units in the messages.

use cachemec::config::{zipf_pmf, Pmf, SystemConfig};
use serde::{Deserialize, Serialize};

/// Scalar applied to every user, or one value per user.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUser {
    Uniform(f64),
    PerUser(Vec<f64>),
}

impl PerUser {
    fn expand(&self, k: usize) -> Vec<f64> {
        match self {
            PerUser::Uniform(v) => vec![*v; k],
            PerUser::PerUser(vs) => vs.clone(),
        }
    }
}

/// Service demand: a Zipf exponent or an explicit pmf over services.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demand {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zipf_gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pmf: Option<Vec<f64>>,
}

/// The JSON document. Every field is optional; omitted entries take the
/// simulation defaults listed in the README (20 MHz bandwidth, 1e-9 W noise,
/// 0.03 s deadline, 1e6 bit cache, 1e8 bit/s backhaul, 6 GHz / 1e-29 server,
/// 0.7 GHz / 5e-27 users, unit weights, software sizes 4n*1e5 bits,
/// Zipf(0.8) demand, and the two-point task/channel marginals).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub num_users: Option<usize>,
    pub num_services: Option<usize>,
    /// Hz
    pub bandwidth: Option<f64>,
    /// W
    pub noise_power: Option<f64>,
    /// s
    pub deadline: Option<f64>,
    /// bits
    pub cache_size: Option<f64>,
    /// bit/s
    pub backhaul_rate: Option<f64>,
    /// cycle/s
    pub server_freq: Option<f64>,
    /// J*s^2/cycle
    pub server_kappa: Option<f64>,
    /// cycle/s
    pub user_freq: Option<PerUser>,
    /// J*s^2/cycle
    pub user_kappa: Option<PerUser>,
    /// dimensionless
    pub weight: Option<PerUser>,
    /// bits, one entry per service
    pub software_bits: Option<Vec<f64>>,
    pub demand: Option<Demand>,
    /// (bits, probability) pairs
    pub input_bits: Option<Vec<(f64, f64)>>,
    /// (cycles, probability) pairs
    pub load_cycles: Option<Vec<(f64, f64)>>,
    /// (bits, probability) pairs
    pub result_bits: Option<Vec<(f64, f64)>>,
    /// (power gain, probability) pairs
    pub gain: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct ConfigErrors(pub String);

fn pmf_from_pairs(pairs: &[(f64, f64)]) -> Pmf {
    Pmf::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
}

impl ConfigDoc {
    pub fn from_json(text: &str) -> Result<Self, ConfigErrors> {
        serde_json::from_str(text).map_err(|e| ConfigErrors(format!("config JSON: {e}")))
    }

    /// Build the validated system configuration, collecting every violation
    /// (with its field path and expected unit) rather than the first.
    pub fn build(&self) -> Result<SystemConfig, Vec<String>> {
        let mut errors: Vec<String> = Vec::new();
        let defaults = SystemConfig::defaults(
            self.num_users.unwrap_or(2),
            self.num_services.unwrap_or(4),
        );
        let k = defaults.num_users;
        let n = defaults.num_services;

        let per_user = |field: &str, v: &Option<PerUser>, dflt: &Vec<f64>, errors: &mut Vec<String>| {
            let out = v.as_ref().map(|p| p.expand(k)).unwrap_or_else(|| dflt.clone());
            if out.len() != k {
                errors.push(format!("{field}: expected {k} per-user entries, got {}", out.len()));
            }
            out
        };

        let mut cfg = defaults.clone();
        cfg.bandwidth = self.bandwidth.unwrap_or(defaults.bandwidth);
        cfg.noise_power = self.noise_power.unwrap_or(defaults.noise_power);
        cfg.deadline = self.deadline.unwrap_or(defaults.deadline);
        cfg.cache_size = self.cache_size.unwrap_or(defaults.cache_size);
        cfg.backhaul_rate = self.backhaul_rate.unwrap_or(defaults.backhaul_rate);
        cfg.server_freq = self.server_freq.unwrap_or(defaults.server_freq);
        cfg.server_kappa = self.server_kappa.unwrap_or(defaults.server_kappa);
        cfg.user_freq = per_user("user_freq", &self.user_freq, &defaults.user_freq, &mut errors);
        cfg.user_kappa = per_user("user_kappa", &self.user_kappa, &defaults.user_kappa, &mut errors);
        cfg.weight = per_user("weight", &self.weight, &defaults.weight, &mut errors);
        if let Some(bits) = &self.software_bits {
            if bits.len() != n {
                errors.push(format!("software_bits: expected {n} entries (bits), got {}", bits.len()));
            }
            cfg.software_bits = bits.clone();
        }
        match &self.demand {
            None => {}
            Some(Demand { zipf_gamma: Some(g), pmf: None }) => {
                if *g < 0.0 {
                    errors.push("demand.zipf_gamma: must be non-negative".into());
                } else {
                    cfg.service_probs = zipf_pmf(n, *g);
                }
            }
            Some(Demand { zipf_gamma: None, pmf: Some(p) }) => {
                if p.len() != n {
                    errors.push(format!("demand.pmf: expected {n} probabilities, got {}", p.len()));
                }
                cfg.service_probs = p.clone();
            }
            Some(_) => {
                errors.push("demand: give exactly one of zipf_gamma or pmf".into());
            }
        }
        for (field, pairs, target) in [
            ("input_bits", &self.input_bits, &mut cfg.input_bits),
            ("load_cycles", &self.load_cycles, &mut cfg.load_cycles),
            ("result_bits", &self.result_bits, &mut cfg.result_bits),
            ("gain", &self.gain, &mut cfg.gain),
        ] {
            if let Some(pairs) = pairs {
                if pairs.is_empty() {
                    errors.push(format!("{field}: support must be non-empty"));
                }
                *target = pmf_from_pairs(pairs);
            }
        }

        if let Err(core_errors) = cfg.validate() {
            for e in core_errors {
                errors.push(annotate_unit(&e.field, &e.to_string()));
            }
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(errors)
        }
    }
}

fn annotate_unit(field: &str, message: &str) -> String {
    let unit = match field {
        "bandwidth" => " [Hz]",
        "noise_power" => " [W]",
        "deadline" => " [s]",
        "cache_size" => " [bits]",
        "backhaul_rate" => " [bit/s]",
        "server_freq" | "user_freq" => " [cycle/s]",
        "server_kappa" | "user_kappa" => " [J*s^2/cycle]",
        "software_bits" | "input_bits" | "result_bits" => " [bits]",
        "load_cycles" => " [cycles]",
        _ => "",
    };
    format!("{message}{unit}")
}

/// Normalized echo of a validated configuration, units included; what the
/// `validate` subcommand prints.
pub fn describe(cfg: &SystemConfig) -> String {
    let mut out = String::new();
    let pmf = |p: &Pmf| -> String {
        p.values
            .iter()
            .zip(&p.probs)
            .map(|(v, q)| format!("({v:e}, {q})"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    out.push_str(&format!("num_users: {}\n", cfg.num_users));
    out.push_str(&format!("num_services: {}\n", cfg.num_services));
    out.push_str(&format!("bandwidth: {:e} Hz\n", cfg.bandwidth));
    out.push_str(&format!("noise_power: {:e} W\n", cfg.noise_power));
    out.push_str(&format!("deadline: {} s\n", cfg.deadline));
    out.push_str(&format!("cache_size: {:e} bits\n", cfg.cache_size));
    out.push_str(&format!("backhaul_rate: {:e} bit/s\n", cfg.backhaul_rate));
    out.push_str(&format!("server_freq: {:e} cycle/s\n", cfg.server_freq));
    out.push_str(&format!("server_kappa: {:e} J*s^2/cycle\n", cfg.server_kappa));
    out.push_str(&format!("user_freq (cycle/s): {:?}\n", cfg.user_freq));
    out.push_str(&format!("user_kappa (J*s^2/cycle): {:?}\n", cfg.user_kappa));
    out.push_str(&format!("weight: {:?}\n", cfg.weight));
    out.push_str(&format!("software_bits (bits): {:?}\n", cfg.software_bits));
    out.push_str(&format!("service_probs: {:?}\n", cfg.service_probs));
    out.push_str(&format!("input_bits (bits): {}\n", pmf(&cfg.input_bits)));
    out.push_str(&format!("load_cycles (cycles): {}\n", pmf(&cfg.load_cycles)));
    out.push_str(&format!("result_bits (bits): {}\n", pmf(&cfg.result_bits)));
    out.push_str(&format!("gain: {}\n", pmf(&cfg.gain)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_yields_table_defaults() {
        let cfg = ConfigDoc::default().build().unwrap();
        assert_eq!(cfg.num_users, 2);
        assert_eq!(cfg.num_services, 4);
        assert_eq!(cfg.bandwidth, 2e7);
        assert_eq!(cfg.software_bits, vec![4e5, 8e5, 1.2e6, 1.6e6]);
    }

    #[test]
    fn negative_bandwidth_is_named() {
        let doc = ConfigDoc { bandwidth: Some(-1.0), ..ConfigDoc::default() };
        let errors = doc.build().unwrap_err();
        assert!(errors.iter().any(|e| e.contains("bandwidth") && e.contains("positive")));
    }

    #[test]
    fn short_pmf_is_named() {
        let doc = ConfigDoc {
            input_bits: Some(vec![(1e5, 0.4), (9e5, 0.5)]),
            ..ConfigDoc::default()
        };
        let errors = doc.build().unwrap_err();
        assert!(errors.iter().any(|e| e.contains("input_bits")), "{errors:?}");
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{
            "num_users": 2, "num_services": 4, "deadline": 0.05,
            "demand": {"zipf_gamma": 0.6},
            "gain": [[1e-7, 0.65], [1e-8, 0.35]]
        }"#;
        let cfg = ConfigDoc::from_json(text).unwrap().build().unwrap();
        assert_eq!(cfg.deadline, 0.05);
        assert_eq!(cfg.gain.values, vec![1e-7, 1e-8]);
        let gamma06 = zipf_pmf(4, 0.6);
        assert_eq!(cfg.service_probs, gamma06);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ConfigDoc::from_json(r#"{"bandwith": 1.0}"#).is_err());
    }
}
