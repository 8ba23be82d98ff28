//! Energy-minimal joint software caching, computation offloading and TDMA
//! time allocation for a cache-assisted mobile-edge-computing system.
//!
//! The crate models a serving node with a software cache and an MEC server
//! shared by `K` users over a TDMA frame of length `D`. A random system state
//! fixes, per user, the requested service, the task parameters and the
//! channel gain. The slow-timescale decision is which software to cache; the
//! fast-timescale decision, per state, is who offloads and how the frame time
//! is split among software multicast, input upload and result download.
//!
//! Solver layers, bottom up:
//!
//! * [`solver`] — a log-barrier damped-Newton kernel for the smooth convex
//!   per-state subproblems and a structure-exploiting joint solve of the full
//!   relaxed problem (the reference objective).
//! * [`admm`] — consensus ADMM over per-state copies of the caching vector.
//! * [`rounding`] — binary recovery from the relaxed solution plus the
//!   sufficient feasibility certificate.
//! * [`ccp`] — penalty convex-concave procedure driving the binary-gap
//!   penalty to zero, with an inner consensus ADMM and multi-start.
//! * [`oracle`] — exhaustive search over binary caches and offloads for tiny
//!   instances, the ground truth the heuristics are tested against.
//! * [`baselines`] — the two fixed-strategy comparison schemes.
//!
//! The crate is `no_std` (with `alloc`); all file formats and the CLI live in
//! the companion `cachemec-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod admm;
pub mod baselines;
pub mod ccp;
pub mod config;
pub mod energy;
pub mod feasibility;
pub mod math;
pub mod oracle;
pub mod policy;
pub mod rounding;
pub mod solver;
pub mod state;

pub use config::{ConfigError, Pmf, SystemConfig};
pub use energy::{EnergyBreakdown, EnergyForm};
pub use policy::{CachingVector, Policy, StateDecision};
pub use state::{StateSpace, SystemState};
