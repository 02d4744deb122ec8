//! Offline ground truth: exhaustive optima for small instances and dual
//! certificates that lower-bound the optimum.

mod brute;
mod certificate;

pub use brute::{brute_force_opt_load, brute_force_opt_maxflow, edf_feasible, opt_assignment_load, OracleConfig};
pub use certificate::{
    build_unit_certificate, build_unit_certificate_at, pending_profile, unit_interval_families, verify_certificate, DualCertificate, MachineInterval,
};
