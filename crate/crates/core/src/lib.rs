//! Finite-horizon risk-sensitive constrained MDPs with exponential utility.
//!
//! Policies are evaluated through forward and backward multiplicative
//! factors, improved by solving one small linear program per decision epoch,
//! and searched globally with random restarts.

pub mod config;
pub mod evaluate;
pub mod fixtures;
pub mod grc;
pub mod inventory;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod raster;
pub mod sweep;

pub use evaluate::{evaluate_risk, f_linear, FactorSet};
pub use grc::{run_grc, run_grc_seeded, GrcConfig, GrcResult};
pub use model::{CostKind, CostSpec, InstanceParts, Policy, RestartMode, RiskCmdpInstance, Sense};
