//! Adversarial construction, exact simulation and bound evaluation for fully
//! online fractional matching.

pub mod adversary;
pub mod bound;
pub mod check;
pub mod construction;
pub mod engine;
pub mod optimizer;
pub mod rational;
pub mod simulator;
