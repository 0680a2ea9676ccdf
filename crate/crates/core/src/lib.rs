//! Differential testing of quantum circuit toolchains.
//!
//! Random programs are generated with regions of code that provably never
//! run. Deleting those regions yields a variant that must behave the same on
//! every input. Both programs go through the same pass pipeline and are run on
//! the built-in simulator (or an external adapter); crashes that differ and
//! output distributions that drift apart are reported as bugs.

pub mod bridge;
pub mod checker;
pub mod deadcode;
pub mod emi;
pub mod generator;
pub mod harness;
pub mod ir;
pub mod par;
pub mod passes;
pub mod rng;
pub mod simulator;
