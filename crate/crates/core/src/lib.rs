//! Auditable read/write registers: registers whose audit operation reports
//! which process read which value.
//!
//! The crate provides:
//!
//! - simulated shared-memory cells with the usual atomic primitives and full
//!   trace capture ([`sim`]);
//! - step-machine implementations of five auditable-register constructions
//!   plus seeded fault variants ([`registers`]);
//! - a deterministic executor with exhaustive, random and crash-injecting
//!   schedule exploration ([`scheduler`]);
//! - checkers deciding whether a recorded history is atomic with atomic
//!   audit or atomic with regular audit, together with a brute-force
//!   enumeration oracle ([`checker`]);
//! - wait-free consensus built on top of the auditable registers
//!   ([`consensus`]).

pub mod checker;
pub mod consensus;
pub mod gen;
pub mod history;
pub mod registers;
pub mod scheduler;
pub mod sim;

pub use history::{
    AuditSet, Event, History, OpId, OpKind, OpResult, Phase, ProcessId, RegisterId, Value,
};
