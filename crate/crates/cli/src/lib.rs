//! Operator tooling: network bring-up, scripted scenarios, chain inspection
//! and fault injection.

pub mod config;
pub mod faults;
pub mod inspect;
pub mod scenario;
