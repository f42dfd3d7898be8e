//! Workload driver and reference oracles used by the acceptance target.
//! The oracles only read chains; they never call into validation or
//! chaincode code.

pub mod driver;
pub mod oracle;
