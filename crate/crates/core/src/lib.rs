//! Desk-scale simulator for quantum federated learning where clients upload
//! QOTP-encrypted, ternarized gradient updates and a semi-honest server sums
//! them with a reversible adder evaluated homomorphically.

pub mod qsim;
pub mod aggadder;
pub mod che;
pub mod config;
pub mod fedsim;
pub mod qhe;
pub mod qnn;
pub mod qotp;
pub mod terngrad;
