//! Configuration, scenario runs and the acceptance suite behind the
//! `muskat-lab` binary.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod scenario;
