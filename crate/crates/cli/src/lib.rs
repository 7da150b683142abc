//! The `mixforge` command line and the HTTP prediction service.

pub mod cli;
pub mod service;
