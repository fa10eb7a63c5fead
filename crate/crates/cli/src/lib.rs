//! Command line driver for `conehj`: JSON experiment configs, CSV artifacts with
//! provenance sidecars, and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod output;
