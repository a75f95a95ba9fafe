//! Scenario harness around the core library: configuration files, the
//! builtin scenario catalog, initial conditions, CSV output, and the
//! command-line driver.

pub mod catalog;
pub mod cli;
pub mod config;
pub mod io;
pub mod perturb;
