//! Command-line front end: model files, reports and command dispatch.

pub mod commands;
pub mod modelfile;
pub mod report;
