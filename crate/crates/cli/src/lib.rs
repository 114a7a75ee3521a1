//! Pipeline orchestration behind the `taskgrasp` binary.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod demo;
pub mod eval;
pub mod plan;
