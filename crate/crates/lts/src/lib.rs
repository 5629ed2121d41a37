//! Scenario files, task runner and output formats for the `lts` command.

pub mod build;
pub mod output;
pub mod runner;
pub mod scenario;
pub mod tasks;
