//! Library behind the `omega-seg` command-line tool.

pub mod commands;
pub mod config;
pub mod data;
pub mod evaluate;
pub mod report;
pub mod train;
