//! Command-line driver and read-only HTTP API for bitext archives.

pub mod api;
pub mod commands;
pub mod server;
