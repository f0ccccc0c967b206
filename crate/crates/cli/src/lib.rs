//! Command-line interface and HTTP solve service for `tensiform`.

pub mod commands;
pub mod server;
