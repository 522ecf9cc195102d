//! Command-line front end and HTTP service for `semilabel-core`.

pub mod api;
pub mod commands;
pub mod error;
