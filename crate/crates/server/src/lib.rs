//! Operator surface for seismoflow: flow store, HTTP API and CLI commands.

pub mod api;
pub mod cli;
pub mod setup;
pub mod store;
