//! HTTP service and command line around the recourse engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod store;
