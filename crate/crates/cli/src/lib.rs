//! Command line front end and HTTP job service for `painter-core`.

pub mod commands;
pub mod pipeline;
pub mod service;
