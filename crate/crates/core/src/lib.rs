//! Core of the tippy laboratory automation platform.

pub mod agent;
pub mod config;
pub mod job_engine;
pub mod lab_model;
pub mod mcp;
pub mod model;
pub mod molecule;
pub mod observability;
pub mod platform;
pub mod tools;
pub mod util;
