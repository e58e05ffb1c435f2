//! HTTP service and operator CLI for the mentorloop engine.

pub mod app;
pub mod auth;
pub mod backend;
pub mod cli;
pub mod config;
pub mod http;

pub use app::{build_engine, build_state};
pub use http::{router, AppState, ErrorEnvelope};
