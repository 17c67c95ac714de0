//! Crash-bug diagnosis: case model, prompt catalog, session engine, model
//! gateway, benchmark mining and evaluation metrics.

pub mod bench;
pub mod catalog;
pub mod crash;
pub mod engine;
pub mod eval;
pub mod gateway;
