//! Experiment runner for the `post-core` decay-spectrum toolkit: JSON
//! configs in, deterministic CSV / JSON tables and a pass/fail report out.

pub mod config;
pub mod error;
pub mod experiments;
pub mod runner;
pub mod table;
