//! Structuring of parallel documents into aligned bitexts, statistical
//! counterword assignment, and the query engine served to translators.

pub mod align;
pub mod assign;
pub mod config;
pub mod error;
pub mod lexica;
pub mod model;
pub mod query;
pub mod segment;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
