//! Nowcasting influenza-like illness from search queries.

pub mod calendar;
pub mod casecontrol;
pub mod config;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod io;
pub mod kv;
pub mod mrp;
pub mod pipeline;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
