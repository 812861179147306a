//! File formats, rendering and command implementations for the
//! `floorplan` tool. The numeric work lives in `floorplan-core` and
//! `floorplan-nn`.

pub mod annotation;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod density;
pub mod error;
pub mod render;
pub mod report;

pub use error::{Error, Result};
