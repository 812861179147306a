//! Core algorithms for reconstructing floorplans as sets of ordered vertex
//! sequences.
//!
//! Everything here is `no_std` with `alloc`: polygon primitives, density-map
//! projection and synthetic scenes, set-level polygon matching, the
//! supervised losses with hand-derived gradients, the evaluation protocol,
//! the learning-free baseline and door-arc layout. IO, the network and the
//! command line live in companion crates.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baseline;
pub mod data;
pub mod decode;
pub mod doors;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod losses;
pub mod matching;
pub mod synth;

pub use error::{DataError, GeometryError, MatchError};
pub use geometry::{Point2, RasterMask, VertexSeq};
