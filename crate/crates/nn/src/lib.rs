//! Polygon-set floorplan reconstruction network on candle.
//!
//! A CNN backbone turns a density map into four feature levels, a
//! deformable-attention encoder mixes them, and a decoder refines `M x N`
//! vertex queries layer by layer. Losses and matching come from
//! `floorplan-core` and are injected into the graph through their exact
//! gradients.

pub mod checkpoint;
pub mod decoder;
pub mod error;
pub mod layers;
pub mod model;
pub mod msda;
pub mod params;
pub mod pe;
pub mod train;

pub use decoder::{AttentionMode, LayerOutput, QueryMode};
pub use error::{ModelError, Result};
pub use model::{FloorplanModel, ModelConfig, ModelOutput, Variant};
