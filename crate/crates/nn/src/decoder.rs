//! Polygon decoder with iterative coordinate refinement.
//!
//! Two-level mode keeps one query per (polygon, vertex) slot; single-level
//! mode keeps one query per polygon that regresses all of its vertices.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::layers::{block_diagonal_mask, inverse_sigmoid, sigmoid, LayerNorm, Linear, Mlp, MultiHeadAttention};
use crate::msda::{LevelShapes, MsDeformAttn};
use crate::params::{Init, Scope};
use crate::pe::positional_encoding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    TwoLevel,
    SingleLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// Every vertex query attends to every other one.
    InterPolygon,
    /// Vertex queries only attend within their own polygon.
    IntraPolygon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub polygons: usize,
    pub vertices: usize,
    pub hidden: usize,
    pub heads: usize,
    pub levels: usize,
    pub points: usize,
    pub layers: usize,
    pub ffn: usize,
    pub mode: QueryMode,
    pub attention: AttentionMode,
    /// Semantic classes including the empty class; 0 disables the head.
    pub classes: usize,
}

/// Outputs of one decoder layer.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    /// `[B, M, N, 2]` in `[0, 1]`.
    pub coords: Tensor,
    /// `[B, M, N]` validity logits.
    pub logits: Tensor,
    /// `[B, M, K]` semantic logits.
    pub types: Option<Tensor>,
}

#[derive(Debug, Clone)]
struct Layer {
    self_attn: MultiHeadAttention,
    norm1: LayerNorm,
    cross_attn: MsDeformAttn,
    norm2: LayerNorm,
    ffn1: Linear,
    ffn2: Linear,
    norm3: LayerNorm,
    coord_head: Mlp,
}

#[derive(Debug, Clone)]
pub struct PolygonDecoder {
    cfg: DecoderConfig,
    content: Tensor,
    init_coords: Tensor,
    pos_mlp: Mlp,
    layers: Vec<Layer>,
    class_head: Linear,
    type_head: Option<Linear>,
}

impl PolygonDecoder {
    pub fn new(scope: &mut Scope, name: &str, cfg: DecoderConfig) -> Result<Self> {
        let mut s = scope.sub(name);
        let (m, n, c) = (cfg.polygons, cfg.vertices, cfg.hidden);
        let slots = match cfg.mode {
            QueryMode::TwoLevel => m * n,
            QueryMode::SingleLevel => m,
        };
        let content = s.get("content", &[slots, c], Init::Normal(1.0))?;
        let init_coords = s.get("init_coords", &[m * n, 2], Init::Normal(1.0))?;
        let pos_mlp = Mlp::new(&mut s, "pos_mlp", c, c, c)?;
        let per_query_coords = match cfg.mode {
            QueryMode::TwoLevel => 2,
            QueryMode::SingleLevel => 2 * n,
        };
        let mut layers = Vec::with_capacity(cfg.layers);
        for i in 0..cfg.layers {
            let mut ls = s.sub(&format!("layers.{i}"));
            layers.push(Layer {
                self_attn: MultiHeadAttention::new(&mut ls, "self_attn", c, cfg.heads)?,
                norm1: LayerNorm::new(&mut ls, "norm1", c)?,
                cross_attn: MsDeformAttn::new(&mut ls, "cross_attn", c, cfg.heads, cfg.levels, cfg.points)?,
                norm2: LayerNorm::new(&mut ls, "norm2", c)?,
                ffn1: Linear::new(&mut ls, "ffn1", c, cfg.ffn)?,
                ffn2: Linear::new(&mut ls, "ffn2", cfg.ffn, c)?,
                norm3: LayerNorm::new(&mut ls, "norm3", c)?,
                coord_head: Mlp::zero_output(&mut ls, "coord_head", c, c, per_query_coords)?,
            });
        }
        let class_out = match cfg.mode {
            QueryMode::TwoLevel => 1,
            QueryMode::SingleLevel => n,
        };
        let class_head = Linear::new(&mut s, "class_head", c, class_out)?;
        let type_head = if cfg.classes > 0 {
            Some(Linear::new(&mut s, "type_head", c, cfg.classes)?)
        } else {
            None
        };
        Ok(Self {
            cfg,
            content,
            init_coords,
            pos_mlp,
            layers,
            class_head,
            type_head,
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    /// Runs all layers over `memory` (`[B, S, C]`) and returns one output per
    /// layer.
    pub fn forward(&self, memory: &Tensor, shapes: &LevelShapes) -> Result<Vec<LayerOutput>> {
        let b = memory.dim(0)?;
        let (m, n, c) = (self.cfg.polygons, self.cfg.vertices, self.cfg.hidden);
        let dtype = memory.dtype();
        let device = memory.device().clone();
        let slots = self.content.dim(0)?;
        let mut tgt = self.content.unsqueeze(0)?.broadcast_as((b, slots, c))?.contiguous()?;
        // vertex coordinates [B, M*N, 2]; reference points derive from them.
        // Only the learned initial coordinates stay attached to the graph.
        let mut coords = sigmoid(&self.init_coords)?
            .unsqueeze(0)?
            .broadcast_as((b, m * n, 2))?
            .contiguous()?;
        let mask = match (self.cfg.mode, self.cfg.attention) {
            (QueryMode::TwoLevel, AttentionMode::IntraPolygon) => Some(block_diagonal_mask(m, n, dtype, &device)?),
            _ => None,
        };
        let mut outputs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let reference = match self.cfg.mode {
                QueryMode::TwoLevel => coords.clone(),
                QueryMode::SingleLevel => coords.reshape((b, m, n, 2))?.mean(2)?,
            };
            let pos = self.pos_mlp.forward(&positional_encoding(&reference, c)?)?;
            let q = (&tgt + &pos)?;
            let sa = layer.self_attn.forward(&q, &q, &tgt, mask.as_ref())?;
            tgt = layer.norm1.forward(&(&tgt + sa)?)?;
            let ca = layer.cross_attn.forward(&(&tgt + &pos)?, &reference, memory, shapes)?;
            tgt = layer.norm2.forward(&(&tgt + ca)?)?;
            let ff = layer.ffn2.forward(&layer.ffn1.forward(&tgt)?.relu()?)?;
            tgt = layer.norm3.forward(&(&tgt + ff)?)?;

            let delta = layer.coord_head.forward(&tgt)?.reshape((b, m * n, 2))?;
            let refined = sigmoid(&(inverse_sigmoid(&coords)? + delta)?)?;
            let (logits, pooled) = match self.cfg.mode {
                QueryMode::TwoLevel => {
                    let logits = self.class_head.forward(&tgt)?.reshape((b, m, n))?;
                    (logits, tgt.reshape((b, m, n, c))?.mean(2)?)
                }
                QueryMode::SingleLevel => (self.class_head.forward(&tgt)?.reshape((b, m, n))?, tgt.clone()),
            };
            let types = match &self.type_head {
                Some(h) => Some(h.forward(&pooled)?),
                None => None,
            };
            outputs.push(LayerOutput {
                coords: refined.reshape((b, m, n, 2))?,
                logits,
                types,
            });
            coords = refined.detach();
        }
        Ok(outputs)
    }
}

/// Room-type probabilities from semantic logits.
pub fn type_probabilities(types: &Tensor) -> Result<Tensor> {
    crate::layers::softmax_last(types)
}
