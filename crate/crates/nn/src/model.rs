//! The full network: CNN backbone, deformable encoder, polygon decoder and
//! optional line decoder.

use candle_core::{DType, Device, Tensor};
use floorplan_core::data::{DensityMap, Floorplan};
use floorplan_core::decode::{decode_lines, decode_to_floorplan, ClassLayout};
use floorplan_core::geometry::Point2;
use floorplan_core::matching::Prediction;
use serde::{Deserialize, Serialize};

use crate::decoder::{AttentionMode, DecoderConfig, LayerOutput, PolygonDecoder, QueryMode};
use crate::error::{ModelError, Result};
use crate::layers::{Conv2d, GroupNorm, LayerNorm, Linear};
use crate::msda::{LevelShapes, MsDeformAttn};
use crate::params::{Init, ParamStore, Scope};
use crate::pe::{grid_encoding, grid_points};

/// Feature levels fed to the transformer (strides 8, 16, 32, 64).
pub const LEVELS: usize = 4;
/// Largest feature stride; input sizes must be multiples of it.
pub const MAX_STRIDE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Rooms only.
    Plain,
    /// One decoder; doors and windows are 2-vertex polygons among the rooms.
    SdTq,
    /// Separate line decoder with two-level queries (2 corners per line).
    TdTq,
    /// Separate line decoder with one query per line.
    TdSq,
}

impl Variant {
    pub fn has_line_decoder(self) -> bool {
        matches!(self, Variant::TdTq | Variant::TdSq)
    }

    pub fn predicts_lines(self) -> bool {
        self != Variant::Plain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub query_mode: QueryMode,
    pub attention: AttentionMode,
    pub input_size: usize,
    /// Room-level queries `M`.
    pub num_polygons: usize,
    /// Corner-level queries `N`.
    pub num_corners: usize,
    /// Line queries of the line decoder.
    pub num_lines: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub sampling_points: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ffn_dim: usize,
    pub backbone_channels: [usize; 4],
    /// Predict room types for the polygon decoder.
    pub room_types: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small configuration that trains on a single CPU core.
    pub fn desk() -> Self {
        Self {
            variant: Variant::Plain,
            query_mode: QueryMode::TwoLevel,
            attention: AttentionMode::InterPolygon,
            input_size: 256,
            num_polygons: 8,
            num_corners: 12,
            num_lines: 50,
            hidden_dim: 64,
            heads: 4,
            sampling_points: 4,
            encoder_layers: 2,
            decoder_layers: 3,
            ffn_dim: 128,
            backbone_channels: [32, 64, 128, 256],
            room_types: false,
        }
    }

    /// Transformer sizes of the original model (with the small backbone).
    pub fn full() -> Self {
        Self {
            hidden_dim: 256,
            heads: 8,
            encoder_layers: 6,
            decoder_layers: 6,
            ffn_dim: 1024,
            ..Self::desk()
        }
    }

    /// Defaults for a variant: 70 room-level queries for the single-decoder
    /// semantic model, semantic heads for every line-aware variant.
    pub fn for_variant(variant: Variant) -> Self {
        let mut c = Self::desk();
        c.variant = variant;
        if variant == Variant::SdTq {
            c.num_polygons = 70;
        }
        c.room_types = variant != Variant::Plain;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.input_size == 0 || self.input_size % MAX_STRIDE != 0 {
            return bad(format!("input size {} must be a positive multiple of {MAX_STRIDE}", self.input_size));
        }
        if self.hidden_dim % 4 != 0 || self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return bad(format!("hidden_dim {} must be divisible by 4 and by heads {}", self.hidden_dim, self.heads));
        }
        if self.num_polygons == 0 || self.num_corners == 0 || self.sampling_points == 0 {
            return bad("query counts and sampling points must be positive".into());
        }
        if self.decoder_layers == 0 {
            return bad("at least one decoder layer is required".into());
        }
        if self.variant.has_line_decoder() && self.num_lines == 0 {
            return bad("line decoder needs line queries".into());
        }
        if self.variant == Variant::SdTq && self.num_corners < 2 {
            return bad("lines need two corner slots".into());
        }
        if self.backbone_channels.iter().any(|&c| c < 2) {
            return bad("backbone channels must be at least 2".into());
        }
        Ok(())
    }

    /// Semantic class layout of the polygon decoder, if it has a type head.
    pub fn polygon_layout(&self) -> Option<ClassLayout> {
        match self.variant {
            Variant::SdTq => Some(ClassLayout::ROOMS_AND_LINES),
            _ if self.room_types => Some(ClassLayout::ROOMS),
            _ => None,
        }
    }

    /// Door, window, empty.
    pub fn line_layout(&self) -> ClassLayout {
        ClassLayout {
            room_types: 0,
            lines: true,
        }
    }

    fn norm_groups(&self) -> usize {
        [32, 16, 8, 4, 2, 1]
            .into_iter()
            .find(|g| self.hidden_dim % g == 0)
            .unwrap_or(1)
    }

    pub fn level_shapes(&self) -> LevelShapes {
        LevelShapes(
            (0..LEVELS)
                .map(|l| {
                    let s = self.input_size / (8 << l);
                    (s, s)
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
struct Backbone {
    stem: Conv2d,
    stages: Vec<(Conv2d, Conv2d)>,
    proj: Vec<(Conv2d, GroupNorm)>,
    extra: (Conv2d, GroupNorm),
}

impl Backbone {
    fn new(scope: &mut Scope, cfg: &ModelConfig) -> Result<Self> {
        let mut s = scope.sub("backbone");
        let ch = cfg.backbone_channels;
        let stem_ch = (ch[0] / 2).max(1);
        let stem = Conv2d::new(&mut s, "stem", 1, stem_ch, 3, 2)?;
        let mut stages = Vec::new();
        let mut prev = stem_ch;
        for (i, &c) in ch.iter().enumerate() {
            let a = Conv2d::new(&mut s, &format!("stage{i}.down"), prev, c, 3, 2)?;
            let b = Conv2d::new(&mut s, &format!("stage{i}.conv"), c, c, 3, 1)?;
            stages.push((a, b));
            prev = c;
        }
        let g = cfg.norm_groups();
        let d = cfg.hidden_dim;
        let mut proj = Vec::new();
        for (l, &c) in ch[1..].iter().enumerate() {
            proj.push((
                Conv2d::new(&mut s, &format!("proj{l}"), c, d, 1, 1)?,
                GroupNorm::new(&mut s, &format!("proj{l}.norm"), d, g)?,
            ));
        }
        let extra = (
            Conv2d::new(&mut s, "extra", ch[3], d, 3, 2)?,
            GroupNorm::new(&mut s, "extra.norm", d, g)?,
        );
        Ok(Self {
            stem,
            stages,
            proj,
            extra,
        })
    }

    /// `[B, 1, H, W]` -> four `[B, C, H_l, W_l]` maps, finest first.
    fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut h = self.stem.forward(x)?.relu()?;
        let mut feats = Vec::new();
        for (a, b) in &self.stages {
            h = a.forward(&h)?.relu()?;
            h = b.forward(&h)?.relu()?;
            feats.push(h.clone());
        }
        let mut levels = Vec::with_capacity(LEVELS);
        for (f, (conv, norm)) in feats[1..].iter().zip(&self.proj) {
            levels.push(norm.forward(&conv.forward(f)?)?);
        }
        levels.push(self.extra.1.forward(&self.extra.0.forward(&feats[3])?)?);
        Ok(levels)
    }
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    attn: MsDeformAttn,
    norm1: LayerNorm,
    ffn1: Linear,
    ffn2: Linear,
    norm2: LayerNorm,
}

#[derive(Debug, Clone)]
struct Encoder {
    layers: Vec<EncoderLayer>,
    level_embed: Tensor,
}

impl Encoder {
    fn new(scope: &mut Scope, cfg: &ModelConfig) -> Result<Self> {
        let mut s = scope.sub("encoder");
        let d = cfg.hidden_dim;
        let level_embed = s.get("level_embed", &[LEVELS, d], Init::Normal(1.0))?;
        let mut layers = Vec::new();
        for i in 0..cfg.encoder_layers {
            let mut ls = s.sub(&format!("layers.{i}"));
            layers.push(EncoderLayer {
                attn: MsDeformAttn::new(&mut ls, "self_attn", d, cfg.heads, LEVELS, cfg.sampling_points)?,
                norm1: LayerNorm::new(&mut ls, "norm1", d)?,
                ffn1: Linear::new(&mut ls, "ffn1", d, cfg.ffn_dim)?,
                ffn2: Linear::new(&mut ls, "ffn2", cfg.ffn_dim, d)?,
                norm2: LayerNorm::new(&mut ls, "norm2", d)?,
            });
        }
        Ok(Self { layers, level_embed })
    }

    /// Flattens the levels and runs the encoder; returns `[B, S, C]`.
    fn forward(&self, levels: &[Tensor], shapes: &LevelShapes) -> Result<Tensor> {
        let b = levels[0].dim(0)?;
        let d = levels[0].dim(1)?;
        let dtype = levels[0].dtype();
        let dev = levels[0].device().clone();
        let mut tokens = Vec::with_capacity(levels.len());
        let mut pos = Vec::with_capacity(levels.len());
        let mut refs = Vec::with_capacity(levels.len());
        for (l, (f, &(h, w))) in levels.iter().zip(&shapes.0).enumerate() {
            tokens.push(f.flatten_from(2)?.transpose(1, 2)?);
            let pe = grid_encoding(h, w, d, dtype, &dev)?;
            pos.push(pe.broadcast_add(&self.level_embed.get(l)?)?);
            refs.push(grid_points(h, w, dtype, &dev)?);
        }
        let mut src = Tensor::cat(&tokens, 1)?.contiguous()?;
        let pos = Tensor::cat(&pos, 0)?.unsqueeze(0)?;
        let s = src.dim(1)?;
        let reference = Tensor::cat(&refs, 0)?.unsqueeze(0)?.broadcast_as((b, s, 2))?.contiguous()?;
        for layer in &self.layers {
            let q = src.broadcast_add(&pos)?;
            let a = layer.attn.forward(&q, &reference, &src, shapes)?;
            src = layer.norm1.forward(&(&src + a)?)?;
            let ff = layer.ffn2.forward(&layer.ffn1.forward(&src)?.relu()?)?;
            src = layer.norm2.forward(&(&src + ff)?)?;
        }
        Ok(src)
    }
}

/// Per-layer outputs of the polygon decoder and, for the two-decoder
/// variants, of the line decoder.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub rooms: Vec<LayerOutput>,
    pub lines: Option<Vec<LayerOutput>>,
}

pub struct FloorplanModel {
    cfg: ModelConfig,
    store: ParamStore,
    backbone: Backbone,
    encoder: Encoder,
    decoder: PolygonDecoder,
    line_decoder: Option<PolygonDecoder>,
    shapes: LevelShapes,
}

impl FloorplanModel {
    pub fn new(cfg: ModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new(seed, dtype, device.clone());
        let mut root = Scope::new(&mut store, "");
        let backbone = Backbone::new(&mut root, &cfg)?;
        let encoder = Encoder::new(&mut root, &cfg)?;
        let base = DecoderConfig {
            polygons: cfg.num_polygons,
            vertices: cfg.num_corners,
            hidden: cfg.hidden_dim,
            heads: cfg.heads,
            levels: LEVELS,
            points: cfg.sampling_points,
            layers: cfg.decoder_layers,
            ffn: cfg.ffn_dim,
            mode: cfg.query_mode,
            attention: cfg.attention,
            classes: cfg.polygon_layout().map_or(0, |l| l.classes()),
        };
        let decoder = PolygonDecoder::new(&mut root, "decoder", base.clone())?;
        let line_decoder = if cfg.variant.has_line_decoder() {
            let mode = if cfg.variant == Variant::TdSq {
                QueryMode::SingleLevel
            } else {
                QueryMode::TwoLevel
            };
            Some(PolygonDecoder::new(
                &mut root,
                "line_decoder",
                DecoderConfig {
                    polygons: cfg.num_lines,
                    vertices: 2,
                    mode,
                    attention: AttentionMode::InterPolygon,
                    classes: cfg.line_layout().classes(),
                    ..base
                },
            )?)
        } else {
            None
        };
        let shapes = cfg.level_shapes();
        Ok(Self {
            cfg,
            store,
            backbone,
            encoder,
            decoder,
            line_decoder,
            shapes,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn device(&self) -> &Device {
        self.store.device()
    }

    /// `input`: `[B, 1, H, W]` density maps.
    pub fn forward(&self, input: &Tensor) -> Result<ModelOutput> {
        let (_, c, h, w) = input.dims4()?;
        if c != 1 || h != self.cfg.input_size || w != self.cfg.input_size {
            return Err(ModelError::Config(format!(
                "expected [B, 1, {s}, {s}] input, got {:?}",
                input.dims(),
                s = self.cfg.input_size
            )));
        }
        let levels = self.backbone.forward(input)?;
        let memory = self.encoder.forward(&levels, &self.shapes)?;
        let rooms = self.decoder.forward(&memory, &self.shapes)?;
        let lines = match &self.line_decoder {
            Some(d) => Some(d.forward(&memory, &self.shapes)?),
            None => None,
        };
        Ok(ModelOutput { rooms, lines })
    }

    /// Stacks density maps into an input batch.
    pub fn batch(&self, maps: &[&DensityMap]) -> Result<Tensor> {
        let s = self.cfg.input_size;
        let mut data = Vec::with_capacity(maps.len() * s * s);
        for m in maps {
            if m.width != s || m.height != s {
                return Err(ModelError::Config(format!(
                    "density map is {}x{}, model expects {s}x{s}",
                    m.width, m.height
                )));
            }
            data.extend_from_slice(&m.values);
        }
        Ok(Tensor::from_vec(data, (maps.len(), 1, s, s), self.device())?.to_dtype(self.dtype())?)
    }

    /// Decoded floorplans (pixel coordinates) from the last decoder layer.
    pub fn predict(&self, maps: &[&DensityMap], threshold: f64) -> Result<Vec<Floorplan>> {
        let out = self.forward(&self.batch(maps)?)?;
        self.decode(&out, threshold)
    }

    pub fn decode(&self, out: &ModelOutput, threshold: f64) -> Result<Vec<Floorplan>> {
        let s = self.cfg.input_size;
        let last = out.rooms.last().ok_or_else(|| ModelError::Config("no decoder layers".into()))?;
        let layout = self.cfg.polygon_layout().unwrap_or(ClassLayout::ROOMS);
        let mut plans: Vec<Floorplan> = last
            .to_predictions()?
            .iter()
            .map(|p| decode_to_floorplan(p, threshold, layout, s, s))
            .collect();
        if let Some(lines) = out.lines.as_ref().and_then(|l| l.last()) {
            for (plan, p) in plans.iter_mut().zip(lines.to_predictions()?) {
                let (doors, windows) = decode_lines(&p, threshold, self.cfg.line_layout(), s, s);
                plan.doors = doors;
                plan.windows = windows;
            }
        }
        Ok(plans)
    }
}

fn to_f64(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.detach().to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?)
}

impl LayerOutput {
    /// Host-side copies, one per batch element. Validity logits become
    /// probabilities.
    pub fn to_predictions(&self) -> Result<Vec<Prediction>> {
        let (b, m, n, _) = self.coords.dims4()?;
        let coords = to_f64(&self.coords)?;
        let logits = to_f64(&self.logits)?;
        let types = match &self.types {
            Some(t) => Some((to_f64(t)?, t.dim(2)?)),
            None => None,
        };
        let mut out = Vec::with_capacity(b);
        for i in 0..b {
            let pts = coords[i * m * n * 2..(i + 1) * m * n * 2]
                .chunks(2)
                .map(|c| Point2::new(c[0], c[1]))
                .collect();
            let probs = logits[i * m * n..(i + 1) * m * n]
                .iter()
                .map(|&z| 1.0 / (1.0 + (-z).exp()))
                .collect();
            let mut p = Prediction::new(m, n, pts, probs);
            if let Some((t, k)) = &types {
                p = p.with_type_logits(t[i * m * k..(i + 1) * m * k].to_vec(), *k);
            }
            out.push(p);
        }
        Ok(out)
    }
}
