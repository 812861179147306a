//! Supervised losses over matched polygon pairs, with exact gradients with
//! respect to the predicted coordinates, validity probabilities and
//! semantic logits.
//!
//! Every loss is summed over the `M` groundtruth slots. The validity term
//! covers all slots (padded ones push predictions toward "invalid"); the
//! coordinate and raster terms only exist for slots holding a real polygon,
//! and only see the prediction prefix of the same length.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::PaddedTargets;
use crate::error::MatchError;
use crate::geometry::{
    cyclic_coord_distance_grad, rasterize_hard, rasterize_soft, rasterize_soft_vjp, Point2,
    VertexSeq,
};
use crate::matching::{dice_distance, MatchAssignment, Prediction};

/// Probabilities are clipped to `[PROB_EPS, 1 - PROB_EPS]` inside the BCE.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LossWeights {
    pub cls: f64,
    pub coord: f64,
    pub ras: f64,
    pub room_type: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cls: 2.0,
            coord: 5.0,
            ras: 1.0,
            room_type: 1.0,
        }
    }
}

/// Soft rasterization settings for the Dice term.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RasterConfig {
    pub resolution: usize,
    /// Sigmoid temperature in normalized units.
    pub temperature: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

/// Default soft-rasterizer temperature (normalized units).
pub const DEFAULT_TEMPERATURE: f64 = 0.0025;

fn clip(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean binary cross-entropy over all `N` vertex slots.
pub fn vertex_cls_loss(labels: &[u8], probs: &[f64]) -> f64 {
    vertex_cls_loss_grad(labels, probs).0
}

/// Loss and dL/dprob. The gradient is zero where the clip is active.
pub fn vertex_cls_loss_grad(labels: &[u8], probs: &[f64]) -> (f64, Vec<f64>) {
    let n = labels.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; probs.len()];
    for (k, (&c, &raw)) in labels.iter().zip(probs).enumerate() {
        let p = clip(raw);
        let c = c as f64;
        loss -= c * libm::log(p) + (1.0 - c) * libm::log(1.0 - p);
        if raw == p {
            grad[k] = (-c / p + (1.0 - c) / (1.0 - p)) / n;
        }
    }
    (loss / n, grad)
}

/// `(1 / N_m) * cyclic L1 distance` between the groundtruth polygon and the
/// prediction prefix of the same length.
pub fn coord_loss(gt: &[Point2], pred: &[Point2]) -> Result<f64, MatchError> {
    Ok(coord_loss_grad(gt, pred)?.0)
}

pub fn coord_loss_grad(gt: &[Point2], pred: &[Point2]) -> Result<(f64, Vec<[f64; 2]>), MatchError> {
    if gt.is_empty() {
        return Ok((0.0, vec![[0.0; 2]; pred.len()]));
    }
    let prefix = pred
        .get(..gt.len())
        .ok_or_else(|| MatchError::Shape(alloc::format!("prediction shorter than {}", gt.len())))?;
    let (d, mut g) = cyclic_coord_distance_grad(gt, prefix)?;
    let inv = 1.0 / gt.len() as f64;
    for v in &mut g {
        v[0] *= inv;
        v[1] *= inv;
    }
    Ok((d * inv, g))
}

/// Dice loss between the hard groundtruth mask and the soft mask of the
/// prediction prefix of the same length.
pub fn raster_dice_loss(gt: &[Point2], pred: &[Point2], raster: &RasterConfig) -> Result<f64, MatchError> {
    Ok(raster_dice_loss_grad(gt, pred, raster, false)?.0)
}

/// Dice loss and, when `with_grad`, its gradient w.r.t. the prefix vertices.
pub fn raster_dice_loss_grad(
    gt: &[Point2],
    pred: &[Point2],
    raster: &RasterConfig,
    with_grad: bool,
) -> Result<(f64, Vec<[f64; 2]>), MatchError> {
    let len = gt.len();
    let prefix = pred
        .get(..len)
        .ok_or_else(|| MatchError::Shape(alloc::format!("prediction shorter than {len}")))?;
    let r = raster.resolution;
    let target = rasterize_hard(&VertexSeq(gt.to_vec()), r);
    let poly = VertexSeq(prefix.to_vec());
    let soft = rasterize_soft(&poly, r, raster.temperature)?;
    let loss = dice_distance(soft.cells(), target.cells());
    if !with_grad {
        return Ok((loss, Vec::new()));
    }
    let (mut inter, mut sa, mut sb) = (0.0, 0.0, 0.0);
    for (&a, &b) in soft.cells().iter().zip(target.cells()) {
        inter += a * b;
        sa += a;
        sb += b;
    }
    let denom = sa + sb;
    if denom == 0.0 {
        return Ok((loss, vec![[0.0; 2]; len]));
    }
    // d/dA_i [1 - 2I/(SA+SB)] = -2 (B_i (SA+SB) - I) / (SA+SB)^2
    let upstream: Vec<f64> = target
        .cells()
        .iter()
        .map(|&b| -2.0 * (b * denom - inter) / (denom * denom))
        .collect();
    let grad = rasterize_soft_vjp(&poly, r, raster.temperature, &upstream)?;
    Ok((loss, grad))
}

fn log_softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&l| libm::exp(l - max)).sum::<f64>());
    logits.iter().map(|&l| l - lse).collect()
}

/// Mean cross-entropy of the semantic head over all `M` predictions.
/// Predictions matched to padded slots target the empty class (last index).
pub fn room_type_loss(
    gt: &PaddedTargets,
    pred: &Prediction,
    assignment: &MatchAssignment,
) -> Result<f64, MatchError> {
    Ok(room_type_loss_grad(gt, pred, assignment)?.0)
}

pub fn room_type_loss_grad(
    gt: &PaddedTargets,
    pred: &Prediction,
    assignment: &MatchAssignment,
) -> Result<(f64, Vec<f64>), MatchError> {
    let logits = pred
        .type_logits
        .as_ref()
        .ok_or_else(|| MatchError::Shape("prediction has no type logits".into()))?;
    let classes = pred.classes;
    let empty = classes - 1;
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    let inv_m = 1.0 / pred.m as f64;
    for (slot, &k) in assignment.perm.iter().enumerate() {
        let target = match gt.types[slot] {
            Some(t) if slot < gt.gt_count => t as usize,
            _ => empty,
        };
        if target >= classes {
            return Err(MatchError::Shape(alloc::format!(
                "class {target} out of range for {classes} logits"
            )));
        }
        let row = &logits[k * classes..(k + 1) * classes];
        let logp = log_softmax_row(row);
        loss -= logp[target];
        for c in 0..classes {
            let p = libm::exp(logp[c]);
            grad[k * classes + c] = (p - if c == target { 1.0 } else { 0.0 }) * inv_m;
        }
    }
    Ok((loss * inv_m, grad))
}

/// Unweighted component sums and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub cls: f64,
    pub coord: f64,
    pub ras: f64,
    pub room_type: f64,
    pub total: f64,
}

/// dL/d(prediction) for every prediction buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub coords: Vec<[f64; 2]>,
    pub probs: Vec<f64>,
    pub type_logits: Option<Vec<f64>>,
}

/// Options for [`total_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// `None` disables the Dice term (e.g. for 2-vertex line elements).
    pub raster: Option<RasterConfig>,
    /// Include the semantic cross-entropy when logits are present.
    pub room_types: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            raster: Some(RasterConfig::default()),
            room_types: false,
        }
    }
}

/// Total loss over matched pairs, optionally with its gradient.
pub fn total_loss(
    gt: &PaddedTargets,
    pred: &Prediction,
    assignment: &MatchAssignment,
    config: &LossConfig,
    with_grad: bool,
) -> Result<(LossBreakdown, Option<LossGradient>), MatchError> {
    let (m, n) = (pred.m, pred.n);
    if gt.m != m || gt.n != n || assignment.perm.len() != m {
        return Err(MatchError::Shape("targets, prediction and assignment disagree".into()));
    }
    let w = config.weights;
    let mut parts = LossBreakdown::default();
    let mut g_coords = vec![[0.0; 2]; m * n];
    let mut g_probs = vec![0.0; m * n];
    for (slot, &k) in assignment.perm.iter().enumerate() {
        let (l_cls, g_cls) = vertex_cls_loss_grad(gt.labels_row(slot), pred.probs_row(k));
        parts.cls += l_cls;
        for (j, g) in g_cls.into_iter().enumerate() {
            g_probs[k * n + j] += w.cls * g;
        }
        if slot >= gt.gt_count {
            continue;
        }
        let target = gt.polygon(slot);
        let row = pred.coords_row(k);
        if w.coord != 0.0 {
            let (l, g) = coord_loss_grad(target, row)?;
            parts.coord += l;
            for (j, gj) in g.into_iter().enumerate() {
                g_coords[k * n + j][0] += w.coord * gj[0];
                g_coords[k * n + j][1] += w.coord * gj[1];
            }
        }
        if let Some(raster) = config.raster.filter(|_| w.ras != 0.0 && target.len() >= 3) {
            let (l, g) = raster_dice_loss_grad(target, row, &raster, with_grad)?;
            parts.ras += l;
            for (j, gj) in g.into_iter().enumerate() {
                g_coords[k * n + j][0] += w.ras * gj[0];
                g_coords[k * n + j][1] += w.ras * gj[1];
            }
        }
    }
    let mut g_types = None;
    if config.room_types && pred.type_logits.is_some() {
        let (l, g) = room_type_loss_grad(gt, pred, assignment)?;
        parts.room_type = l;
        g_types = Some(g.into_iter().map(|v| v * w.room_type).collect());
    }
    parts.total = w.cls * parts.cls + w.coord * parts.coord + w.ras * parts.ras + w.room_type * parts.room_type;
    let grad = with_grad.then(|| LossGradient {
        coords: g_coords,
        probs: g_probs,
        type_logits: g_types,
    });
    Ok((parts, grad))
}
