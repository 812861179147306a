//! Training loop: per-layer matching, exact loss gradients injected into the
//! graph, AdamW with a step decay, global-norm clipping, JSON-lines logs and
//! best-by-room-F1 checkpoints.
//!
//! Runs are deterministic for a fixed seed on the CPU backend: parameter
//! initialization and shuffling use seeded ChaCha streams and the reductions
//! candle performs on a single device are ordered.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use floorplan_core::data::{DensityMap, Floorplan, PaddedTargets};
use floorplan_core::decode::ClassLayout;
use floorplan_core::eval::{evaluate_scene, EvalThresholds, Metrics, SceneCounts};
use floorplan_core::geometry::VertexSeq;
use floorplan_core::losses::{total_loss, LossBreakdown, LossConfig, LossWeights, RasterConfig, DEFAULT_TEMPERATURE};
use floorplan_core::matching::{match_polygons, CostMode, CostWeights};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::decoder::LayerOutput;
use crate::error::{ModelError, Result};
use crate::model::{FloorplanModel, ModelConfig, Variant};

/// One training or evaluation scene.
#[derive(Debug, Clone)]
pub struct Sample {
    pub density: DensityMap,
    pub plan: Floorplan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingCost {
    /// Class term plus cyclic L1 between vertex sequences.
    Coordinates,
    /// Class term plus Dice between rasterized polygons.
    Mask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Fraction of the epochs after which the learning rate drops.
    pub lr_drop_at: f64,
    pub lr_drop_factor: f64,
    /// Global gradient-norm limit; 0 disables clipping.
    pub grad_clip: f64,
    pub lambda_cls: f64,
    pub lambda_coord: f64,
    pub lambda_ras: f64,
    pub lambda_room_cls: f64,
    pub raster_resolution: usize,
    pub raster_temperature: f64,
    pub matching: MatchingCost,
    /// Matching-cost weights of the class and geometry terms.
    pub cost_cls: f64,
    pub cost_geometry: f64,
    /// Supervise every decoder layer instead of only the last one.
    pub deep_supervision: bool,
    /// Vertex validity threshold used when decoding for validation.
    pub threshold: f64,
    /// Validate every `eval_every` epochs (and always after the last one).
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 8,
            lr: 2e-4,
            weight_decay: 1e-4,
            lr_drop_at: 0.8,
            lr_drop_factor: 0.1,
            grad_clip: 0.1,
            lambda_cls: 2.0,
            lambda_coord: 5.0,
            lambda_ras: 1.0,
            lambda_room_cls: 1.0,
            raster_resolution: 64,
            raster_temperature: DEFAULT_TEMPERATURE,
            matching: MatchingCost::Coordinates,
            cost_cls: 2.0,
            cost_geometry: 5.0,
            deep_supervision: true,
            threshold: 0.5,
            eval_every: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Config(m.into()));
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.lr_drop_at) {
            return bad("lr_drop_at must lie in [0, 1]");
        }
        let lambdas = [self.lambda_cls, self.lambda_coord, self.lambda_ras, self.lambda_room_cls];
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("loss weights must be finite and non-negative");
        }
        if self.raster_resolution < 2 || self.raster_temperature <= 0.0 {
            return bad("raster resolution must be >= 2 and temperature positive");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]");
        }
        Ok(())
    }

    /// Learning rate for a zero-based epoch index.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drop = (self.lr_drop_at * self.epochs as f64).floor() as usize;
        if epoch >= drop {
            self.lr * self.lr_drop_factor
        } else {
            self.lr
        }
    }

    fn raster(&self) -> RasterConfig {
        RasterConfig {
            resolution: self.raster_resolution,
            temperature: self.raster_temperature,
        }
    }

    fn cost(&self) -> CostWeights {
        let mode = match self.matching {
            MatchingCost::Coordinates => CostMode::Coordinates,
            MatchingCost::Mask => CostMode::Mask {
                resolution: self.raster_resolution,
                temperature: self.raster_temperature,
            },
        };
        CostWeights {
            cls: self.cost_cls,
            coord: self.cost_geometry,
            mode,
        }
    }

    fn loss(&self, raster: bool, types: bool) -> LossConfig {
        LossConfig {
            weights: LossWeights {
                cls: self.lambda_cls,
                coord: self.lambda_coord,
                ras: self.lambda_ras,
                room_type: self.lambda_room_cls,
            },
            raster: raster.then(|| self.raster()),
            room_types: types,
        }
    }
}

/// Padded targets for one scene, shaped for a given model.
#[derive(Debug, Clone)]
pub struct SceneTargets {
    pub rooms: PaddedTargets,
    pub lines: Option<PaddedTargets>,
}

fn normalized_lines(plan: &Floorplan) -> (Vec<VertexSeq>, usize) {
    let mut out = Vec::with_capacity(plan.doors.len() + plan.windows.len());
    for l in plan.doors.iter().chain(&plan.windows) {
        out.push(VertexSeq(vec![plan.to_normalized(l[0]), plan.to_normalized(l[1])]));
    }
    (out, plan.doors.len())
}

impl SceneTargets {
    pub fn new(cfg: &ModelConfig, plan: &Floorplan) -> Result<Self> {
        let (m, n) = (cfg.num_polygons, cfg.num_corners);
        let mut polys = plan.normalized_rooms();
        let mut types: Vec<u32> = plan.rooms.iter().map(|r| r.room_type).collect();
        let (lines, doors) = normalized_lines(plan);
        let line_types: Vec<u32> = (0..lines.len()).map(|i| u32::from(i >= doors)).collect();
        match cfg.variant {
            Variant::Plain => Ok(Self {
                rooms: PaddedTargets::from_polygons(&polys, Some(&types), m, n)?,
                lines: None,
            }),
            Variant::SdTq => {
                let layout = ClassLayout::ROOMS_AND_LINES;
                let base = layout.door().unwrap_or(0);
                types.extend(line_types.iter().map(|t| base + t));
                polys.extend(lines);
                Ok(Self {
                    rooms: PaddedTargets::from_polygons(&polys, Some(&types), m, n)?,
                    lines: None,
                })
            }
            Variant::TdTq | Variant::TdSq => Ok(Self {
                rooms: PaddedTargets::from_polygons(&polys, Some(&types), m, n)?,
                lines: Some(PaddedTargets::from_polygons(&lines, Some(&line_types), cfg.num_lines, 2)?),
            }),
        }
    }
}

/// Loss summed over supervised layers, averaged over scenes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub cls: f64,
    pub coord: f64,
    pub ras: f64,
    pub room_cls: f64,
}

impl LossParts {
    fn add(&mut self, b: &LossBreakdown, scale: f64) {
        self.total += b.total * scale;
        self.cls += b.cls * scale;
        self.coord += b.coord * scale;
        self.ras += b.ras * scale;
        self.room_cls += b.room_type * scale;
    }

    fn accumulate(&mut self, o: &LossParts, scale: f64) {
        self.total += o.total * scale;
        self.cls += o.cls * scale;
        self.coord += o.coord * scale;
        self.ras += o.ras * scale;
        self.room_cls += o.room_cls * scale;
    }
}

/// Loss of one decoder layer for a batch plus the surrogate scalar whose
/// gradient equals the exact loss gradient (scaled by `scale`).
fn layer_objective(
    out: &LayerOutput,
    targets: &[&PaddedTargets],
    cost: &CostWeights,
    loss: &LossConfig,
    scale: f64,
) -> Result<(Vec<LossBreakdown>, Tensor)> {
    let preds = out.to_predictions()?;
    let (b, m, n, _) = out.coords.dims4()?;
    let mut g_coords = Vec::with_capacity(b * m * n * 2);
    let mut g_logits = Vec::with_capacity(b * m * n);
    let mut g_types = Vec::new();
    let mut parts = Vec::with_capacity(b);
    for (pred, gt) in preds.iter().zip(targets) {
        let assignment = match_polygons(gt, pred, cost)?;
        let (breakdown, grad) = total_loss(gt, pred, &assignment, loss, true)?;
        let grad = grad.ok_or_else(|| ModelError::Config("loss returned no gradient".into()))?;
        parts.push(breakdown);
        g_coords.extend(grad.coords.iter().flat_map(|g| [g[0] * scale, g[1] * scale]));
        // chain rule through the sigmoid: dp/dz = p (1 - p)
        g_logits.extend(grad.probs.iter().zip(&pred.probs).map(|(g, p)| g * p * (1.0 - p) * scale));
        if let Some(t) = grad.type_logits {
            g_types.extend(t.into_iter().map(|v| v * scale));
        }
    }
    let dev = out.coords.device();
    let dtype = out.coords.dtype();
    let gc = Tensor::from_vec(g_coords, (b, m, n, 2), dev)?.to_dtype(dtype)?;
    let gl = Tensor::from_vec(g_logits, (b, m, n), dev)?.to_dtype(dtype)?;
    let mut surrogate = ((&out.coords * gc)?.sum_all()? + (&out.logits * gl)?.sum_all()?)?;
    if let Some(types) = &out.types {
        if !g_types.is_empty() {
            let gt = Tensor::from_vec(g_types, types.shape(), dev)?.to_dtype(dtype)?;
            surrogate = (surrogate + (types * gt)?.sum_all()?)?;
        }
    }
    Ok((parts, surrogate))
}

/// Statistics of one optimization step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub loss: LossParts,
    pub grad_norm: f64,
}

/// Optimizer state bound to a model.
pub struct Trainer<'a> {
    model: &'a FloorplanModel,
    cfg: TrainConfig,
    opt: AdamW,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(model: &'a FloorplanModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let params = ParamsAdamW {
            lr: cfg.lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: cfg.weight_decay,
        };
        let opt = AdamW::new(model.params().vars(), params)?;
        Ok(Self {
            model,
            cfg,
            opt,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Sets the epoch index and the matching learning rate.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
        self.opt.set_learning_rate(self.cfg.lr_at(epoch));
    }

    pub fn learning_rate(&self) -> f64 {
        self.opt.learning_rate()
    }

    /// Loss and surrogate for a batch without touching the parameters.
    fn objective(&self, batch: &[&Sample]) -> Result<(LossParts, Vec<LossBreakdown>, Tensor)> {
        let mcfg = self.model.config();
        let targets = batch
            .iter()
            .map(|s| SceneTargets::new(mcfg, &s.plan))
            .collect::<Result<Vec<_>>>()?;
        let maps: Vec<&DensityMap> = batch.iter().map(|s| &s.density).collect();
        let out = self.model.forward(&self.model.batch(&maps)?)?;
        let scale = 1.0 / batch.len() as f64;
        let cost = self.cfg.cost();
        let room_types = mcfg.polygon_layout().is_some();
        let room_loss = self.cfg.loss(true, room_types);
        let line_loss = self.cfg.loss(false, true);
        let supervised = |layers: &'_ [LayerOutput]| -> std::ops::Range<usize> {
            if self.cfg.deep_supervision {
                0..layers.len()
            } else {
                layers.len() - 1..layers.len()
            }
        };
        let mut parts = LossParts::default();
        let mut per_scene = vec![LossBreakdown::default(); batch.len()];
        let mut terms = Vec::new();
        let rooms: Vec<&PaddedTargets> = targets.iter().map(|t| &t.rooms).collect();
        for l in supervised(&out.rooms) {
            let (p, s) = layer_objective(&out.rooms[l], &rooms, &cost, &room_loss, scale)?;
            for (acc, b) in per_scene.iter_mut().zip(&p) {
                acc.total += b.total;
                parts.add(b, scale);
            }
            terms.push(s);
        }
        if let Some(lines) = &out.lines {
            let line_targets: Vec<&PaddedTargets> = targets
                .iter()
                .map(|t| t.lines.as_ref().ok_or_else(|| ModelError::Config("missing line targets".into())))
                .collect::<Result<_>>()?;
            for l in supervised(lines) {
                let (p, s) = layer_objective(&lines[l], &line_targets, &cost, &line_loss, scale)?;
                for (acc, b) in per_scene.iter_mut().zip(&p) {
                    acc.total += b.total;
                    parts.add(b, scale);
                }
                terms.push(s);
            }
        }
        let surrogate = terms
            .into_iter()
            .reduce(|a, b| (a + b).expect("scalar add"))
            .ok_or_else(|| ModelError::Config("no supervised layers".into()))?;
        Ok((parts, per_scene, surrogate))
    }

    /// Loss of a batch under the current parameters.
    pub fn loss(&self, batch: &[&Sample]) -> Result<LossParts> {
        Ok(self.objective(batch)?.0)
    }

    /// One optimization step. `batch_index` only labels diagnostics.
    pub fn step(&mut self, batch: &[&Sample], batch_index: usize) -> Result<StepStats> {
        let (parts, per_scene, surrogate) = self.objective(batch)?;
        if !parts.total.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch: self.epoch,
                batch: batch_index,
                detail: format!("per-scene losses {per_scene:?}"),
            });
        }
        let mut grads = surrogate.backward()?;
        let vars = self.model.params().vars();
        let mut sq = 0.0;
        for v in &vars {
            if let Some(g) = grads.get(v.as_tensor()) {
                sq += g.to_dtype(DType::F64)?.sqr()?.sum_all()?.to_scalar::<f64>()?;
            }
        }
        let norm = sq.sqrt();
        if !norm.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch: self.epoch,
                batch: batch_index,
                detail: format!("gradient norm {norm}"),
            });
        }
        if self.cfg.grad_clip > 0.0 && norm > self.cfg.grad_clip {
            let s = self.cfg.grad_clip / (norm + 1e-6);
            for v in &vars {
                if let Some(g) = grads.remove(v.as_tensor()) {
                    grads.insert(v.as_tensor(), (g * s)?);
                }
            }
        }
        self.opt.step(&grads)?;
        Ok(StepStats { loss: parts, grad_norm: norm })
    }
}

/// Decodes predictions for `samples` and sums their metric counts.
pub fn evaluate(
    model: &FloorplanModel,
    samples: &[Sample],
    threshold: f64,
    batch_size: usize,
    th: &EvalThresholds,
) -> Result<(SceneCounts, Vec<Floorplan>)> {
    let mut counts = SceneCounts::default();
    let mut plans = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let maps: Vec<&DensityMap> = chunk.iter().map(|s| &s.density).collect();
        let preds = model.predict(&maps, threshold)?;
        for (s, p) in chunk.iter().zip(preds) {
            counts += evaluate_scene(&s.plan, &p, th);
            plans.push(p);
        }
    }
    Ok((counts, plans))
}

/// One JSON line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossParts,
    pub grad_norm: f64,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<Metrics>,
}

/// Where a run writes its artifacts; every entry is optional.
#[derive(Debug, Clone, Default)]
pub struct RunFiles {
    /// JSON-lines metrics log.
    pub log: Option<PathBuf>,
    /// Best (or, without validation data, last) checkpoint.
    pub checkpoint: Option<PathBuf>,
    /// Written when a non-finite loss aborts the run.
    pub nan_dump: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochLog>,
    /// Epoch (zero-based) of the retained parameters.
    pub best_epoch: usize,
    pub best_room_f1: Option<f64>,
}

fn snapshot(model: &FloorplanModel) -> Result<BTreeMap<String, Tensor>> {
    model
        .params()
        .named()
        .iter()
        .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?)))
        .collect()
}

fn write_dump(path: &Path, err: &ModelError, batch: &[usize]) -> Result<()> {
    let dump = serde_json::json!({
        "error": err.to_string(),
        "scene_indices": batch,
    });
    std::fs::write(path, serde_json::to_vec_pretty(&dump)?)?;
    Ok(())
}

/// Trains `model` in place. With validation data the parameters of the
/// epoch with the best room F1 are restored at the end.
pub fn train(
    model: &FloorplanModel,
    cfg: &TrainConfig,
    train_set: &[Sample],
    validation: Option<&[Sample]>,
    files: &RunFiles,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(ModelError::Config("empty training set".into()));
    }
    let mut trainer = Trainer::new(model, cfg.clone())?;
    let mut log = match &files.log {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let th = EvalThresholds::default();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, BTreeMap<String, Tensor>)> = None;
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        trainer.set_epoch(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = LossParts::default();
        let mut grad_norm = 0.0;
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        for (bi, idx) in batches.iter().enumerate() {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let stats = match trainer.step(&batch, bi) {
                Ok(s) => s,
                Err(e @ ModelError::NonFiniteLoss { .. }) => {
                    if let Some(p) = &files.nan_dump {
                        write_dump(p, &e, idx)?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            epoch_loss.accumulate(&stats.loss, idx.len() as f64 / train_set.len() as f64);
            grad_norm += stats.grad_norm / batches.len() as f64;
        }
        let last = epoch + 1 == cfg.epochs;
        let validate = validation.filter(|_| last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0));
        let metrics = match validate {
            Some(v) => Some(evaluate(model, v, cfg.threshold, cfg.batch_size, &th)?.0.metrics()),
            None => None,
        };
        let entry = EpochLog {
            epoch,
            lr: trainer.learning_rate(),
            loss: epoch_loss,
            grad_norm,
            seconds: start.elapsed().as_secs_f64(),
            validation: metrics,
        };
        if let Some(w) = log.as_mut() {
            serde_json::to_writer(&mut *w, &entry)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        if let Some(m) = metrics {
            let improved = best.as_ref().is_none_or(|(f, _, _)| m.room.f1 > *f);
            if improved {
                best = Some((m.room.f1, epoch, snapshot(model)?));
                if let Some(p) = &files.checkpoint {
                    save_checkpoint(p, model, &CheckpointMeta::new(model.config(), epoch, Some(m)))?;
                }
            }
        }
        history.push(entry);
    }
    let (best_epoch, best_room_f1) = match best {
        Some((f1, epoch, params)) => {
            model.params().assign(&params)?;
            (epoch, Some(f1))
        }
        None => {
            if let Some(p) = &files.checkpoint {
                save_checkpoint(p, model, &CheckpointMeta::new(model.config(), cfg.epochs - 1, None))?;
            }
            (cfg.epochs.saturating_sub(1), None)
        }
    };
    Ok(TrainReport {
        history,
        best_epoch,
        best_room_f1,
    })
}
