//! Versioned checkpoint container: a safetensors file whose metadata holds
//! the format tag, version, model config and provenance of the weights.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use floorplan_core::eval::Metrics;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::model::{FloorplanModel, ModelConfig};

pub const FORMAT: &str = "floorplan-checkpoint";
pub const VERSION: u32 = 1;

/// Everything stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub validation: Option<Metrics>,
    pub tool_version: String,
}

impl CheckpointMeta {
    pub fn new(model: &ModelConfig, epoch: usize, validation: Option<Metrics>) -> Self {
        Self {
            model: model.clone(),
            epoch,
            validation,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

/// Writes all parameters (as f32) and `meta` to `path`.
pub fn save_checkpoint(path: &Path, model: &FloorplanModel, meta: &CheckpointMeta) -> Result<()> {
    let mut buffers: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    for (name, var) in model.params().named() {
        let data = var.as_tensor().to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        let bytes = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        buffers.push((name.clone(), var.dims().to_vec(), bytes));
    }
    let views = buffers
        .iter()
        .map(|(n, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes)
                .map(|v| (n.clone(), v))
                .map_err(|e| bad(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut info = HashMap::new();
    info.insert("format".to_string(), FORMAT.to_string());
    info.insert("version".to_string(), VERSION.to_string());
    info.insert("meta".to_string(), serde_json::to_string(meta)?);
    let bytes = safetensors::serialize(views, Some(info)).map_err(|e| bad(e.to_string()))?;
    // write-then-rename so an interrupted save never leaves a torn file
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Parsed checkpoint: metadata plus host tensors.
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, Tensor>,
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let info = header
        .metadata()
        .as_ref()
        .ok_or_else(|| bad("missing checkpoint metadata"))?;
    match info.get("format") {
        Some(f) if f == FORMAT => {}
        other => return Err(bad(format!("not a floorplan checkpoint (format {other:?})"))),
    }
    let version: u32 = info
        .get("version")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing version"))?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version} (expected {VERSION})")));
    }
    let meta: CheckpointMeta =
        serde_json::from_str(info.get("meta").ok_or_else(|| bad("missing model metadata"))?)?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| bad(e.to_string()))?;
    let mut tensors = BTreeMap::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F32 {
            return Err(bad(format!("{name}: expected f32, found {:?}", view.dtype())));
        }
        let data: Vec<f32> = view
            .data()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.insert(name, Tensor::from_vec(data, view.shape(), &Device::Cpu)?);
    }
    Ok(Checkpoint { meta, tensors })
}

/// Rebuilds the stored model. With `expected` set, the stored config must
/// equal it exactly.
pub fn load_model(path: &Path, expected: Option<&ModelConfig>, dtype: DType, device: &Device) -> Result<(FloorplanModel, CheckpointMeta)> {
    let ckpt = read_checkpoint(path)?;
    if let Some(want) = expected {
        if want != &ckpt.meta.model {
            return Err(ModelError::ConfigMismatch(format!(
                "checkpoint was trained with {:?}, requested {:?}",
                ckpt.meta.model, want
            )));
        }
    }
    let model = FloorplanModel::new(ckpt.meta.model.clone(), 0, dtype, device)?;
    model.params().assign(&ckpt.tensors)?;
    Ok((model, ckpt.meta))
}
