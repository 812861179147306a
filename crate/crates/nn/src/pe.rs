//! Sinusoidal encodings of normalized 2D positions.

use candle_core::{Tensor, D};

use crate::error::{ModelError, Result};

const TEMPERATURE: f64 = 10000.0;

/// Per-channel frequency and phase for one axis with `half` channels:
/// channel `i` is `sin(v * freq_i + phase_i)`, where odd channels carry a
/// quarter-period phase (cosine).
pub fn axis_tables(half: usize) -> (Vec<f64>, Vec<f64>) {
    let mut freq = Vec::with_capacity(half);
    let mut phase = Vec::with_capacity(half);
    for i in 0..half {
        let e = (2 * (i / 2)) as f64 / half as f64;
        freq.push(2.0 * std::f64::consts::PI / TEMPERATURE.powf(e));
        phase.push(if i % 2 == 0 { 0.0 } else { std::f64::consts::FRAC_PI_2 });
    }
    (freq, phase)
}

/// Encodes `[..., 2]` coordinates in `[0, 1]` into `[..., dim]`: the first
/// half encodes x, the second half y, with interleaved sine/cosine pairs.
pub fn positional_encoding(coords: &Tensor, dim: usize) -> Result<Tensor> {
    if dim % 4 != 0 {
        return Err(ModelError::Config(format!("encoding width {dim} must be a multiple of 4")));
    }
    let half = dim / 2;
    let (freq, phase) = axis_tables(half);
    let dev = coords.device();
    let dtype = coords.dtype();
    let freq = Tensor::from_vec(freq, half, dev)?.to_dtype(dtype)?;
    let phase = Tensor::from_vec(phase, half, dev)?.to_dtype(dtype)?;
    let rank = coords.rank();
    let enc = |axis: usize| -> Result<Tensor> {
        let v = coords.narrow(rank - 1, axis, 1)?;
        Ok(v.broadcast_mul(&freq)?.broadcast_add(&phase)?.sin()?)
    };
    Ok(Tensor::cat(&[enc(0)?, enc(1)?], D::Minus1)?)
}

/// Encodings of the pixel centers of an `h x w` grid, row-major, `[h*w, dim]`.
pub fn grid_encoding(h: usize, w: usize, dim: usize, dtype: candle_core::DType, device: &candle_core::Device) -> Result<Tensor> {
    positional_encoding(&grid_points(h, w, dtype, device)?, dim)
}

/// Pixel-center reference points of an `h x w` grid, `[h*w, 2]`.
pub fn grid_points(h: usize, w: usize, dtype: candle_core::DType, device: &candle_core::Device) -> Result<Tensor> {
    let mut pts = Vec::with_capacity(h * w * 2);
    for r in 0..h {
        for c in 0..w {
            pts.push((c as f64 + 0.5) / w as f64);
            pts.push((r as f64 + 0.5) / h as f64);
        }
    }
    Ok(Tensor::from_vec(pts, (h * w, 2), device)?.to_dtype(dtype)?)
}
