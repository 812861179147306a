//! Small building blocks on top of candle tensors. Everything here is
//! composed from differentiable primitives.

use candle_core::{CpuStorage, CustomOp1, DType, Layout, Shape, Tensor, D};

use crate::error::Result;
use crate::params::{Init, Scope};

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(scope: &mut Scope, name: &str, input: usize, output: usize) -> Result<Self> {
        Self::with_init(scope, name, input, output, Init::Xavier, Init::Zeros)
    }

    pub fn with_init(scope: &mut Scope, name: &str, input: usize, output: usize, w: Init, b: Init) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            weight: s.get("weight", &[output, input], w)?,
            bias: s.get("bias", &[output], b)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let w = self.weight.t()?;
        let y = match x.dims() {
            [b, n, k] => x.reshape((b * n, *k))?.matmul(&w)?.reshape((*b, *n, ()))?,
            [_, _] => x.matmul(&w)?,
            dims => {
                let k = *dims.last().unwrap_or(&0);
                let lead: Vec<usize> = dims[..dims.len() - 1].to_vec();
                let rows: usize = lead.iter().product();
                let mut out = lead;
                out.push(self.weight.dim(0)?);
                x.reshape((rows, k))?.matmul(&w)?.reshape(out)?
            }
        };
        Ok(y.broadcast_add(&self.bias)?)
    }
}

/// Layer normalization over the last dimension.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(scope: &mut Scope, name: &str, dim: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            gamma: s.get("weight", &[dim], Init::Ones)?,
            beta: s.get("bias", &[dim], Init::Zeros)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let xc = x.broadcast_sub(&mean)?;
        let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
        let y = xc.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(y.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

/// Group normalization for `[B, C, H, W]` maps.
#[derive(Debug, Clone)]
pub struct GroupNorm {
    gamma: Tensor,
    beta: Tensor,
    groups: usize,
    eps: f64,
}

impl GroupNorm {
    pub fn new(scope: &mut Scope, name: &str, channels: usize, groups: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            gamma: s.get("weight", &[channels], Init::Ones)?,
            beta: s.get("bias", &[channels], Init::Zeros)?,
            groups,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let g = x.reshape((b, self.groups, (c / self.groups) * h * w))?;
        let mean = g.mean_keepdim(D::Minus1)?;
        let gc = g.broadcast_sub(&mean)?;
        let var = gc.sqr()?.mean_keepdim(D::Minus1)?;
        let y = gc.broadcast_div(&(var + self.eps)?.sqrt()?)?.reshape((b, c, h, w))?;
        let gamma = self.gamma.reshape((1, c, 1, 1))?;
        let beta = self.beta.reshape((1, c, 1, 1))?;
        Ok(y.broadcast_mul(&gamma)?.broadcast_add(&beta)?)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        scope: &mut Scope,
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            weight: s.get("weight", &[output, input, kernel, kernel], Init::Kaiming)?,
            bias: s.get("bias", &[output], Init::Zeros)?,
            stride,
            padding: kernel / 2,
        })
    }

    /// Convolution as im2col + matmul. candle's native conv backward goes
    /// through a slow transposed convolution on the CPU.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let (o, _, k, _) = self.weight.dims4()?;
        let (p, s) = (self.padding, self.stride);
        let ho = (h + 2 * p - k) / s + 1;
        let wo = (w + 2 * p - k) / s + 1;
        let cols = if k == 1 && s == 1 {
            x.reshape((b, c, h * w))?
        } else {
            // extra trailing zeros let every tap take a full `s * ho` window
            let xp = x.pad_with_zeros(2, p, p + s - 1)?.pad_with_zeros(3, p, p + s - 1)?;
            let mut taps = Vec::with_capacity(k * k);
            for ky in 0..k {
                for kx in 0..k {
                    let mut t = xp.narrow(2, ky, s * ho)?.narrow(3, kx, s * wo)?;
                    if s > 1 {
                        t = t
                            .reshape((b, c, ho, s, wo, s))?
                            .narrow(3, 0, 1)?
                            .narrow(5, 0, 1)?
                            .reshape((b, c, ho, wo))?;
                    }
                    taps.push(t);
                }
            }
            Tensor::stack(&taps, 2)?.reshape((b, c * k * k, ho * wo))?
        };
        let wm = self.weight.reshape((o, c * k * k))?;
        let y = wm.broadcast_left(b)?.contiguous()?.matmul(&cols)?;
        let y = y.broadcast_add(&self.bias.reshape((1, o, 1))?)?;
        Ok(y.reshape((b, o, ho, wo))?)
    }
}

/// Two-layer perceptron with ReLU.
#[derive(Debug, Clone)]
pub struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Mlp {
    pub fn new(scope: &mut Scope, name: &str, input: usize, hidden: usize, output: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            fc1: Linear::new(&mut s, "fc1", input, hidden)?,
            fc2: Linear::new(&mut s, "fc2", hidden, output)?,
        })
    }

    /// Same as [`Mlp::new`] with the output layer initialized to zero.
    pub fn zero_output(scope: &mut Scope, name: &str, input: usize, hidden: usize, output: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            fc1: Linear::new(&mut s, "fc1", input, hidden)?,
            fc2: Linear::with_init(&mut s, "fc2", hidden, output, Init::Zeros, Init::Zeros)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.relu()?)
    }
}

/// Softmax over the last dimension with a hand-written backward pass.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    Ok(x.contiguous()?.apply_op1(SoftmaxLast)?)
}

struct SoftmaxLast;

/// `exp` for `x <= 0` via range reduction and a degree-6 polynomial; about
/// 2e-7 relative error. Written with float tricks only so that it vectorizes.
#[inline]
fn exp_nonpositive(x: f32) -> f32 {
    // adding 1.5 * 2^23 rounds to an integer held in the low mantissa bits
    const SHIFT: f32 = 12_582_912.0;
    let x = x.max(-87.0);
    let t = x * std::f32::consts::LOG2_E + SHIFT;
    let k = t - SHIFT;
    let r = x - k * 0.693_145_75 - k * 1.428_606_8e-6;
    let p = 1.0 + r * (1.0 + r * (0.5 + r * (1.0 / 6.0 + r * (1.0 / 24.0 + r * (1.0 / 120.0 + r * (1.0 / 720.0))))));
    let scale = t.to_bits().wrapping_sub(0x4B40_0000).wrapping_add(127) << 23;
    p * f32::from_bits(scale)
}

fn softmax_rows_f32(src: &[f32], row: usize) -> Vec<f32> {
    let mut dst = vec![0f32; src.len()];
    for (s, d) in src.chunks(row).zip(dst.chunks_mut(row)) {
        let max = s.iter().fold(f32::NEG_INFINITY, |m, &v| if v > m { v } else { m });
        for (a, b) in s.iter().zip(d.iter_mut()) {
            *b = exp_nonpositive(*a - max);
        }
        let inv = 1.0 / d.iter().sum::<f32>();
        d.iter_mut().for_each(|b| *b *= inv);
    }
    dst
}

fn softmax_rows_f64(src: &[f64], row: usize) -> Vec<f64> {
    let mut dst = vec![0f64; src.len()];
    for (s, d) in src.chunks(row).zip(dst.chunks_mut(row)) {
        let max = s.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        for (a, b) in s.iter().zip(d.iter_mut()) {
            *b = (*a - max).exp();
        }
        let inv = 1.0 / d.iter().sum::<f64>();
        d.iter_mut().for_each(|b| *b *= inv);
    }
    dst
}

impl CustomOp1 for SoftmaxLast {
    fn name(&self) -> &'static str {
        "softmax-last"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let (o1, o2) = layout
            .contiguous_offsets()
            .ok_or_else(|| candle_core::Error::Msg("softmax input must be contiguous".into()))?;
        let row = layout.shape().dims().last().copied().unwrap_or(1).max(1);
        let out = match storage {
            CpuStorage::F32(v) => CpuStorage::F32(softmax_rows_f32(&v[o1..o2], row)),
            CpuStorage::F64(v) => CpuStorage::F64(softmax_rows_f64(&v[o1..o2], row)),
            _ => candle_core::bail!("softmax supports f32 and f64 only"),
        };
        Ok((out, layout.shape().clone()))
    }

    fn bwd(&self, _arg: &Tensor, res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let dot = (grad * res)?.sum_keepdim(D::Minus1)?;
        Ok(Some((res * grad.broadcast_sub(&dot)?)?))
    }
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::sigmoid(x)?)
}

/// `log(x / (1 - x))` with `x` clamped away from 0 and 1.
pub fn inverse_sigmoid(x: &Tensor) -> Result<Tensor> {
    let eps = 1e-5;
    let x = x.clamp(0.0, 1.0)?;
    let a = x.clamp(eps, f64::INFINITY)?;
    let b = (1.0 - x)?.clamp(eps, f64::INFINITY)?;
    Ok((a.log()? - b.log()?)?)
}

/// Multi-head attention with separate query/key/value inputs and an optional
/// additive mask broadcastable to `[B, heads, Q, K]`.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(scope: &mut Scope, name: &str, dim: usize, heads: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        Ok(Self {
            q: Linear::new(&mut s, "q", dim, dim)?,
            k: Linear::new(&mut s, "k", dim, dim)?,
            v: Linear::new(&mut s, "v", dim, dim)?,
            out: Linear::new(&mut s, "out", dim, dim)?,
            heads,
        })
    }

    pub fn forward(&self, query: &Tensor, key: &Tensor, value: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let (b, nq, c) = query.dims3()?;
        let nk = key.dim(1)?;
        let dh = c / self.heads;
        let split = |t: Tensor, n: usize| -> Result<Tensor> {
            Ok(t.reshape((b, n, self.heads, dh))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.q.forward(query)?, nq)?;
        let k = split(self.k.forward(key)?, nk)?;
        let v = split(self.v.forward(value)?, nk)?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut scores = (q.matmul(&k.transpose(2, 3)?.contiguous()?)? * scale)?;
        if let Some(m) = mask {
            scores = scores.broadcast_add(m)?;
        }
        let attn = softmax_last(&scores)?;
        let o = attn.matmul(&v)?.transpose(1, 2)?.reshape((b, nq, c))?;
        self.out.forward(&o)
    }
}

/// Additive block-diagonal mask `[Q, Q]`: queries only see queries of the
/// same group of `group` consecutive entries.
pub fn block_diagonal_mask(groups: usize, group: usize, dtype: DType, device: &candle_core::Device) -> Result<Tensor> {
    let n = groups * group;
    let mut data = vec![0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            if i / group != j / group {
                data[i * n + j] = -1e9;
            }
        }
    }
    Ok(Tensor::from_vec(data, (n, n), device)?.to_dtype(dtype)?)
}
