//! Multi-scale deformable attention.
//!
//! The sampling kernel is a custom op with an analytic backward pass. A
//! sample at normalized location `(u, v)` on a level of size `H x W` reads
//! pixel coordinates `x = u W - 0.5`, `y = v H - 0.5` (pixel centers at
//! half-integers) and interpolates bilinearly; corner indices outside the
//! map are clamped to the border.

use candle_core::{CpuStorage, CustomOp3, DType, Layout, Shape, Tensor};

use crate::error::Result;
use crate::layers::{softmax_last, Linear};
use crate::params::{Init, Scope};

/// `(height, width)` of each level, in flattening order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelShapes(pub Vec<(usize, usize)>);

impl LevelShapes {
    pub fn starts(&self) -> Vec<usize> {
        let mut acc = 0;
        self.0
            .iter()
            .map(|&(h, w)| {
                let s = acc;
                acc += h * w;
                s
            })
            .collect()
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&(h, w)| h * w).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Dimensions of one kernel call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub batch: usize,
    pub values: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub queries: usize,
    pub levels: usize,
    pub points: usize,
}

struct Corner {
    index: [usize; 4],
    weight: [f64; 4],
    // d(weight)/dx and d(weight)/dy, pixel units
    dx: [f64; 4],
    dy: [f64; 4],
}

fn corners(u: f64, v: f64, h: usize, w: usize) -> Corner {
    let x = u * w as f64 - 0.5;
    let y = v * h as f64 - 0.5;
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let cx = |c: f64| c.clamp(0.0, (w - 1) as f64) as usize;
    let cy = |c: f64| c.clamp(0.0, (h - 1) as f64) as usize;
    let (xa, xb, ya, yb) = (cx(x0), cx(x0 + 1.0), cy(y0), cy(y0 + 1.0));
    Corner {
        index: [ya * w + xa, ya * w + xb, yb * w + xa, yb * w + xb],
        weight: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        dx: [-(1.0 - fy), 1.0 - fy, -fy, fy],
        dy: [-(1.0 - fx), -fx, 1.0 - fx, fx],
    }
}

/// Reference forward on flat f64 buffers. `value` is `[B, S, H, dh]`,
/// `loc` is `[B, Q, H, L, P, 2]`, `attn` is `[B, Q, H, L, P]`; the result is
/// `[B, Q, H * dh]`.
pub fn forward_f64(shapes: &LevelShapes, d: Dims, value: &[f64], loc: &[f64], attn: &[f64]) -> Vec<f64> {
    let starts = shapes.starts();
    let (hh, dh) = (d.heads, d.head_dim);
    let mut out = vec![0.0; d.batch * d.queries * hh * dh];
    for b in 0..d.batch {
        for q in 0..d.queries {
            for h in 0..hh {
                let o = &mut out[((b * d.queries + q) * hh + h) * dh..][..dh];
                for l in 0..d.levels {
                    let (lh, lw) = shapes.0[l];
                    for p in 0..d.points {
                        let k = (((b * d.queries + q) * hh + h) * d.levels + l) * d.points + p;
                        let a = attn[k];
                        if a == 0.0 {
                            continue;
                        }
                        let c = corners(loc[2 * k], loc[2 * k + 1], lh, lw);
                        for i in 0..4 {
                            let s = starts[l] + c.index[i];
                            let vrow = &value[((b * d.values + s) * hh + h) * dh..][..dh];
                            let cw = a * c.weight[i];
                            for (oo, &vv) in o.iter_mut().zip(vrow) {
                                *oo += cw * vv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of `sum(grad_out * forward)` w.r.t. value, locations and
/// attention weights.
pub fn backward_f64(
    shapes: &LevelShapes,
    d: Dims,
    value: &[f64],
    loc: &[f64],
    attn: &[f64],
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let starts = shapes.starts();
    let (hh, dh) = (d.heads, d.head_dim);
    let mut g_value = vec![0.0; value.len()];
    let mut g_loc = vec![0.0; loc.len()];
    let mut g_attn = vec![0.0; attn.len()];
    for b in 0..d.batch {
        for q in 0..d.queries {
            for h in 0..hh {
                let go = &grad_out[((b * d.queries + q) * hh + h) * dh..][..dh];
                for l in 0..d.levels {
                    let (lh, lw) = shapes.0[l];
                    for p in 0..d.points {
                        let k = (((b * d.queries + q) * hh + h) * d.levels + l) * d.points + p;
                        let a = attn[k];
                        let c = corners(loc[2 * k], loc[2 * k + 1], lh, lw);
                        let (mut ga, mut gx, mut gy) = (0.0, 0.0, 0.0);
                        for i in 0..4 {
                            let base = ((b * d.values + starts[l] + c.index[i]) * hh + h) * dh;
                            let mut dot = 0.0;
                            for j in 0..dh {
                                dot += go[j] * value[base + j];
                                g_value[base + j] += a * c.weight[i] * go[j];
                            }
                            ga += c.weight[i] * dot;
                            gx += c.dx[i] * dot;
                            gy += c.dy[i] * dot;
                        }
                        g_attn[k] += ga;
                        g_loc[2 * k] += a * gx * lw as f64;
                        g_loc[2 * k + 1] += a * gy * lh as f64;
                    }
                }
            }
        }
    }
    (g_value, g_loc, g_attn)
}

fn storage_f64(s: &CpuStorage, l: &Layout) -> candle_core::Result<Vec<f64>> {
    let (start, end) = l
        .contiguous_offsets()
        .ok_or_else(|| candle_core::Error::Msg("deformable sampling needs contiguous inputs".into()))?;
    Ok(match s {
        CpuStorage::F32(v) => v[start..end].iter().map(|&x| x as f64).collect(),
        CpuStorage::F64(v) => v[start..end].to_vec(),
        _ => return Err(candle_core::Error::Msg("deformable sampling supports f32 and f64".into())),
    })
}

fn tensor_f64(t: &Tensor) -> candle_core::Result<Vec<f64>> {
    t.detach().to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()
}

/// The sampling kernel as a candle op over `(value, locations, weights)`.
#[derive(Debug, Clone)]
pub struct DeformableSample {
    pub shapes: LevelShapes,
    pub heads: usize,
    pub points: usize,
}

impl DeformableSample {
    fn dims(&self, value: &[usize], loc: &[usize]) -> candle_core::Result<Dims> {
        match (value, loc) {
            ([b, s, h, dh], [b2, q, h2, l, p, 2]) if b == b2 && h == h2 && *l == self.shapes.len() => Ok(Dims {
                batch: *b,
                values: *s,
                heads: *h,
                head_dim: *dh,
                queries: *q,
                levels: *l,
                points: *p,
            }),
            _ => Err(candle_core::Error::Msg(format!(
                "deformable sampling shapes: value {value:?}, locations {loc:?}"
            ))),
        }
    }
}

impl CustomOp3 for DeformableSample {
    fn name(&self) -> &'static str {
        "deformable-sample"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
        s3: &CpuStorage,
        l3: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let d = self.dims(l1.dims(), l2.dims())?;
        if d.values != self.shapes.total() {
            return Err(candle_core::Error::Msg(format!(
                "{} values for level shapes totalling {}",
                d.values,
                self.shapes.total()
            )));
        }
        let value = storage_f64(s1, l1)?;
        let loc = storage_f64(s2, l2)?;
        let attn = storage_f64(s3, l3)?;
        let out = forward_f64(&self.shapes, d, &value, &loc, &attn);
        let shape = Shape::from((d.batch, d.queries, d.heads * d.head_dim));
        let storage = match s1 {
            CpuStorage::F32(_) => CpuStorage::F32(out.into_iter().map(|x| x as f32).collect()),
            _ => CpuStorage::F64(out),
        };
        Ok((storage, shape))
    }

    fn bwd(
        &self,
        value: &Tensor,
        loc: &Tensor,
        attn: &Tensor,
        _res: &Tensor,
        grad_res: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>, Option<Tensor>)> {
        let d = self.dims(value.dims(), loc.dims())?;
        let (gv, gl, ga) = backward_f64(
            &self.shapes,
            d,
            &tensor_f64(value)?,
            &tensor_f64(loc)?,
            &tensor_f64(attn)?,
            &tensor_f64(grad_res)?,
        );
        let dev = value.device();
        let mk = |v: Vec<f64>, like: &Tensor| -> candle_core::Result<Tensor> {
            Tensor::from_vec(v, like.shape(), dev)?.to_dtype(like.dtype())
        };
        Ok((Some(mk(gv, value)?), Some(mk(gl, loc)?), Some(mk(ga, attn)?)))
    }
}

/// Applies the sampling kernel.
pub fn deformable_sample(
    shapes: &LevelShapes,
    value: &Tensor,
    locations: &Tensor,
    weights: &Tensor,
) -> Result<Tensor> {
    let (_, _, heads, _) = value.dims4()?;
    let points = *locations.dims().get(4).unwrap_or(&0);
    let op = DeformableSample {
        shapes: shapes.clone(),
        heads,
        points,
    };
    Ok(value
        .contiguous()?
        .apply_op3(&locations.contiguous()?, &weights.contiguous()?, op)?)
}

/// The full attention module: value projection, offset and weight heads,
/// sampling, output projection.
#[derive(Debug, Clone)]
pub struct MsDeformAttn {
    value_proj: Linear,
    offsets: Linear,
    weights: Linear,
    out_proj: Linear,
    heads: usize,
    levels: usize,
    points: usize,
}

impl MsDeformAttn {
    pub fn new(scope: &mut Scope, name: &str, dim: usize, heads: usize, levels: usize, points: usize) -> Result<Self> {
        let mut s = scope.sub(name);
        // radial initial offsets: head h looks along angle 2*pi*h/heads,
        // point p at distance p+1 (in level pixels)
        let mut bias = Vec::with_capacity(heads * levels * points * 2);
        for h in 0..heads {
            let theta = 2.0 * std::f64::consts::PI * h as f64 / heads as f64;
            let (c, sn) = (theta.cos(), theta.sin());
            let m = c.abs().max(sn.abs());
            for _ in 0..levels {
                for p in 0..points {
                    bias.push(c / m * (p + 1) as f64);
                    bias.push(sn / m * (p + 1) as f64);
                }
            }
        }
        let n = heads * levels * points;
        Ok(Self {
            value_proj: Linear::new(&mut s, "value_proj", dim, dim)?,
            offsets: Linear::with_init(&mut s, "sampling_offsets", dim, n * 2, Init::Zeros, Init::Values(bias))?,
            weights: Linear::with_init(&mut s, "attention_weights", dim, n, Init::Zeros, Init::Zeros)?,
            out_proj: Linear::new(&mut s, "output_proj", dim, dim)?,
            heads,
            levels,
            points,
        })
    }

    /// `query`: `[B, Q, C]`; `reference`: `[B, Q, 2]` normalized; `input`:
    /// `[B, S, C]` flattened levels.
    pub fn forward(&self, query: &Tensor, reference: &Tensor, input: &Tensor, shapes: &LevelShapes) -> Result<Tensor> {
        let (b, nq, c) = query.dims3()?;
        let s = input.dim(1)?;
        let (hh, ll, pp) = (self.heads, self.levels, self.points);
        let value = self.value_proj.forward(input)?.reshape((b, s, hh, c / hh))?;
        let offsets = self.offsets.forward(query)?.reshape((b, nq, hh, ll, pp, 2))?;
        let attn = softmax_last(&self.weights.forward(query)?.reshape((b, nq, hh, ll * pp))?)?
            .reshape((b, nq, hh, ll, pp))?;
        let mut norm = Vec::with_capacity(ll * 2);
        for &(h, w) in &shapes.0 {
            norm.push(1.0 / w as f64);
            norm.push(1.0 / h as f64);
        }
        let norm = Tensor::from_vec(norm, (1, 1, 1, ll, 1, 2), query.device())?.to_dtype(query.dtype())?;
        let locations = reference
            .reshape((b, nq, 1, 1, 1, 2))?
            .broadcast_add(&offsets.broadcast_mul(&norm)?)?;
        let sampled = deformable_sample(shapes, &value, &locations, &attn)?;
        self.out_proj.forward(&sampled)
    }
}
