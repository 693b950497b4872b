//! Networks, the floating-point engine, and the shared forward/backward
//! machinery.
//!
//! Mappable layers (conv, fully-connected) reduce to matrix products of the
//! patch matrix against the layer weights. A [`MatmulBackend`] supplies that
//! product — shadow weights in floating point, or crossbar tiles — while all
//! host-side work (bias, relu, pooling, reshapes, loss) is shared, so the
//! execution paths differ in nothing but the product itself.

use ndarray::{Array1, Array2, Array4, Axis};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use xbar_core::energy::EnergyLedger;

use crate::error::{Error, Result};
use crate::im2col::{col2im, conv_out_hw, im2col};
use crate::layers::{LayerSpec, NetworkSpec, Shape};

/// Weights of one mappable layer: `w` is `(fan_in, fan_out)`, bias is added
/// digitally after the product.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Array2<f32>,
    pub b: Array1<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    /// One entry per layer; `None` for host layers.
    pub params: Vec<Option<LayerParams>>,
}

impl Network {
    /// He-initialized weights, zero biases. Deterministic under `seed`.
    pub fn init_random(spec: NetworkSpec, seed: u64) -> Result<Network> {
        let dims = spec.matrix_dims()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(dims.len());
        for d in dims {
            params.push(match d {
                Some((fan_in, fan_out)) => {
                    let std = (2.0 / fan_in as f64).sqrt();
                    let normal = Normal::new(0.0, std).unwrap();
                    let w = Array2::from_shape_fn((fan_in, fan_out), |_| {
                        normal.sample(&mut rng) as f32
                    });
                    Some(LayerParams {
                        w,
                        b: Array1::zeros(fan_out),
                    })
                }
                None => None,
            });
        }
        Ok(Network { spec, params })
    }

    pub fn forward_fp(&self, x: &Array4<f32>) -> Result<Array2<f32>> {
        let backend = FpBackend { net: self };
        let mut ledger = EnergyLedger::default();
        forward_with(self, &backend, x, &mut ledger, None)
    }

    pub fn layer_params(&self, idx: usize) -> Result<&LayerParams> {
        self.params
            .get(idx)
            .and_then(|p| p.as_ref())
            .ok_or_else(|| Error::Spec(format!("layer {idx} has no parameters")))
    }
}

/// Supplier of the mappable-layer matrix product.
pub trait MatmulBackend: Sync {
    /// `x_col` is `(rows, fan_in)`; returns `(rows, fan_out)` — the raw
    /// product, bias excluded.
    fn layer_matmul(
        &self,
        layer_idx: usize,
        x_col: &Array2<f32>,
        ledger: &mut EnergyLedger,
    ) -> Result<Array2<f32>>;
}

/// Shadow-weight floating-point backend.
pub struct FpBackend<'a> {
    pub net: &'a Network,
}

impl MatmulBackend for FpBackend<'_> {
    fn layer_matmul(
        &self,
        layer_idx: usize,
        x_col: &Array2<f32>,
        _ledger: &mut EnergyLedger,
    ) -> Result<Array2<f32>> {
        let p = self.net.layer_params(layer_idx)?;
        if x_col.dim().1 != p.w.dim().0 {
            return Err(Error::Shape(format!(
                "layer {layer_idx}: x_col fan-in {} vs weights {}",
                x_col.dim().1,
                p.w.dim().0
            )));
        }
        Ok(par_matmul(x_col, &p.w))
    }
}

/// Row-chunked parallel matrix product. Chunking does not change any output
/// element, so results are identical across worker counts.
pub fn par_matmul(a: &Array2<f32>, b: &Array2<f32>) -> Array2<f32> {
    let (n, _) = a.dim();
    let m = b.dim().1;
    let mut out = Array2::<f32>::zeros((n, m));
    let chunk = 1024;
    if n <= chunk {
        ndarray::linalg::general_mat_mul(1.0, a, b, 0.0, &mut out);
        return out;
    }
    out.axis_chunks_iter_mut(Axis(0), chunk)
        .into_par_iter()
        .zip(a.axis_chunks_iter(Axis(0), chunk).into_par_iter())
        .for_each(|(mut oc, ac)| {
            ndarray::linalg::general_mat_mul(1.0, &ac, &b.view(), 0.0, &mut oc);
        });
    out
}

/// Per-layer forward state kept for the backward pass.
pub enum LayerCache {
    Mappable { x_col: Array2<f32>, in_shape: Shape },
    Relu { mask: Vec<bool> },
    MaxPool { argmax: Vec<u32>, in_shape: Shape },
    PassThrough,
}

pub struct ForwardTrace {
    pub caches: Vec<LayerCache>,
}

fn to_matrix(act: &Array4<f32>) -> Array2<f32> {
    let (b, c, h, w) = act.dim();
    act.to_shape((b, c * h * w)).unwrap().to_owned()
}

fn to_tensor(mat: Array2<f32>, shape: Shape) -> Result<Array4<f32>> {
    let (b, f) = mat.dim();
    let (c, h, w) = shape;
    if f != c * h * w {
        return Err(Error::Shape(format!(
            "cannot view {f} features as {c}x{h}x{w}"
        )));
    }
    Ok(mat
        .into_shape_with_order((b, c, h, w))
        .map_err(|e| Error::Shape(e.to_string()))?)
}

/// `(B*P, OC)` product output back to `(B, OC, OH, OW)`.
fn conv_output_to_tensor(
    y: Array2<f32>,
    b: usize,
    oc: usize,
    oh: usize,
    ow: usize,
) -> Result<Array4<f32>> {
    let p = oh * ow;
    let y3 = y
        .into_shape_with_order((b, p, oc))
        .map_err(|e| Error::Shape(e.to_string()))?;
    let perm = y3.permuted_axes([0, 2, 1]);
    let std = perm.as_standard_layout().to_owned();
    std.into_shape_with_order((b, oc, oh, ow))
        .map_err(|e| Error::Shape(e.to_string()))
}

/// `(B, OC, OH, OW)` gradient to patch-space `(B*P, OC)`.
fn conv_grad_to_cols(d: &Array4<f32>) -> Array2<f32> {
    let (b, oc, oh, ow) = d.dim();
    let perm = d.view().permuted_axes([0, 2, 3, 1]);
    let std = perm.as_standard_layout().to_owned();
    std.into_shape_with_order((b * oh * ow, oc)).unwrap()
}

/// Run the network forward on `x` using `backend` for the mappable-layer
/// products. Returns the logits `(B, classes)`; with `trace` present, keeps
/// what the backward pass needs.
pub fn forward_with(
    net: &Network,
    backend: &dyn MatmulBackend,
    x: &Array4<f32>,
    ledger: &mut EnergyLedger,
    trace: Option<&mut ForwardTrace>,
) -> Result<Array2<f32>> {
    forward_full(net, backend, x, ledger, trace, None)
}

/// [`forward_with`] plus an optional per-layer activation sink for
/// feature-map analysis.
pub fn forward_full(
    net: &Network,
    backend: &dyn MatmulBackend,
    x: &Array4<f32>,
    ledger: &mut EnergyLedger,
    mut trace: Option<&mut ForwardTrace>,
    mut features: Option<&mut Vec<Array4<f32>>>,
) -> Result<Array2<f32>> {
    let shapes = net.spec.shapes()?;
    let (batch, c, h, w) = x.dim();
    if (c, h, w) != net.spec.input {
        return Err(Error::Shape(format!(
            "input {:?} does not match network input {:?}",
            (c, h, w),
            net.spec.input
        )));
    }
    if let Some(t) = trace.as_deref_mut() {
        t.caches.clear();
    }

    let mut act = x.clone();
    for (idx, layer) in net.spec.layers.iter().enumerate() {
        let in_shape = if idx == 0 {
            net.spec.input
        } else {
            shapes[idx - 1]
        };
        let out_shape = shapes[idx];
        let mut cache = LayerCache::PassThrough;
        act = match *layer {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
            } => {
                let x_col = im2col(&act.view(), kernel, stride, pad);
                ledger.mem_read_bytes += (x_col.len() * 4) as u64;
                let y = backend.layer_matmul(idx, &x_col, ledger)?;
                ledger.mem_write_bytes += (y.len() * 4) as u64;
                let params = net.layer_params(idx)?;
                let (oh, ow) = conv_out_hw(in_shape.1, in_shape.2, kernel, stride, pad);
                let mut out = conv_output_to_tensor(y, batch, out_channels, oh, ow)?;
                for mut ch in out.axis_iter_mut(Axis(1)).into_iter().enumerate().map(
                    |(ci, view)| {
                        (params.b[ci], view)
                    },
                ) {
                    ch.1 += ch.0;
                }
                if trace.is_some() {
                    cache = LayerCache::Mappable { x_col, in_shape };
                }
                out
            }
            LayerSpec::FullyConnected { .. } => {
                let x_col = to_matrix(&act);
                ledger.mem_read_bytes += (x_col.len() * 4) as u64;
                let mut y = backend.layer_matmul(idx, &x_col, ledger)?;
                ledger.mem_write_bytes += (y.len() * 4) as u64;
                let params = net.layer_params(idx)?;
                y += &params.b;
                if trace.is_some() {
                    cache = LayerCache::Mappable { x_col, in_shape };
                }
                to_tensor(y, out_shape)?
            }
            LayerSpec::Relu => {
                let mut out = act;
                let mut mask = Vec::new();
                if trace.is_some() {
                    mask = out.iter().map(|&v| v > 0.0).collect();
                }
                out.mapv_inplace(|v| v.max(0.0));
                if trace.is_some() {
                    cache = LayerCache::Relu { mask };
                }
                out
            }
            LayerSpec::MaxPool { kernel, stride } => {
                let (pc, ph, pw) = in_shape;
                let (oh, ow) = ((ph - kernel) / stride + 1, (pw - kernel) / stride + 1);
                let mut out = Array4::<f32>::zeros((batch, pc, oh, ow));
                let mut argmax = vec![0u32; batch * pc * oh * ow];
                for bi in 0..batch {
                    for ci in 0..pc {
                        for i in 0..oh {
                            for j in 0..ow {
                                let mut best = f32::NEG_INFINITY;
                                let mut best_idx = 0u32;
                                for ki in 0..kernel {
                                    for kj in 0..kernel {
                                        let (ii, jj) = (i * stride + ki, j * stride + kj);
                                        let v = act[(bi, ci, ii, jj)];
                                        if v > best {
                                            best = v;
                                            best_idx =
                                                (((bi * pc + ci) * ph + ii) * pw + jj) as u32;
                                        }
                                    }
                                }
                                out[(bi, ci, i, j)] = best;
                                argmax[((bi * pc + ci) * oh + i) * ow + j] = best_idx;
                            }
                        }
                    }
                }
                if trace.is_some() {
                    cache = LayerCache::MaxPool { argmax, in_shape };
                }
                out
            }
            LayerSpec::Flatten => to_tensor(to_matrix(&act), out_shape)?,
            LayerSpec::SoftmaxLoss => act,
        };
        if let Some(t) = trace.as_deref_mut() {
            t.caches.push(cache);
        }
        if let Some(f) = features.as_deref_mut() {
            f.push(act.clone());
        }
        for v in act.iter() {
            if !v.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite activation after layer {idx} ({})",
                    layer.kind()
                )));
            }
        }
    }
    Ok(to_matrix(&act))
}

/// Numerically stable softmax cross-entropy; returns the mean loss and the
/// logits gradient `(p - onehot) / B`.
pub fn softmax_cross_entropy(logits: &Array2<f32>, labels: &[u8]) -> Result<(f32, Array2<f32>)> {
    let (b, k) = logits.dim();
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{} labels for batch of {b}",
            labels.len()
        )));
    }
    let mut dlogits = logits.clone();
    let mut loss = 0.0f64;
    for (row, &label) in dlogits.axis_iter_mut(Axis(0)).zip(labels) {
        let label = label as usize;
        if label >= k {
            return Err(Error::Shape(format!("label {label} out of {k} classes")));
        }
        let mut row = row;
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        loss -= ((row[label] / sum).max(1e-30) as f64).ln();
        for v in row.iter_mut() {
            *v /= sum;
        }
        row[label] -= 1.0;
    }
    let scale = 1.0 / b as f32;
    dlogits.mapv_inplace(|v| v * scale);
    Ok(((loss / b as f64) as f32, dlogits))
}

/// Per-mappable-layer gradients.
pub struct Gradients {
    pub per_layer: Vec<Option<(Array2<f32>, Array1<f32>)>>,
}

/// Standard backprop through the floating-point graph using the shadow
/// weights in `net` and the cached forward state. Quantizers and crossbar
/// non-idealities are treated as identity (straight-through): the cached
/// activations come from whichever forward actually ran.
pub fn backward(net: &Network, trace: &ForwardTrace, dlogits: &Array2<f32>) -> Result<Gradients> {
    let shapes = net.spec.shapes()?;
    let n_layers = net.spec.layers.len();
    if trace.caches.len() != n_layers {
        return Err(Error::Shape("trace does not match network".into()));
    }
    let batch = dlogits.dim().0;
    let mut per_layer: Vec<Option<(Array2<f32>, Array1<f32>)>> = vec![None; n_layers];

    let last_shape = shapes[n_layers - 1];
    let mut dact = to_tensor(dlogits.clone(), last_shape)?;

    for idx in (0..n_layers).rev() {
        let in_shape = if idx == 0 {
            net.spec.input
        } else {
            shapes[idx - 1]
        };
        dact = match (&net.spec.layers[idx], &trace.caches[idx]) {
            (LayerSpec::SoftmaxLoss, _) => dact,
            (LayerSpec::Flatten, _) => to_tensor(to_matrix(&dact), in_shape)?,
            (LayerSpec::Relu, LayerCache::Relu { mask }) => {
                let mut d = dact;
                for (v, &m) in d.iter_mut().zip(mask) {
                    if !m {
                        *v = 0.0;
                    }
                }
                d
            }
            (LayerSpec::MaxPool { kernel, stride }, LayerCache::MaxPool { argmax, .. }) => {
                let _ = (kernel, stride);
                let (c, h, w) = in_shape;
                let mut dx = Array4::<f32>::zeros((batch, c, h, w));
                let flat = dx.as_slice_mut().unwrap();
                for (pos, &src) in argmax.iter().enumerate() {
                    let g = dact.as_slice().unwrap()[pos];
                    flat[src as usize] += g;
                }
                dx
            }
            (LayerSpec::FullyConnected { .. }, LayerCache::Mappable { x_col, in_shape }) => {
                let dy = to_matrix(&dact);
                let p = net.layer_params(idx)?;
                let dw = par_matmul(&x_col.t().to_owned(), &dy);
                let db = dy.sum_axis(Axis(0));
                per_layer[idx] = Some((dw, db));
                let dx = par_matmul(&dy, &p.w.t().to_owned());
                to_tensor(dx, *in_shape)?
            }
            (
                LayerSpec::Conv {
                    kernel, stride, pad, ..
                },
                LayerCache::Mappable { x_col, in_shape },
            ) => {
                let dy_col = conv_grad_to_cols(&dact);
                let p = net.layer_params(idx)?;
                let dw = par_matmul(&x_col.t().to_owned(), &dy_col);
                let db = dy_col.sum_axis(Axis(0));
                per_layer[idx] = Some((dw, db));
                let dx_col = par_matmul(&dy_col, &p.w.t().to_owned());
                col2im(
                    &dx_col,
                    (batch, in_shape.0, in_shape.1, in_shape.2),
                    *kernel,
                    *stride,
                    *pad,
                )?
            }
            (l, _) => {
                return Err(Error::Shape(format!(
                    "cache mismatch at layer {idx} ({})",
                    l.kind()
                )))
            }
        };
    }
    Ok(Gradients { per_layer })
}

/// Index of the winning class per batch row.
pub fn predictions(logits: &Array2<f32>) -> Vec<u8> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0usize;
            let mut best_v = f32::NEG_INFINITY;
            for (i, &v) in row.iter().enumerate() {
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            best as u8
        })
        .collect()
}

pub fn accuracy(logits: &Array2<f32>, labels: &[u8]) -> f64 {
    let preds = predictions(logits);
    let correct = preds
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    correct as f64 / labels.len() as f64
}
