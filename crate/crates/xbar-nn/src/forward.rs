//! Crossbar-abstracted inference: the tile pipeline as a matmul backend.
//!
//! Per mappable layer and input vector: activations quantize to DAC codes,
//! each tile converts codes to row voltages through its load-dependent
//! lookup table, the reduced model turns voltages into physical column
//! currents, differential pairs subtract in analog, one ADC digitizes each
//! logical column, and partial sums across row-tiles accumulate digitally
//! before dequantization back to real units.

use ndarray::{s, Array2, Array4, Axis, Zip};
use rayon::prelude::*;

use xbar_core::converters::{adc_convert, adc_reconstruct};
use xbar_core::energy::EnergyLedger;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mapping::MappedNetwork;
use crate::network::{
    accuracy, forward_full, forward_with, ForwardTrace, MatmulBackend, Network,
};

/// Which matrix the tiles evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Reduced non-ideal model with load-dependent DACs.
    NonIdeal,
    /// The same quantization pipeline on the programmed (quantized, ideal)
    /// conductances with load-free DACs: isolates precision loss from
    /// non-ideality loss.
    IdealQuant,
}

pub struct MappedBackend<'a> {
    pub mapped: &'a MappedNetwork,
    pub mode: EvalMode,
}

impl MatmulBackend for MappedBackend<'_> {
    fn layer_matmul(
        &self,
        layer_idx: usize,
        x_col: &Array2<f32>,
        ledger: &mut EnergyLedger,
    ) -> Result<Array2<f32>> {
        let ml = self.mapped.layer(layer_idx)?;
        let pipeline = &self.mapped.pipeline;
        let (rows, fan_in) = x_col.dim();
        if fan_in != ml.fan_in {
            return Err(Error::Shape(format!(
                "layer {layer_idx}: fan-in {fan_in} vs mapped {}",
                ml.fan_in
            )));
        }

        let top = (pipeline.dac_levels() - 1) as f32;
        let inv_a = top / ml.a_scale;
        let codes: Array2<u16> =
            x_col.mapv(|v| (v * inv_a).round().clamp(0.0, top) as u16);

        // every tile converts its full row/column complement regardless of
        // utilization; unmapped peripherals still burn energy
        let n_tiles = ml.tiles.len() as u64;
        ledger.dac_conversions += rows as u64 * n_tiles * pipeline.tile_rows as u64;
        ledger.adc_conversions +=
            rows as u64 * n_tiles * pipeline.logical_cols() as u64;
        ledger.record_eval(pipeline.tile_rows, pipeline.tile_cols, rows as u64 * n_tiles);

        let v_read = self.mapped.tile_params.v_read as f32;
        let ideal_volts: Vec<f32> = (0..pipeline.dac_levels())
            .map(|c| v_read * c as f32 / top)
            .collect();

        let mut acc = Array2::<f32>::zeros((rows, ml.fan_out));
        for tile in &ml.tiles {
            let code_slice = codes.slice(s![.., tile.row0..tile.row0 + tile.rows_used]);
            let mut volts = Array2::<f32>::zeros((rows, tile.rows_used));
            match self.mode {
                EvalMode::NonIdeal => {
                    Zip::from(volts.axis_iter_mut(Axis(0)))
                        .and(code_slice.axis_iter(Axis(0)))
                        .par_for_each(|mut vrow, crow| {
                            for k in 0..crow.len() {
                                vrow[k] = tile.dac_lut[(k, crow[k] as usize)];
                            }
                        });
                }
                EvalMode::IdealQuant => {
                    Zip::from(volts.axis_iter_mut(Axis(0)))
                        .and(code_slice.axis_iter(Axis(0)))
                        .par_for_each(|mut vrow, crow| {
                            for k in 0..crow.len() {
                                vrow[k] = ideal_volts[crow[k] as usize];
                            }
                        });
                }
            }

            let gmat = match self.mode {
                EvalMode::NonIdeal => &tile.g_nonideal_f32,
                EvalMode::IdealQuant => &tile.g_quant_f32,
            };
            let gslice = gmat.slice(s![0..tile.rows_used, ..]).to_owned();
            let i_phys = crate::network::par_matmul(&volts, &gslice);

            let adc = &ml.adc;
            Zip::from(acc.slice_mut(s![.., tile.col0..tile.col0 + tile.cols_used])
                .axis_iter_mut(Axis(0)))
                .and(i_phys.axis_iter(Axis(0)))
                .par_for_each(|mut arow, irow| {
                    for c in 0..arow.len() {
                        let i = (irow[2 * c] - irow[2 * c + 1]) as f64;
                        let q = adc_reconstruct(adc_convert(i, adc), adc) as f32;
                        arow[c] += q;
                    }
                });
        }

        acc.mapv_inplace(|v| v * ml.dequant);
        Ok(acc)
    }
}

/// Crossbar-abstracted forward pass; `net` supplies the host-side layers and
/// biases, `mapped` the tiles.
pub fn forward_mapped(
    net: &Network,
    mapped: &MappedNetwork,
    x: &Array4<f32>,
    mode: EvalMode,
    ledger: &mut EnergyLedger,
    trace: Option<&mut ForwardTrace>,
) -> Result<Array2<f32>> {
    let backend = MappedBackend { mapped, mode };
    forward_with(net, &backend, x, ledger, trace)
}

/// Forward pass capturing the activation tensor after every layer.
pub fn forward_mapped_features(
    net: &Network,
    mapped: &MappedNetwork,
    x: &Array4<f32>,
    mode: EvalMode,
) -> Result<(Array2<f32>, Vec<Array4<f32>>)> {
    let backend = MappedBackend { mapped, mode };
    let mut ledger = EnergyLedger::default();
    let mut features = Vec::new();
    let logits = forward_full(net, &backend, x, &mut ledger, None, Some(&mut features))?;
    Ok((logits, features))
}

/// Which execution path evaluates a dataset.
pub enum EvalPath<'a> {
    Fp32,
    Mapped(&'a MappedNetwork, EvalMode),
}

/// Top-1 accuracy over a dataset, batched, with the accumulated event
/// ledger. Deterministic: batches are processed in order and per-row results
/// are independent of the batch split.
pub fn evaluate_dataset(
    net: &Network,
    path: EvalPath,
    data: &Dataset,
    batch_size: usize,
) -> Result<(f64, EnergyLedger)> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Shape("empty dataset".into()));
    }
    let mut ledger = EnergyLedger::default();
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let stop = (start + batch_size).min(n);
        let batch = data.images.slice(s![start..stop, .., .., ..]).to_owned();
        let labels = &data.labels[start..stop];
        let logits = match &path {
            EvalPath::Fp32 => {
                let backend = crate::network::FpBackend { net };
                forward_with(net, &backend, &batch, &mut ledger, None)?
            }
            EvalPath::Mapped(mapped, mode) => {
                forward_mapped(net, mapped, &batch, *mode, &mut ledger, None)?
            }
        };
        correct += (accuracy(&logits, labels) * labels.len() as f64).round() as usize;
        start = stop;
    }
    Ok((correct as f64 / n as f64, ledger))
}

/// Mean absolute deviation between two activation tensors, normalized by the
/// mean absolute reference value — the feature-divergence measure.
pub fn feature_divergence(reference: &Array4<f32>, actual: &Array4<f32>) -> f64 {
    let mut mad = 0.0f64;
    let mut scale = 0.0f64;
    for (r, a) in reference.iter().zip(actual.iter()) {
        mad += (*r as f64 - *a as f64).abs();
        scale += (*r as f64).abs();
    }
    mad / scale.max(1e-30)
}

/// The parallelism in this crate splits work by batch rows with fixed chunk
/// boundaries, so results do not depend on the worker count.
pub fn rayon_worker_count() -> usize {
    rayon::current_num_threads()
}
