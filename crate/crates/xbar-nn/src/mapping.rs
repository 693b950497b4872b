//! Lowering trained layers onto crossbar tiles.
//!
//! Each mappable layer's weight matrix is split into a grid of tiles. A tile
//! is one full physical crossbar: differential conductance pairs occupy two
//! physical columns per logical output, unused crosspoints sit at
//! `(G_min, G_min)` (logical zero, still physically present and loading the
//! wires), and the exact reduced model is built once per tile. Per-row DAC
//! lookup tables bake the tile's load conductances into the code-to-voltage
//! transfer.

use ndarray::Array2;
use rayon::prelude::*;

use xbar_core::converters::{
    dac_convert, dac_ideal, weight_to_conductance, AdcConfig, DacConfig, GLoadMode,
    VariationConfig,
};
use xbar_core::converters::apply_variation;
use xbar_core::matrix::ConductanceMatrix;
use xbar_core::nonideal::{build_nonideal, NonIdealCrossbar};
use xbar_core::params::CrossbarParams;

use crate::error::{Error, Result};
use crate::layers::LayerSpec;
use crate::network::Network;

/// Converter and tiling configuration of the mapped pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub tile_rows: usize,
    /// Physical columns per tile; two per logical output, so must be even.
    pub tile_cols: usize,
    pub dac_bits: u32,
    pub adc_bits: u32,
    /// DAC pull-down resistance, ohms.
    pub r_pd: f64,
    pub g_load_mode: GLoadMode,
    /// Bypass the divider: ideal code-to-voltage transfer (isolates
    /// quantization effects from load-dependent DAC error).
    pub ideal_dac: bool,
    /// Hard cap on the total tile count of a mapping.
    pub tile_budget: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tile_rows: 64,
            tile_cols: 64,
            dac_bits: 6,
            adc_bits: 8,
            r_pd: 100.0,
            g_load_mode: GLoadMode::RowSum,
            ideal_dac: false,
            tile_budget: 100_000,
        }
    }
}

impl PipelineConfig {
    pub fn with_tile(mut self, dim: usize) -> Self {
        self.tile_rows = dim;
        self.tile_cols = dim;
        self
    }

    pub fn logical_cols(&self) -> usize {
        self.tile_cols / 2
    }

    pub fn dac_levels(&self) -> u32 {
        1u32 << self.dac_bits
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_rows == 0 || self.tile_cols == 0 || self.tile_cols % 2 != 0 {
            return Err(Error::Mapping(format!(
                "tile must be nonempty with an even column count, got {}x{}",
                self.tile_rows, self.tile_cols
            )));
        }
        Ok(())
    }
}

/// One programmed tile with its reduced model and peripheral tables.
#[derive(Debug, Clone)]
pub struct MappedTile {
    /// First weight-matrix row (fan-in index) this tile covers.
    pub row0: usize,
    pub rows_used: usize,
    /// First logical output column this tile covers.
    pub col0: usize,
    pub cols_used: usize,
    /// Programmed (quantized, pre-variation) conductance state.
    pub g_quant: ConductanceMatrix,
    /// Reduced model built from the post-variation state.
    pub xbar: NonIdealCrossbar,
    pub(crate) g_nonideal_f32: Array2<f32>,
    pub(crate) g_quant_f32: Array2<f32>,
    /// `(tile_rows, 2^dac_bits)` code-to-voltage transfer per tile row.
    pub(crate) dac_lut: Array2<f32>,
}

#[derive(Debug, Clone)]
pub struct MappedLayer {
    pub layer_idx: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub w_scale: f32,
    pub a_scale: f32,
    /// `(row_tiles, col_tiles)`.
    pub grid: (usize, usize),
    pub tiles: Vec<MappedTile>,
    pub adc: AdcConfig,
    /// Current-to-real-units factor `a_scale * w_scale / (v_read * (G_max - G_min))`.
    pub dequant: f32,
}

/// A network lowered onto crossbar tiles.
#[derive(Debug, Clone)]
pub struct MappedNetwork {
    pub tile_params: CrossbarParams,
    pub pipeline: PipelineConfig,
    pub variation: Option<VariationConfig>,
    pub layers: Vec<Option<MappedLayer>>,
}

impl MappedNetwork {
    pub fn layer(&self, idx: usize) -> Result<&MappedLayer> {
        self.layers
            .get(idx)
            .and_then(|l| l.as_ref())
            .ok_or_else(|| Error::Mapping(format!("layer {idx} is not mapped")))
    }

    pub fn total_tiles(&self) -> usize {
        self.layers
            .iter()
            .flatten()
            .map(|l| l.tiles.len())
            .sum()
    }

    /// Rebuild every mapped layer from the network's current shadow weights,
    /// keeping activation scales and per-tile variation seeds.
    pub fn remap_from(&mut self, net: &Network) -> Result<()> {
        let dims = net.spec.matrix_dims()?;
        for idx in 0..net.spec.layers.len() {
            if let Some(existing) = &self.layers[idx] {
                let (fan_in, fan_out) = dims[idx].ok_or_else(|| {
                    Error::Mapping(format!("layer {idx} lost its matrix dims"))
                })?;
                let a_scale = existing.a_scale;
                let layer = map_layer(
                    net,
                    idx,
                    fan_in,
                    fan_out,
                    a_scale,
                    &self.tile_params,
                    &self.pipeline,
                    self.variation.as_ref(),
                )?;
                self.layers[idx] = Some(layer);
            }
        }
        Ok(())
    }
}

/// Activations feeding a mapped layer must be nonnegative for the
/// single-polarity DAC coding; verify the producer guarantees it.
fn producer_nonnegative(layers: &[LayerSpec], idx: usize) -> bool {
    if idx == 0 {
        return true; // dataset inputs are normalized into [0, 1]
    }
    match layers[idx - 1] {
        LayerSpec::Relu => true,
        LayerSpec::Flatten | LayerSpec::MaxPool { .. } => {
            producer_nonnegative(layers, idx - 1)
        }
        _ => false,
    }
}

fn div_ceil(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Build the full mapped network: quantize weights through the differential
/// device mapping, optionally apply programming variation, and reduce every
/// tile. `a_scales` holds the calibrated activation scale per layer.
pub fn map_network(
    net: &Network,
    params: &CrossbarParams,
    pipeline: &PipelineConfig,
    a_scales: &[Option<f32>],
    variation: Option<&VariationConfig>,
) -> Result<MappedNetwork> {
    pipeline.validate()?;
    let dims = net.spec.matrix_dims()?;
    if a_scales.len() != dims.len() {
        return Err(Error::Mapping(format!(
            "{} activation scales for {} layers",
            a_scales.len(),
            dims.len()
        )));
    }
    let tile_params = CrossbarParams {
        rows: pipeline.tile_rows,
        cols: pipeline.tile_cols,
        ..params.clone()
    };
    tile_params.validate().map_err(Error::Core)?;

    // budget check before any expensive build
    let mut total = 0usize;
    for d in dims.iter().flatten() {
        total += div_ceil(d.0, pipeline.tile_rows) * div_ceil(d.1, pipeline.logical_cols());
    }
    if total > pipeline.tile_budget {
        return Err(Error::Mapping(format!(
            "mapping needs {total} tiles, budget is {}",
            pipeline.tile_budget
        )));
    }

    let mut layers = Vec::with_capacity(dims.len());
    for (idx, d) in dims.iter().enumerate() {
        match d {
            None => layers.push(None),
            Some((fan_in, fan_out)) => {
                if !producer_nonnegative(&net.spec.layers, idx) {
                    return Err(Error::Mapping(format!(
                        "layer {idx}: input activations are not guaranteed nonnegative; \
                         insert a relu/pool producer before mapping"
                    )));
                }
                let a_scale = a_scales[idx].ok_or_else(|| {
                    Error::Mapping(format!("layer {idx}: missing activation scale"))
                })?;
                if !(a_scale.is_finite() && a_scale > 0.0) {
                    return Err(Error::Mapping(format!(
                        "layer {idx}: activation scale must be positive, got {a_scale}"
                    )));
                }
                layers.push(Some(map_layer(
                    net,
                    idx,
                    *fan_in,
                    *fan_out,
                    a_scale,
                    &tile_params,
                    pipeline,
                    variation,
                )?));
            }
        }
    }

    Ok(MappedNetwork {
        tile_params,
        pipeline: pipeline.clone(),
        variation: variation.cloned(),
        layers,
    })
}

#[allow(clippy::too_many_arguments)]
fn map_layer(
    net: &Network,
    layer_idx: usize,
    fan_in: usize,
    fan_out: usize,
    a_scale: f32,
    tile_params: &CrossbarParams,
    pipeline: &PipelineConfig,
    variation: Option<&VariationConfig>,
) -> Result<MappedLayer> {
    let params = net.layer_params(layer_idx)?;
    if params.w.dim() != (fan_in, fan_out) {
        return Err(Error::Mapping(format!(
            "layer {layer_idx}: weights are {:?}, expected ({fan_in}, {fan_out})",
            params.w.dim()
        )));
    }
    let w_scale = params
        .w
        .iter()
        .fold(0.0f32, |a, v| a.max(v.abs()))
        .max(f32::MIN_POSITIVE);

    let row_tiles = div_ceil(fan_in, pipeline.tile_rows);
    let col_tiles = div_ceil(fan_out, pipeline.logical_cols());

    let dac = dac_config(tile_params, pipeline);
    let adc = AdcConfig::differential(pipeline.adc_bits, tile_params);
    adc.validate().map_err(Error::Core)?;

    let tile_list: Vec<(usize, usize)> = (0..row_tiles)
        .flat_map(|tr| (0..col_tiles).map(move |tc| (tr, tc)))
        .collect();
    let tiles: Vec<MappedTile> = tile_list
        .into_par_iter()
        .map(|(tr, tc)| {
            build_tile(
                &params.w,
                w_scale,
                layer_idx,
                tr,
                tc,
                tile_params,
                pipeline,
                &dac,
                variation,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let dequant = (a_scale as f64 * w_scale as f64
        / (tile_params.v_read * (tile_params.g_max - tile_params.g_min)))
        as f32;

    Ok(MappedLayer {
        layer_idx,
        fan_in,
        fan_out,
        w_scale,
        a_scale,
        grid: (row_tiles, col_tiles),
        tiles,
        adc,
        dequant,
    })
}

pub(crate) fn dac_config(tile_params: &CrossbarParams, pipeline: &PipelineConfig) -> DacConfig {
    DacConfig::linear_ladder(pipeline.dac_bits, tile_params.v_read, pipeline.r_pd)
        .with_driver(tile_params.r_driver)
}

#[allow(clippy::too_many_arguments)]
fn build_tile(
    w: &Array2<f32>,
    w_scale: f32,
    layer_idx: usize,
    tile_row: usize,
    tile_col: usize,
    tile_params: &CrossbarParams,
    pipeline: &PipelineConfig,
    dac: &DacConfig,
    variation: Option<&VariationConfig>,
) -> Result<MappedTile> {
    let (fan_in, fan_out) = w.dim();
    let row0 = tile_row * pipeline.tile_rows;
    let col0 = tile_col * pipeline.logical_cols();
    let rows_used = pipeline.tile_rows.min(fan_in - row0);
    let cols_used = pipeline.logical_cols().min(fan_out - col0);

    // program the tile: differential pair per logical column, unused
    // crosspoints parked at logical zero
    let mut g_quant = ConductanceMatrix::uniform(
        pipeline.tile_rows,
        pipeline.tile_cols,
        tile_params.g_min,
    );
    for r in 0..rows_used {
        for c in 0..cols_used {
            let (gp, gm) = weight_to_conductance(
                w[(row0 + r, col0 + c)] as f64,
                w_scale as f64,
                tile_params,
            )
            .map_err(Error::Core)?;
            *g_quant.at_mut(r, 2 * c) = gp;
            *g_quant.at_mut(r, 2 * c + 1) = gm;
        }
    }

    let g_built = match variation {
        Some(cfg) => {
            // stable per-tile stream: reprogramming a tile redraws the same
            // device-level variation
            let tile_seed = cfg
                .seed
                .wrapping_add((layer_idx as u64) << 40)
                .wrapping_add((tile_row as u64) << 20)
                .wrapping_add(tile_col as u64);
            let cfg = VariationConfig {
                seed: tile_seed,
                ..cfg.clone()
            };
            apply_variation(&g_quant, &cfg, tile_params).map_err(Error::Core)?
        }
        None => g_quant.clone(),
    };

    let xbar = build_nonideal(&g_built, tile_params).map_err(Error::Core)?;

    let g_nonideal_f32 = Array2::from_shape_fn(
        (pipeline.tile_rows, pipeline.tile_cols),
        |(r, c)| xbar.g_non_ideal().at(r, c) as f32,
    );
    let g_quant_f32 = Array2::from_shape_fn(
        (pipeline.tile_rows, pipeline.tile_cols),
        |(r, c)| g_quant.at(r, c) as f32,
    );
    let dac_lut = build_dac_lut(&xbar, pipeline, dac)?;

    Ok(MappedTile {
        row0,
        rows_used,
        col0,
        cols_used,
        g_quant,
        xbar,
        g_nonideal_f32,
        g_quant_f32,
        dac_lut,
    })
}

pub(crate) fn build_dac_lut(
    xbar: &NonIdealCrossbar,
    pipeline: &PipelineConfig,
    dac: &DacConfig,
) -> Result<Array2<f32>> {
    let levels = pipeline.dac_levels() as usize;
    let rows = xbar.rows();
    let loads: Vec<f64> = match pipeline.g_load_mode {
        GLoadMode::DrivingPoint => xbar.g_load().to_vec(),
        GLoadMode::RowSum => xbar.g_load_row_sum(),
    };
    let mut lut = Array2::<f32>::zeros((rows, levels));
    for r in 0..rows {
        for code in 0..levels {
            let v = if pipeline.ideal_dac {
                dac_ideal(code as u32, dac).map_err(Error::Core)?
            } else {
                dac_convert(code as u32, loads[r], dac).map_err(Error::Core)?
            };
            lut[(r, code)] = v as f32;
        }
    }
    Ok(lut)
}

/// Reconstruct the quantized weight matrix a mapped layer realizes, reading
/// the differential conductance pairs back through the inverse device map.
pub fn reconstruct_weights(layer: &MappedLayer, tile_params: &CrossbarParams) -> Array2<f32> {
    let mut w = Array2::<f32>::zeros((layer.fan_in, layer.fan_out));
    for tile in &layer.tiles {
        for r in 0..tile.rows_used {
            for c in 0..tile.cols_used {
                let gp = tile.g_quant.at(r, 2 * c);
                let gm = tile.g_quant.at(r, 2 * c + 1);
                w[(tile.row0 + r, tile.col0 + c)] = xbar_core::converters::conductance_to_weight(
                    gp,
                    gm,
                    layer.w_scale as f64,
                    tile_params,
                ) as f32;
            }
        }
    }
    w
}
