//! Binary containers: layer weights and mapped tile sets.
//!
//! Weights (`XBWT`): version, layer count, then per layer a presence flag
//! and, when present, a shape header (`rows`, `cols` as u32) followed by
//! row-major 32-bit weights and the bias vector. The network structure
//! itself travels as the text format next to the weights.
//!
//! Tiles (`XBTL`): everything needed to evaluate without remapping — the
//! network text, crossbar parameters, pipeline configuration, per-layer
//! scales and biases, and every tile's programmed state plus reduced model.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use xbar_core::converters::{AdcConfig, GLoadMode, VariationConfig};
use xbar_core::matrix::ConductanceMatrix;
use xbar_core::nonideal::NonIdealCrossbar;
use xbar_core::params::CrossbarParams;

use crate::error::{Error, Result};
use crate::layers::NetworkSpec;
use crate::mapping::{build_dac_lut, dac_config, MappedLayer, MappedNetwork, MappedTile, PipelineConfig};
use crate::network::{LayerParams, Network};

const WEIGHTS_MAGIC: &[u8; 4] = b"XBWT";
const TILES_MAGIC: &[u8; 4] = b"XBTL";
const VERSION: u32 = 1;

fn w_u32<W: Write>(out: &mut W, v: u32) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_u64<W: Write>(out: &mut W, v: u64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_f32<W: Write>(out: &mut W, v: f32) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_f64<W: Write>(out: &mut W, v: f64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn r_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn r_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn r_f32<R: Read>(input: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn r_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn check_magic<R: Read>(input: &mut R, want: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    input.read_exact(&mut m)?;
    if &m != want {
        return Err(Error::Format(format!("bad magic {m:?}, expected {want:?}")));
    }
    let v = r_u32(input)?;
    if v != VERSION {
        return Err(Error::Format(format!("unsupported version {v}")));
    }
    Ok(())
}

pub fn write_weights<W: Write>(net: &Network, mut out: W) -> Result<()> {
    out.write_all(WEIGHTS_MAGIC)?;
    w_u32(&mut out, VERSION)?;
    w_u32(&mut out, net.params.len() as u32)?;
    for p in &net.params {
        match p {
            None => out.write_all(&[0u8])?,
            Some(lp) => {
                out.write_all(&[1u8])?;
                let (rows, cols) = lp.w.dim();
                w_u32(&mut out, rows as u32)?;
                w_u32(&mut out, cols as u32)?;
                for v in lp.w.iter() {
                    w_f32(&mut out, *v)?;
                }
                for v in lp.b.iter() {
                    w_f32(&mut out, *v)?;
                }
            }
        }
    }
    Ok(())
}

/// Read weights for a known network structure; shapes must match the spec.
pub fn read_weights<R: Read>(spec: &NetworkSpec, mut input: R) -> Result<Network> {
    check_magic(&mut input, WEIGHTS_MAGIC)?;
    let n = r_u32(&mut input)? as usize;
    let dims = spec.matrix_dims()?;
    if n != dims.len() {
        return Err(Error::Format(format!(
            "container has {n} layers, network has {}",
            dims.len()
        )));
    }
    let mut params = Vec::with_capacity(n);
    for (idx, d) in dims.iter().enumerate() {
        let mut flag = [0u8; 1];
        input.read_exact(&mut flag)?;
        match (flag[0], d) {
            (0, None) => params.push(None),
            (1, Some((fan_in, fan_out))) => {
                let rows = r_u32(&mut input)? as usize;
                let cols = r_u32(&mut input)? as usize;
                if (rows, cols) != (*fan_in, *fan_out) {
                    return Err(Error::Format(format!(
                        "layer {idx}: weights are {rows}x{cols}, network wants {fan_in}x{fan_out}"
                    )));
                }
                let mut w = Vec::with_capacity(rows * cols);
                for _ in 0..rows * cols {
                    w.push(r_f32(&mut input)?);
                }
                let mut b = Vec::with_capacity(cols);
                for _ in 0..cols {
                    b.push(r_f32(&mut input)?);
                }
                params.push(Some(LayerParams {
                    w: Array2::from_shape_vec((rows, cols), w)
                        .map_err(|e| Error::Format(e.to_string()))?,
                    b: Array1::from_vec(b),
                }));
            }
            (f, _) => {
                return Err(Error::Format(format!(
                    "layer {idx}: presence flag {f} disagrees with network structure"
                )))
            }
        }
    }
    Ok(Network {
        spec: spec.clone(),
        params,
    })
}

fn write_params_block<W: Write>(p: &CrossbarParams, out: &mut W) -> Result<()> {
    w_u32(out, p.rows as u32)?;
    w_u32(out, p.cols as u32)?;
    for v in [p.r_row, p.r_col, p.r_sense, p.r_driver, p.g_min, p.g_max, p.v_read] {
        w_f64(out, v)?;
    }
    w_u32(out, p.device_bits)?;
    Ok(())
}

fn read_params_block<R: Read>(input: &mut R) -> Result<CrossbarParams> {
    let rows = r_u32(input)? as usize;
    let cols = r_u32(input)? as usize;
    let r_row = r_f64(input)?;
    let r_col = r_f64(input)?;
    let r_sense = r_f64(input)?;
    let r_driver = r_f64(input)?;
    let g_min = r_f64(input)?;
    let g_max = r_f64(input)?;
    let v_read = r_f64(input)?;
    let device_bits = r_u32(input)?;
    let p = CrossbarParams {
        rows,
        cols,
        r_row,
        r_col,
        r_sense,
        r_driver,
        g_min,
        g_max,
        device_bits,
        v_read,
    };
    p.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(p)
}

/// Everything `eval` needs in one container: host network, tiles, scales.
pub fn write_tiles<W: Write>(net: &Network, mapped: &MappedNetwork, mut out: W) -> Result<()> {
    out.write_all(TILES_MAGIC)?;
    w_u32(&mut out, VERSION)?;
    let spec_text = net.spec.to_text();
    w_u32(&mut out, spec_text.len() as u32)?;
    out.write_all(spec_text.as_bytes())?;

    write_params_block(&mapped.tile_params, &mut out)?;
    let pl = &mapped.pipeline;
    w_u32(&mut out, pl.tile_rows as u32)?;
    w_u32(&mut out, pl.tile_cols as u32)?;
    w_u32(&mut out, pl.dac_bits)?;
    w_u32(&mut out, pl.adc_bits)?;
    w_f64(&mut out, pl.r_pd)?;
    out.write_all(&[matches!(pl.g_load_mode, GLoadMode::RowSum) as u8])?;
    out.write_all(&[pl.ideal_dac as u8])?;
    w_u64(&mut out, pl.tile_budget as u64)?;

    match &mapped.variation {
        None => out.write_all(&[0u8])?,
        Some(v) => {
            out.write_all(&[1u8])?;
            w_f64(&mut out, v.sigma_over_mu)?;
            out.write_all(&[v.clamp as u8])?;
            w_u64(&mut out, v.seed)?;
        }
    }

    w_u32(&mut out, mapped.layers.len() as u32)?;
    for (idx, layer) in mapped.layers.iter().enumerate() {
        match layer {
            None => out.write_all(&[0u8])?,
            Some(ml) => {
                out.write_all(&[1u8])?;
                w_u32(&mut out, ml.layer_idx as u32)?;
                w_u32(&mut out, ml.fan_in as u32)?;
                w_u32(&mut out, ml.fan_out as u32)?;
                w_f32(&mut out, ml.w_scale)?;
                w_f32(&mut out, ml.a_scale)?;
                w_u32(&mut out, ml.grid.0 as u32)?;
                w_u32(&mut out, ml.grid.1 as u32)?;
                w_u32(&mut out, ml.adc.bits)?;
                w_f64(&mut out, ml.adc.i_full_scale)?;
                w_f64(&mut out, ml.adc.offset)?;
                w_f32(&mut out, ml.dequant)?;
                // host bias
                let bias = &net.layer_params(idx)?.b;
                w_u32(&mut out, bias.len() as u32)?;
                for v in bias.iter() {
                    w_f32(&mut out, *v)?;
                }
                w_u32(&mut out, ml.tiles.len() as u32)?;
                for t in &ml.tiles {
                    w_u32(&mut out, t.row0 as u32)?;
                    w_u32(&mut out, t.rows_used as u32)?;
                    w_u32(&mut out, t.col0 as u32)?;
                    w_u32(&mut out, t.cols_used as u32)?;
                    // programmed (pre-variation) state, then the reduced model
                    for v in t.g_quant.as_slice() {
                        w_f64(&mut out, *v)?;
                    }
                    t.xbar.write_to(&mut out).map_err(Error::Core)?;
                }
            }
        }
    }
    Ok(())
}

/// Load a tile container, rebuilding the lookup tables and f32 mirrors.
/// Returns the host network (weights absent — biases only, which is all
/// inference needs) and the mapped network.
pub fn read_tiles<R: Read>(mut input: R) -> Result<(Network, MappedNetwork)> {
    check_magic(&mut input, TILES_MAGIC)?;
    let spec_len = r_u32(&mut input)? as usize;
    if spec_len > (1 << 20) {
        return Err(Error::Format("implausible spec text length".into()));
    }
    let mut спубspec = vec![0u8; spec_len];
    input.read_exact(&mut спубspec)?;
    let spec_text =
        String::from_utf8(спубspec).map_err(|e| Error::Format(e.to_string()))?;
    let spec = NetworkSpec::parse(&spec_text)?;

    let tile_params = read_params_block(&mut input)?;
    let tile_rows = r_u32(&mut input)? as usize;
    let tile_cols = r_u32(&mut input)? as usize;
    let dac_bits = r_u32(&mut input)?;
    let adc_bits = r_u32(&mut input)?;
    let r_pd = r_f64(&mut input)?;
    let mut flags = [0u8; 2];
    input.read_exact(&mut flags)?;
    let tile_budget = r_u64(&mut input)? as usize;
    let pipeline = PipelineConfig {
        tile_rows,
        tile_cols,
        dac_bits,
        adc_bits,
        r_pd,
        g_load_mode: if flags[0] != 0 {
            GLoadMode::RowSum
        } else {
            GLoadMode::DrivingPoint
        },
        ideal_dac: flags[1] != 0,
        tile_budget,
    };
    pipeline.validate()?;

    let mut vflag = [0u8; 1];
    input.read_exact(&mut vflag)?;
    let variation = if vflag[0] != 0 {
        let sigma_over_mu = r_f64(&mut input)?;
        let mut clamp = [0u8; 1];
        input.read_exact(&mut clamp)?;
        let seed = r_u64(&mut input)?;
        Some(VariationConfig {
            sigma_over_mu,
            clamp: clamp[0] != 0,
            seed,
        })
    } else {
        None
    };

    let n_layers = r_u32(&mut input)? as usize;
    let dims = spec.matrix_dims()?;
    if n_layers != dims.len() {
        return Err(Error::Format(format!(
            "tile container has {n_layers} layers, network has {}",
            dims.len()
        )));
    }

    let dac = dac_config(&tile_params, &pipeline);
    let mut layers = Vec::with_capacity(n_layers);
    let mut host_params: Vec<Option<LayerParams>> = vec![None; n_layers];
    for idx in 0..n_layers {
        let mut flag = [0u8; 1];
        input.read_exact(&mut flag)?;
        if flag[0] == 0 {
            layers.push(None);
            continue;
        }
        let layer_idx = r_u32(&mut input)? as usize;
        let fan_in = r_u32(&mut input)? as usize;
        let fan_out = r_u32(&mut input)? as usize;
        if dims[idx] != Some((fan_in, fan_out)) {
            return Err(Error::Format(format!(
                "layer {idx}: container dims ({fan_in},{fan_out}) disagree with network"
            )));
        }
        let w_scale = r_f32(&mut input)?;
        let a_scale = r_f32(&mut input)?;
        let grid = (r_u32(&mut input)? as usize, r_u32(&mut input)? as usize);
        let adc = AdcConfig {
            bits: r_u32(&mut input)?,
            i_full_scale: r_f64(&mut input)?,
            offset: r_f64(&mut input)?,
        };
        adc.validate().map_err(Error::Core)?;
        let dequant = r_f32(&mut input)?;
        let bias_len = r_u32(&mut input)? as usize;
        if bias_len != fan_out {
            return Err(Error::Format(format!(
                "layer {idx}: bias length {bias_len} != fan_out {fan_out}"
            )));
        }
        let mut bias = Vec::with_capacity(bias_len);
        for _ in 0..bias_len {
            bias.push(r_f32(&mut input)?);
        }
        host_params[idx] = Some(LayerParams {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::from_vec(bias),
        });
        let n_tiles = r_u32(&mut input)? as usize;
        if n_tiles != grid.0 * grid.1 || n_tiles > pipeline.tile_budget {
            return Err(Error::Format(format!(
                "layer {idx}: tile count {n_tiles} disagrees with grid {grid:?}"
            )));
        }
        let mut tiles = Vec::with_capacity(n_tiles);
        for _ in 0..n_tiles {
            let row0 = r_u32(&mut input)? as usize;
            let rows_used = r_u32(&mut input)? as usize;
            let col0 = r_u32(&mut input)? as usize;
            let cols_used = r_u32(&mut input)? as usize;
            let mut gq = Vec::with_capacity(tile_rows * tile_cols);
            for _ in 0..tile_rows * tile_cols {
                gq.push(r_f64(&mut input)?);
            }
            let g_quant = ConductanceMatrix::from_vec(tile_rows, tile_cols, gq)
                .map_err(Error::Core)?;
            let xbar = NonIdealCrossbar::read_from(&mut input).map_err(Error::Core)?;
            if xbar.rows() != tile_rows || xbar.cols() != tile_cols {
                return Err(Error::Format("tile model dims disagree".into()));
            }
            let g_nonideal_f32 = Array2::from_shape_fn((tile_rows, tile_cols), |(r, c)| {
                xbar.g_non_ideal().at(r, c) as f32
            });
            let g_quant_f32 = Array2::from_shape_fn((tile_rows, tile_cols), |(r, c)| {
                g_quant.at(r, c) as f32
            });
            let dac_lut = build_dac_lut(&xbar, &pipeline, &dac)?;
            tiles.push(MappedTile {
                row0,
                rows_used,
                col0,
                cols_used,
                g_quant,
                xbar,
                g_nonideal_f32,
                g_quant_f32,
                dac_lut,
            });
        }
        layers.push(Some(MappedLayer {
            layer_idx,
            fan_in,
            fan_out,
            w_scale,
            a_scale,
            grid,
            tiles,
            adc,
            dequant,
        }));
    }

    let net = Network {
        spec,
        params: host_params,
    };
    let mapped = MappedNetwork {
        tile_params,
        pipeline,
        variation,
        layers,
    };
    Ok((net, mapped))
}
