//! Activation quantization to DAC codes and per-layer scale calibration.

use ndarray::Array4;

use xbar_core::energy::EnergyLedger;

use crate::error::{Error, Result};
use crate::network::{forward_with, FpBackend, ForwardTrace, LayerCache, Network};

/// Nonnegative activation to a DAC code: `clamp(round(x / a_scale * (L-1)))`.
#[inline]
pub fn activation_code(x: f32, a_scale: f32, levels: u32) -> u16 {
    let top = (levels - 1) as f32;
    let v = (x / a_scale * top).round();
    v.clamp(0.0, top) as u16
}

/// Calibrate per-layer activation scales as a high quantile of the absolute
/// activation magnitudes seen at each mappable layer's input over a
/// calibration set. Two passes: per-layer maxima, then fixed-bin histograms.
///
/// Returns one entry per layer, `None` for host layers.
pub fn calibrate_a_scales(
    net: &Network,
    images: &Array4<f32>,
    batch_size: usize,
    percentile: f64,
) -> Result<Vec<Option<f32>>> {
    if !(0.0 < percentile && percentile <= 1.0) {
        return Err(Error::Spec(format!(
            "percentile must be in (0, 1], got {percentile}"
        )));
    }
    let n_layers = net.spec.layers.len();
    let mappable: Vec<bool> = net.spec.layers.iter().map(|l| l.mappable()).collect();
    let n = images.dim().0;
    if n == 0 {
        return Err(Error::Spec("empty calibration set".into()));
    }
    let backend = FpBackend { net };

    const BINS: usize = 8192;
    let mut maxes = vec![0.0f32; n_layers];
    let mut hists = vec![vec![0u64; BINS]; n_layers];
    let mut counts = vec![0u64; n_layers];

    for pass in 0..2 {
        let mut start = 0;
        while start < n {
            let stop = (start + batch_size).min(n);
            let batch = images
                .slice(ndarray::s![start..stop, .., .., ..])
                .to_owned();
            let mut trace = ForwardTrace { caches: Vec::new() };
            let mut ledger = EnergyLedger::default();
            forward_with(net, &backend, &batch, &mut ledger, Some(&mut trace))?;
            for (idx, cache) in trace.caches.iter().enumerate() {
                if !mappable[idx] {
                    continue;
                }
                if let LayerCache::Mappable { x_col, .. } = cache {
                    if pass == 0 {
                        for &v in x_col.iter() {
                            maxes[idx] = maxes[idx].max(v.abs());
                        }
                    } else {
                        let m = maxes[idx].max(f32::MIN_POSITIVE);
                        for &v in x_col.iter() {
                            let bin = ((v.abs() / m) * BINS as f32) as usize;
                            hists[idx][bin.min(BINS - 1)] += 1;
                            counts[idx] += 1;
                        }
                    }
                }
            }
            start = stop;
        }
    }

    let mut scales = vec![None; n_layers];
    for idx in 0..n_layers {
        if !mappable[idx] {
            continue;
        }
        if maxes[idx] == 0.0 {
            scales[idx] = Some(1.0);
            continue;
        }
        let target = (percentile * counts[idx] as f64).ceil() as u64;
        let mut seen = 0u64;
        let mut edge = maxes[idx];
        for (b, &c) in hists[idx].iter().enumerate() {
            seen += c;
            if seen >= target {
                edge = maxes[idx] * ((b + 1) as f32 / BINS as f32);
                break;
            }
        }
        scales[idx] = Some(edge);
    }
    Ok(scales)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_clamp_and_round() {
        assert_eq!(activation_code(0.0, 1.0, 64), 0);
        assert_eq!(activation_code(1.0, 1.0, 64), 63);
        assert_eq!(activation_code(2.0, 1.0, 64), 63);
        assert_eq!(activation_code(-1.0, 1.0, 64), 0);
        assert_eq!(activation_code(0.5, 1.0, 64), 32); // 31.5 rounds away
    }
}
