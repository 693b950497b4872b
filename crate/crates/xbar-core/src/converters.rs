//! Peripheral models: the data-dependent DAC divider, the saturating ADC
//! quantizer, differential weight-to-conductance mapping and device
//! variation sampling.

#[cfg(test)]
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{self, KvMap};
use crate::error::{Error, Result};
use crate::matrix::ConductanceMatrix;
use crate::params::CrossbarParams;

/// Resistive-divider DAC. One resistance (`r_dac_levels[din]`) varies with
/// the applied digital code, the pull-down `r_pd` is fixed, and the output
/// node additionally sees the crossbar row as a resistive load, so the
/// transfer depends on both the code and the programmed crossbar state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DacConfig {
    pub bits: u32,
    pub vdd: f64,
    pub r_pd: f64,
    /// One series resistance per digital code, non-increasing in the code so
    /// the output voltage is monotone. `+inf` encodes an open switch
    /// (code 0 outputs exactly 0 V).
    pub r_dac_levels: Vec<f64>,
    /// Fold the row driver resistance into the series branch.
    pub include_driver: bool,
    /// Driver resistance used when `include_driver` is set, ohms.
    pub r_driver: f64,
}

impl DacConfig {
    /// Ladder whose unloaded output is exactly linear in the code:
    /// `out(d) = vdd * d / (2^bits - 1)` when nothing loads the divider.
    pub fn linear_ladder(bits: u32, vdd: f64, r_pd: f64) -> Self {
        let levels = 1usize << bits;
        let top = (levels - 1) as f64;
        let r_dac_levels = (0..levels)
            .map(|d| {
                if d == 0 {
                    f64::INFINITY
                } else {
                    r_pd * (top - d as f64) / d as f64
                }
            })
            .collect();
        DacConfig {
            bits,
            vdd,
            r_pd,
            r_dac_levels,
            include_driver: false,
            r_driver: 0.0,
        }
    }

    pub fn with_driver(mut self, r_driver: f64) -> Self {
        self.include_driver = true;
        self.r_driver = r_driver;
        self
    }

    pub fn levels(&self) -> usize {
        1usize << self.bits
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits < 1 || self.bits > 16 {
            return Err(Error::InvalidParams(format!(
                "DAC bits must be in [1, 16], got {}",
                self.bits
            )));
        }
        if self.r_dac_levels.len() != self.levels() {
            return Err(Error::InvalidParams(format!(
                "r_dac_levels has {} entries, expected 2^{} = {}",
                self.r_dac_levels.len(),
                self.bits,
                self.levels()
            )));
        }
        if !(self.r_pd.is_finite() && self.r_pd > 0.0) {
            return Err(Error::InvalidParams(format!(
                "r_pd must be finite and > 0, got {}",
                self.r_pd
            )));
        }
        if !self.vdd.is_finite() {
            return Err(Error::InvalidParams("vdd must be finite".into()));
        }
        if self.include_driver && !(self.r_driver.is_finite() && self.r_driver >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "r_driver must be finite and >= 0, got {}",
                self.r_driver
            )));
        }
        for (d, &r) in self.r_dac_levels.iter().enumerate() {
            if r.is_nan() || r < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "r_dac_levels[{d}] must be >= 0, got {r}"
                )));
            }
            if d > 0 && r > self.r_dac_levels[d - 1] {
                return Err(Error::InvalidParams(format!(
                    "r_dac_levels must be non-increasing (violated at code {d})"
                )));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut map = KvMap::new();
        map.insert("bits".into(), self.bits.to_string());
        map.insert("vdd".into(), self.vdd.to_string());
        map.insert("r_pd".into(), self.r_pd.to_string());
        let ladder = DacConfig::linear_ladder(self.bits, self.vdd, self.r_pd);
        if ladder.r_dac_levels == self.r_dac_levels {
            map.insert("r_dac_levels".into(), "linear".into());
        } else {
            map.insert(
                "r_dac_levels".into(),
                self.r_dac_levels
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        map.insert("include_driver".into(), self.include_driver.to_string());
        map.insert("r_driver".into(), self.r_driver.to_string());
        map
    }

    pub fn from_kv(map: &KvMap) -> Result<Self> {
        let bits = config::get_usize(map, "bits")?.unwrap_or(6) as u32;
        let vdd = config::get_f64(map, "vdd")?.unwrap_or(0.2);
        let r_pd = config::get_f64(map, "r_pd")?.unwrap_or(500.0);
        let mut cfg = DacConfig::linear_ladder(bits, vdd, r_pd);
        if let Some(spec) = map.get("r_dac_levels") {
            if spec != "linear" {
                cfg.r_dac_levels = spec
                    .split(',')
                    .map(|s| {
                        let s = s.trim();
                        if s == "inf" {
                            Ok(f64::INFINITY)
                        } else {
                            s.parse::<f64>().map_err(|_| {
                                Error::Config(format!("r_dac_levels: bad entry {s:?}"))
                            })
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
            }
        }
        if let Some(v) = config::get_bool(map, "include_driver")? {
            cfg.include_driver = v;
        }
        if let Some(v) = config::get_f64(map, "r_driver")? {
            cfg.r_driver = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Loaded divider output for a digital code.
///
/// Network: `vdd --R_series-- out --(R_PD || R_Load)-- ground` with
/// `R_series = R_DAC(din)` plus the driver resistance when folded in, and
/// `R_Load = 1 / g_load_row` presented by the crossbar row.
pub fn dac_convert(din: u32, g_load_row: f64, cfg: &DacConfig) -> Result<f64> {
    if din as usize >= cfg.levels() {
        return Err(Error::InvalidParams(format!(
            "DAC code {din} out of range for {} bits",
            cfg.bits
        )));
    }
    if !(g_load_row.is_finite() && g_load_row > 0.0) {
        return Err(Error::InvalidParams(format!(
            "row load conductance must be finite and > 0, got {g_load_row}"
        )));
    }
    let mut r_series = cfg.r_dac_levels[din as usize];
    if cfg.include_driver {
        r_series += cfg.r_driver;
    }
    // parallel combination written load-conductance first so an unloaded
    // divider (g -> 0) degrades gracefully
    let p = cfg.r_pd / (1.0 + cfg.r_pd * g_load_row);
    if r_series == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(cfg.vdd * p / (r_series + p))
}

/// Ideal transfer of the same DAC: linear in the code, independent of load.
pub fn dac_ideal(din: u32, cfg: &DacConfig) -> Result<f64> {
    if din as usize >= cfg.levels() {
        return Err(Error::InvalidParams(format!(
            "DAC code {din} out of range for {} bits",
            cfg.bits
        )));
    }
    Ok(cfg.vdd * din as f64 / (cfg.levels() - 1) as f64)
}

/// Uniform saturating ADC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub bits: u32,
    pub i_full_scale: f64,
    pub offset: f64,
}

impl AdcConfig {
    pub fn new(bits: u32, i_full_scale: f64, offset: f64) -> Self {
        AdcConfig {
            bits,
            i_full_scale,
            offset,
        }
    }

    /// Default single-ended range: worst-case single-column current
    /// `v_read * G_max * M`.
    pub fn for_params(bits: u32, params: &CrossbarParams) -> Self {
        AdcConfig {
            bits,
            i_full_scale: params.v_read * params.g_max * params.rows as f64,
            offset: 0.0,
        }
    }

    /// Signed range for differential column pairs: codes span
    /// `[-i_max, +i_max]` with `i_max = v_read * G_max * M`.
    pub fn differential(bits: u32, params: &CrossbarParams) -> Self {
        let i_max = params.v_read * params.g_max * params.rows as f64;
        AdcConfig {
            bits,
            i_full_scale: 2.0 * i_max,
            offset: -i_max,
        }
    }

    pub fn max_code(&self) -> u32 {
        ((1u64 << self.bits) - 1) as u32
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits < 1 || self.bits > 30 {
            return Err(Error::InvalidParams(format!(
                "ADC bits must be in [1, 30], got {}",
                self.bits
            )));
        }
        if !(self.i_full_scale.is_finite() && self.i_full_scale > 0.0) {
            return Err(Error::InvalidParams(format!(
                "i_full_scale must be finite and > 0, got {}",
                self.i_full_scale
            )));
        }
        if !self.offset.is_finite() {
            return Err(Error::InvalidParams("offset must be finite".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut map = KvMap::new();
        map.insert("bits".into(), self.bits.to_string());
        map.insert("i_full_scale".into(), self.i_full_scale.to_string());
        map.insert("offset".into(), self.offset.to_string());
        map
    }

    pub fn from_kv(map: &KvMap) -> Result<Self> {
        let cfg = AdcConfig {
            bits: config::get_usize(map, "bits")?.unwrap_or(8) as u32,
            i_full_scale: config::get_f64(map, "i_full_scale")?
                .ok_or_else(|| Error::Config("ADC config needs i_full_scale".into()))?,
            offset: config::get_f64(map, "offset")?.unwrap_or(0.0),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Quantize a current to a digital code: mid-rise uniform quantizer,
/// round-half-away-from-zero, saturating at both rails.
pub fn adc_convert(i_out: f64, cfg: &AdcConfig) -> u32 {
    let max_code = cfg.max_code() as f64;
    let scaled = (i_out - cfg.offset) / cfg.i_full_scale * max_code;
    if !scaled.is_finite() {
        return if scaled == f64::NEG_INFINITY { 0 } else { cfg.max_code() };
    }
    scaled.round().clamp(0.0, max_code) as u32
}

/// Current represented by a code (the quantizer's reconstruction level).
pub fn adc_reconstruct(code: u32, cfg: &AdcConfig) -> f64 {
    cfg.offset + code as f64 / cfg.max_code() as f64 * cfg.i_full_scale
}

fn quantize_conductance(g: f64, params: &CrossbarParams) -> f64 {
    let levels = params.device_levels();
    let step = (params.g_max - params.g_min) / (levels - 1) as f64;
    let level = ((g - params.g_min) / step).round().clamp(0.0, (levels - 1) as f64);
    params.g_min + level * step
}

/// Map a signed weight onto a differential conductance pair: the positive
/// part programs the plus column, the magnitude of the negative part the
/// minus column, each snapped to the `2^device_bits` uniform levels. The
/// logical output current is `i_plus - i_minus`.
pub fn weight_to_conductance(
    w: f64,
    w_scale: f64,
    params: &CrossbarParams,
) -> Result<(f64, f64)> {
    if !w.is_finite() {
        return Err(Error::NonFinite(format!("weight {w}")));
    }
    if !(w_scale.is_finite() && w_scale > 0.0) {
        return Err(Error::InvalidParams(format!(
            "w_scale must be finite and > 0, got {w_scale}"
        )));
    }
    if w.abs() > w_scale * (1.0 + 1e-12) {
        return Err(Error::InvalidParams(format!(
            "|w| = {} exceeds w_scale = {w_scale}",
            w.abs()
        )));
    }
    let span = params.g_max - params.g_min;
    let g_plus = quantize_conductance(params.g_min + w.max(0.0) / w_scale * span, params);
    let g_minus = quantize_conductance(params.g_min + (-w).max(0.0) / w_scale * span, params);
    Ok((g_plus, g_minus))
}

/// Inverse affine map of [`weight_to_conductance`].
pub fn conductance_to_weight(
    g_plus: f64,
    g_minus: f64,
    w_scale: f64,
    params: &CrossbarParams,
) -> f64 {
    (g_plus - g_minus) / (params.g_max - params.g_min) * w_scale
}

/// Which load conductance feeds the DAC divider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GLoadMode {
    /// Exact driving-point conductance recorded during the reduction.
    #[default]
    DrivingPoint,
    /// Row sums of the effective conductance matrix (exact under uniform
    /// drive on all rows).
    RowSum,
}

/// Multiplicative Gaussian conductance variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationConfig {
    /// Relative spread of the conductance distribution.
    pub sigma_over_mu: f64,
    /// Clip the varied conductances back to `[G_min, G_max]`.
    pub clamp: bool,
    pub seed: u64,
}

impl Default for VariationConfig {
    fn default() -> Self {
        VariationConfig {
            sigma_over_mu: 0.10,
            clamp: true,
            seed: 0,
        }
    }
}

impl VariationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_over_mu.is_finite() && self.sigma_over_mu >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "sigma_over_mu must be finite and >= 0, got {}",
                self.sigma_over_mu
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut map = KvMap::new();
        map.insert("sigma_over_mu".into(), self.sigma_over_mu.to_string());
        map.insert("clamp".into(), self.clamp.to_string());
        map.insert("seed".into(), self.seed.to_string());
        map
    }

    pub fn from_kv(map: &KvMap) -> Result<Self> {
        let mut cfg = VariationConfig::default();
        if let Some(v) = config::get_f64(map, "sigma_over_mu")? {
            cfg.sigma_over_mu = v;
        }
        if let Some(v) = config::get_bool(map, "clamp")? {
            cfg.clamp = v;
        }
        if let Some(v) = config::get_u64(map, "seed")? {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Scale every entry by an independent factor `N(1, sigma_over_mu)`
/// truncated at three sigma, then clamp to the programmable window when
/// requested. Deterministic under a fixed seed.
pub fn apply_variation(
    g: &ConductanceMatrix,
    cfg: &VariationConfig,
    params: &CrossbarParams,
) -> Result<ConductanceMatrix> {
    cfg.validate()?;
    let mut out = g.clone();
    if cfg.sigma_over_mu == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sample_trunc = || loop {
        let z: f64 = StandardNormal.sample(&mut rng);
        if z.abs() <= 3.0 {
            return z;
        }
    };
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let factor = (1.0 + cfg.sigma_over_mu * sample_trunc()).max(0.0);
            let mut v = g.at(i, j) * factor;
            if cfg.clamp {
                v = v.clamp(params.g_min, params.g_max);
            }
            *out.at_mut(i, j) = v;
        }
    }
    if !cfg.clamp {
        out.set_analysis(true);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dac() -> DacConfig {
        DacConfig::linear_ladder(6, 0.2, 500.0)
    }

    #[test]
    fn unloaded_ladder_is_linear() {
        let cfg = dac();
        // nearly-unloaded divider: R_Load of 1 Gohm
        for d in 0..cfg.levels() as u32 {
            let v = dac_convert(d, 1e-9, &cfg).unwrap();
            let ideal = dac_ideal(d, &cfg).unwrap();
            assert!(
                (v - ideal).abs() < 1e-6 * cfg.vdd,
                "code {d}: {v} vs {ideal}"
            );
        }
    }

    #[test]
    fn zero_series_resistance_gives_vdd() {
        let mut cfg = dac();
        let top = cfg.levels() - 1;
        cfg.r_dac_levels[top] = 0.0;
        let v = dac_convert(top as u32, 1.0 / 3200.0, &cfg).unwrap();
        assert_eq!(v, cfg.vdd);
    }

    #[test]
    fn heavier_load_strictly_lower() {
        // two load resistances, 3.2k and 32k: distinct curves, the heavier
        // load strictly lower. Exception: the ladder's top code has zero
        // series resistance, so without a driver the load cannot act there.
        let cfg = dac();
        let top = cfg.levels() as u32 - 1;
        for d in 1..top {
            let v_heavy = dac_convert(d, 1.0 / 3.2e3, &cfg).unwrap();
            let v_light = dac_convert(d, 1.0 / 32e3, &cfg).unwrap();
            assert!(v_heavy < v_light, "code {d}: {v_heavy} !< {v_light}");
        }
        // with the driver folded in, strict at every nonzero code
        let cfg = dac().with_driver(1e3);
        for d in 1..=top {
            let v_heavy = dac_convert(d, 1.0 / 3.2e3, &cfg).unwrap();
            let v_light = dac_convert(d, 1.0 / 32e3, &cfg).unwrap();
            assert!(v_heavy < v_light, "code {d}: {v_heavy} !< {v_light}");
        }
    }

    #[test]
    fn dac_monotone_in_code_and_load() {
        let cfg = dac().with_driver(1e3);
        let mut prev = -1.0;
        for d in 0..cfg.levels() as u32 {
            let v = dac_convert(d, 1.0 / 5e3, &cfg).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn dac_code_out_of_range() {
        assert!(dac_convert(64, 1e-4, &dac()).is_err());
    }

    #[test]
    fn adc_endpoints_and_midpoint() {
        let cfg = AdcConfig::new(6, 1e-3, 2e-5);
        assert_eq!(adc_convert(cfg.offset, &cfg), 0);
        assert_eq!(adc_convert(cfg.offset + cfg.i_full_scale, &cfg), 63);
        // half scale lands on 31.5 and rounds half away from zero to 32
        assert_eq!(adc_convert(cfg.offset + cfg.i_full_scale / 2.0, &cfg), 32);
    }

    #[test]
    fn adc_saturates() {
        let cfg = AdcConfig::new(4, 1e-3, 0.0);
        assert_eq!(adc_convert(-1.0, &cfg), 0);
        assert_eq!(adc_convert(1.0, &cfg), 15);
    }

    #[test]
    fn adc_idempotent_on_reconstructed() {
        let cfg = AdcConfig::new(8, 2e-3, -1e-3);
        for code in [0u32, 1, 31, 200, 255] {
            let i = adc_reconstruct(code, &cfg);
            assert_eq!(adc_convert(i, &cfg), code);
        }
    }

    #[test]
    fn weight_mapping_endpoints() {
        let p = CrossbarParams::default();
        assert_eq!(
            weight_to_conductance(0.0, 1.0, &p).unwrap(),
            (p.g_min, p.g_min)
        );
        assert_eq!(
            weight_to_conductance(1.0, 1.0, &p).unwrap(),
            (p.g_max, p.g_min)
        );
        assert_eq!(
            weight_to_conductance(-1.0, 1.0, &p).unwrap(),
            (p.g_min, p.g_max)
        );
        assert_eq!(conductance_to_weight(p.g_min, p.g_min, 1.0, &p), 0.0);
        assert_eq!(conductance_to_weight(p.g_max, p.g_min, 1.0, &p), 1.0);
        assert_eq!(conductance_to_weight(p.g_min, p.g_max, 1.0, &p), -1.0);
    }

    #[test]
    fn weight_mapping_odd_symmetry() {
        let p = CrossbarParams::default();
        for k in 0..100 {
            let w = -1.0 + 2.0 * k as f64 / 99.0;
            let (gp, gm) = weight_to_conductance(w, 1.0, &p).unwrap();
            let (gp2, gm2) = weight_to_conductance(-w, 1.0, &p).unwrap();
            assert_eq!((gp, gm), (gm2, gp2), "w = {w}");
        }
    }

    #[test]
    fn round_trip_hits_nearest_level_brute_force() {
        let p = CrossbarParams::default();
        let w_scale = 0.37;
        let levels = p.device_levels() as i64;
        // representable weights are k/(levels-1)*w_scale for signed k
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let w: f64 = rng.gen_range(-w_scale..w_scale);
            let (gp, gm) = weight_to_conductance(w, w_scale, &p).unwrap();
            let w_back = conductance_to_weight(gp, gm, w_scale, &p);
            // brute force nearest representable level
            let mut best = f64::INFINITY;
            let mut best_w = 0.0;
            for k in -(levels - 1)..levels {
                let cand = k as f64 / (levels - 1) as f64 * w_scale;
                if (cand - w).abs() < best {
                    best = (cand - w).abs();
                    best_w = cand;
                }
            }
            assert!(
                (w_back - best_w).abs() <= 1e-12 * w_scale,
                "w={w}: got {w_back}, nearest level {best_w}"
            );
        }
    }

    #[test]
    fn variation_zero_sigma_is_identity() {
        let p = CrossbarParams::with_dims(4, 4);
        let g = ConductanceMatrix::random_levels(&p, 3);
        let cfg = VariationConfig {
            sigma_over_mu: 0.0,
            ..Default::default()
        };
        assert_eq!(apply_variation(&g, &cfg, &p).unwrap(), g);
    }

    #[test]
    fn variation_deterministic_under_seed() {
        let p = CrossbarParams::with_dims(8, 8);
        let g = ConductanceMatrix::random_levels(&p, 5);
        let cfg = VariationConfig {
            seed: 42,
            ..Default::default()
        };
        let a = apply_variation(&g, &cfg, &p).unwrap();
        let b = apply_variation(&g, &cfg, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn variation_clamp_respects_window() {
        let p = CrossbarParams::with_dims(16, 16);
        let g = ConductanceMatrix::uniform(16, 16, p.g_max);
        let cfg = VariationConfig {
            sigma_over_mu: 0.3,
            clamp: true,
            seed: 9,
        };
        let v = apply_variation(&g, &cfg, &p).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                assert!(v.at(i, j) >= p.g_min && v.at(i, j) <= p.g_max);
            }
        }
    }

    #[test]
    fn variation_sample_statistics() {
        // 1e5 samples of one mid-window entry: relative spread within
        // 0.10 +/- 0.005 (three-sigma truncation shrinks it slightly)
        let p = CrossbarParams::with_dims(1, 1);
        let mid = 0.5 * (p.g_min + p.g_max);
        let g = ConductanceMatrix::uniform(1, 1, mid);
        let cfg = VariationConfig {
            sigma_over_mu: 0.10,
            clamp: false,
            seed: 0,
        };
        let n = 100_000;
        let mut vals = Vec::with_capacity(n);
        for k in 0..n {
            let c = VariationConfig {
                seed: k as u64,
                ..cfg.clone()
            };
            vals.push(apply_variation(&g, &c, &p).unwrap().at(0, 0));
        }
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let rel = var.sqrt() / mean;
        assert!((rel - 0.10).abs() < 0.005, "sample sigma/mu = {rel}");
    }

    #[test]
    fn dac_kv_round_trip() {
        let cfg = dac().with_driver(250.0);
        let text = crate::config::emit_kv(&cfg.to_kv());
        let back = DacConfig::from_kv(&crate::config::parse_kv(&text).unwrap()).unwrap();
        assert_eq!(cfg, back);
    }
}
