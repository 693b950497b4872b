//! Physical description of a single crossbar tile.

use serde::{Deserialize, Serialize};

use crate::config::{self, KvMap};
use crate::error::{Error, Result};

/// Physical parameters of an MxN crossbar: wire, sense and driver
/// resistances, the programmable conductance window of the devices, and the
/// full-scale read voltage.
///
/// Resistances are in ohms, conductances in siemens, voltages in volts.
/// `r_row`/`r_col` are per wire segment (between adjacent crosspoints);
/// `r_sense` terminates each column, `r_driver` sits between each row source
/// and the first crosspoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarParams {
    pub rows: usize,
    pub cols: usize,
    pub r_row: f64,
    pub r_col: f64,
    pub r_sense: f64,
    pub r_driver: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub device_bits: u32,
    pub v_read: f64,
}

impl Default for CrossbarParams {
    /// Documented working defaults. These are assumptions for a generic
    /// resistive technology, not measurements: 2.5 ohm wire segments, 1 kohm
    /// sense and driver resistances, devices programmable between 200 kohm
    /// and 20 kohm with 6-bit resolution, 0.2 V full-scale read voltage.
    fn default() -> Self {
        CrossbarParams {
            rows: 64,
            cols: 64,
            r_row: 2.5,
            r_col: 2.5,
            r_sense: 1e3,
            r_driver: 1e3,
            g_min: 5e-6,
            g_max: 50e-6,
            device_bits: 6,
            v_read: 0.2,
        }
    }
}

impl CrossbarParams {
    pub fn with_dims(rows: usize, cols: usize) -> Self {
        CrossbarParams {
            rows,
            cols,
            ..Default::default()
        }
    }

    /// All parasitics zeroed: the array computes the ideal product exactly.
    pub fn ideal(rows: usize, cols: usize) -> Self {
        CrossbarParams {
            rows,
            cols,
            r_row: 0.0,
            r_col: 0.0,
            r_sense: 0.0,
            r_driver: 0.0,
            ..Default::default()
        }
    }

    /// Number of distinguishable device conductance levels, `2^device_bits`.
    pub fn device_levels(&self) -> u64 {
        1u64 << self.device_bits
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 1 || self.cols < 1 {
            return Err(Error::InvalidParams(format!(
                "rows and cols must be >= 1, got {}x{}",
                self.rows, self.cols
            )));
        }
        for (name, v) in [
            ("r_row", self.r_row),
            ("r_col", self.r_col),
            ("R_sense", self.r_sense),
            ("R_driver", self.r_driver),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.g_min.is_finite() && self.g_max.is_finite()) {
            return Err(Error::InvalidParams("G_min/G_max must be finite".into()));
        }
        if !(0.0 < self.g_min && self.g_min < self.g_max) {
            return Err(Error::InvalidParams(format!(
                "need 0 < G_min < G_max, got G_min={} G_max={}",
                self.g_min, self.g_max
            )));
        }
        if self.device_bits < 1 || self.device_bits > 30 {
            return Err(Error::InvalidParams(format!(
                "device_bits must be in [1, 30], got {}",
                self.device_bits
            )));
        }
        if !self.v_read.is_finite() {
            return Err(Error::InvalidParams("v_read must be finite".into()));
        }
        Ok(())
    }

    /// Serialize to the flat key=value config format. Keys match the field
    /// names (`rows`, `cols`, `r_row`, `r_col`, `R_sense`, `R_driver`,
    /// `G_min`, `G_max`, `device_bits`, `v_read`).
    pub fn to_kv(&self) -> KvMap {
        let mut map = KvMap::new();
        map.insert("rows".into(), self.rows.to_string());
        map.insert("cols".into(), self.cols.to_string());
        map.insert("r_row".into(), self.r_row.to_string());
        map.insert("r_col".into(), self.r_col.to_string());
        map.insert("R_sense".into(), self.r_sense.to_string());
        map.insert("R_driver".into(), self.r_driver.to_string());
        map.insert("G_min".into(), self.g_min.to_string());
        map.insert("G_max".into(), self.g_max.to_string());
        map.insert("device_bits".into(), self.device_bits.to_string());
        map.insert("v_read".into(), self.v_read.to_string());
        map
    }

    /// Parse from a key=value map; absent keys keep their default values.
    pub fn from_kv(map: &KvMap) -> Result<Self> {
        let mut p = CrossbarParams::default();
        if let Some(v) = config::get_usize(map, "rows")? {
            p.rows = v;
        }
        if let Some(v) = config::get_usize(map, "cols")? {
            p.cols = v;
        }
        if let Some(v) = config::get_f64(map, "r_row")? {
            p.r_row = v;
        }
        if let Some(v) = config::get_f64(map, "r_col")? {
            p.r_col = v;
        }
        if let Some(v) = config::get_f64(map, "R_sense")? {
            p.r_sense = v;
        }
        if let Some(v) = config::get_f64(map, "R_driver")? {
            p.r_driver = v;
        }
        if let Some(v) = config::get_f64(map, "G_min")? {
            p.g_min = v;
        }
        if let Some(v) = config::get_f64(map, "G_max")? {
            p.g_max = v;
        }
        if let Some(v) = config::get_usize(map, "device_bits")? {
            p.device_bits = v as u32;
        }
        if let Some(v) = config::get_f64(map, "v_read")? {
            p.v_read = v;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        Self::from_kv(&config::parse_kv(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        CrossbarParams::default().validate().unwrap();
        CrossbarParams::ideal(3, 2).validate().unwrap();
    }

    #[test]
    fn rejects_inverted_window() {
        let mut p = CrossbarParams::default();
        p.g_min = p.g_max;
        assert!(p.validate().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let p = CrossbarParams {
            rows: 16,
            cols: 8,
            r_row: 1.25,
            ..Default::default()
        };
        let text = crate::config::emit_kv(&p.to_kv());
        let q = CrossbarParams::from_kv_text(&text).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn kv_keys_match_field_names() {
        let map = CrossbarParams::default().to_kv();
        for key in [
            "rows",
            "cols",
            "r_row",
            "r_col",
            "R_sense",
            "R_driver",
            "G_min",
            "G_max",
            "device_bits",
            "v_read",
        ] {
            assert!(map.contains_key(key), "missing key {key}");
        }
    }
}
