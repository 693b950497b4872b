//! Event counting and energy pricing.
//!
//! The simulator counts events (memory traffic, conversions, array
//! evaluations); joule costs are config inputs, never hard-coded. The
//! default table encodes only the expected ordering for peripheral-dominated
//! designs: conversions dominate the array, and compute dominates memory
//! traffic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{self, KvMap};
use crate::error::{Error, Result};

/// Monotone event counters for one run. Merging is additive so per-worker
/// ledgers can be combined at barriers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub mem_read_bytes: u64,
    pub mem_write_bytes: u64,
    /// Array evaluations keyed by tile dimension, e.g. `"64x64"`.
    pub crossbar_evals: BTreeMap<String, u64>,
    pub dac_conversions: u64,
    pub adc_conversions: u64,
}

impl EnergyLedger {
    pub fn record_eval(&mut self, rows: usize, cols: usize, count: u64) {
        *self
            .crossbar_evals
            .entry(format!("{rows}x{cols}"))
            .or_insert(0) += count;
    }

    pub fn merge(&mut self, other: &EnergyLedger) {
        self.mem_read_bytes += other.mem_read_bytes;
        self.mem_write_bytes += other.mem_write_bytes;
        self.dac_conversions += other.dac_conversions;
        self.adc_conversions += other.adc_conversions;
        for (k, v) in &other.crossbar_evals {
            *self.crossbar_evals.entry(k.clone()).or_insert(0) += v;
        }
    }
}

/// Joules per event. `crossbar_eval` is keyed by tile dimension like the
/// ledger counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub mem_read_per_byte: f64,
    pub mem_write_per_byte: f64,
    pub dac_conversion: f64,
    pub adc_conversion: f64,
    pub crossbar_eval: BTreeMap<String, f64>,
}

impl Default for PriceTable {
    /// Ordering-only defaults: an ADC conversion costs several times a DAC
    /// conversion, conversions dominate the array evaluation itself, and
    /// compute dominates memory traffic for typical reuse.
    fn default() -> Self {
        let mut crossbar_eval = BTreeMap::new();
        for dim in [16usize, 32, 64, 128] {
            crossbar_eval.insert(
                format!("{dim}x{dim}"),
                1e-15 * (dim * dim) as f64, // grows with crosspoint count
            );
        }
        PriceTable {
            mem_read_per_byte: 1e-13,
            mem_write_per_byte: 2e-13,
            dac_conversion: 5e-13,
            adc_conversion: 2e-12,
            crossbar_eval,
        }
    }
}

/// Priced breakdown matching the reporting categories: memory reads, memory
/// writes, and crossbar computation (conversions plus array evaluations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub cmos_mem_read: f64,
    pub cmos_mem_write: f64,
    pub cross_computation: f64,
    pub total: f64,
}

impl PriceTable {
    pub fn price(&self, ledger: &EnergyLedger) -> Result<EnergyReport> {
        let cmos_mem_read = ledger.mem_read_bytes as f64 * self.mem_read_per_byte;
        let cmos_mem_write = ledger.mem_write_bytes as f64 * self.mem_write_per_byte;
        let mut cross_computation = ledger.dac_conversions as f64 * self.dac_conversion
            + ledger.adc_conversions as f64 * self.adc_conversion;
        for (dim, &count) in &ledger.crossbar_evals {
            let price = self.crossbar_eval.get(dim).ok_or_else(|| {
                Error::Config(format!("price table has no crossbar_eval entry for {dim}"))
            })?;
            cross_computation += count as f64 * price;
        }
        let total = cmos_mem_read + cmos_mem_write + cross_computation;
        Ok(EnergyReport {
            cmos_mem_read,
            cmos_mem_write,
            cross_computation,
            total,
        })
    }

    pub fn to_kv(&self) -> KvMap {
        let mut map = KvMap::new();
        map.insert(
            "mem_read_per_byte".into(),
            self.mem_read_per_byte.to_string(),
        );
        map.insert(
            "mem_write_per_byte".into(),
            self.mem_write_per_byte.to_string(),
        );
        map.insert("dac_conversion".into(), self.dac_conversion.to_string());
        map.insert("adc_conversion".into(), self.adc_conversion.to_string());
        for (dim, price) in &self.crossbar_eval {
            map.insert(format!("crossbar_eval_{dim}"), price.to_string());
        }
        map
    }

    pub fn from_kv(map: &KvMap) -> Result<Self> {
        let mut table = PriceTable::default();
        if let Some(v) = config::get_f64(map, "mem_read_per_byte")? {
            table.mem_read_per_byte = v;
        }
        if let Some(v) = config::get_f64(map, "mem_write_per_byte")? {
            table.mem_write_per_byte = v;
        }
        if let Some(v) = config::get_f64(map, "dac_conversion")? {
            table.dac_conversion = v;
        }
        if let Some(v) = config::get_f64(map, "adc_conversion")? {
            table.adc_conversion = v;
        }
        for (k, v) in map {
            if let Some(dim) = k.strip_prefix("crossbar_eval_") {
                let price = v.parse::<f64>().map_err(|_| {
                    Error::Config(format!("key {k}: expected a number, got {v:?}"))
                })?;
                table.crossbar_eval.insert(dim.to_string(), price);
            }
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_is_exactly_sum_of_components() {
        let mut ledger = EnergyLedger::default();
        ledger.mem_read_bytes = 12345;
        ledger.mem_write_bytes = 678;
        ledger.dac_conversions = 999;
        ledger.adc_conversions = 500;
        ledger.record_eval(64, 64, 77);
        let report = PriceTable::default().price(&ledger).unwrap();
        assert_eq!(
            report.total,
            report.cmos_mem_read + report.cmos_mem_write + report.cross_computation
        );
    }

    #[test]
    fn merge_is_additive() {
        let mut a = EnergyLedger::default();
        a.record_eval(16, 16, 3);
        a.dac_conversions = 10;
        let mut b = EnergyLedger::default();
        b.record_eval(16, 16, 4);
        b.record_eval(32, 32, 1);
        b.mem_read_bytes = 8;
        let mut m = a.clone();
        m.merge(&b);
        assert_eq!(m.crossbar_evals["16x16"], 7);
        assert_eq!(m.crossbar_evals["32x32"], 1);
        assert_eq!(m.dac_conversions, 10);
        assert_eq!(m.mem_read_bytes, 8);
    }

    #[test]
    fn unknown_tile_dim_is_a_config_error() {
        let mut ledger = EnergyLedger::default();
        ledger.record_eval(48, 48, 1);
        assert!(PriceTable::default().price(&ledger).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let table = PriceTable::default();
        let text = crate::config::emit_kv(&table.to_kv());
        let back = PriceTable::from_kv(&crate::config::parse_kv(&text).unwrap()).unwrap();
        assert_eq!(table, back);
    }
}
