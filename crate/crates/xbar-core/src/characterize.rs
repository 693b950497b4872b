//! Error characterization sweeps and the model-fidelity comparison.
//!
//! All sweeps report the per-column relative error of the modeled (reduced
//! model + converters) output currents against the ideal vector-matrix
//! product. For non-ideality subsets without converters the modeled currents
//! are exact and recomputable from the full circuit solve; with converters
//! enabled, the model's scalar per-row load approximation makes it an
//! estimate, and [`fidelity_compare`] measures exactly that gap against the
//! circuit ground truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuit;
use crate::converters::{
    adc_convert, adc_reconstruct, apply_variation, dac_convert, dac_ideal, AdcConfig, DacConfig,
    GLoadMode, VariationConfig,
};
use crate::error::{Error, Result};
use crate::matrix::ConductanceMatrix;
use crate::nonideal::{build_nonideal, evaluate_ideal, NonIdealCrossbar};
use crate::params::CrossbarParams;

/// Which subset of non-idealities a sweep enables. Subsets are realized by
/// zeroing the disabled parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NonIdealityMask {
    /// Wire segment resistances only.
    Wire,
    /// Sense resistance only.
    Sense,
    /// DAC divider plus driver resistance only.
    DacDriver,
    /// Wire and sense resistances.
    WireSense,
    /// Everything.
    All,
}

impl NonIdealityMask {
    pub const ALL_MASKS: [NonIdealityMask; 5] = [
        NonIdealityMask::Wire,
        NonIdealityMask::Sense,
        NonIdealityMask::DacDriver,
        NonIdealityMask::WireSense,
        NonIdealityMask::All,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            NonIdealityMask::Wire => "WIRE",
            NonIdealityMask::Sense => "SENSE",
            NonIdealityMask::DacDriver => "DAC+DRIVER",
            NonIdealityMask::WireSense => "WIRE+SENSE",
            NonIdealityMask::All => "ALL",
        }
    }

    /// Parameter set with the disabled non-idealities zeroed.
    pub fn apply(&self, p: &CrossbarParams) -> CrossbarParams {
        let mut q = p.clone();
        match self {
            NonIdealityMask::Wire => {
                q.r_sense = 0.0;
                q.r_driver = 0.0;
            }
            NonIdealityMask::Sense => {
                q.r_row = 0.0;
                q.r_col = 0.0;
                q.r_driver = 0.0;
            }
            NonIdealityMask::DacDriver => {
                q.r_row = 0.0;
                q.r_col = 0.0;
                q.r_sense = 0.0;
            }
            NonIdealityMask::WireSense => {
                q.r_driver = 0.0;
            }
            NonIdealityMask::All => {}
        }
        q
    }

    /// Whether the DAC divider (and driver) participates.
    pub fn converters_enabled(&self) -> bool {
        matches!(self, NonIdealityMask::DacDriver | NonIdealityMask::All)
    }
}

/// Everything a characterization run needs beyond the crossbar parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharacterizeSetup {
    pub params: CrossbarParams,
    pub dac_bits: u32,
    pub adc_bits: u32,
    pub r_pd: f64,
    pub g_load_mode: GLoadMode,
}

impl Default for CharacterizeSetup {
    fn default() -> Self {
        CharacterizeSetup {
            params: CrossbarParams::default(),
            dac_bits: 6,
            // high-resolution ADC so characterization measures the analog
            // model, not quantizer step noise
            adc_bits: 16,
            r_pd: 500.0,
            g_load_mode: GLoadMode::DrivingPoint,
        }
    }
}

impl CharacterizeSetup {
    pub fn sized(&self, size: usize) -> CharacterizeSetup {
        let mut s = self.clone();
        s.params.rows = size;
        s.params.cols = size;
        s
    }

    fn dac(&self, masked: &CrossbarParams) -> DacConfig {
        let mut cfg = DacConfig::linear_ladder(self.dac_bits, masked.v_read, self.r_pd);
        cfg = cfg.with_driver(masked.r_driver);
        cfg
    }

    fn adc(&self) -> AdcConfig {
        AdcConfig::for_params(self.adc_bits, &self.params)
    }

    /// Ideal reference currents for a code vector.
    pub fn ideal_currents(
        &self,
        g: &ConductanceMatrix,
        din: &[u32],
        dac: &DacConfig,
    ) -> Result<Vec<f64>> {
        let vin = din
            .iter()
            .map(|&d| dac_ideal(d, dac))
            .collect::<Result<Vec<_>>>()?;
        evaluate_ideal(g, &vin)
    }

    /// Modeled analog output currents: reduced model, with the DAC divider
    /// applied when the mask enables converters. Sweeps compare these
    /// against the ideal product, matching the error definition of the
    /// vector-matrix multiply itself.
    pub fn model_currents(
        &self,
        xbar: &NonIdealCrossbar,
        din: &[u32],
        mask: NonIdealityMask,
    ) -> Result<Vec<f64>> {
        let masked = mask.apply(&self.params);
        let dac = self.dac(&masked);
        let vin = if mask.converters_enabled() {
            let loads: Vec<f64> = match self.g_load_mode {
                GLoadMode::DrivingPoint => xbar.g_load().to_vec(),
                GLoadMode::RowSum => xbar.g_load_row_sum(),
            };
            din.iter()
                .zip(&loads)
                .map(|(&d, &gl)| dac_convert(d, gl, &dac))
                .collect::<Result<Vec<_>>>()?
        } else {
            din.iter()
                .map(|&d| dac_ideal(d, &dac))
                .collect::<Result<Vec<_>>>()?
        };
        xbar.evaluate(&vin)
    }

    /// Ground-truth analog output currents from the full circuit solve. When
    /// converters are enabled each row's DAC output stage is embedded
    /// exactly as its Thevenin equivalent, so the row coupling the scalar
    /// load model ignores is captured.
    pub fn oracle_currents(
        &self,
        g: &ConductanceMatrix,
        din: &[u32],
        mask: NonIdealityMask,
    ) -> Result<Vec<f64>> {
        let masked = mask.apply(&self.params);
        let dac = self.dac(&masked);
        let (vin, r_drivers): (Vec<f64>, Vec<f64>) = if mask.converters_enabled() {
            din.iter()
                .map(|&d| {
                    let r_series = dac.r_dac_levels[d as usize] + masked.r_driver;
                    if r_series == f64::INFINITY {
                        // open switch: the row sees only the pull-down
                        (0.0, dac.r_pd)
                    } else {
                        let v_th = dac.vdd * dac.r_pd / (r_series + dac.r_pd);
                        let r_th = r_series * dac.r_pd / (r_series + dac.r_pd);
                        (v_th, r_th)
                    }
                })
                .unzip()
        } else {
            (
                din.iter()
                    .map(|&d| dac_ideal(d, &dac))
                    .collect::<Result<Vec<_>>>()?,
                vec![masked.r_driver; masked.rows],
            )
        };
        let sys = circuit::assemble_with_drivers(&masked, g, &r_drivers)?;
        let res = sys.solve(&vin)?;
        Ok(res.i_out)
    }

    pub fn full_scale(&self) -> f64 {
        self.params.v_read * self.params.g_max * self.params.rows as f64
    }
}

/// Pass analog currents through the ADC and back: what the digital side of
/// the pipeline actually sees.
pub fn quantize_currents(currents: &[f64], adc: &AdcConfig) -> Vec<f64> {
    currents
        .iter()
        .map(|&v| adc_reconstruct(adc_convert(v, adc), adc))
        .collect()
}

/// Per-column relative error in percent, positive when the non-ideal output
/// is attenuated. Near-zero ideal outputs fall back to the full-scale
/// current as denominator so the metric stays bounded and sign-preserving.
pub fn per_column_error(i_ideal: &[f64], i_nonideal: &[f64], i_full_scale: f64) -> Vec<f64> {
    i_ideal
        .iter()
        .zip(i_nonideal)
        .map(|(&ideal, &actual)| {
            let denom = if ideal.abs() > 1e-3 * i_full_scale {
                ideal
            } else {
                i_full_scale
            };
            100.0 * (ideal - actual) / denom
        })
        .collect()
}

/// Uniform programmed states used by the dimension sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UniformState {
    AllGmin,
    AllGmax,
}

impl UniformState {
    pub fn name(&self) -> &'static str {
        match self {
            UniformState::AllGmin => "all_Gmin",
            UniformState::AllGmax => "all_Gmax",
        }
    }

    pub fn conductance(&self, p: &CrossbarParams) -> f64 {
        match self {
            UniformState::AllGmin => p.g_min,
            UniformState::AllGmax => p.g_max,
        }
    }
}

/// One row of the dimension sweep: last-column error for a size, uniform
/// state and non-ideality subset, under full-scale drive on every row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionSweepRow {
    pub size: usize,
    pub state: UniformState,
    pub mask: NonIdealityMask,
    pub last_column_error_pct: f64,
}

/// Last-column error versus crossbar dimension for the uniform all-min and
/// all-max states under each non-ideality subset.
pub fn sweep_dimension(
    setup: &CharacterizeSetup,
    sizes: &[usize],
    masks: &[NonIdealityMask],
) -> Result<Vec<DimensionSweepRow>> {
    let mut rows = Vec::new();
    for &size in sizes {
        let sized = setup.sized(size);
        for state in [UniformState::AllGmin, UniformState::AllGmax] {
            let g = ConductanceMatrix::uniform(size, size, state.conductance(&sized.params));
            let din = vec![(1u32 << sized.dac_bits) - 1; size];
            for &mask in masks {
                let masked = mask.apply(&sized.params);
                let xbar = build_nonideal(&g, &masked)?;
                let dac = sized.dac(&masked);
                let ideal = sized.ideal_currents(&g, &din, &dac)?;
                let model = sized.model_currents(&xbar, &din, mask)?;
                let eps = per_column_error(&ideal, &model, sized.full_scale());
                rows.push(DimensionSweepRow {
                    size,
                    state,
                    mask,
                    last_column_error_pct: eps[size - 1],
                });
            }
        }
    }
    Ok(rows)
}

/// Per-column error statistics over a sampled population.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnStats {
    pub max: Vec<f64>,
    pub min: Vec<f64>,
    pub avg: Vec<f64>,
    /// One population member retained verbatim (the first sample).
    pub sample: Vec<f64>,
    pub n: usize,
}

impl ColumnStats {
    fn from_runs(runs: &[Vec<f64>]) -> ColumnStats {
        let n = runs.len();
        let cols = runs.first().map(|r| r.len()).unwrap_or(0);
        let mut max = vec![f64::NEG_INFINITY; cols];
        let mut min = vec![f64::INFINITY; cols];
        let mut avg = vec![0.0; cols];
        for run in runs {
            for (j, &v) in run.iter().enumerate() {
                max[j] = max[j].max(v);
                min[j] = min[j].min(v);
                avg[j] += v;
            }
        }
        for v in avg.iter_mut() {
            *v /= n as f64;
        }
        ColumnStats {
            max,
            min,
            avg,
            sample: runs.first().cloned().unwrap_or_default(),
            n,
        }
    }

    /// Per-column spread `max - min`.
    pub fn spread(&self) -> Vec<f64> {
        self.max
            .iter()
            .zip(&self.min)
            .map(|(hi, lo)| hi - lo)
            .collect()
    }

    pub fn mean_spread(&self) -> f64 {
        let s = self.spread();
        s.iter().sum::<f64>() / s.len() as f64
    }
}

fn random_din(setup: &CharacterizeSetup, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let levels = 1u32 << setup.dac_bits;
    (0..setup.params.rows)
        .map(|_| rng.gen_range(0..levels))
        .collect()
}

fn error_of_state(
    setup: &CharacterizeSetup,
    g: &ConductanceMatrix,
    din: &[u32],
    mask: NonIdealityMask,
) -> Result<Vec<f64>> {
    let masked = mask.apply(&setup.params);
    let xbar = build_nonideal(g, &masked)?;
    let dac = setup.dac(&masked);
    let ideal = setup.ideal_currents(g, din, &dac)?;
    let model = setup.model_currents(&xbar, din, mask)?;
    Ok(per_column_error(&ideal, &model, setup.full_scale()))
}

/// Error statistics across random crossbar states at a fixed input.
/// Each device samples uniformly over its programmable levels; trial k uses
/// seed `seed + k`, so the population is reproducible and order-independent.
pub fn sweep_states(
    setup: &CharacterizeSetup,
    size: usize,
    n_states: usize,
    seed: u64,
) -> Result<ColumnStats> {
    let setup = setup.sized(size);
    let din = random_din(&setup, &mut ChaCha8Rng::seed_from_u64(seed ^ 0xd1d));
    let runs: Vec<Vec<f64>> = (0..n_states)
        .into_par_iter()
        .map(|k| {
            let g = ConductanceMatrix::random_levels(&setup.params, seed + k as u64);
            error_of_state(&setup, &g, &din, NonIdealityMask::All)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ColumnStats::from_runs(&runs))
}

/// Error statistics across random inputs at a fixed crossbar state.
pub fn sweep_inputs(
    setup: &CharacterizeSetup,
    size: usize,
    n_inputs: usize,
    seed: u64,
) -> Result<ColumnStats> {
    let setup = setup.sized(size);
    let g = ConductanceMatrix::random_levels(&setup.params, seed ^ 0x57a7e);
    let mask = NonIdealityMask::All;
    let masked = mask.apply(&setup.params);
    let xbar = build_nonideal(&g, &masked)?;
    let dac = setup.dac(&masked);
    let runs: Vec<Vec<f64>> = (0..n_inputs)
        .into_par_iter()
        .map(|k| {
            let din = random_din(&setup, &mut ChaCha8Rng::seed_from_u64(seed + k as u64));
            let ideal = setup.ideal_currents(&g, &din, &dac)?;
            let model = setup.model_currents(&xbar, &din, mask)?;
            Ok(per_column_error(&ideal, &model, setup.full_scale()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ColumnStats::from_runs(&runs))
}

/// Monte-Carlo sweep over device variation around a fixed nominal state.
pub fn monte_carlo_variation(
    setup: &CharacterizeSetup,
    size: usize,
    n_samples: usize,
    var: &VariationConfig,
    seed: u64,
) -> Result<ColumnStats> {
    let setup = setup.sized(size);
    let nominal = ConductanceMatrix::random_levels(&setup.params, seed ^ 0xba5e);
    let din = random_din(&setup, &mut ChaCha8Rng::seed_from_u64(seed ^ 0xd1d));
    let runs: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let cfg = VariationConfig {
                seed: var.seed.wrapping_add(k as u64),
                ..var.clone()
            };
            let varied = apply_variation(&nominal, &cfg, &setup.params)?;
            error_of_state(&setup, &varied, &din, NonIdealityMask::All)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ColumnStats::from_runs(&runs))
}

/// Constant-error baseline: one scalar fractional error per crossbar size,
/// calibrated as the mean per-column error over a calibration split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantErrorBaseline {
    pub size: usize,
    pub error_pct: f64,
}

/// Fidelity of the reduced-model pipeline and of the constant-error baseline
/// against the circuit ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityReport {
    pub size: usize,
    pub trials_calibration: usize,
    pub trials_heldout: usize,
    pub baseline: ConstantErrorBaseline,
    /// Max |model error - true error| over held-out trials, percent points.
    pub fcm_max_dev: f64,
    /// Max |baseline error - true error| over held-out trials.
    pub baseline_max_dev: f64,
}

/// Compare the reduced-model pipeline and a constant-error baseline against
/// the exact circuit on random (state, input) trials. Even trials calibrate
/// the baseline, odd trials are held out for both deviations.
///
/// With `converters` set the comparison runs the full DAC/ADC pipeline on
/// both sides (the model's scalar-load DAC approximation makes its deviation
/// small but nonzero); without it both sides use ideal converters and the
/// array-only deviation is solver noise.
pub fn fidelity_compare(
    setup: &CharacterizeSetup,
    size: usize,
    trials: usize,
    seed: u64,
    converters: bool,
) -> Result<FidelityReport> {
    if trials < 2 {
        return Err(Error::InvalidParams("fidelity needs at least 2 trials".into()));
    }
    let setup = setup.sized(size);
    let mask = if converters {
        NonIdealityMask::All
    } else {
        NonIdealityMask::WireSense
    };
    let adc = setup.adc();

    let errors: Vec<(Vec<f64>, Vec<f64>)> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let g = ConductanceMatrix::random_levels(&setup.params, seed + 7919 * k as u64);
            let din = random_din(
                &setup,
                &mut ChaCha8Rng::seed_from_u64(seed + 104729 * k as u64),
            );
            let masked = mask.apply(&setup.params);
            let dac = setup.dac(&masked);
            let ideal = setup.ideal_currents(&g, &din, &dac)?;
            let xbar = build_nonideal(&g, &masked)?;
            let mut model = setup.model_currents(&xbar, &din, mask)?;
            let mut truth = setup.oracle_currents(&g, &din, mask)?;
            if converters {
                model = quantize_currents(&model, &adc);
                truth = quantize_currents(&truth, &adc);
            }
            let eps_model = per_column_error(&ideal, &model, setup.full_scale());
            let eps_truth = per_column_error(&ideal, &truth, setup.full_scale());
            Ok((eps_model, eps_truth))
        })
        .collect::<Result<Vec<_>>>()?;

    let (calib, heldout): (Vec<_>, Vec<_>) =
        errors.iter().enumerate().partition(|(k, _)| k % 2 == 0);

    let mut k_sum = 0.0;
    let mut k_count = 0usize;
    for (_, (_, truth)) in &calib {
        for &e in truth {
            k_sum += e;
            k_count += 1;
        }
    }
    let k_pct = k_sum / k_count as f64;

    let mut fcm_max_dev = 0.0f64;
    let mut baseline_max_dev = 0.0f64;
    for (_, (model, truth)) in &heldout {
        for (&em, &et) in model.iter().zip(truth) {
            fcm_max_dev = fcm_max_dev.max((em - et).abs());
            baseline_max_dev = baseline_max_dev.max((k_pct - et).abs());
        }
    }

    Ok(FidelityReport {
        size,
        trials_calibration: calib.len(),
        trials_heldout: heldout.len(),
        baseline: ConstantErrorBaseline {
            size,
            error_pct: k_pct,
        },
        fcm_max_dev,
        baseline_max_dev,
    })
}

/// CSV emission: one row per column index per statistic.
pub fn column_stats_csv(name: &str, stats: &ColumnStats) -> String {
    let mut out = String::from("sweep,column,statistic,value\n");
    for (stat, values) in [
        ("max", &stats.max),
        ("min", &stats.min),
        ("avg", &stats.avg),
        ("sample", &stats.sample),
    ] {
        for (j, v) in values.iter().enumerate() {
            out.push_str(&format!("{name},{j},{stat},{v}\n"));
        }
    }
    out
}

pub fn dimension_sweep_csv(rows: &[DimensionSweepRow]) -> String {
    let mut out = String::from("size,state,mask,last_column_error_pct\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.size,
            r.state.name(),
            r.mask.name(),
            r.last_column_error_pct
        ));
    }
    out
}
