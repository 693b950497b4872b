//! Dense row-major matrices and the programmed conductance state.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::CrossbarParams;

/// Minimal dense row-major f64 matrix used for model outputs
/// (effective conductances, branch currents).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {rows}x{cols}={} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.rows).map(|i| self.at(i, j)).sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// `out[j] = sum_i vin[i] * self[i][j]` — the row-vector/matrix product.
    pub fn vec_mul(&self, vin: &[f64]) -> Result<Vec<f64>> {
        if vin.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "input length {} does not match {} rows",
                vin.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &v) in vin.iter().enumerate() {
            if v != 0.0 {
                for (o, &g) in out.iter_mut().zip(self.row(i)) {
                    *o += v * g;
                }
            }
        }
        Ok(out)
    }

    /// CSV: one matrix row per line, comma-separated, `.` decimal separator.
    /// Values are printed with enough digits to round-trip exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            let mut first = true;
            for v in self.row(i) {
                if !first {
                    out.push(',');
                }
                out.push_str(&format!("{v}"));
                first = false;
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut data = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut count = 0;
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Format(format!("csv line {}: bad number {field:?}", lineno + 1))
                })?;
                data.push(v);
                count += 1;
            }
            match cols {
                None => cols = Some(count),
                Some(c) if c != count => {
                    return Err(Error::Format(format!(
                        "csv line {}: {count} fields, expected {c}",
                        lineno + 1
                    )))
                }
                _ => {}
            }
            rows += 1;
        }
        let cols = cols.ok_or_else(|| Error::Format("csv: no data".into()))?;
        Matrix::from_vec(rows, cols, data)
    }
}

/// Programmed synaptic conductance state of one crossbar.
///
/// In the physical state every entry lies in `[G_min, G_max]`. Analysis mode
/// (`analysis = true`) relaxes this to `g >= 0` so that sensitivity studies
/// can open devices entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceMatrix {
    m: Matrix,
    analysis: bool,
}

impl ConductanceMatrix {
    pub fn from_matrix(m: Matrix, analysis: bool) -> Self {
        ConductanceMatrix { m, analysis }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Ok(ConductanceMatrix {
            m: Matrix::from_vec(rows, cols, data)?,
            analysis: false,
        })
    }

    /// Every device at the same conductance.
    pub fn uniform(rows: usize, cols: usize, g: f64) -> Self {
        ConductanceMatrix {
            m: Matrix {
                rows,
                cols,
                data: vec![g; rows * cols],
            },
            analysis: false,
        }
    }

    /// Sample every device independently and uniformly over the
    /// `2^device_bits` programmable levels. Deterministic under `seed`.
    pub fn random_levels(params: &CrossbarParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels = params.device_levels();
        let step = (params.g_max - params.g_min) / (levels - 1) as f64;
        let data = (0..params.rows * params.cols)
            .map(|_| params.g_min + rng.gen_range(0..levels) as f64 * step)
            .collect();
        ConductanceMatrix {
            m: Matrix {
                rows: params.rows,
                cols: params.cols,
                data,
            },
            analysis: false,
        }
    }

    pub fn rows(&self) -> usize {
        self.m.rows
    }

    pub fn cols(&self) -> usize {
        self.m.cols
    }

    pub fn analysis(&self) -> bool {
        self.analysis
    }

    pub fn set_analysis(&mut self, analysis: bool) {
        self.analysis = analysis;
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.m.at(i, j)
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        self.m.at_mut(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn as_slice(&self) -> &[f64] {
        self.m.as_slice()
    }

    /// Check shape against `params` and value ranges against the mode.
    pub fn validate(&self, params: &CrossbarParams) -> Result<()> {
        if self.rows() != params.rows || self.cols() != params.cols {
            return Err(Error::DimensionMismatch(format!(
                "state is {}x{}, params say {}x{}",
                self.rows(),
                self.cols(),
                params.rows,
                params.cols
            )));
        }
        // Tiny slack so that exactly-quantized endpoint values pass.
        let slack = 1e-12 * params.g_max;
        for (k, &g) in self.m.data.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!(
                    "conductance at ({},{})",
                    k / self.cols(),
                    k % self.cols()
                )));
            }
            if g < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "negative conductance at ({},{})",
                    k / self.cols(),
                    k % self.cols()
                )));
            }
            if !self.analysis && (g < params.g_min - slack || g > params.g_max + slack) {
                return Err(Error::InvalidParams(format!(
                    "conductance {g} at ({},{}) outside [{}, {}] (physical state)",
                    k / self.cols(),
                    k % self.cols(),
                    params.g_min,
                    params.g_max
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        self.m.to_csv()
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Ok(ConductanceMatrix {
            m: Matrix::from_csv(text)?,
            analysis: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_exact() {
        let m = Matrix::from_vec(2, 3, vec![1.5e-6, 0.1, -3.25, 2.0 / 3.0, 1e-300, 42.0]).unwrap();
        let back = Matrix::from_csv(&m.to_csv()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        assert!(Matrix::from_csv("1,2\n3\n").is_err());
    }

    #[test]
    fn random_levels_deterministic_and_in_range() {
        let p = CrossbarParams::with_dims(8, 8);
        let a = ConductanceMatrix::random_levels(&p, 7);
        let b = ConductanceMatrix::random_levels(&p, 7);
        assert_eq!(a, b);
        a.validate(&p).unwrap();
    }

    #[test]
    fn vec_mul_matches_triple_loop() {
        let m = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let v = [0.5, -1.0, 2.0];
        let got = m.vec_mul(&v).unwrap();
        let mut want = vec![0.0; 2];
        for i in 0..3 {
            for j in 0..2 {
                want[j] += v[i] * m.at(i, j);
            }
        }
        assert_eq!(got, want);
    }
}
