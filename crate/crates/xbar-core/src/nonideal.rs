//! One-time exact reduction of the crossbar network onto its ports.
//!
//! [`build_nonideal`] eliminates all internal node variables of the KCL
//! system, leaving an effective MxN conductance matrix that maps source
//! voltages directly to sense currents, plus the per-row driving-point load
//! conductances. After the build, evaluating the array is a single
//! vector-matrix product — no circuit solve.
//!
//! The elimination runs column-side nodes first (each column chain reduces
//! independently onto the row-side nodes it touches), then sweeps the
//! row-side blocks from the far end of the rows back to the source ports.
//! Both stages are exact Schur complements, so the reduced model reproduces
//! the full network solve to solver precision.
//!
//! Driver resistance is deliberately excluded here: the reduction sees ideal
//! sources at the first row nodes, and the source-side series resistance is
//! folded into the DAC output stage instead (see [`crate::converters`]). The
//! model therefore depends only on `(R_sense, r_col, r_row, G)`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::{ConductanceMatrix, Matrix};
use crate::params::CrossbarParams;

const MAGIC: &[u8; 4] = b"XBNI";
const VERSION: u32 = 1;

/// Reduced crossbar: effective conductances plus per-row load conductances.
///
/// Immutable once built and freely shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct NonIdealCrossbar {
    g_non_ideal: Matrix,
    g_load: Vec<f64>,
    params: CrossbarParams,
    g_ideal: ConductanceMatrix,
}

/// Reduce the programmed state `g` under `params` to its exact port model.
pub fn build_nonideal(
    g: &ConductanceMatrix,
    params: &CrossbarParams,
) -> Result<NonIdealCrossbar> {
    params.validate()?;
    g.validate(params)?;
    let (m, n) = (params.rows, params.cols);

    // Stage 1: per column, eliminate the column-side chain onto the row-side
    // nodes of that column. `delta[j]` is the dense MxM coupling the chain
    // induces among the column's row-side nodes; `w[j]` is the functional
    // giving the sense current from the same voltages.
    let mut delta: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut w: Vec<DVector<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let gj: Vec<f64> = (0..m).map(|i| g.at(i, j)).collect();
        let (d, wj) = reduce_column(&gj, params)
            .map_err(|e| Error::Singular(format!("column {j}: {e}")))?;
        delta.push(d);
        w.push(wj);
    }

    let mut g_non_ideal = Matrix::zeros(m, n);
    let g_load;

    if params.r_row == 0.0 {
        // Row wires are shorts: every row-side node is the port itself.
        for j in 0..n {
            for i in 0..m {
                *g_non_ideal.at_mut(i, j) = w[j][i];
            }
        }
        let mut y_diag = vec![0.0; m];
        for d in &delta {
            for i in 0..m {
                y_diag[i] += d[(i, i)];
            }
        }
        g_load = y_diag;
    } else {
        // Stage 2: block-tridiagonal elimination over the row-side nodes.
        // Block j holds the M node voltages of array column j; block 0 is
        // the port block. Sweep from the far end back to the ports.
        let c = 1.0 / params.r_row;
        let blocks: Vec<DMatrix<f64>> = (0..n)
            .map(|j| {
                let links = (j > 0) as usize + (j + 1 < n) as usize;
                let mut a = delta[j].clone();
                for i in 0..m {
                    a[(i, i)] += c * links as f64;
                }
                a
            })
            .collect();

        // inv_s[j] = inverse of the Schur complement of blocks j..N-1, j >= 1
        let mut inv_s: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); n];
        for j in (1..n).rev() {
            let mut s = blocks[j].clone();
            if j + 1 < n {
                s -= (c * c) * &inv_s[j + 1];
            }
            let chol = nalgebra::Cholesky::new(s).ok_or_else(|| {
                Error::Singular(format!(
                    "row-side elimination: block {j} not positive definite"
                ))
            })?;
            inv_s[j] = chol.inverse();
        }

        // propagate the port identity through the chain: v_j = F_j * vin
        for i in 0..m {
            *g_non_ideal.at_mut(i, 0) = w[0][i];
        }
        let mut f = DMatrix::<f64>::identity(m, m);
        for j in 1..n {
            f = c * &inv_s[j] * f;
            let col = f.transpose() * &w[j];
            for i in 0..m {
                *g_non_ideal.at_mut(i, j) = col[i];
            }
        }

        let y_port = if n > 1 {
            &blocks[0] - (c * c) * &inv_s[1]
        } else {
            blocks[0].clone()
        };
        g_load = (0..m).map(|i| y_port[(i, i)]).collect();
    }

    for (i, &gl) in g_load.iter().enumerate() {
        if !(gl.is_finite() && gl > 0.0) {
            return Err(Error::Singular(format!(
                "row {i}: non-positive load conductance {gl}"
            )));
        }
    }

    Ok(NonIdealCrossbar {
        g_non_ideal,
        g_load,
        params: params.clone(),
        g_ideal: g.clone(),
    })
}

/// Eliminate one column chain. Returns the induced MxM row-side coupling
/// and the sense-current functional.
fn reduce_column(gj: &[f64], params: &CrossbarParams) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let m = gj.len();
    let mut delta = DMatrix::<f64>::zeros(m, m);
    let mut w = DVector::<f64>::zeros(m);

    if params.r_col == 0.0 {
        if params.r_sense == 0.0 {
            // whole column grounded: devices go straight to ground
            for i in 0..m {
                delta[(i, i)] = gj[i];
                w[i] = gj[i];
            }
        } else {
            // single merged column node behind the sense resistor
            let denom: f64 = gj.iter().sum::<f64>() + 1.0 / params.r_sense;
            for i in 0..m {
                delta[(i, i)] = gj[i];
                w[i] = gj[i] / (denom * params.r_sense);
            }
            for i in 0..m {
                for k in 0..m {
                    delta[(i, k)] -= gj[i] * gj[k] / denom;
                }
            }
        }
        return Ok((delta, w));
    }

    let c = 1.0 / params.r_col;
    // number of unknown chain nodes: the bottom node merges into ground when
    // R_sense = 0
    let nb = if params.r_sense == 0.0 { m - 1 } else { m };

    if nb == 0 {
        // M = 1 with a grounded column node
        delta[(0, 0)] = gj[0];
        w[0] = gj[0];
        return Ok((delta, w));
    }

    // symmetric tridiagonal chain Laplacian, constant off-diagonal -c
    let mut diag = vec![0.0; nb];
    for i in 0..nb {
        diag[i] = gj[i];
        if i > 0 {
            diag[i] += c;
        }
        if i + 1 < nb {
            diag[i] += c;
        }
    }
    if params.r_sense == 0.0 {
        diag[nb - 1] += c; // link to the grounded bottom node
    } else {
        diag[nb - 1] += 1.0 / params.r_sense;
    }

    // LDLt of the tridiagonal
    let mut piv = vec![0.0; nb];
    let mut low = vec![0.0; nb.saturating_sub(1)];
    piv[0] = diag[0];
    for i in 1..nb {
        if !(piv[i - 1] > 0.0) {
            return Err(Error::Singular(format!(
                "chain pivot {} non-positive at node {i}",
                piv[i - 1]
            )));
        }
        low[i - 1] = -c / piv[i - 1];
        piv[i] = diag[i] - low[i - 1] * low[i - 1] * piv[i - 1];
    }
    if !(piv[nb - 1] > 0.0) {
        return Err(Error::Singular("chain pivot non-positive at last node".into()));
    }
    // y_k = T^{-1} (g_k e_k) for every device that attaches to the chain
    let mut ys: Vec<Option<Vec<f64>>> = vec![None; m];
    for k in 0..nb.min(m) {
        if gj[k] == 0.0 {
            continue;
        }
        let mut rhs = vec![0.0; nb];
        rhs[k] = gj[k];
        tridiag_solve(&low, &piv, &mut rhs);
        ys[k] = Some(rhs);
    }

    for i in 0..m {
        delta[(i, i)] = gj[i];
    }
    for k in 0..nb.min(m) {
        if let Some(y) = &ys[k] {
            for i in 0..nb.min(m) {
                delta[(i, k)] -= gj[i] * y[i];
            }
        }
    }

    if params.r_sense == 0.0 {
        // i_out = c * v_chain[nb-1] + g[m-1] * v_row[m-1]
        for k in 0..nb.min(m) {
            if let Some(y) = &ys[k] {
                w[k] = c * y[nb - 1];
            }
        }
        w[m - 1] += gj[m - 1];
    } else {
        for k in 0..m {
            if let Some(y) = &ys[k] {
                w[k] = y[nb - 1] / params.r_sense;
            }
        }
    }

    Ok((delta, w))
}

/// Solve `T x = rhs` in place given the LDLt factors of a symmetric
/// tridiagonal with unit-lower bidiagonal `low` and pivots `piv`.
fn tridiag_solve(low: &[f64], piv: &[f64], rhs: &mut [f64]) {
    let n = rhs.len();
    for i in 1..n {
        rhs[i] -= low[i - 1] * rhs[i - 1];
    }
    for i in 0..n {
        rhs[i] /= piv[i];
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= low[i] * rhs[i + 1];
    }
}

impl NonIdealCrossbar {
    pub fn rows(&self) -> usize {
        self.g_non_ideal.rows()
    }

    pub fn cols(&self) -> usize {
        self.g_non_ideal.cols()
    }

    /// Effective conductance matrix mapping source voltages to sense
    /// currents: `i_out = vin * g_non_ideal`.
    pub fn g_non_ideal(&self) -> &Matrix {
        &self.g_non_ideal
    }

    /// Exact driving-point conductance of each row port (other rows held at
    /// 0 V), recorded during the elimination.
    pub fn g_load(&self) -> &[f64] {
        &self.g_load
    }

    /// Alternative load estimate: the row sums of `g_non_ideal`. Exact for a
    /// uniform drive on all rows, available behind a config switch for
    /// comparison with the driving-point value.
    pub fn g_load_row_sum(&self) -> Vec<f64> {
        (0..self.rows()).map(|i| self.g_non_ideal.row_sum(i)).collect()
    }

    pub fn params(&self) -> &CrossbarParams {
        &self.params
    }

    /// The programmed state this model was built from.
    pub fn g_ideal(&self) -> &ConductanceMatrix {
        &self.g_ideal
    }

    /// Evaluate the reduced model: a pure dense vector-matrix product.
    pub fn evaluate(&self, vin: &[f64]) -> Result<Vec<f64>> {
        if let Some(bad) = vin.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("input voltage {bad}")));
        }
        self.g_non_ideal.vec_mul(vin)
    }

    /// CSV dump of the effective conductances for inspection.
    pub fn to_csv(&self) -> String {
        self.g_non_ideal.to_csv()
    }

    /// Binary container: magic, version, dims, parameters, then the
    /// row-major 64-bit matrices (effective, load, programmed).
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.rows() as u32).to_le_bytes())?;
        out.write_all(&(self.cols() as u32).to_le_bytes())?;
        let p = &self.params;
        for v in [p.r_row, p.r_col, p.r_sense, p.r_driver, p.g_min, p.g_max, p.v_read] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&p.device_bits.to_le_bytes())?;
        out.write_all(&[self.g_ideal.analysis() as u8])?;
        for v in self.g_non_ideal.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in &self.g_load {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in self.g_ideal.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported container version {version}"
            )));
        }
        let rows = read_u32(&mut input)? as usize;
        let cols = read_u32(&mut input)? as usize;
        if rows == 0 || cols == 0 || rows.saturating_mul(cols) > (1 << 28) {
            return Err(Error::Format(format!("implausible dims {rows}x{cols}")));
        }
        let r_row = read_f64(&mut input)?;
        let r_col = read_f64(&mut input)?;
        let r_sense = read_f64(&mut input)?;
        let r_driver = read_f64(&mut input)?;
        let g_min = read_f64(&mut input)?;
        let g_max = read_f64(&mut input)?;
        let v_read = read_f64(&mut input)?;
        let device_bits = read_u32(&mut input)?;
        let mut flag = [0u8; 1];
        input.read_exact(&mut flag)?;
        let params = CrossbarParams {
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
        params
            .validate()
            .map_err(|e| Error::Format(format!("container parameters: {e}")))?;
        let g_non_ideal = Matrix::from_vec(rows, cols, read_f64_vec(&mut input, rows * cols)?)?;
        let g_load = read_f64_vec(&mut input, rows)?;
        let mut g_ideal =
            ConductanceMatrix::from_vec(rows, cols, read_f64_vec(&mut input, rows * cols)?)?;
        g_ideal.set_analysis(flag[0] != 0);
        Ok(NonIdealCrossbar {
            g_non_ideal,
            g_load,
            params,
            g_ideal,
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f64_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; len];
    let mut buf = [0u8; 8];
    for v in out.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(out)
}

/// Ideal vector-matrix product `i_out = vin * g` — the reference path for
/// error metrics.
pub fn evaluate_ideal(g: &ConductanceMatrix, vin: &[f64]) -> Result<Vec<f64>> {
    g.matrix().vec_mul(vin)
}
