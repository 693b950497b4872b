//! Symmetric banded storage and banded Cholesky factorization.
//!
//! The crossbar Laplacian has a small bandwidth once the nodes are visited in
//! an interleaved order along the shorter array dimension, so a banded
//! factorization is the natural sparse path: O(n·bw²) factor, O(n·bw) solve.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix. `data[j * (bw + 1) + d]` holds
/// `A[j + d][j]` for `d in 0..=bw`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Accumulate into the symmetric matrix; callers may pass (i, j) in either
    /// order, only the lower triangle is stored.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(hi - lo <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        self.data[lo * (self.bw + 1) + (hi - lo)] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.bw {
            return 0.0;
        }
        self.data[lo * (self.bw + 1) + (hi - lo)]
    }

    /// `y = A x` using the symmetric band.
    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let base = j * (self.bw + 1);
            y[j] += self.data[base] * x[j];
            let top = (self.bw).min(self.n - 1 - j);
            for d in 1..=top {
                let v = self.data[base + d];
                if v != 0.0 {
                    y[j + d] += v * x[j];
                    y[j] += v * x[j + d];
                }
            }
        }
        y
    }

    /// Banded Cholesky `A = L Lᵀ`. Fails with a pivot report when the matrix
    /// is not positive definite.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let mut l = self.data.clone();
        let stride = bw + 1;
        for j in 0..n {
            let mut diag = l[j * stride];
            // subtract contributions of previous columns k with j - k <= bw
            let k0 = j.saturating_sub(bw);
            for k in k0..j {
                let v = l[k * stride + (j - k)];
                diag -= v * v;
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::Singular(format!(
                    "non-positive pivot {diag:.3e} at band column {j} of {n}"
                )));
            }
            let dj = diag.sqrt();
            l[j * stride] = dj;
            let top = bw.min(n - 1 - j);
            for d in 1..=top {
                let i = j + d;
                let mut v = l[j * stride + d];
                let k0 = i.saturating_sub(bw).max(k0);
                for k in k0..j {
                    v -= l[k * stride + (i - k)] * l[k * stride + (j - k)];
                }
                l[j * stride + d] = v / dj;
            }
        }
        Ok(BandCholesky {
            n,
            bw,
            l,
        })
    }
}

/// Banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let stride = self.bw + 1;
        // forward: L y = b
        for j in 0..self.n {
            let yj = b[j] / self.l[j * stride];
            b[j] = yj;
            let top = self.bw.min(self.n - 1 - j);
            for d in 1..=top {
                b[j + d] -= self.l[j * stride + d] * yj;
            }
        }
        // backward: Lᵀ x = y
        for j in (0..self.n).rev() {
            let mut v = b[j];
            let top = self.bw.min(self.n - 1 - j);
            for d in 1..=top {
                v -= self.l[j * stride + d] * b[j + d];
            }
            b[j] = v / self.l[j * stride];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Rough spectral condition estimate from the extreme Cholesky pivots.
    pub fn condition_estimate(&self) -> f64 {
        let stride = self.bw + 1;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for j in 0..self.n {
            let d = self.l[j * stride];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (hi / lo).powi(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd_band(n: usize, bw: usize, seed: u64) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandMatrix::zeros(n, bw);
        for j in 0..n {
            for d in 1..=bw.min(n - 1 - j) {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a.add(j + d, j, v);
            }
        }
        // diagonally dominant => SPD
        for i in 0..n {
            let mut row = 0.0;
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                if j != i {
                    row += a.get(i, j).abs();
                }
            }
            a.add(i, i, row + 1.0);
        }
        a
    }

    #[test]
    fn solve_recovers_known_vector() {
        let a = random_spd_band(200, 7, 3);
        let x_true: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mat_vec(&x_true);
        let f = a.cholesky().unwrap();
        let x = f.solve(&b);
        let err = x
            .iter()
            .zip(&x_true)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-10, "max err {err}");
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = BandMatrix::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, -2.0);
        a.add(2, 2, 1.0);
        assert!(a.cholesky().is_err());
    }
}
