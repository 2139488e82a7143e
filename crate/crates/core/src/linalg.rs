//! Sparse assembly and a banded LU factorization with partial pivoting.
//!
//! The per-step systems couple each node only to its stencil neighbours, so
//! with a node-major unknown ordering the bandwidth is a few entries in 1D
//! and about one grid row in 2D.

use crate::error::{Error, Result};

/// Square matrix stored as summed `(row, col, value)` triplets.
#[derive(Debug, Clone, Default)]
pub struct SparseMatrix {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(n: usize) -> Self {
        SparseMatrix {
            n,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row, col, value));
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix {
            n: self.n,
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect(),
        }
    }

    pub fn factor(&self) -> Result<BandedLu> {
        BandedLu::factor(self)
    }
}

/// LU factors of a banded matrix, LAPACK `gbtrf` style: row interchanges are
/// applied to the trailing columns only, and the solve replays them in order.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    width: usize,
    /// Row `i` stores columns `i - kl ..= i + kl + ku` (fill included).
    rows: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width + (col + self.kl - row)
    }

    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.n;
        let (mut kl, mut ku) = (0usize, 0usize);
        for &(r, c, _) in &a.entries {
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            n,
            kl,
            width,
            rows: vec![0.0; n * width],
            pivots: vec![0; n],
        };
        for &(r, c, v) in &a.entries {
            let k = lu.idx(r, c);
            lu.rows[k] += v;
        }
        let scale = lu.rows.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let last_col = (i + kl + ku).min(n - 1);
            let mut piv = i;
            let mut best = lu.rows[lu.idx(i, i)].abs();
            for r in i + 1..=last_row {
                let v = lu.rows[lu.idx(r, i)].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if !(best > f64::EPSILON * scale * 1e-4) || !best.is_finite() {
                return Err(Error::Numerical(format!(
                    "singular matrix at pivot {i} (|pivot| = {best:.3e})"
                )));
            }
            lu.pivots[i] = piv;
            if piv != i {
                for c in i..=last_col {
                    let (a_idx, b_idx) = (lu.idx(i, c), lu.idx(piv, c));
                    lu.rows.swap(a_idx, b_idx);
                }
            }
            let d = lu.rows[lu.idx(i, i)];
            for r in i + 1..=last_row {
                let ri = lu.idx(r, i);
                let l = lu.rows[ri] / d;
                lu.rows[ri] = l;
                if l != 0.0 {
                    for c in i + 1..=last_col {
                        let u = lu.rows[lu.idx(i, c)];
                        let k = lu.idx(r, c);
                        lu.rows[k] -= l * u;
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let ku_fill = self.width - self.kl - 1;
        let mut x = b.to_vec();
        for i in 0..n {
            x.swap(i, self.pivots[i]);
            let xi = x[i];
            if xi != 0.0 {
                for r in i + 1..=(i + self.kl).min(n - 1) {
                    x[r] -= self.rows[self.idx(r, i)] * xi;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for c in i + 1..=(i + ku_fill).min(n - 1) {
                s -= self.rows[self.idx(i, c)] * x[c];
            }
            x[i] = s / self.rows[self.idx(i, i)];
        }
        x
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = SparseMatrix::new(n);
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                a.push(r, c, rng.gen_range(-1.0..1.0));
            }
            a.push(r, r, 2.0);
        }
        a
    }

    #[test]
    fn solves_random_banded_systems() {
        for (seed, (kl, ku)) in [(1, 1), (2, 3), (0, 2), (4, 0)].into_iter().enumerate() {
            let a = random_banded(40, kl, ku, seed as u64);
            let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
            let b = a.matvec(&x);
            let y = a.factor().unwrap().solve(&b);
            let err = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "kl={kl} ku={ku} err={err}");
        }
    }

    #[test]
    fn needs_pivoting() {
        // Zero leading diagonal forces a row interchange.
        let mut a = SparseMatrix::new(3);
        for (r, c, v) in [
            (0, 1, 1.0),
            (1, 0, 2.0),
            (1, 1, 1.0),
            (1, 2, 1.0),
            (2, 1, 3.0),
            (2, 2, 1.0),
        ] {
            a.push(r, c, v);
        }
        let x = [1.0, -2.0, 0.5];
        let y = a.factor().unwrap().solve(&a.matvec(&x));
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut a = SparseMatrix::new(2);
        a.push(0, 0, 1.0);
        a.push(0, 1, 1.0);
        a.push(1, 0, 1.0);
        a.push(1, 1, 1.0);
        assert!(matches!(a.factor(), Err(Error::Numerical(_))));
    }

    #[test]
    fn transpose_solve() {
        let a = random_banded(25, 2, 1, 9);
        let at = a.transpose();
        let x: Vec<f64> = (0..25).map(|i| i as f64 - 12.0).collect();
        let y = at.factor().unwrap().solve(&at.matvec(&x));
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}
