//! Banded LU factorization with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` idea: each row keeps `kl` extra slots
//! to the right of its upper band so that row interchanges never need to
//! allocate. Pentadiagonal systems use `kl = ku = 2`.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn pentadiagonal(n: usize) -> Self {
        Self::zeros(n, 2, 2)
    }

    pub fn tridiagonal(n: usize) -> Self {
        Self::zeros(n, 1, 1)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        // Valid columns for row i: [i - kl, i + ku + kl].
        if j + self.kl < i || j > i + self.ku + self.kl || i >= self.n || j >= self.n {
            None
        } else {
            Some(i * self.width + (j + self.kl - i))
        }
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku && i < self.n && j < self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.slot(i, j).unwrap()]
        } else {
            0.0
        }
    }

    /// Panics if `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j).unwrap();
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j).unwrap();
        self.data[s] += v;
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.data.iter_mut() {
            *v *= c;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let mut pivots = vec![0usize; n];
        let mut lower = vec![0.0; n * kl.max(1)];
        let mut max_pivot = 0.0f64;
        let mut min_pivot = f64::INFINITY;

        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku + kl).min(n - 1);

            let mut p = k;
            let mut best = self.data[self.slot(k, k).unwrap()].abs();
            for r in k + 1..=last_row {
                let v = self.data[self.slot(r, k).unwrap()].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            pivots[k] = p;
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::SingularSystem {
                    row: k,
                    condition_estimate: f64::INFINITY,
                });
            }
            max_pivot = max_pivot.max(best);
            min_pivot = min_pivot.min(best);

            if p != k {
                for j in k..=last_col {
                    let a = self.slot(k, j).unwrap();
                    let b = self.slot(p, j).unwrap();
                    self.data.swap(a, b);
                }
            }

            let pivot = self.data[self.slot(k, k).unwrap()];
            for r in k + 1..=last_row {
                let s = self.slot(r, k).unwrap();
                let factor = self.data[s] / pivot;
                self.data[s] = 0.0;
                lower[k * kl + (r - k - 1)] = factor;
                if factor != 0.0 {
                    for j in k + 1..=last_col {
                        let src = self.data[self.slot(k, j).unwrap()];
                        let dst = self.slot(r, j).unwrap();
                        self.data[dst] -= factor * src;
                    }
                }
            }
        }

        let condition_estimate = max_pivot / min_pivot;

        Ok(BandedLu {
            upper: self,
            lower,
            pivots,
            condition_estimate,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    upper: BandedMatrix,
    lower: Vec<f64>,
    pivots: Vec<usize>,
    condition_estimate: f64,
}

impl BandedLu {
    /// Ratio of largest to smallest pivot magnitude; a cheap lower bound on
    /// the condition number.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    /// Solves in place.
    pub fn solve(&self, rhs: &mut [f64]) {
        let u = &self.upper;
        let n = u.n;
        let kl = u.kl;
        assert_eq!(rhs.len(), n);

        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                rhs.swap(k, p);
            }
            let last_row = (k + kl).min(n - 1);
            for r in k + 1..=last_row {
                rhs[r] -= self.lower[k * kl + (r - k - 1)] * rhs[k];
            }
        }

        for k in (0..n).rev() {
            let last_col = (k + u.ku + kl).min(n - 1);
            let mut acc = rhs[k];
            for j in k + 1..=last_col {
                acc -= u.data[u.slot(k, j).unwrap()] * rhs[j];
            }
            rhs[k] = acc / u.data[u.slot(k, k).unwrap()];
        }
    }
}
