//! Symmetric positive-definite banded matrices and their Cholesky factor.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower band of a symmetric matrix: entry `(i, j)` with `i - bw <= j <= i`
/// lives at `i * (bw + 1) + (j + bw - i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedSym<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedSym {
            n,
            bw,
            data: vec![T::zero(); n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            T::zero()
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)` (and its mirror).
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            for j in j0..=i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// In-place Cholesky factorisation `A = L L^T`.
    pub fn factor(mut self) -> Result<BandedCholesky<T>> {
        let bw = self.bw;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = self.data[self.slot(i, j)];
                for k in k0..j {
                    s -= self.data[self.slot(i, k)] * self.data[self.slot(j, k)];
                }
                let slot = self.slot(i, j);
                if i == j {
                    if !(s > T::zero()) {
                        return Err(Error::Numerical(format!(
                            "matrix not positive definite at row {i}"
                        )));
                    }
                    self.data[slot] = s.sqrt();
                } else {
                    self.data[slot] = s / self.data[self.slot(j, j)];
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandedCholesky<T> {
    l: BandedSym<T>,
}

impl<T: Scalar> BandedCholesky<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let l = &self.l;
        let n = l.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let j0 = i.saturating_sub(l.bw);
            let mut s = y[i];
            for j in j0..i {
                s -= l.data[l.slot(i, j)] * y[j];
            }
            y[i] = s / l.data[l.slot(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n.min(i + l.bw + 1) {
                s -= l.data[l.slot(j, i)] * y[j];
            }
            y[i] = s / l.data[l.slot(i, i)];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn solves_random_spd(
            n in 2usize..30,
            bw in 0usize..5,
            vals in prop::collection::vec(-1.0f64..1.0, 30 * 6),
            rhs in prop::collection::vec(-1.0f64..1.0, 30),
        ) {
            let mut a = BandedSym::zeros(n, bw);
            let mut k = 0;
            for i in 0..n {
                for j in i.saturating_sub(bw)..i {
                    a.add(i, j, vals[k % vals.len()]);
                    k += 1;
                }
            }
            // diagonal dominance
            for i in 0..n {
                a.add(i, i, 2.0 * bw as f64 + 1.0);
            }
            let b = &rhs[..n];
            let x = a.clone().factor().unwrap().solve(b);
            let ax = a.mul_vec(&x);
            for i in 0..n {
                prop_assert!((ax[i] - b[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = BandedSym::<f64>::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        assert!(a.factor().is_err());
    }
}
